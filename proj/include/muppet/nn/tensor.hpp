#pragma once

#include <Eigen/Core>

namespace muppet::nn {

// Row-major dense matrix; vectors are 1 x n rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

}  // namespace muppet::nn
