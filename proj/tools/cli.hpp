#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "muppet/common/config.hpp"

namespace muppet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Written next to every artifact as "<artifact>.manifest.json".
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args;  // everything after the subcommand
  std::string config_path;
  Config config;  // effective configuration after flags
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::string started;
  std::string finished;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  static RunManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

std::filesystem::path manifest_path(const std::filesystem::path& artifact);

// Runs one command line (argv[0] is the program name). Data goes to `out`,
// logs and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace muppet::cli
