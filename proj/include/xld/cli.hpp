#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace xld {

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string config_hash(const nlohmann::json& config);

struct RunManifest {
  std::string command;
  nlohmann::json config;  // fully resolved
  std::uint64_t seed = 0;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::array();
  std::string hash;
  std::string timestamp;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

// $XLD_RUN_ROOT, else "runs".
std::filesystem::path default_run_root();

// args excludes the program name. Exit codes: 0 success, 1 runtime failure
// (including a failed gradient check), 2 usage or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xld
