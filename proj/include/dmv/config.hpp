#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmv/embed.hpp"
#include "dmv/forest.hpp"
#include "dmv/preprocess.hpp"

namespace dmv {

// Parsed `[section]` / `key = value` text. `#` starts a comment line.
using IniSections = std::map<std::string, std::map<std::string, std::string>>;
IniSections parse_ini(std::string_view text);

struct RunConfig {
  std::filesystem::path data_path;
  std::optional<std::filesystem::path> schema_path;
  PreprocessConfig preprocess;
  ProviderConfig embed;
  ForestConfig forest;
  std::vector<std::size_t> cv_ks{5, 10};
  double holdout_fraction = 0.2;
  std::uint64_t seed = 42;
  bool include_geo = true;
  std::filesystem::path output_dir = "out";

  // Copies `seed` into every stochastic component.
  void set_seed(std::uint64_t value);
  // Checks ranges and that the data and schema files exist.
  void validate() const;
};

// Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace dmv
