#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "swintr/model.hpp"
#include "swintr/training.hpp"

namespace swintr {

// Everything a run needs. Serialized as key=value lines; see run_config_keys().
struct RunConfig {
  ModelConfig model;
  std::vector<std::string> class_names = ClassMap{}.names;
  std::filesystem::path manifest;
  double val_fraction = 0.1024;  // used only when the manifest carries no val records
  std::uint64_t split_seed = 0;
  TrainConfig train;
  std::filesystem::path output_dir = "run";
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string help;
};
// Every accepted key with its default, in echo order.
const std::vector<ConfigKey>& run_config_keys();

// Parses key=value lines ('#' comments, blank lines allowed). Unknown keys,
// duplicates and bad values raise ConfigError naming origin:line. Relative
// paths resolve against base_dir.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>",
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved key=value text; parsing it back yields an equal config.
std::string format_run_config(const RunConfig& cfg);

}  // namespace swintr
