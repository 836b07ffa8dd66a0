#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgil/trainer.hpp"

namespace sgil {

using ConfigMap = std::map<std::string, std::string>;

// Flat key=value text. Blank lines and lines starting with '#' are skipped;
// duplicate keys are an error.
ConfigMap parse_config_file(const std::string& path);

// Every key is always present so the echo is diff-able.
ConfigMap config_to_map(const TrainConfig& cfg);

// Unknown keys and malformed values throw ConfigError naming the key.
TrainConfig config_from_map(const ConfigMap& map);

// Items of the form "key=value"; later items win.
void apply_overrides(ConfigMap& map, const std::vector<std::string>& items);

// FNV-1a over the sorted "key=value" lines, 16 hex digits. Stable under
// key reordering in the source file.
std::string config_hash(const ConfigMap& map);

}  // namespace sgil
