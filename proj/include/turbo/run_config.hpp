// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` run configuration files. Blank lines and lines starting
// with '#' are ignored. `task` is required; every other key defaults to the
// toy preset of that task. Unknown or repeated keys are errors.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "turbo/config.hpp"

namespace turbo {

/// Every recognised key, in canonical output order.
const std::vector<std::string>& run_config_keys();

/// Throws ConfigError with "<source>:<line>: ..." diagnostics.
TurboConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
TurboConfig load_run_config(const std::filesystem::path& path);

/// Applies one key on top of an existing config (used for CLI overrides).
void apply_config_key(TurboConfig& config, const std::string& key, const std::string& value);

/// Canonical key -> value form; parse_run_config(to_text(c)) == c.
std::map<std::string, std::string> config_to_map(const TurboConfig& config);
std::string config_to_text(const TurboConfig& config);
TurboConfig config_from_map(const std::map<std::string, std::string>& values,
                            const std::string& source = "<map>");

}  // namespace turbo
