#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "flycl/harness.hpp"

namespace flycl {

// Flat `key = value` experiment configs. '#' starts a comment; blank lines
// are skipped; unknown keys are errors.
ExperimentConfig parse_config_text(const std::string& text);

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Applies one key=value assignment (also used for --set overrides).
void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Every resolved field, for the run summary and ledger sidecars.
nlohmann::json config_echo(const ExperimentConfig& cfg);

}  // namespace flycl
