#pragma once

// Flat key/value configuration shared by the config file, the checkpoint
// metadata and the CLI. Keys are prefixed g_ (generator), d_ (discriminator)
// or unprefixed (training); see README.md for the full list.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "discriminator.hpp"
#include "generator.hpp"
#include "train_config.hpp"

namespace retarget {

struct ModelConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;

  /// Validates all three parts plus cross-part constraints.
  void validate() const;
};

/// Reduced configuration for CPU-scale runs on small images.
ModelConfig desk_config();

/// Overrides fields of `base` from a flat JSON object. Unknown keys and
/// type mismatches raise ConfigError.
ModelConfig apply_config(ModelConfig base, const nlohmann::json& flat);

nlohmann::json to_json(const ModelConfig& config);

/// Reads a flat JSON object from disk and applies it over `base`.
ModelConfig load_config_file(const std::filesystem::path& path, ModelConfig base = {});

std::vector<std::string> config_keys();

}  // namespace retarget
