#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalcast/dataset.hpp"
#include "causalcast/nn.hpp"

namespace causalcast {

/// Everything needed to reload a forecaster and predict bit-identically.
struct Checkpoint {
  nn::RecurrentModel model;
  std::vector<std::string> features;
  std::string target;
  std::size_t lead = 1;
  std::string variant;
  Frequency frequency = Frequency::Monthly;
  NormalizationStats normalization;
  nn::TrainConfig train_config;
  /// Free-form provenance such as the split dates.
  nlohmann::json metadata = nlohmann::json::object();
};

/// Layout: 8-byte magic "CCASTCKP", u32 version, u64 header length, JSON
/// header, u64 parameter count, then little-endian f64 parameters.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const nn::NetworkShape& shape);
nn::NetworkShape network_shape_from_json(const nlohmann::json& j);
nlohmann::json to_json(const nn::TrainConfig& config);
nn::TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace causalcast
