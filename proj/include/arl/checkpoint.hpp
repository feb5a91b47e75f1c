#pragma once

#include "arl/hyper.hpp"
#include "arl/mlp.hpp"

#include <filesystem>
#include <json.hpp>

namespace arl {

struct Checkpoint {
  MlpParams<double> params;
  HyperParams hyper;
  nlohmann::json extra = nlohmann::json::object();
};

/// Sidecar path: the checkpoint path with its extension replaced by .json.
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

/// Writes the flat little-endian float64 array to `path` and the layer sizes,
/// activation and loss hyperparameters to the sidecar.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json hyper_to_json(const HyperParams& h);
HyperParams hyper_from_json(const nlohmann::json& j);

}  // namespace arl
