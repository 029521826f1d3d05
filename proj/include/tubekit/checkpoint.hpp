#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "tubekit/trainer.hpp"

namespace tubekit {

/// Single-file checkpoint: "TVCK", a u64 manifest length, the JSON manifest,
/// then little-endian raw buffers (parameters, then Adam m and v) at the
/// manifest's byte offsets.
template <typename Scalar>
struct Checkpoint {
  TrainState<Scalar> state;
  std::optional<TrainConfig> train;
  nlohmann::json manifest;
};

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const TrainState<Scalar>& state,
                     const std::optional<TrainConfig>& train = std::nullopt);

/// Throws CorruptManifest on truncated or malformed files and ShapeMismatch
/// when a stored tensor disagrees with the shape implied by its config, or
/// when the stored dtype is not Scalar.
template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

}  // namespace tubekit
