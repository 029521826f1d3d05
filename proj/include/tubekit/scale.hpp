#pragma once

#include <optional>

#include "tubekit/model.hpp"

namespace tubekit {

struct ScaleOptions {
  int freeze_below = 0;
  std::optional<int> gate_layer;
  std::uint64_t seed = 0;  // initializes heads the large model lacks
};

/// Lifts one small-model tube to width `d_large`: stride and s2d group grow
/// by r = d_large / d_small on the axes where the pre-merge grid has room
/// (w, then h, then t), so r grid-adjacent small tokens are concatenated into
/// one token. Throws IncompatibleWidths when no placement exists.
TubeSpec lift_tube(const TubeSpec& tube, int d_small, int d_large, const Triple& input_dims);

/// Composes a small tube model with a large (image) encoder: the large
/// model's image tubes and encoder are kept, every other small tube is lifted
/// with its kernel unchanged, and freezing and the gate are set from `options`.
/// Heads present only in the small model are added at the large width.
template <typename Scalar>
Model<Scalar> scale_up(const Model<Scalar>& small, const Model<Scalar>& large, const ScaleOptions& options);

}  // namespace tubekit
