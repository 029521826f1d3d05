#pragma once

#include <cstdint>
#include <vector>

#include "tubekit/encoder.hpp"

namespace tubekit {

/// Linear warmup from 0 to base_lr, then cosine decay to 0 at total_steps
/// (constant after warmup when cosine is off).
struct LrSchedule {
  double base_lr = 1e-3;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
  bool cosine = true;

  double at(std::int64_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, matrices only
};

template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<Scalar>> m;
  std::vector<std::vector<Scalar>> v;

  /// Sizes the moments for `params` if empty; throws ShapeMismatch on a layout change.
  void ensure(const std::vector<ParamView<Scalar>>& params);
};

/// One Adam step over every parameter whose view is not frozen under
/// `freeze_below`. Frozen tensors and their moments are left untouched.
template <typename Scalar>
void adam_step(std::vector<ParamView<Scalar>>& params, const std::vector<ParamView<Scalar>>& grads,
               AdamState<Scalar>& state, double lr, const AdamConfig& cfg, int freeze_below);

}  // namespace tubekit
