#include "tubekit/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace tubekit {

double LrSchedule::at(std::int64_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (!cosine) return base_lr;
  const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename Scalar>
void AdamState<Scalar>::ensure(const std::vector<ParamView<Scalar>>& params) {
  if (m.empty()) {
    for (const auto& p : params) {
      m.emplace_back(p.size, Scalar(0));
      v.emplace_back(p.size, Scalar(0));
    }
    return;
  }
  if (m.size() != params.size()) throw TubeError(ErrorCode::ShapeMismatch, "optimizer state has a different layout");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m[i].size() != params[i].size) {
      throw TubeError(ErrorCode::ShapeMismatch, "optimizer moment size differs for " + params[i].name);
    }
  }
}

template <typename Scalar>
void adam_step(std::vector<ParamView<Scalar>>& params, const std::vector<ParamView<Scalar>>& grads,
               AdamState<Scalar>& state, double lr, const AdamConfig& cfg, int freeze_below) {
  state.ensure(params);
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamView<Scalar>& p = params[i];
    if (is_frozen(p.layer, freeze_below)) continue;
    const Scalar* g = grads[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool decay = cfg.weight_decay > 0.0 && p.shape.size() >= 2;
    for (std::size_t j = 0; j < p.size; ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<Scalar>(mj);
      v[j] = static_cast<Scalar>(vj);
      double update = (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
      if (decay) update += cfg.weight_decay * static_cast<double>(p.data[j]);
      p.data[j] = static_cast<Scalar>(static_cast<double>(p.data[j]) - lr * update);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<ParamView<float>>&, const std::vector<ParamView<float>>&,
                               AdamState<float>&, double, const AdamConfig&, int);
template void adam_step<double>(std::vector<ParamView<double>>&, const std::vector<ParamView<double>>&,
                                AdamState<double>&, double, const AdamConfig&, int);

}  // namespace tubekit
