#include "tubekit/scale.hpp"

#include <algorithm>

namespace tubekit {

namespace {

bool same_geometry(const TubeSpec& a, const TubeSpec& b) {
  return a.kernel == b.kernel && a.stride == b.stride && a.offset == b.offset;
}

std::vector<int> prime_factors(int n) {
  std::vector<int> out;
  for (int p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      out.push_back(p);
      n /= p;
    }
  }
  if (n > 1) out.push_back(n);
  return out;
}

}  // namespace

TubeSpec lift_tube(const TubeSpec& tube, int d_small, int d_large, const Triple& input_dims) {
  if (d_small <= 0 || d_large % d_small != 0) {
    throw TubeError(ErrorCode::IncompatibleWidths,
                    "small width " + std::to_string(d_small) + " does not divide large width " + std::to_string(d_large));
  }
  TubeSpec out = tube;
  for (const int p : prime_factors(d_large / d_small)) {
    bool placed = false;
    for (const int axis : {2, 1, 0}) {
      if (axis == 0 && tube.image_applicable) continue;  // image mode has a single frame
      const int pre_stride = out.stride[axis] / out.s2d_group[axis];
      const int n_pre = axis_count(input_dims[axis], out.kernel[axis], pre_stride, out.offset[axis]);
      if (n_pre >= out.s2d_group[axis] * p) {
        out.s2d_group[axis] *= p;
        out.stride[axis] = pre_stride * out.s2d_group[axis];
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw TubeError(ErrorCode::IncompatibleWidths,
                      "tube " + format_triple(tube.kernel) + " has too few tokens to group by " +
                          std::to_string(d_large / d_small));
    }
  }
  return out;
}

template <typename Scalar>
Model<Scalar> scale_up(const Model<Scalar>& small, const Model<Scalar>& large, const ScaleOptions& options) {
  const int d_small = small.config.bank.hidden_size;
  const int d_large = large.config.bank.hidden_size;
  if (d_large % d_small != 0) {
    throw TubeError(ErrorCode::IncompatibleWidths,
                    "small width " + std::to_string(d_small) + " does not divide large width " + std::to_string(d_large));
  }
  if (small.config.channels != large.config.channels) {
    throw TubeError(ErrorCode::ShapeMismatch, "small and large models use different channel counts");
  }
  if (large.config.posemb == PosembKind::Learned) {
    throw TubeError(ErrorCode::InvalidConfig, "scale-up needs a fixed or absent position embedding");
  }

  Model<Scalar> out;
  ModelConfig& cfg = out.config;
  cfg = large.config;
  cfg.input_dims = small.config.input_dims;
  cfg.interpolated = false;
  cfg.encoder.freeze_below = options.freeze_below;
  cfg.encoder.gate_layer = options.gate_layer;
  cfg.encoder.validate();

  const auto large_kernels = materialize_kernels(large.config.bank, large.params.tokenizer);
  const auto small_kernels = materialize_kernels(small.config.bank, small.params.tokenizer);
  KernelBank<Scalar>& tk = out.params.tokenizer;
  tk.channels = cfg.channels;
  tk.interpolated = false;
  cfg.bank.tubes.clear();
  for (std::size_t i = 0; i < large.config.bank.tubes.size(); ++i) {
    cfg.bank.tubes.push_back(large.config.bank.tubes[i]);
    tk.kernels.push_back(large_kernels[i]);
    tk.biases.push_back(large.params.tokenizer.biases[i]);
  }
  for (std::size_t i = 0; i < small.config.bank.tubes.size(); ++i) {
    const TubeSpec& tube = small.config.bank.tubes[i];
    const bool covered = std::any_of(large.config.bank.tubes.begin(), large.config.bank.tubes.end(),
                                     [&](const TubeSpec& t) { return same_geometry(t, tube); });
    if (covered) continue;
    cfg.bank.tubes.push_back(lift_tube(tube, d_small, d_large, cfg.input_dims));
    tk.kernels.push_back(small_kernels[i]);
    tk.biases.push_back(small.params.tokenizer.biases[i]);
  }
  validate_bank(cfg.bank, cfg.input_dims).raise_if_invalid();

  out.params.encoder = large.params.encoder;
  out.params.encoder.alpha = Scalar(0);
  std::vector<HeadSpec> added;
  for (const HeadSpec& h : small.config.heads) {
    const bool present = std::any_of(cfg.heads.begin(), cfg.heads.end(), [&](const HeadSpec& x) { return x.name == h.name; });
    if (!present) added.push_back(h);
  }
  if (!added.empty()) {
    std::mt19937_64 rng(options.seed);
    EncoderWeights<Scalar> fresh = init_encoder<Scalar>(cfg.encoder, added, rng);
    for (auto& h : fresh.heads) out.params.encoder.heads.push_back(std::move(h));
    cfg.heads.insert(cfg.heads.end(), added.begin(), added.end());
  }
  return out;
}

template Model<float> scale_up<float>(const Model<float>&, const Model<float>&, const ScaleOptions&);
template Model<double> scale_up<double>(const Model<double>&, const Model<double>&, const ScaleOptions&);

}  // namespace tubekit
