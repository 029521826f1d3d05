#include "tubekit/tokenizer.hpp"

#include <cmath>

namespace tubekit {

namespace {

struct Tap {
  int index;
  double weight;
};

// Per output index, the source taps of align-corners linear interpolation.
// Zero-weight taps are dropped so an identity resize copies values exactly.
std::vector<std::vector<Tap>> axis_taps(int source, int target) {
  std::vector<std::vector<Tap>> taps(target);
  for (int i = 0; i < target; ++i) {
    const double pos = target == 1 ? 0.5 * (source - 1)
                                   : static_cast<double>(i) * (source - 1) / (target - 1);
    int lo = static_cast<int>(std::floor(pos));
    double frac = pos - lo;
    if (lo >= source - 1) {
      lo = source - 1;
      frac = 0.0;
    }
    if (frac == 0.0) {
      taps[i].push_back({lo, 1.0});
    } else {
      taps[i].push_back({lo, 1.0 - frac});
      taps[i].push_back({lo + 1, frac});
    }
  }
  return taps;
}

// Resamples axis `axis` of a (d0, d1, d2, inner) array.
template <typename Scalar>
std::vector<Scalar> resample_axis(const std::vector<Scalar>& in, const Triple& shape, std::size_t inner,
                                  int axis, int target) {
  const auto taps = axis_taps(shape[axis], target);
  Triple out_shape = shape;
  out_shape[axis] = target;
  std::vector<Scalar> out(static_cast<std::size_t>(volume(out_shape)) * inner);
  auto offset = [inner](const Triple& s, int a, int b, int c) {
    return ((static_cast<std::size_t>(a) * s[1] + b) * s[2] + c) * inner;
  };
  for (int a = 0; a < out_shape[0]; ++a)
    for (int b = 0; b < out_shape[1]; ++b)
      for (int c = 0; c < out_shape[2]; ++c) {
        Triple idx{a, b, c};
        const auto& row_taps = taps[idx[axis]];
        Scalar* dst = out.data() + offset(out_shape, a, b, c);
        bool first = true;
        for (const Tap& tap : row_taps) {
          idx[axis] = tap.index;
          const Scalar* src = in.data() + offset(shape, idx[0], idx[1], idx[2]);
          const Scalar w = static_cast<Scalar>(tap.weight);
          if (first) {
            for (std::size_t q = 0; q < inner; ++q) dst[q] = w * src[q];
            first = false;
          } else {
            for (std::size_t q = 0; q < inner; ++q) dst[q] += w * src[q];
          }
        }
      }
  return out;
}

// Transpose of resample_axis: `in` has length `target` along `axis`, output has
// the source length.
template <typename Scalar>
std::vector<Scalar> resample_axis_adjoint(const std::vector<Scalar>& in, const Triple& in_shape,
                                          std::size_t inner, int axis, int source) {
  const auto taps = axis_taps(source, in_shape[axis]);
  Triple out_shape = in_shape;
  out_shape[axis] = source;
  std::vector<Scalar> out(static_cast<std::size_t>(volume(out_shape)) * inner, Scalar(0));
  auto offset = [inner](const Triple& s, int a, int b, int c) {
    return ((static_cast<std::size_t>(a) * s[1] + b) * s[2] + c) * inner;
  };
  for (int a = 0; a < in_shape[0]; ++a)
    for (int b = 0; b < in_shape[1]; ++b)
      for (int c = 0; c < in_shape[2]; ++c) {
        Triple idx{a, b, c};
        const Scalar* src = in.data() + offset(in_shape, a, b, c);
        for (const Tap& tap : taps[idx[axis]]) {
          Triple dst_idx = idx;
          dst_idx[axis] = tap.index;
          Scalar* dst = out.data() + offset(out_shape, dst_idx[0], dst_idx[1], dst_idx[2]);
          const Scalar w = static_cast<Scalar>(tap.weight);
          for (std::size_t q = 0; q < inner; ++q) dst[q] += w * src[q];
        }
      }
  return out;
}

template <typename Scalar>
void check_kernels(const VideoClip<Scalar>& clip, const TubeBank& bank,
                   const std::vector<Matrix<Scalar>>& tube_kernels,
                   const std::vector<RowVector<Scalar>>& biases) {
  if (tube_kernels.size() != bank.tubes.size() || biases.size() != bank.tubes.size()) {
    throw TubeError(ErrorCode::ShapeMismatch, "kernel bank and tube bank have different tube counts");
  }
  for (std::size_t i = 0; i < bank.tubes.size(); ++i) {
    const TubeSpec& tube = bank.tubes[i];
    const Eigen::Index rows = volume(tube.kernel) * clip.channels;
    const Eigen::Index cols = bank.hidden_size / tube.reduction();
    if (tube_kernels[i].rows() != rows || tube_kernels[i].cols() != cols || biases[i].cols() != cols) {
      throw TubeError(ErrorCode::ShapeMismatch,
                      "tube " + std::to_string(i) + " expects a " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " kernel");
    }
  }
}

// Flattened windows of the used pre-merge grid, one row per window, t-major.
template <typename Scalar>
Matrix<Scalar> gather_windows(const VideoClip<Scalar>& clip, const TubeSpec& tube, const TokenGrid& grid) {
  const Triple used = grid.used_pre_counts();
  const Eigen::Index k = volume(tube.kernel) * clip.channels;
  Matrix<Scalar> patches(volume(used), k);
  const std::size_t run = static_cast<std::size_t>(tube.kernel[2]) * clip.channels;
  Eigen::Index row = 0;
  for (int it = 0; it < used[0]; ++it)
    for (int ih = 0; ih < used[1]; ++ih)
      for (int iw = 0; iw < used[2]; ++iw, ++row) {
        const int t0 = grid.origin[0] + it * grid.pre_stride[0];
        const int h0 = grid.origin[1] + ih * grid.pre_stride[1];
        const int w0 = grid.origin[2] + iw * grid.pre_stride[2];
        Scalar* dst = patches.row(row).data();
        for (int kt = 0; kt < tube.kernel[0]; ++kt)
          for (int kh = 0; kh < tube.kernel[1]; ++kh) {
            const Scalar* src = &clip.at(t0 + kt, h0 + kh, w0);
            std::copy(src, src + run, dst);
            dst += run;
          }
      }
  return patches;
}

template <typename Scalar>
void scatter_windows(const Matrix<Scalar>& patch_grads, const TubeSpec& tube, const TokenGrid& grid,
                     VideoClip<Scalar>& out) {
  const Triple used = grid.used_pre_counts();
  const std::size_t run = static_cast<std::size_t>(tube.kernel[2]) * out.channels;
  Eigen::Index row = 0;
  for (int it = 0; it < used[0]; ++it)
    for (int ih = 0; ih < used[1]; ++ih)
      for (int iw = 0; iw < used[2]; ++iw, ++row) {
        const int t0 = grid.origin[0] + it * grid.pre_stride[0];
        const int h0 = grid.origin[1] + ih * grid.pre_stride[1];
        const int w0 = grid.origin[2] + iw * grid.pre_stride[2];
        const Scalar* src = patch_grads.row(row).data();
        for (int kt = 0; kt < tube.kernel[0]; ++kt)
          for (int kh = 0; kh < tube.kernel[1]; ++kh) {
            Scalar* dst = &out.at(t0 + kt, h0 + kh, w0);
            for (std::size_t q = 0; q < run; ++q) dst[q] += src[q];
            src += run;
          }
      }
}

std::vector<Center> pre_centers(const TubeSpec& tube, const TokenGrid& grid) {
  const Triple used = grid.used_pre_counts();
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(volume(used)));
  for (int it = 0; it < used[0]; ++it)
    for (int ih = 0; ih < used[1]; ++ih)
      for (int iw = 0; iw < used[2]; ++iw) {
        const Triple idx{it, ih, iw};
        Center c;
        for (int a = 0; a < 3; ++a) {
          c[a] = grid.origin[a] + static_cast<double>(idx[a]) * grid.pre_stride[a] +
                 0.5 * (tube.kernel[a] - 1);
        }
        centers.push_back(c);
      }
  return centers;
}

}  // namespace

template <typename Scalar>
KernelBank<Scalar> KernelBank<Scalar>::zeros_like() const {
  KernelBank out;
  out.channels = channels;
  out.interpolated = interpolated;
  for (const auto& k : kernels) out.kernels.push_back(Matrix<Scalar>::Zero(k.rows(), k.cols()));
  out.base = Matrix<Scalar>::Zero(base.rows(), base.cols());
  for (const auto& b : biases) out.biases.push_back(RowVector<Scalar>::Zero(b.cols()));
  return out;
}

template <typename Scalar>
KernelBank<Scalar> init_kernels(const TubeBank& bank, int channels, bool interpolated, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto truncated = [&](double std_dev) {
    double x;
    do {
      x = normal(rng);
    } while (std::abs(x) > 2.0);
    return static_cast<Scalar>(x * std_dev);
  };
  KernelBank<Scalar> out;
  out.channels = channels;
  out.interpolated = interpolated;
  if (interpolated) {
    const Eigen::Index fan_in = volume(kBaseKernelShape) * channels;
    out.base.resize(fan_in, bank.hidden_size);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < out.base.size(); ++i) out.base.data()[i] = truncated(std_dev);
  }
  for (const TubeSpec& tube : bank.tubes) {
    const Eigen::Index fan_in = volume(tube.kernel) * channels;
    const Eigen::Index cols = bank.hidden_size / tube.reduction();
    if (!interpolated) {
      Matrix<Scalar> k(fan_in, cols);
      const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = truncated(std_dev);
      out.kernels.push_back(std::move(k));
    }
    out.biases.push_back(RowVector<Scalar>::Zero(cols));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> interpolate_kernel(const Matrix<Scalar>& base, const Triple& base_shape, int channels,
                                  const Triple& target) {
  for (int a = 0; a < 3; ++a) {
    if (target[a] < 1) throw TubeError(ErrorCode::ShapeMismatch, "interpolation target must be >= 1");
  }
  if (base.rows() != volume(base_shape) * channels) {
    throw TubeError(ErrorCode::ShapeMismatch, "base kernel rows do not match its shape");
  }
  const std::size_t inner = static_cast<std::size_t>(channels) * base.cols();
  std::vector<Scalar> data(base.data(), base.data() + base.size());
  Triple shape = base_shape;
  for (int axis = 2; axis >= 0; --axis) {
    data = resample_axis(data, shape, inner, axis, target[axis]);
    shape[axis] = target[axis];
  }
  Matrix<Scalar> out(volume(target) * channels, base.cols());
  std::copy(data.begin(), data.end(), out.data());
  return out;
}

template <typename Scalar>
Matrix<Scalar> interpolate_kernel_adjoint(const Matrix<Scalar>& grad, const Triple& base_shape, int channels,
                                          const Triple& target) {
  if (grad.rows() != volume(target) * channels) {
    throw TubeError(ErrorCode::ShapeMismatch, "gradient rows do not match the interpolation target");
  }
  const std::size_t inner = static_cast<std::size_t>(channels) * grad.cols();
  std::vector<Scalar> data(grad.data(), grad.data() + grad.size());
  Triple shape = target;
  for (int axis = 0; axis < 3; ++axis) {
    data = resample_axis_adjoint(data, shape, inner, axis, base_shape[axis]);
    shape[axis] = base_shape[axis];
  }
  Matrix<Scalar> out(volume(base_shape) * channels, grad.cols());
  std::copy(data.begin(), data.end(), out.data());
  return out;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> materialize_kernels(const TubeBank& bank, const KernelBank<Scalar>& kernels) {
  if (!kernels.interpolated) return kernels.kernels;
  if (kernels.base.cols() != bank.hidden_size) {
    throw TubeError(ErrorCode::ShapeMismatch, "base kernel width differs from hidden size");
  }
  std::vector<Matrix<Scalar>> out;
  out.reserve(bank.tubes.size());
  for (const TubeSpec& tube : bank.tubes) {
    const Eigen::Index cols = bank.hidden_size / tube.reduction();
    Matrix<Scalar> full = interpolate_kernel(kernels.base, kBaseKernelShape, kernels.channels, tube.kernel);
    out.push_back(full.leftCols(cols));
  }
  return out;
}

template <typename Scalar>
GridTokens<Scalar> merge_s2d(const GridTokens<Scalar>& pre, const Triple& group) {
  for (int a = 0; a < 3; ++a) {
    if (group[a] < 1 || pre.counts[a] % group[a] != 0) {
      throw TubeError(ErrorCode::GridNotDivisible,
                      "grid " + format_triple(pre.counts) + " not divisible by group " + format_triple(group));
    }
  }
  const Eigen::Index width = pre.tokens.cols();
  const int f = static_cast<int>(volume(group));
  GridTokens<Scalar> out;
  out.counts = {pre.counts[0] / group[0], pre.counts[1] / group[1], pre.counts[2] / group[2]};
  out.tokens.resize(volume(out.counts), width * f);
  out.centers.resize(static_cast<std::size_t>(volume(out.counts)));
  Eigen::Index row = 0;
  for (int i = 0; i < out.counts[0]; ++i)
    for (int j = 0; j < out.counts[1]; ++j)
      for (int k = 0; k < out.counts[2]; ++k, ++row) {
        Center sum{0.0, 0.0, 0.0};
        int member = 0;
        for (int dt = 0; dt < group[0]; ++dt)
          for (int dh = 0; dh < group[1]; ++dh)
            for (int dw = 0; dw < group[2]; ++dw, ++member) {
              const Eigen::Index src =
                  (static_cast<Eigen::Index>(i * group[0] + dt) * pre.counts[1] + (j * group[1] + dh)) *
                      pre.counts[2] +
                  (k * group[2] + dw);
              out.tokens.row(row).segment(member * width, width) = pre.tokens.row(src);
              for (int a = 0; a < 3; ++a) sum[a] += pre.centers[static_cast<std::size_t>(src)][a];
            }
        for (int a = 0; a < 3; ++a) out.centers[static_cast<std::size_t>(row)][a] = sum[a] / f;
      }
  return out;
}

template <typename Scalar>
Matrix<Scalar> split_s2d(const Matrix<Scalar>& merged, const Triple& pre_counts, const Triple& group) {
  const int f = static_cast<int>(volume(group));
  const Triple post{pre_counts[0] / group[0], pre_counts[1] / group[1], pre_counts[2] / group[2]};
  if (merged.rows() != volume(post) || merged.cols() % f != 0) {
    throw TubeError(ErrorCode::ShapeMismatch, "merged gradient does not match the grouped grid");
  }
  const Eigen::Index width = merged.cols() / f;
  Matrix<Scalar> pre(volume(pre_counts), width);
  Eigen::Index row = 0;
  for (int i = 0; i < post[0]; ++i)
    for (int j = 0; j < post[1]; ++j)
      for (int k = 0; k < post[2]; ++k, ++row) {
        int member = 0;
        for (int dt = 0; dt < group[0]; ++dt)
          for (int dh = 0; dh < group[1]; ++dh)
            for (int dw = 0; dw < group[2]; ++dw, ++member) {
              const Eigen::Index dst =
                  (static_cast<Eigen::Index>(i * group[0] + dt) * pre_counts[1] + (j * group[1] + dh)) *
                      pre_counts[2] +
                  (k * group[2] + dw);
              pre.row(dst) = merged.row(row).segment(member * width, width);
            }
      }
  return pre;
}

template <typename Scalar>
TokenBatch<Scalar> tokenize_with(const VideoClip<Scalar>& clip, const TubeBank& bank,
                                 const std::vector<Matrix<Scalar>>& tube_kernels,
                                 const std::vector<RowVector<Scalar>>& biases) {
  const Triple dims = clip.dims();
  validate_bank(bank, dims).raise_if_invalid();
  check_kernels(clip, bank, tube_kernels, biases);

  const auto active = bank.active_tubes(dims);
  std::vector<TokenGrid> grids;
  Eigen::Index total = 0;
  for (std::size_t i : active) {
    grids.push_back(token_grid(bank.tubes[i], dims));
    total += grids.back().size();
  }

  TokenBatch<Scalar> batch;
  batch.tokens.resize(total, bank.hidden_size);
  batch.centers.reserve(static_cast<std::size_t>(total));
  batch.tube_id.reserve(static_cast<std::size_t>(total));
  batch.grid_index.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (std::size_t g = 0; g < active.size(); ++g) {
    const std::size_t tube_index = active[g];
    const TubeSpec& tube = bank.tubes[tube_index];
    const TokenGrid& grid = grids[g];
    const Matrix<Scalar> patches = gather_windows(clip, tube, grid);
    Matrix<Scalar> projected = patches * tube_kernels[tube_index];
    projected.rowwise() += biases[tube_index];

    const Eigen::Index n = grid.size();
    if (tube.reduction() == 1) {
      batch.tokens.middleRows(row, n) = projected;
      batch.centers.insert(batch.centers.end(), grid.centers.begin(), grid.centers.end());
    } else {
      GridTokens<Scalar> pre{grid.used_pre_counts(), std::move(projected), pre_centers(tube, grid)};
      GridTokens<Scalar> merged = merge_s2d(pre, tube.s2d_group);
      batch.tokens.middleRows(row, n) = merged.tokens;
      batch.centers.insert(batch.centers.end(), merged.centers.begin(), merged.centers.end());
    }
    for (int i = 0; i < grid.counts[0]; ++i)
      for (int j = 0; j < grid.counts[1]; ++j)
        for (int k = 0; k < grid.counts[2]; ++k) {
          batch.tube_id.push_back(static_cast<int>(tube_index));
          batch.grid_index.push_back({i, j, k});
        }
    row += n;
  }
  return batch;
}

template <typename Scalar>
TokenBatch<Scalar> tokenize(const VideoClip<Scalar>& clip, const TubeBank& bank, const KernelBank<Scalar>& kernels) {
  if (clip.channels != kernels.channels) {
    throw TubeError(ErrorCode::ShapeMismatch, "clip channels differ from kernel channels");
  }
  return tokenize_with(clip, bank, materialize_kernels(bank, kernels), kernels.biases);
}

template <typename Scalar>
void accumulate_tube_gradients(const Matrix<Scalar>& upstream, const VideoClip<Scalar>& clip,
                               const TubeBank& bank, const std::vector<Matrix<Scalar>>& tube_kernels,
                               std::vector<Matrix<Scalar>>& tube_grads,
                               std::vector<RowVector<Scalar>>& bias_grads, VideoClip<Scalar>* input_grad) {
  const Triple dims = clip.dims();
  const auto active = bank.active_tubes(dims);
  Eigen::Index row = 0;
  for (std::size_t tube_index : active) {
    const TubeSpec& tube = bank.tubes[tube_index];
    const TokenGrid grid = token_grid(tube, dims);
    const Eigen::Index n = grid.size();
    if (row + n > upstream.rows() || upstream.cols() != bank.hidden_size) {
      throw TubeError(ErrorCode::ShapeMismatch, "upstream gradient does not match the token layout");
    }
    const Matrix<Scalar> merged = upstream.middleRows(row, n);
    const Matrix<Scalar> pre =
        tube.reduction() == 1 ? merged : split_s2d(merged, grid.used_pre_counts(), tube.s2d_group);
    const Matrix<Scalar> patches = gather_windows(clip, tube, grid);
    tube_grads[tube_index].noalias() += patches.transpose() * pre;
    bias_grads[tube_index] += pre.colwise().sum();
    if (input_grad != nullptr) {
      const Matrix<Scalar> patch_grads = pre * tube_kernels[tube_index].transpose();
      scatter_windows(patch_grads, tube, grid, *input_grad);
    }
    row += n;
  }
  if (row != upstream.rows()) {
    throw TubeError(ErrorCode::ShapeMismatch, "upstream gradient has extra rows");
  }
}

template <typename Scalar>
void fold_tube_gradients(const TubeBank& bank, const std::vector<Matrix<Scalar>>& tube_grads,
                         KernelBank<Scalar>& grads) {
  for (std::size_t i = 0; i < bank.tubes.size(); ++i) {
    if (!grads.interpolated) {
      grads.kernels[i] += tube_grads[i];
      continue;
    }
    const Matrix<Scalar> pulled =
        interpolate_kernel_adjoint(tube_grads[i], kBaseKernelShape, grads.channels, bank.tubes[i].kernel);
    grads.base.leftCols(pulled.cols()) += pulled;
  }
}

template <typename Scalar>
TokenizerGradients<Scalar> tokenize_gradient(const Matrix<Scalar>& upstream, const VideoClip<Scalar>& clip,
                                             const TubeBank& bank, const KernelBank<Scalar>& kernels,
                                             bool want_input) {
  const Triple dims = clip.dims();
  validate_bank(bank, dims).raise_if_invalid();
  const auto tube_kernels = materialize_kernels(bank, kernels);
  check_kernels(clip, bank, tube_kernels, kernels.biases);
  if (upstream.rows() != total_tokens(bank, dims, !TubeBank::is_image_input(dims)) ||
      upstream.cols() != bank.hidden_size) {
    throw TubeError(ErrorCode::ShapeMismatch, "upstream gradient shape does not match tokenize output");
  }

  std::vector<Matrix<Scalar>> tube_grads;
  for (const auto& k : tube_kernels) tube_grads.push_back(Matrix<Scalar>::Zero(k.rows(), k.cols()));
  TokenizerGradients<Scalar> out;
  out.kernels = kernels.zeros_like();
  if (want_input) out.input = VideoClip<Scalar>(clip.frames, clip.height, clip.width, clip.channels);
  accumulate_tube_gradients(upstream, clip, bank, tube_kernels, tube_grads, out.kernels.biases,
                            want_input ? &*out.input : nullptr);
  fold_tube_gradients(bank, tube_grads, out.kernels);
  return out;
}

#define TUBEKIT_INSTANTIATE(S)                                                                              \
  template struct KernelBank<S>;                                                                           \
  template KernelBank<S> init_kernels<S>(const TubeBank&, int, bool, std::mt19937_64&);                    \
  template std::vector<Matrix<S>> materialize_kernels<S>(const TubeBank&, const KernelBank<S>&);           \
  template GridTokens<S> merge_s2d<S>(const GridTokens<S>&, const Triple&);                                \
  template Matrix<S> split_s2d<S>(const Matrix<S>&, const Triple&, const Triple&);                         \
  template Matrix<S> interpolate_kernel<S>(const Matrix<S>&, const Triple&, int, const Triple&);           \
  template Matrix<S> interpolate_kernel_adjoint<S>(const Matrix<S>&, const Triple&, int, const Triple&);   \
  template TokenBatch<S> tokenize<S>(const VideoClip<S>&, const TubeBank&, const KernelBank<S>&);          \
  template TokenBatch<S> tokenize_with<S>(const VideoClip<S>&, const TubeBank&,                            \
                                          const std::vector<Matrix<S>>&, const std::vector<RowVector<S>>&); \
  template TokenizerGradients<S> tokenize_gradient<S>(const Matrix<S>&, const VideoClip<S>&,               \
                                                      const TubeBank&, const KernelBank<S>&, bool);        \
  template void fold_tube_gradients<S>(const TubeBank&, const std::vector<Matrix<S>>&, KernelBank<S>&);    \
  template void accumulate_tube_gradients<S>(const Matrix<S>&, const VideoClip<S>&, const TubeBank&,       \
                                             const std::vector<Matrix<S>>&, std::vector<Matrix<S>>&,       \
                                             std::vector<RowVector<S>>&, VideoClip<S>*);

TUBEKIT_INSTANTIATE(float)
TUBEKIT_INSTANTIATE(double)

#undef TUBEKIT_INSTANTIATE

}  // namespace tubekit
