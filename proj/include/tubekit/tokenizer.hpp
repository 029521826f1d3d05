#pragma once

#include <optional>
#include <random>
#include <vector>

#include "tubekit/clip.hpp"
#include "tubekit/common.hpp"
#include "tubekit/tube_config.hpp"

namespace tubekit {

/// Shape of the shared kernel in interpolated mode.
inline constexpr Triple kBaseKernelShape{8, 8, 8};

/// Learned tube projections. A kernel is stored as a (k_t*k_h*k_w*C) x d_tube
/// matrix whose rows follow the clip's memory order (t, h, w, c), so a flattened
/// window times the kernel is one token.
template <typename Scalar>
struct KernelBank {
  int channels = 3;
  bool interpolated = false;
  std::vector<Matrix<Scalar>> kernels;  // per tube; empty in interpolated mode
  Matrix<Scalar> base;                  // (8*8*8*C) x d; interpolated mode only
  std::vector<RowVector<Scalar>> biases;

  /// Same layout, all zeros.
  KernelBank zeros_like() const;
};

/// Truncated-normal (2 sigma) init with std = fan_in^-1/2, zero bias.
template <typename Scalar>
KernelBank<Scalar> init_kernels(const TubeBank& bank, int channels, bool interpolated,
                                std::mt19937_64& rng);

/// Per-tube kernel actually applied: the stored kernel, or the base kernel
/// resampled to the tube shape with its first d/f output columns.
template <typename Scalar>
std::vector<Matrix<Scalar>> materialize_kernels(const TubeBank& bank, const KernelBank<Scalar>& kernels);

template <typename Scalar>
struct TokenBatch {
  Matrix<Scalar> tokens;        // n x d
  std::vector<Center> centers;  // n, (t, h, w) voxel coordinates
  std::vector<int> tube_id;     // n
  /// Per-token integer grid index (t, h, w) within its tube, post-merge.
  std::vector<Triple> grid_index;

  std::size_t size() const { return centers.size(); }
};

/// A dense t-major grid of tokens, the unit space-to-depth operates on.
template <typename Scalar>
struct GridTokens {
  Triple counts{0, 0, 0};
  Matrix<Scalar> tokens;
  std::vector<Center> centers;
};

/// Concatenates each g_t x g_h x g_w block along channels (members in t, h, w
/// major order); the merged center is the mean of member centers.
template <typename Scalar>
GridTokens<Scalar> merge_s2d(const GridTokens<Scalar>& pre, const Triple& group);

/// Adjoint of merge_s2d on the token values.
template <typename Scalar>
Matrix<Scalar> split_s2d(const Matrix<Scalar>& merged, const Triple& pre_counts, const Triple& group);

/// Separable align-corners trilinear resampling of a kernel stored as
/// (src_t*src_h*src_w*C) x cols. Output index i on an axis of length k samples
/// source position i*(s-1)/(k-1), or the source midpoint when k = 1.
template <typename Scalar>
Matrix<Scalar> interpolate_kernel(const Matrix<Scalar>& base, const Triple& base_shape, int channels,
                                  const Triple& target);

/// Transpose of interpolate_kernel: maps a gradient on the resampled kernel back
/// to the base kernel.
template <typename Scalar>
Matrix<Scalar> interpolate_kernel_adjoint(const Matrix<Scalar>& grad, const Triple& base_shape,
                                          int channels, const Triple& target);

template <typename Scalar>
TokenBatch<Scalar> tokenize(const VideoClip<Scalar>& clip, const TubeBank& bank,
                            const KernelBank<Scalar>& kernels);

/// Variant for callers that already materialized the per-tube kernels.
template <typename Scalar>
TokenBatch<Scalar> tokenize_with(const VideoClip<Scalar>& clip, const TubeBank& bank,
                                 const std::vector<Matrix<Scalar>>& tube_kernels,
                                 const std::vector<RowVector<Scalar>>& biases);

template <typename Scalar>
struct TokenizerGradients {
  KernelBank<Scalar> kernels;                      // same layout as the forward bank
  std::optional<VideoClip<Scalar>> input;          // only when requested
};

/// Exact adjoint of tokenize for an upstream gradient on the n x d tokens.
template <typename Scalar>
TokenizerGradients<Scalar> tokenize_gradient(const Matrix<Scalar>& upstream, const VideoClip<Scalar>& clip,
                                             const TubeBank& bank, const KernelBank<Scalar>& kernels,
                                             bool want_input = false);

/// Accumulates per-tube kernel gradients into `grads` (in interpolated mode the
/// per-tube gradients are pulled back into the base kernel). Used by the trainer
/// so resampling adjoints run once per batch instead of once per sample.
template <typename Scalar>
void fold_tube_gradients(const TubeBank& bank, const std::vector<Matrix<Scalar>>& tube_grads,
                         KernelBank<Scalar>& grads);

/// Raw per-tube gradient pieces (before interpolation folding).
template <typename Scalar>
void accumulate_tube_gradients(const Matrix<Scalar>& upstream, const VideoClip<Scalar>& clip,
                               const TubeBank& bank, const std::vector<Matrix<Scalar>>& tube_kernels,
                               std::vector<Matrix<Scalar>>& tube_grads,
                               std::vector<RowVector<Scalar>>& bias_grads,
                               VideoClip<Scalar>* input_grad);

}  // namespace tubekit
