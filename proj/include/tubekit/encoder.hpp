#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tubekit/common.hpp"

namespace tubekit {

enum class PoolMode { Mean, Cls };

struct HeadSpec {
  std::string name;
  int classes = 0;
  bool operator==(const HeadSpec&) const = default;
};

struct EncoderConfig {
  int layers = 2;
  int hidden = 24;
  int heads = 2;
  int mlp_size = 48;
  PoolMode pool = PoolMode::Mean;
  std::optional<int> gate_layer;  // block whose output receives tanh(alpha) * z0
  int freeze_below = 0;           // blocks with index < freeze_below (and the tokenizer) are frozen

  /// Throws InvalidConfig when the invariants do not hold.
  void validate() const;
  int head_dim() const { return hidden / heads; }
};

template <typename Scalar>
struct LayerWeights {
  RowVector<Scalar> ln1_gamma, ln1_beta;
  Matrix<Scalar> wq, wk, wv, wo;  // d x d, applied as x * W
  RowVector<Scalar> bq, bk, bv, bo;
  RowVector<Scalar> ln2_gamma, ln2_beta;
  Matrix<Scalar> w1;  // d x mlp
  RowVector<Scalar> b1;
  Matrix<Scalar> w2;  // mlp x d
  RowVector<Scalar> b2;
};

template <typename Scalar>
struct HeadWeights {
  std::string name;
  Matrix<Scalar> weight;  // d x classes
  RowVector<Scalar> bias;
};

template <typename Scalar>
struct EncoderWeights {
  std::vector<LayerWeights<Scalar>> layers;
  RowVector<Scalar> final_gamma, final_beta;
  RowVector<Scalar> cls_token;  // 1 x d in cls pooling, empty otherwise
  Scalar alpha = Scalar(0);
  std::vector<HeadWeights<Scalar>> heads;

  EncoderWeights zeros_like() const;
  const HeadWeights<Scalar>& head(const std::string& name) const;
  HeadWeights<Scalar>& head(const std::string& name);
};

template <typename Scalar>
EncoderWeights<Scalar> init_encoder(const EncoderConfig& cfg, const std::vector<HeadSpec>& heads,
                                    std::mt19937_64& rng);

/// Flat view of one parameter tensor; `layer` drives freezing: -1 for things
/// below the first block, the block index for block parameters and the final
/// norm (tagged as the last block), kNeverFrozen for heads and the gate.
template <typename Scalar>
struct ParamView {
  std::string name;
  Scalar* data = nullptr;
  std::size_t size = 0;
  std::vector<std::int64_t> shape;
  int layer = 0;
};

inline constexpr int kNeverFrozen = 1 << 30;

inline bool is_frozen(int layer, int freeze_below) {
  return freeze_below > 0 && layer < freeze_below;
}

template <typename Scalar>
std::vector<ParamView<Scalar>> parameter_views(EncoderWeights<Scalar>& weights, const std::string& prefix = "encoder.");

template <typename Scalar>
struct LayerTrace {
  Matrix<Scalar> ln1_hat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ln1_rstd;
  Matrix<Scalar> attn_in, q, k, v;
  std::vector<Matrix<Scalar>> probs;  // per head, n x n
  Matrix<Scalar> attn_concat;
  Matrix<Scalar> ln2_hat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ln2_rstd;
  Matrix<Scalar> mlp_in, mlp_pre, mlp_act;
};

template <typename Scalar>
struct ForwardTrace {
  Matrix<Scalar> z0;  // block-0 input, including the cls row when present
  std::vector<LayerTrace<Scalar>> layers;
  Matrix<Scalar> final_hat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> final_rstd;
};

template <typename Scalar>
struct EncodeResult {
  Matrix<Scalar> features;  // rows = tokens (+1 leading cls row in cls pooling)
  std::optional<ForwardTrace<Scalar>> trace;
};

/// Pre-norm transformer: y = MSA(LN(z)) + z, z' = MLP(LN(y)) + y, with
/// tanh(alpha) * z0 added after the gate block, and a final layer norm.
/// Throws NonFinite when any activation diverges.
template <typename Scalar>
EncodeResult<Scalar> encode(const Matrix<Scalar>& tokens, const EncoderConfig& cfg,
                            const EncoderWeights<Scalar>& weights, bool training);

template <typename Scalar>
RowVector<Scalar> pool_features(const Matrix<Scalar>& features, const EncoderConfig& cfg);

template <typename Scalar>
RowVector<Scalar> classify(const Matrix<Scalar>& features, const std::string& head_name,
                           const EncoderConfig& cfg, const EncoderWeights<Scalar>& weights);

/// Adds head gradients into `grads` and returns d(loss)/d(features).
template <typename Scalar>
Matrix<Scalar> classify_backward(const RowVector<Scalar>& logit_grad, const Matrix<Scalar>& features,
                                 const std::string& head_name, const EncoderConfig& cfg,
                                 const EncoderWeights<Scalar>& weights, EncoderWeights<Scalar>& grads);

template <typename Scalar>
struct EncoderGradients {
  EncoderWeights<Scalar> weights;
  /// d(loss)/d(input tokens), cls row excluded. Empty when the tokenizer is frozen.
  Matrix<Scalar> input;
};

/// Exact reverse pass for one encode() call. Frozen parameters get zero
/// gradient; head gradients come from classify_backward.
template <typename Scalar>
EncoderGradients<Scalar> backward(const Matrix<Scalar>& feature_grad, const EncodeResult<Scalar>& forward,
                                  const EncoderConfig& cfg, const EncoderWeights<Scalar>& weights);

/// Same as backward() but accumulates into existing gradient storage.
template <typename Scalar>
Matrix<Scalar> backward_into(const Matrix<Scalar>& feature_grad, const EncodeResult<Scalar>& forward,
                             const EncoderConfig& cfg, const EncoderWeights<Scalar>& weights,
                             EncoderWeights<Scalar>& grads);

inline constexpr double kLayerNormEps = 1e-6;

}  // namespace tubekit
