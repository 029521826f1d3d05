#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tubekit/config.hpp"
#include "tubekit/encoder.hpp"
#include "tubekit/tokenizer.hpp"

namespace tubekit {

template <typename Scalar>
struct ModelParams {
  KernelBank<Scalar> tokenizer;
  EncoderWeights<Scalar> encoder;
  std::map<int, Matrix<Scalar>> learned_posemb;  // keyed by token count

  ModelParams zeros_like() const;
};

/// Every parameter tensor in a fixed canonical order (tokenizer, learned
/// positions, encoder). Checkpoints and the optimizer rely on this order.
template <typename Scalar>
std::vector<ParamView<Scalar>> parameter_views(ModelParams<Scalar>& params);

template <typename Scalar>
struct Model {
  ModelConfig config;
  ModelParams<Scalar> params;

  EncoderConfig encoder_config() const { return config.encoder; }
};

/// Fresh weights from `seed`. Learned position tables are sized for the config's
/// video input and its single-frame image counterpart.
template <typename Scalar>
Model<Scalar> init_model(const ModelConfig& config, std::uint64_t seed);

template <typename Scalar>
struct ModelForward {
  TokenBatch<Scalar> tokens;  // with positions added
  EncodeResult<Scalar> encoded;
  RowVector<Scalar> logits;
};

/// The n x d term added to raw tube tokens for the configured embedding kind.
template <typename Scalar>
Matrix<Scalar> position_term(const Model<Scalar>& model, const TokenBatch<Scalar>& tokens);

/// tokenize -> positions -> encode -> classify. `tube_kernels` may carry
/// pre-materialized kernels (interpolated mode) to avoid resampling per clip.
template <typename Scalar>
ModelForward<Scalar> forward(const Model<Scalar>& model, const VideoClip<Scalar>& clip, const std::string& head,
                             bool training, const std::vector<Matrix<Scalar>>* tube_kernels = nullptr);

template <typename Scalar>
struct GradientBuffer {
  ModelParams<Scalar> params;
  std::vector<Matrix<Scalar>> tube_kernels;  // unfolded per-tube kernel gradients

  explicit GradientBuffer(const Model<Scalar>& model);
  void add(const GradientBuffer& other);
  /// Moves per-tube gradients into params.tokenizer (through the resampling
  /// adjoint in interpolated mode).
  void fold(const TubeBank& bank);
};

/// Reverse pass of forward() for d(loss)/d(logits).
template <typename Scalar>
void backward(const Model<Scalar>& model, const ModelForward<Scalar>& fwd, const VideoClip<Scalar>& clip,
              const std::string& head, const RowVector<Scalar>& logit_grad,
              const std::vector<Matrix<Scalar>>& tube_kernels, GradientBuffer<Scalar>& grads);

/// Same model at another precision.
template <typename To, typename From>
Model<To> cast_model(const Model<From>& model);

}  // namespace tubekit
