#include "tubekit/model.hpp"

#include <random>

#include "tubekit/posemb.hpp"

namespace tubekit {

namespace {

template <typename Scalar>
ParamView<Scalar> matrix_view(const std::string& name, Matrix<Scalar>& m, int layer) {
  return {name, m.data(), static_cast<std::size_t>(m.size()), {m.rows(), m.cols()}, layer};
}

template <typename Scalar>
ParamView<Scalar> row_view(const std::string& name, RowVector<Scalar>& v, int layer) {
  return {name, v.data(), static_cast<std::size_t>(v.size()), {v.cols()}, layer};
}

template <typename Scalar>
Matrix<Scalar> grid_index_embedding(const TokenBatch<Scalar>& tokens, const EmbeddingParams& params) {
  std::vector<Center> coords;
  coords.reserve(tokens.grid_index.size());
  for (const Triple& g : tokens.grid_index) coords.push_back({double(g[0]), double(g[1]), double(g[2])});
  return embed_positions(coords, params).template cast<Scalar>();
}

}  // namespace

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::zeros_like() const {
  ModelParams out;
  out.tokenizer = tokenizer.zeros_like();
  out.encoder = encoder.zeros_like();
  for (const auto& [n, table] : learned_posemb) out.learned_posemb[n] = Matrix<Scalar>::Zero(table.rows(), table.cols());
  return out;
}

template <typename Scalar>
std::vector<ParamView<Scalar>> parameter_views(ModelParams<Scalar>& params) {
  std::vector<ParamView<Scalar>> out;
  KernelBank<Scalar>& tk = params.tokenizer;
  if (tk.interpolated) out.push_back(matrix_view("tokenizer.base_kernel", tk.base, -1));
  for (std::size_t i = 0; i < tk.kernels.size(); ++i) {
    out.push_back(matrix_view("tokenizer.tube" + std::to_string(i) + ".kernel", tk.kernels[i], -1));
  }
  for (std::size_t i = 0; i < tk.biases.size(); ++i) {
    out.push_back(row_view("tokenizer.tube" + std::to_string(i) + ".bias", tk.biases[i], -1));
  }
  for (auto& [n, table] : params.learned_posemb) {
    out.push_back(matrix_view("posemb.learned." + std::to_string(n), table, -1));
  }
  auto encoder = parameter_views(params.encoder, "encoder.");
  out.insert(out.end(), encoder.begin(), encoder.end());
  return out;
}

template <typename Scalar>
Model<Scalar> init_model(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Model<Scalar> model;
  model.config = config;
  model.params.tokenizer = init_kernels<Scalar>(config.bank, config.channels, config.interpolated, rng);
  model.params.encoder = init_encoder<Scalar>(config.encoder, config.heads, rng);
  if (config.posemb == PosembKind::Learned) {
    std::normal_distribution<double> normal(0.0, 0.02);
    const Triple& dims = config.input_dims;
    for (const bool video : {true, false}) {
      const Triple in = video ? dims : Triple{1, dims[1], dims[2]};
      if (video && dims[0] == 1) continue;
      const auto n = static_cast<int>(total_tokens(config.bank, in, video));
      Matrix<Scalar> table(n, config.bank.hidden_size);
      for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = static_cast<Scalar>(normal(rng));
      model.params.learned_posemb[n] = std::move(table);
    }
  }
  return model;
}

template <typename Scalar>
Matrix<Scalar> position_term(const Model<Scalar>& model, const TokenBatch<Scalar>& tokens) {
  const ModelConfig& cfg = model.config;
  const auto n = static_cast<Eigen::Index>(tokens.size());
  switch (cfg.posemb) {
    case PosembKind::None:
      return Matrix<Scalar>::Zero(n, cfg.bank.hidden_size);
    case PosembKind::Fixed:
      return embed_positions(tokens.centers, cfg.embedding()).template cast<Scalar>();
    case PosembKind::FixedIndex:
      return grid_index_embedding(tokens, cfg.embedding());
    case PosembKind::Learned: {
      const auto it = model.params.learned_posemb.find(static_cast<int>(n));
      if (it == model.params.learned_posemb.end()) {
        throw TubeError(ErrorCode::ShapeMismatch,
                        "no learned position table for " + std::to_string(n) + " tokens");
      }
      return it->second;
    }
  }
  return {};
}

template <typename Scalar>
ModelForward<Scalar> forward(const Model<Scalar>& model, const VideoClip<Scalar>& clip, const std::string& head,
                             bool training, const std::vector<Matrix<Scalar>>* tube_kernels) {
  ModelForward<Scalar> out;
  if (tube_kernels != nullptr) {
    out.tokens = tokenize_with(clip, model.config.bank, *tube_kernels, model.params.tokenizer.biases);
  } else {
    out.tokens = tokenize(clip, model.config.bank, model.params.tokenizer);
  }
  if (model.config.posemb != PosembKind::None) out.tokens.tokens += position_term(model, out.tokens);
  out.encoded = encode(out.tokens.tokens, model.config.encoder, model.params.encoder, training);
  out.logits = classify(out.encoded.features, head, model.config.encoder, model.params.encoder);
  return out;
}

template <typename Scalar>
GradientBuffer<Scalar>::GradientBuffer(const Model<Scalar>& model) : params(model.params.zeros_like()) {
  for (const TubeSpec& tube : model.config.bank.tubes) {
    tube_kernels.push_back(Matrix<Scalar>::Zero(volume(tube.kernel) * model.config.channels,
                                                model.config.bank.hidden_size / tube.reduction()));
  }
}

template <typename Scalar>
void GradientBuffer<Scalar>::add(const GradientBuffer& other) {
  auto mine = parameter_views(params);
  auto theirs = parameter_views(const_cast<ModelParams<Scalar>&>(other.params));
  for (std::size_t i = 0; i < mine.size(); ++i) {
    for (std::size_t j = 0; j < mine[i].size; ++j) mine[i].data[j] += theirs[i].data[j];
  }
  for (std::size_t i = 0; i < tube_kernels.size(); ++i) tube_kernels[i] += other.tube_kernels[i];
}

template <typename Scalar>
void GradientBuffer<Scalar>::fold(const TubeBank& bank) {
  fold_tube_gradients(bank, tube_kernels, params.tokenizer);
  for (auto& g : tube_kernels) g.setZero();
}

template <typename Scalar>
void backward(const Model<Scalar>& model, const ModelForward<Scalar>& fwd, const VideoClip<Scalar>& clip,
              const std::string& head, const RowVector<Scalar>& logit_grad,
              const std::vector<Matrix<Scalar>>& tube_kernels, GradientBuffer<Scalar>& grads) {
  const EncoderConfig& ecfg = model.config.encoder;
  const Matrix<Scalar> dfeatures =
      classify_backward(logit_grad, fwd.encoded.features, head, ecfg, model.params.encoder, grads.params.encoder);
  const Matrix<Scalar> dtokens =
      backward_into(dfeatures, fwd.encoded, ecfg, model.params.encoder, grads.params.encoder);
  if (dtokens.size() == 0) return;  // tokenizer and positions frozen
  if (model.config.posemb == PosembKind::Learned) {
    grads.params.learned_posemb.at(static_cast<int>(dtokens.rows())) += dtokens;
  }
  accumulate_tube_gradients(dtokens, clip, model.config.bank, tube_kernels, grads.tube_kernels,
                            grads.params.tokenizer.biases, static_cast<VideoClip<Scalar>*>(nullptr));
}

template <typename To, typename From>
Model<To> cast_model(const Model<From>& model) {
  Model<To> out = init_model<To>(model.config, 0);
  auto src = parameter_views(const_cast<ModelParams<From>&>(model.params));
  auto dst = parameter_views(out.params);
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t j = 0; j < src[i].size; ++j) dst[i].data[j] = static_cast<To>(src[i].data[j]);
  }
  return out;
}

#define TUBEKIT_INSTANTIATE(S)                                                                            \
  template struct ModelParams<S>;                                                                        \
  template struct GradientBuffer<S>;                                                                     \
  template std::vector<ParamView<S>> parameter_views<S>(ModelParams<S>&);                               \
  template Model<S> init_model<S>(const ModelConfig&, std::uint64_t);                                   \
  template Matrix<S> position_term<S>(const Model<S>&, const TokenBatch<S>&);                           \
  template ModelForward<S> forward<S>(const Model<S>&, const VideoClip<S>&, const std::string&, bool,   \
                                      const std::vector<Matrix<S>>*);                                   \
  template void backward<S>(const Model<S>&, const ModelForward<S>&, const VideoClip<S>&,               \
                            const std::string&, const RowVector<S>&, const std::vector<Matrix<S>>&,     \
                            GradientBuffer<S>&);

TUBEKIT_INSTANTIATE(float)
TUBEKIT_INSTANTIATE(double)

#undef TUBEKIT_INSTANTIATE

template Model<float> cast_model<float, double>(const Model<double>&);
template Model<double> cast_model<double, float>(const Model<float>&);
template Model<float> cast_model<float, float>(const Model<float>&);
template Model<double> cast_model<double, double>(const Model<double>&);

}  // namespace tubekit
