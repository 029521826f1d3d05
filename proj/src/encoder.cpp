#include "tubekit/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace tubekit {

namespace {

template <typename Scalar>
using Column = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

constexpr double kGeluC = 0.7978845608;
constexpr double kGeluA = 0.044715;

template <typename Scalar>
void layer_norm(const Matrix<Scalar>& x, const RowVector<Scalar>& gamma, const RowVector<Scalar>& beta,
                Matrix<Scalar>& hat, Column<Scalar>& rstd, Matrix<Scalar>& out) {
  const Eigen::Index n = x.rows();
  const Scalar inv_d = Scalar(1) / static_cast<Scalar>(x.cols());
  hat.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mean = x.row(i).sum() * inv_d;
    const auto centered = x.row(i).array() - mean;
    const Scalar var = centered.square().sum() * inv_d;
    rstd(i) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
    hat.row(i) = centered * rstd(i);
  }
  out = (hat.array().rowwise() * gamma.array()).rowwise() + beta.array();
}

// dx for y = hat * gamma + beta; accumulates d(gamma), d(beta) when `params` is set.
template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& hat, const Column<Scalar>& rstd,
                                   const RowVector<Scalar>& gamma, RowVector<Scalar>* dgamma,
                                   RowVector<Scalar>* dbeta) {
  if (dgamma != nullptr) {
    *dgamma += (dy.array() * hat.array()).colwise().sum().matrix();
    *dbeta += dy.colwise().sum();
  }
  const Matrix<Scalar> dhat = dy.array().rowwise() * gamma.array();
  const Scalar inv_d = Scalar(1) / static_cast<Scalar>(dy.cols());
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const Scalar mean_dhat = dhat.row(i).sum() * inv_d;
    const Scalar mean_dhat_hat = dhat.row(i).dot(hat.row(i)) * inv_d;
    dx.row(i) = rstd(i) * (dhat.row(i).array() - mean_dhat - hat.row(i).array() * mean_dhat_hat);
  }
  return dx;
}

template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& u) {
  return u.unaryExpr([](Scalar x) {
    const Scalar inner = static_cast<Scalar>(kGeluC) * (x + static_cast<Scalar>(kGeluA) * x * x * x);
    return Scalar(0.5) * x * (Scalar(1) + std::tanh(inner));
  });
}

template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& u) {
  return u.unaryExpr([](Scalar x) {
    const Scalar c = static_cast<Scalar>(kGeluC);
    const Scalar a = static_cast<Scalar>(kGeluA);
    const Scalar th = std::tanh(c * (x + a * x * x * x));
    return Scalar(0.5) * (Scalar(1) + th) +
           Scalar(0.5) * x * (Scalar(1) - th * th) * c * (Scalar(1) + Scalar(3) * a * x * x);
  });
}

template <typename Scalar>
void softmax_rows(Matrix<Scalar>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Scalar m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

template <typename Scalar>
void truncated_fill(Scalar* data, std::size_t size, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < size; ++i) {
    double x;
    do {
      x = normal(rng);
    } while (std::abs(x) > 2.0);
    data[i] = static_cast<Scalar>(x * std_dev);
  }
}

template <typename Scalar>
Matrix<Scalar> random_matrix(Eigen::Index rows, Eigen::Index cols, double std_dev, std::mt19937_64& rng) {
  Matrix<Scalar> m(rows, cols);
  truncated_fill(m.data(), static_cast<std::size_t>(m.size()), std_dev, rng);
  return m;
}

template <typename Scalar>
void check_finite(const Matrix<Scalar>& m, const char* where, int layer) {
  if (!m.allFinite()) {
    throw TubeError(ErrorCode::NonFinite, std::string("non-finite activation in ") + where + " of block " +
                                              std::to_string(layer));
  }
}

template <typename Scalar>
ParamView<Scalar> view(const std::string& name, Matrix<Scalar>& m, int layer) {
  return {name, m.data(), static_cast<std::size_t>(m.size()), {m.rows(), m.cols()}, layer};
}

template <typename Scalar>
ParamView<Scalar> view(const std::string& name, RowVector<Scalar>& v, int layer) {
  return {name, v.data(), static_cast<std::size_t>(v.size()), {v.cols()}, layer};
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || mlp_size < 1) {
    throw TubeError(ErrorCode::InvalidConfig, "encoder sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw TubeError(ErrorCode::InvalidConfig, "hidden size " + std::to_string(hidden) +
                                                  " not divisible by " + std::to_string(heads) + " heads");
  }
  if (gate_layer && (*gate_layer < 0 || *gate_layer >= layers)) {
    throw TubeError(ErrorCode::InvalidConfig, "gate layer must lie in [0, layers)");
  }
  if (freeze_below < 0 || freeze_below > layers) {
    throw TubeError(ErrorCode::InvalidConfig, "freeze_below must lie in [0, layers]");
  }
}

template <typename Scalar>
EncoderWeights<Scalar> EncoderWeights<Scalar>::zeros_like() const {
  EncoderWeights out = *this;
  auto views = parameter_views(out, "");
  for (auto& v : views) std::fill(v.data, v.data + v.size, Scalar(0));
  return out;
}

template <typename Scalar>
const HeadWeights<Scalar>& EncoderWeights<Scalar>::head(const std::string& name) const {
  for (const auto& h : heads) {
    if (h.name == name) return h;
  }
  throw TubeError(ErrorCode::UnknownHead, "no classification head named '" + name + "'");
}

template <typename Scalar>
HeadWeights<Scalar>& EncoderWeights<Scalar>::head(const std::string& name) {
  for (auto& h : heads) {
    if (h.name == name) return h;
  }
  throw TubeError(ErrorCode::UnknownHead, "no classification head named '" + name + "'");
}

template <typename Scalar>
EncoderWeights<Scalar> init_encoder(const EncoderConfig& cfg, const std::vector<HeadSpec>& heads,
                                    std::mt19937_64& rng) {
  cfg.validate();
  const Eigen::Index d = cfg.hidden;
  const Eigen::Index m = cfg.mlp_size;
  const double std_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double std_m = 1.0 / std::sqrt(static_cast<double>(m));
  EncoderWeights<Scalar> w;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerWeights<Scalar> layer;
    layer.ln1_gamma = RowVector<Scalar>::Ones(d);
    layer.ln1_beta = RowVector<Scalar>::Zero(d);
    layer.wq = random_matrix<Scalar>(d, d, std_d, rng);
    layer.wk = random_matrix<Scalar>(d, d, std_d, rng);
    layer.wv = random_matrix<Scalar>(d, d, std_d, rng);
    layer.wo = random_matrix<Scalar>(d, d, std_d, rng);
    layer.bq = RowVector<Scalar>::Zero(d);
    layer.bk = RowVector<Scalar>::Zero(d);
    layer.bv = RowVector<Scalar>::Zero(d);
    layer.bo = RowVector<Scalar>::Zero(d);
    layer.ln2_gamma = RowVector<Scalar>::Ones(d);
    layer.ln2_beta = RowVector<Scalar>::Zero(d);
    layer.w1 = random_matrix<Scalar>(d, m, std_d, rng);
    layer.b1 = RowVector<Scalar>::Zero(m);
    layer.w2 = random_matrix<Scalar>(m, d, std_m, rng);
    layer.b2 = RowVector<Scalar>::Zero(d);
    w.layers.push_back(std::move(layer));
  }
  w.final_gamma = RowVector<Scalar>::Ones(d);
  w.final_beta = RowVector<Scalar>::Zero(d);
  if (cfg.pool == PoolMode::Cls) w.cls_token = random_matrix<Scalar>(1, d, 0.02, rng);
  w.alpha = Scalar(0);
  for (const HeadSpec& spec : heads) {
    HeadWeights<Scalar> h;
    h.name = spec.name;
    h.weight = random_matrix<Scalar>(d, spec.classes, 0.02, rng);
    h.bias = RowVector<Scalar>::Zero(spec.classes);
    w.heads.push_back(std::move(h));
  }
  return w;
}

template <typename Scalar>
std::vector<ParamView<Scalar>> parameter_views(EncoderWeights<Scalar>& w, const std::string& prefix) {
  std::vector<ParamView<Scalar>> out;
  const int last = static_cast<int>(w.layers.size()) - 1;
  if (w.cls_token.size() > 0) out.push_back(view(prefix + "cls_token", w.cls_token, -1));
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = prefix + "block" + std::to_string(l) + ".";
    const int tag = static_cast<int>(l);
    out.push_back(view(p + "ln1.gamma", L.ln1_gamma, tag));
    out.push_back(view(p + "ln1.beta", L.ln1_beta, tag));
    out.push_back(view(p + "attn.wq", L.wq, tag));
    out.push_back(view(p + "attn.bq", L.bq, tag));
    out.push_back(view(p + "attn.wk", L.wk, tag));
    out.push_back(view(p + "attn.bk", L.bk, tag));
    out.push_back(view(p + "attn.wv", L.wv, tag));
    out.push_back(view(p + "attn.bv", L.bv, tag));
    out.push_back(view(p + "attn.wo", L.wo, tag));
    out.push_back(view(p + "attn.bo", L.bo, tag));
    out.push_back(view(p + "ln2.gamma", L.ln2_gamma, tag));
    out.push_back(view(p + "ln2.beta", L.ln2_beta, tag));
    out.push_back(view(p + "mlp.w1", L.w1, tag));
    out.push_back(view(p + "mlp.b1", L.b1, tag));
    out.push_back(view(p + "mlp.w2", L.w2, tag));
    out.push_back(view(p + "mlp.b2", L.b2, tag));
  }
  out.push_back(view(prefix + "final_ln.gamma", w.final_gamma, last));
  out.push_back(view(prefix + "final_ln.beta", w.final_beta, last));
  out.push_back({prefix + "gate.alpha", &w.alpha, 1, {}, kNeverFrozen});
  for (auto& h : w.heads) {
    out.push_back(view(prefix + "head." + h.name + ".weight", h.weight, kNeverFrozen));
    out.push_back(view(prefix + "head." + h.name + ".bias", h.bias, kNeverFrozen));
  }
  return out;
}

template <typename Scalar>
EncodeResult<Scalar> encode(const Matrix<Scalar>& tokens, const EncoderConfig& cfg,
                            const EncoderWeights<Scalar>& weights, bool training) {
  cfg.validate();
  if (tokens.rows() < 1 || tokens.cols() != cfg.hidden) {
    throw TubeError(ErrorCode::ShapeMismatch, "encode expects n >= 1 tokens of width " + std::to_string(cfg.hidden));
  }
  if (static_cast<int>(weights.layers.size()) != cfg.layers) {
    throw TubeError(ErrorCode::ShapeMismatch, "weights and config disagree on layer count");
  }
  Matrix<Scalar> z;
  if (cfg.pool == PoolMode::Cls) {
    z.resize(tokens.rows() + 1, tokens.cols());
    z.row(0) = weights.cls_token;
    z.bottomRows(tokens.rows()) = tokens;
  } else {
    z = tokens;
  }
  const Eigen::Index n = z.rows();
  const int dh = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Scalar gate = std::tanh(weights.alpha);

  EncodeResult<Scalar> result;
  ForwardTrace<Scalar> trace;
  trace.z0 = z;

  for (int l = 0; l < cfg.layers; ++l) {
    const LayerWeights<Scalar>& W = weights.layers[static_cast<std::size_t>(l)];
    LayerTrace<Scalar> lt;
    Matrix<Scalar> a;
    layer_norm(z, W.ln1_gamma, W.ln1_beta, lt.ln1_hat, lt.ln1_rstd, a);
    Matrix<Scalar> q = (a * W.wq).rowwise() + W.bq;
    Matrix<Scalar> k = (a * W.wk).rowwise() + W.bk;
    Matrix<Scalar> v = (a * W.wv).rowwise() + W.bv;
    Matrix<Scalar> concat(n, cfg.hidden);
    lt.probs.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      Matrix<Scalar> s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
      softmax_rows(s);
      concat.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
      if (training) lt.probs.push_back(std::move(s));
    }
    Matrix<Scalar> y = z + ((concat * W.wo).rowwise() + W.bo);
    check_finite(y, "attention", l);

    Matrix<Scalar> b;
    layer_norm(y, W.ln2_gamma, W.ln2_beta, lt.ln2_hat, lt.ln2_rstd, b);
    Matrix<Scalar> u = (b * W.w1).rowwise() + W.b1;
    Matrix<Scalar> g = gelu(u);
    z = y + ((g * W.w2).rowwise() + W.b2);
    // A closed gate (tanh(alpha) == 0) contributes nothing, not even a signed zero.
    if (cfg.gate_layer && *cfg.gate_layer == l && gate != Scalar(0)) z += gate * trace.z0;
    check_finite(z, "mlp", l);

    if (training) {
      lt.attn_in = std::move(a);
      lt.q = std::move(q);
      lt.k = std::move(k);
      lt.v = std::move(v);
      lt.attn_concat = std::move(concat);
      lt.mlp_in = std::move(b);
      lt.mlp_pre = std::move(u);
      lt.mlp_act = std::move(g);
      trace.layers.push_back(std::move(lt));
    }
  }
  layer_norm(z, weights.final_gamma, weights.final_beta, trace.final_hat, trace.final_rstd, result.features);
  if (training) result.trace = std::move(trace);
  return result;
}

template <typename Scalar>
RowVector<Scalar> pool_features(const Matrix<Scalar>& features, const EncoderConfig& cfg) {
  if (cfg.pool == PoolMode::Cls) return features.row(0);
  return features.colwise().mean();
}

template <typename Scalar>
RowVector<Scalar> classify(const Matrix<Scalar>& features, const std::string& head_name, const EncoderConfig& cfg,
                           const EncoderWeights<Scalar>& weights) {
  const HeadWeights<Scalar>& head = weights.head(head_name);
  return pool_features(features, cfg) * head.weight + head.bias;
}

template <typename Scalar>
Matrix<Scalar> classify_backward(const RowVector<Scalar>& logit_grad, const Matrix<Scalar>& features,
                                 const std::string& head_name, const EncoderConfig& cfg,
                                 const EncoderWeights<Scalar>& weights, EncoderWeights<Scalar>& grads) {
  const HeadWeights<Scalar>& head = weights.head(head_name);
  HeadWeights<Scalar>& g = grads.head(head_name);
  const RowVector<Scalar> pooled = pool_features(features, cfg);
  g.weight.noalias() += pooled.transpose() * logit_grad;
  g.bias += logit_grad;
  const RowVector<Scalar> dpooled = logit_grad * head.weight.transpose();
  Matrix<Scalar> dfeatures = Matrix<Scalar>::Zero(features.rows(), features.cols());
  if (cfg.pool == PoolMode::Cls) {
    dfeatures.row(0) = dpooled;
  } else {
    dfeatures.rowwise() = dpooled / static_cast<Scalar>(features.rows());
  }
  return dfeatures;
}

template <typename Scalar>
Matrix<Scalar> backward_into(const Matrix<Scalar>& feature_grad, const EncodeResult<Scalar>& forward,
                             const EncoderConfig& cfg, const EncoderWeights<Scalar>& weights,
                             EncoderWeights<Scalar>& grads) {
  if (!forward.trace) throw TubeError(ErrorCode::MissingTrace, "backward needs a training-mode forward pass");
  const ForwardTrace<Scalar>& trace = *forward.trace;
  if (feature_grad.rows() != forward.features.rows() || feature_grad.cols() != forward.features.cols()) {
    throw TubeError(ErrorCode::ShapeMismatch, "feature gradient shape differs from encode output");
  }
  const int L = cfg.layers;
  const int dh = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Scalar gate = std::tanh(weights.alpha);
  const bool embeddings_trainable = cfg.freeze_below == 0;

  // Blocks below `stop` never need visiting: nothing under them is trainable
  // and the gate (if any) sits at or above it.
  int stop = embeddings_trainable ? 0 : cfg.freeze_below;
  if (cfg.gate_layer) stop = std::min(stop, *cfg.gate_layer);

  const bool final_trainable = !is_frozen(L - 1, cfg.freeze_below);
  Matrix<Scalar> dz = layer_norm_backward(feature_grad, trace.final_hat, trace.final_rstd, weights.final_gamma,
                                          final_trainable ? &grads.final_gamma : nullptr,
                                          final_trainable ? &grads.final_beta : nullptr);
  Matrix<Scalar> dz0 = Matrix<Scalar>::Zero(trace.z0.rows(), trace.z0.cols());

  for (int l = L - 1; l >= stop; --l) {
    const LayerWeights<Scalar>& W = weights.layers[static_cast<std::size_t>(l)];
    LayerWeights<Scalar>& G = grads.layers[static_cast<std::size_t>(l)];
    const LayerTrace<Scalar>& lt = trace.layers[static_cast<std::size_t>(l)];
    const bool trainable = !is_frozen(l, cfg.freeze_below);

    if (cfg.gate_layer && *cfg.gate_layer == l) {
      grads.alpha += (dz.array() * trace.z0.array()).sum() * (Scalar(1) - gate * gate);
      dz0 += gate * dz;
    }
    if (!trainable && !embeddings_trainable && l == stop) break;

    // z' = y + MLP(LN2(y))
    const Matrix<Scalar>& dv = dz;
    if (trainable) {
      G.w2.noalias() += lt.mlp_act.transpose() * dv;
      G.b2 += dv.colwise().sum();
    }
    const Matrix<Scalar> dg = dv * W.w2.transpose();
    const Matrix<Scalar> du = dg.cwiseProduct(gelu_grad(lt.mlp_pre));
    if (trainable) {
      G.w1.noalias() += lt.mlp_in.transpose() * du;
      G.b1 += du.colwise().sum();
    }
    const Matrix<Scalar> db = du * W.w1.transpose();
    Matrix<Scalar> dy = dz + layer_norm_backward(db, lt.ln2_hat, lt.ln2_rstd, W.ln2_gamma,
                                                 trainable ? &G.ln2_gamma : nullptr,
                                                 trainable ? &G.ln2_beta : nullptr);

    // y = z + MSA(LN1(z))
    if (trainable) {
      G.wo.noalias() += lt.attn_concat.transpose() * dy;
      G.bo += dy.colwise().sum();
    }
    const Matrix<Scalar> dconcat = dy * W.wo.transpose();
    Matrix<Scalar> dq(dy.rows(), cfg.hidden);
    Matrix<Scalar> dk(dy.rows(), cfg.hidden);
    Matrix<Scalar> dvv(dy.rows(), cfg.hidden);
    for (int h = 0; h < cfg.heads; ++h) {
      const Matrix<Scalar>& p = lt.probs[static_cast<std::size_t>(h)];
      const auto dout = dconcat.middleCols(h * dh, dh);
      const Matrix<Scalar> dp = dout * lt.v.middleCols(h * dh, dh).transpose();
      dvv.middleCols(h * dh, dh) = p.transpose() * dout;
      const Column<Scalar> row_dot = (dp.array() * p.array()).rowwise().sum();
      const Matrix<Scalar> ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleCols(h * dh, dh) = ds * lt.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * lt.q.middleCols(h * dh, dh);
    }
    if (trainable) {
      G.wq.noalias() += lt.attn_in.transpose() * dq;
      G.bq += dq.colwise().sum();
      G.wk.noalias() += lt.attn_in.transpose() * dk;
      G.bk += dk.colwise().sum();
      G.wv.noalias() += lt.attn_in.transpose() * dvv;
      G.bv += dvv.colwise().sum();
    }
    if (l == stop && !embeddings_trainable) break;
    const Matrix<Scalar> da = dq * W.wq.transpose() + dk * W.wk.transpose() + dvv * W.wv.transpose();
    dz = dy + layer_norm_backward(da, lt.ln1_hat, lt.ln1_rstd, W.ln1_gamma, trainable ? &G.ln1_gamma : nullptr,
                                  trainable ? &G.ln1_beta : nullptr);
  }

  if (!embeddings_trainable) return {};
  dz += dz0;
  if (cfg.pool == PoolMode::Cls) {
    grads.cls_token += dz.row(0);
    return dz.bottomRows(dz.rows() - 1);
  }
  return dz;
}

template <typename Scalar>
EncoderGradients<Scalar> backward(const Matrix<Scalar>& feature_grad, const EncodeResult<Scalar>& forward,
                                  const EncoderConfig& cfg, const EncoderWeights<Scalar>& weights) {
  EncoderGradients<Scalar> out;
  out.weights = weights.zeros_like();
  out.input = backward_into(feature_grad, forward, cfg, weights, out.weights);
  return out;
}

#define TUBEKIT_INSTANTIATE(S)                                                                                  \
  template struct EncoderWeights<S>;                                                                           \
  template EncoderWeights<S> init_encoder<S>(const EncoderConfig&, const std::vector<HeadSpec>&,               \
                                             std::mt19937_64&);                                                \
  template std::vector<ParamView<S>> parameter_views<S>(EncoderWeights<S>&, const std::string&);              \
  template EncodeResult<S> encode<S>(const Matrix<S>&, const EncoderConfig&, const EncoderWeights<S>&, bool); \
  template RowVector<S> pool_features<S>(const Matrix<S>&, const EncoderConfig&);                              \
  template RowVector<S> classify<S>(const Matrix<S>&, const std::string&, const EncoderConfig&,                \
                                    const EncoderWeights<S>&);                                                 \
  template Matrix<S> classify_backward<S>(const RowVector<S>&, const Matrix<S>&, const std::string&,           \
                                          const EncoderConfig&, const EncoderWeights<S>&, EncoderWeights<S>&); \
  template EncoderGradients<S> backward<S>(const Matrix<S>&, const EncodeResult<S>&, const EncoderConfig&,     \
                                           const EncoderWeights<S>&);                                          \
  template Matrix<S> backward_into<S>(const Matrix<S>&, const EncodeResult<S>&, const EncoderConfig&,          \
                                      const EncoderWeights<S>&, EncoderWeights<S>&);

TUBEKIT_INSTANTIATE(float)
TUBEKIT_INSTANTIATE(double)

#undef TUBEKIT_INSTANTIATE

}  // namespace tubekit
