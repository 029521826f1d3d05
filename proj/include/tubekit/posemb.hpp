#pragma once

#include <span>

#include "tubekit/common.hpp"
#include "tubekit/tokenizer.hpp"

namespace tubekit {

enum class ExponentMode {
  Normalized,    // w_j = tau^(-j / (d/6))
  Literal,  // w_j = tau^(-j)
};

struct EmbeddingParams {
  int d = 768;
  double tau = 10000.0;
  ExponentMode mode = ExponentMode::Normalized;
};

double embedding_frequency(int j, const EmbeddingParams& params);

/// Fixed sine/cosine embedding of tube centers. Block j of six channels holds
/// [sin(t w_j), cos(t w_j), sin(h w_j), cos(h w_j), sin(w w_j), cos(w w_j)];
/// the d mod 6 trailing channels are zero.
Matrix<double> embed_positions(std::span<const Center> centers, const EmbeddingParams& params);

/// tokens += embed_positions(centers). Throws ShapeMismatch when widths differ.
template <typename Scalar>
TokenBatch<Scalar> add_positions(TokenBatch<Scalar> tokens, const EmbeddingParams& params);

}  // namespace tubekit
