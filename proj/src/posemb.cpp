#include "tubekit/posemb.hpp"

#include <cmath>

namespace tubekit {

double embedding_frequency(int j, const EmbeddingParams& params) {
  if (params.mode == ExponentMode::Literal) return std::pow(params.tau, -static_cast<double>(j));
  const int blocks = params.d / 6;
  return std::pow(params.tau, -static_cast<double>(j) / blocks);
}

Matrix<double> embed_positions(std::span<const Center> centers, const EmbeddingParams& params) {
  if (params.d < 6 || !(params.tau > 1.0)) {
    throw TubeError(ErrorCode::InvalidConfig, "positional embedding needs d >= 6 and tau > 1");
  }
  const int blocks = params.d / 6;
  Matrix<double> out = Matrix<double>::Zero(static_cast<Eigen::Index>(centers.size()), params.d);
  std::vector<double> freq(blocks);
  for (int j = 0; j < blocks; ++j) freq[j] = embedding_frequency(j, params);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double* row = out.row(static_cast<Eigen::Index>(i)).data();
    for (int j = 0; j < blocks; ++j) {
      for (int a = 0; a < 3; ++a) {
        const double phase = centers[i][a] * freq[j];
        row[6 * j + 2 * a] = std::sin(phase);
        row[6 * j + 2 * a + 1] = std::cos(phase);
      }
    }
  }
  return out;
}

template <typename Scalar>
TokenBatch<Scalar> add_positions(TokenBatch<Scalar> tokens, const EmbeddingParams& params) {
  if (tokens.tokens.cols() != params.d ||
      tokens.tokens.rows() != static_cast<Eigen::Index>(tokens.centers.size())) {
    throw TubeError(ErrorCode::ShapeMismatch, "token width or count does not match the embedding");
  }
  tokens.tokens += embed_positions(tokens.centers, params).template cast<Scalar>();
  return tokens;
}

template TokenBatch<float> add_positions<float>(TokenBatch<float>, const EmbeddingParams&);
template TokenBatch<double> add_positions<double>(TokenBatch<double>, const EmbeddingParams&);

}  // namespace tubekit
