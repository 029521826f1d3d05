#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles/reference.hpp"
#include "tubekit/posemb.hpp"

using namespace tubekit;

namespace {

std::vector<Center> random_centers(int n, std::uint64_t seed, double hi = 224.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, hi);
  std::vector<Center> out(n);
  for (auto& c : out) c = {u(rng), u(rng), u(rng)};
  return out;
}

}  // namespace

TEST(FixedEmbedding, SineCosinePairsHaveUnitNorm) {
  const auto centers = random_centers(10000, 1);
  const Matrix<double> e = embed_positions(centers, {768, 10000.0, ExponentMode::Normalized});
  double worst = 0.0;
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index k = 0; k < 768; k += 2) {
      worst = std::max(worst, std::abs(e(i, k) * e(i, k) + e(i, k + 1) * e(i, k + 1) - 1.0));
    }
  EXPECT_LT(worst, 1e-12);
}

TEST(FixedEmbedding, OriginPattern) {
  const std::vector<Center> origin{{0.0, 0.0, 0.0}};
  const Matrix<double> e = embed_positions(origin, {20, 10000.0, ExponentMode::Normalized});
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 6; ++k) EXPECT_EQ(e(0, 6 * j + k), k % 2 == 0 ? 0.0 : 1.0);
  EXPECT_EQ(e(0, 18), 0.0);
  EXPECT_EQ(e(0, 19), 0.0);
}

TEST(FixedEmbedding, RemainderChannelsAreZero) {
  const auto centers = random_centers(50, 2);
  for (int d : {7, 11, 770}) {
    const Matrix<double> e = embed_positions(centers, {d, 10000.0, ExponentMode::Normalized});
    const int used = 6 * (d / 6);
    EXPECT_EQ(e.rightCols(d - used).cwiseAbs().maxCoeff(), 0.0) << d;
  }
}

TEST(FixedEmbedding, MatchesLongDoubleReference) {
  const auto centers = random_centers(200, 3);
  for (const bool literal : {false, true}) {
    for (const double tau : {1000.0, 10000.0}) {
      const EmbeddingParams p{62, tau, literal ? ExponentMode::Literal : ExponentMode::Normalized};
      const Matrix<double> e = embed_positions(centers, p);
      for (std::size_t i = 0; i < centers.size(); ++i) {
        const auto ref = oracle::embedding(centers[i], 62, tau, literal);
        for (int k = 0; k < 62; ++k) EXPECT_NEAR(e(static_cast<Eigen::Index>(i), k), double(ref[k]), 1e-12);
      }
    }
  }
}

TEST(FixedEmbedding, FrequenciesFollowMode) {
  const EmbeddingParams normalized{768, 10000.0, ExponentMode::Normalized};
  const EmbeddingParams literal{768, 10000.0, ExponentMode::Literal};
  EXPECT_DOUBLE_EQ(embedding_frequency(0, normalized), 1.0);
  EXPECT_NEAR(embedding_frequency(64, normalized), std::pow(10000.0, -0.5), 1e-15);
  EXPECT_NEAR(embedding_frequency(127, normalized), std::pow(10000.0, -127.0 / 128.0), 1e-18);
  EXPECT_DOUBLE_EQ(embedding_frequency(1, literal), 1e-4);
  // Literal frequencies underflow quickly, so most blocks see a constant phase.
  EXPECT_LT(embedding_frequency(40, literal), 1e-150);
}

TEST(FixedEmbedding, DistinctCentersGetDistinctEmbeddings) {
  std::vector<Center> grid;
  for (int t = 0; t < 32; t += 2)
    for (int h = 0; h < 224; h += 8)
      for (int w = 0; w < 224; w += 8) grid.push_back({t + 0.5, h + 3.5, w + 7.5});
  const Matrix<double> e = embed_positions(grid, {96, 10000.0, ExponentMode::Normalized});
  // Nearest pair in embedding space is still well separated.
  double nearest = 1e9;
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < e.rows(); j += 37) nearest = std::min(nearest, (e.row(i) - e.row(j)).norm());
    if (i + 1 < e.rows()) nearest = std::min(nearest, (e.row(i) - e.row(i + 1)).norm());
  }
  EXPECT_GT(nearest, 1e-3);
}

TEST(FixedEmbedding, ImageTokensMatchFirstFrame) {
  // An image's tokens sit at t = 0, so they equal the embedding of frame 0 of a video.
  std::vector<Center> image{{0.0, 7.5, 7.5}, {0.0, 7.5, 23.5}};
  const Matrix<double> e = embed_positions(image, {48, 10000.0, ExponentMode::Normalized});
  for (int j = 0; j < 8; ++j) {
    EXPECT_EQ(e(0, 6 * j), 0.0);
    EXPECT_EQ(e(0, 6 * j + 1), 1.0);
  }
  // Same row, so the h channels agree; the w channels differ.
  for (int j = 0; j < 8; ++j) {
    EXPECT_EQ(e(0, 6 * j + 2), e(1, 6 * j + 2));
    EXPECT_EQ(e(0, 6 * j + 3), e(1, 6 * j + 3));
  }
  EXPECT_NE(e(0, 4), e(1, 4));
}

TEST(FixedEmbedding, RejectsBadParameters) {
  const std::vector<Center> one{{1.0, 2.0, 3.0}};
  EXPECT_THROW(embed_positions(one, {5, 10000.0, ExponentMode::Normalized}), TubeError);
  EXPECT_THROW(embed_positions(one, {12, 1.0, ExponentMode::Normalized}), TubeError);
  EXPECT_THROW(embed_positions(one, {12, -3.0, ExponentMode::Normalized}), TubeError);
}

TEST(AddPositions, AddsEmbeddingAndChecksWidth) {
  TokenBatch<float> batch;
  batch.tokens = Matrix<float>::Constant(2, 12, 0.25f);
  batch.centers = {{0.0, 1.0, 2.0}, {4.0, 5.0, 6.0}};
  batch.tube_id = {0, 0};
  const EmbeddingParams p{12, 1000.0, ExponentMode::Normalized};
  const TokenBatch<float> out = add_positions(batch, p);
  const Matrix<double> e = embed_positions(batch.centers, p);
  EXPECT_LT((out.tokens.cast<double>() - (e.array() + 0.25).matrix()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(add_positions(batch, {18, 1000.0, ExponentMode::Normalized}), TubeError);
}
