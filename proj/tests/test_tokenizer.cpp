#include <gtest/gtest.h>

#include <random>

#include "oracles/reference.hpp"
#include "tubekit/posemb.hpp"
#include "tubekit/tokenizer.hpp"

using namespace tubekit;

namespace {

TubeSpec tube(Triple k, Triple s, Triple o = {0, 0, 0}, Triple g = {1, 1, 1}, bool image = false) {
  TubeSpec t;
  t.kernel = k;
  t.stride = s;
  t.offset = o;
  t.s2d_group = g;
  t.image_applicable = image;
  return t;
}

VideoClip<double> random_clip(Triple dims, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VideoClip<double> clip(dims[0], dims[1], dims[2], channels);
  for (double& v : clip.voxels) v = u(rng);
  return clip;
}

TubeBank small_bank() {
  TubeBank bank;
  bank.hidden_size = 12;
  bank.tubes = {tube({1, 4, 4}, {8, 4, 4}, {0, 0, 0}, {1, 1, 1}, true), tube({4, 4, 4}, {4, 8, 8}, {1, 2, 2}),
                tube({2, 3, 3}, {4, 4, 8}, {0, 1, 0}, {2, 1, 2})};
  return bank;
}

}  // namespace

TEST(Tokenize, MatchesDirectConvolution) {
  const TubeBank bank = small_bank();
  const VideoClip<double> clip = random_clip({8, 16, 16}, 2, 3);
  std::mt19937_64 rng(5);
  KernelBank<double> kb = init_kernels<double>(bank, 2, false, rng);
  for (auto& b : kb.biases) b.setRandom();
  const TokenBatch<double> batch = tokenize(clip, bank, kb);

  Eigen::Index row = 0;
  for (std::size_t i = 0; i < bank.tubes.size(); ++i) {
    const auto expected = oracle::direct_tokens(clip, bank.tubes[i], kb.kernels[i], kb.biases[i]);
    ASSERT_EQ(static_cast<std::int64_t>(expected.size()), token_grid(bank.tubes[i], clip.dims()).size());
    for (const auto& token : expected) {
      ASSERT_EQ(static_cast<Eigen::Index>(token.size()), batch.tokens.cols());
      for (std::size_t j = 0; j < token.size(); ++j) {
        EXPECT_NEAR(batch.tokens(row, static_cast<Eigen::Index>(j)), static_cast<double>(token[j]), 1e-12);
      }
      EXPECT_EQ(batch.tube_id[static_cast<std::size_t>(row)], static_cast<int>(i));
      ++row;
    }
  }
  EXPECT_EQ(row, batch.tokens.rows());
}

TEST(Tokenize, LinearInClipAndKernel) {
  const TubeBank bank = small_bank();
  std::mt19937_64 rng(9);
  KernelBank<double> kb = init_kernels<double>(bank, 2, false, rng);
  const VideoClip<double> a = random_clip({8, 16, 16}, 2, 1), b = random_clip({8, 16, 16}, 2, 2);
  VideoClip<double> sum = a;
  for (std::size_t i = 0; i < sum.voxels.size(); ++i) sum.voxels[i] = 2.0 * a.voxels[i] - 0.5 * b.voxels[i];
  const Matrix<double> ta = tokenize(a, bank, kb).tokens, tb = tokenize(b, bank, kb).tokens;
  const Matrix<double> ts = tokenize(sum, bank, kb).tokens;  // biases are zero at init
  EXPECT_LT((ts - (2.0 * ta - 0.5 * tb)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tokenize, ImageInputUsesOnlyImageTubes) {
  const TubeBank bank = small_bank();
  std::mt19937_64 rng(1);
  const KernelBank<double> kb = init_kernels<double>(bank, 2, false, rng);
  const VideoClip<double> video = random_clip({8, 16, 16}, 2, 4);
  const VideoClip<double> frame = video.crop({0, 0, 0}, {1, 16, 16});
  const TokenBatch<double> image = tokenize(frame, bank, kb);
  const TokenBatch<double> full = tokenize(video, bank, kb);
  ASSERT_EQ(image.tokens.rows(), 16);
  for (int id : image.tube_id) EXPECT_EQ(id, 0);
  // The patch tube's frame-0 tokens coincide with the image tokens, centers included.
  for (Eigen::Index i = 0; i < image.tokens.rows(); ++i) {
    EXPECT_EQ(image.tokens.row(i), full.tokens.row(i));
    EXPECT_EQ(image.centers[static_cast<std::size_t>(i)], full.centers[static_cast<std::size_t>(i)]);
  }
}

TEST(SpaceToDepth, MergeSplitRoundTrip) {
  GridTokens<double> pre;
  pre.counts = {2, 4, 2};
  pre.tokens = Matrix<double>::Random(16, 3);
  for (int i = 0; i < 16; ++i) pre.centers.push_back({double(i), 2.0 * i, 0.5});
  const GridTokens<double> merged = merge_s2d(pre, {1, 2, 2});
  EXPECT_EQ(merged.counts, (Triple{2, 2, 1}));
  EXPECT_EQ(merged.tokens.cols(), 12);
  EXPECT_EQ(split_s2d(merged.tokens, pre.counts, {1, 2, 2}), pre.tokens);
  // Center of the first merged token: mean of pre tokens 0, 1, 2, 3.
  EXPECT_DOUBLE_EQ(merged.centers[0][0], 1.5);
  try {
    merge_s2d(pre, {1, 3, 1});
    FAIL();
  } catch (const TubeError& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridNotDivisible);
  }
}

TEST(Interpolation, IdentityIsBitExact) {
  Matrix<double> base = Matrix<double>::Random(8 * 8 * 8 * 3, 5);
  base(0, 0) = -0.0;
  const Matrix<double> out = interpolate_kernel(base, kBaseKernelShape, 3, {8, 8, 8});
  ASSERT_EQ(out.rows(), base.rows());
  EXPECT_EQ(std::memcmp(out.data(), base.data(), sizeof(double) * base.size()), 0);
}

TEST(Interpolation, ConstantKernelPreserved) {
  const Matrix<double> base = Matrix<double>::Constant(8 * 8 * 8 * 2, 3, 0.375);
  for (const Triple target : {Triple{1, 1, 1}, Triple{1, 16, 16}, Triple{16, 4, 4}, Triple{4, 12, 12}, Triple{3, 5, 7},
                              Triple{8, 8, 8}, Triple{2, 2, 2}}) {
    const Matrix<double> out = interpolate_kernel(base, kBaseKernelShape, 2, target);
    EXPECT_EQ(out.rows(), volume(target) * 2);
    EXPECT_LT((out.array() - 0.375).abs().maxCoeff(), 1e-15) << format_triple(target);
  }
}

TEST(Interpolation, LinearRampMatchesClosedForm) {
  // value(t, h, w, c) = 1 + 0.5 t - 0.25 h + 2 w + 0.1 c is reproduced exactly by linear interpolation.
  const int C = 2;
  auto ramp = [](double t, double h, double w, int c) { return 1.0 + 0.5 * t - 0.25 * h + 2.0 * w + 0.1 * c; };
  Matrix<double> base(8 * 8 * 8 * C, 1);
  Eigen::Index r = 0;
  for (int t = 0; t < 8; ++t)
    for (int h = 0; h < 8; ++h)
      for (int w = 0; w < 8; ++w)
        for (int c = 0; c < C; ++c) base(r++, 0) = ramp(t, h, w, c);
  for (const Triple target : {Triple{16, 4, 4}, Triple{4, 12, 12}, Triple{5, 3, 9}, Triple{1, 16, 16}}) {
    const Matrix<double> out = interpolate_kernel(base, kBaseKernelShape, C, target);
    auto src = [](int i, int k) { return k == 1 ? 3.5 : i * 7.0 / (k - 1); };
    r = 0;
    for (int t = 0; t < target[0]; ++t)
      for (int h = 0; h < target[1]; ++h)
        for (int w = 0; w < target[2]; ++w)
          for (int c = 0; c < C; ++c, ++r) {
            EXPECT_NEAR(out(r, 0), ramp(src(t, target[0]), src(h, target[1]), src(w, target[2]), c), 1e-12);
          }
  }
}

TEST(Interpolation, AdjointIsTranspose) {
  const Triple target{5, 3, 9};
  const Matrix<double> x = Matrix<double>::Random(8 * 8 * 8 * 2, 3);
  const Matrix<double> y = Matrix<double>::Random(volume(target) * 2, 3);
  const double lhs = (interpolate_kernel(x, kBaseKernelShape, 2, target).array() * y.array()).sum();
  const double rhs = (x.array() * interpolate_kernel_adjoint(y, kBaseKernelShape, 2, target).array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
}

namespace {

// f(kernels) = <R, tokens> for a fixed random R.
void check_tokenizer_gradients(const TubeBank& bank, bool interpolated) {
  const VideoClip<double> clip = random_clip({8, 16, 16}, 2, 11);
  std::mt19937_64 rng(13);
  KernelBank<double> kb = init_kernels<double>(bank, 2, interpolated, rng);
  for (auto& b : kb.biases) b.setRandom();
  const Eigen::Index n = tokenize(clip, bank, kb).tokens.rows();
  const Matrix<double> R = Matrix<double>::Random(n, bank.hidden_size);
  auto f = [&] { return (tokenize(clip, bank, kb).tokens.array() * R.array()).sum(); };
  const TokenizerGradients<double> g = tokenize_gradient(R, clip, bank, kb, true);

  double worst = 0.0;
  auto compare = [&](double* data, const double* analytic, std::size_t size) {
    const auto numeric = oracle::central_difference(data, size, f);
    for (std::size_t i = 0; i < size; ++i) worst = std::max(worst, oracle::relative_error(numeric[i], analytic[i]));
  };
  if (interpolated) {
    compare(kb.base.data(), g.kernels.base.data(), static_cast<std::size_t>(kb.base.size()));
  } else {
    for (std::size_t i = 0; i < kb.kernels.size(); ++i) {
      compare(kb.kernels[i].data(), g.kernels.kernels[i].data(), static_cast<std::size_t>(kb.kernels[i].size()));
    }
  }
  for (std::size_t i = 0; i < kb.biases.size(); ++i) {
    compare(kb.biases[i].data(), g.kernels.biases[i].data(), static_cast<std::size_t>(kb.biases[i].size()));
  }
  // Input gradient through the same functional.
  VideoClip<double> probe = clip;
  auto f_in = [&] { return (tokenize(probe, bank, kb).tokens.array() * R.array()).sum(); };
  const auto numeric = oracle::central_difference(probe.voxels.data(), 200, f_in);
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    worst = std::max(worst, oracle::relative_error(numeric[i], g.input->voxels[i]));
  }
  EXPECT_LT(worst, 1e-4);
}

}  // namespace

TEST(TokenizerGradient, PlainKernels) {
  TubeBank bank;
  bank.hidden_size = 6;
  bank.tubes = {tube({1, 4, 4}, {8, 4, 4}, {0, 0, 0}, {1, 1, 1}, true), tube({2, 3, 3}, {4, 6, 6}, {1, 1, 0})};
  check_tokenizer_gradients(bank, false);
}

TEST(TokenizerGradient, SpaceToDepthKernels) {
  TubeBank bank;
  bank.hidden_size = 8;
  bank.tubes = {tube({1, 4, 4}, {8, 8, 8}, {0, 0, 0}, {1, 2, 2}, true), tube({2, 3, 3}, {4, 8, 8}, {0, 1, 0}, {2, 1, 2})};
  check_tokenizer_gradients(bank, false);
}

TEST(TokenizerGradient, InterpolatedKernel) {
  TubeBank bank;
  bank.hidden_size = 6;
  bank.tubes = {tube({1, 4, 4}, {8, 4, 4}, {0, 0, 0}, {1, 1, 1}, true), tube({3, 5, 2}, {4, 6, 6})};
  check_tokenizer_gradients(bank, true);
}

TEST(Tokenize, RejectsMismatchedKernels) {
  const TubeBank bank = small_bank();
  std::mt19937_64 rng(1);
  KernelBank<double> kb = init_kernels<double>(bank, 2, false, rng);
  kb.kernels[1] = Matrix<double>::Zero(3, 3);
  EXPECT_THROW(tokenize(random_clip({8, 16, 16}, 2, 1), bank, kb), TubeError);
}
