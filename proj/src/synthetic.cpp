#include "tubekit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace tubekit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double wrapped_delta(double a, double b, double period) {
  double d = std::fmod(std::abs(a - b), period);
  return std::min(d, period - d);
}

void add_noise_and_clamp(VideoClip<float>& clip, double noise_std, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, noise_std > 0 ? noise_std : 1.0);
  for (float& v : clip.voxels) {
    const double n = noise_std > 0 ? noise(rng) : 0.0;
    v = static_cast<float>(std::clamp(static_cast<double>(v) + n, 0.0, 1.0));
  }
}

Sample motion_sample(const SyntheticTask& task, std::mt19937_64& rng) {
  const auto [T, H, W] = task.dims;
  std::uniform_int_distribution<int> pick_label(0, task.classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Sample s;
  s.label = pick_label(rng);
  const double angle = 2.0 * std::numbers::pi * s.label / task.classes;
  const double vh = task.speed * std::sin(angle);
  const double vw = task.speed * std::cos(angle);
  const double h0 = unit(rng) * H;
  const double w0 = unit(rng) * W;
  std::vector<double> color(task.channels);
  for (double& c : color) c = 0.5 + 0.5 * unit(rng);
  const double background = 0.1 * unit(rng);

  s.clip = VideoClip<float>(T, H, W, task.channels);
  const double inv_two_var = 1.0 / (2.0 * task.blob_sigma * task.blob_sigma);
  // The blob is separable: exp(-(dh^2 + dw^2) / 2s^2) = eh[h] * ew[w].
  std::vector<double> eh(H), ew(W);
  for (int t = 0; t < T; ++t) {
    const double ch = h0 + vh * t;
    const double cw = w0 + vw * t;
    for (int h = 0; h < H; ++h) {
      const double dh = wrapped_delta(h, ch, H);
      eh[h] = std::exp(-dh * dh * inv_two_var);
    }
    for (int w = 0; w < W; ++w) {
      const double dw = wrapped_delta(w, cw, W);
      ew[w] = std::exp(-dw * dw * inv_two_var);
    }
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        const double blob = eh[h] * ew[w];
        for (int c = 0; c < task.channels; ++c) {
          s.clip.at(t, h, w, c) = static_cast<float>(background + color[c] * blob);
        }
      }
    }
  }
  add_noise_and_clamp(s.clip, task.noise_std, rng);
  return s;
}

bool inside_shape(int kind, double dh, double dw, double radius) {
  const double r = std::sqrt(dh * dh + dw * dw);
  switch (kind) {
    case 0:  // filled disk
      return r <= radius;
    case 1:  // ring
      return r <= radius && r >= radius - 1.5;
    case 2:  // plus
      return (std::abs(dh) <= 1.0 && std::abs(dw) <= radius) || (std::abs(dw) <= 1.0 && std::abs(dh) <= radius);
    default:  // diagonal cross
      return std::abs(std::abs(dh) - std::abs(dw)) <= 1.0 && std::max(std::abs(dh), std::abs(dw)) <= radius;
  }
}

Sample shape_sample(const SyntheticTask& task, std::mt19937_64& rng) {
  const int H = task.dims[1];
  const int W = task.dims[2];
  std::uniform_int_distribution<int> pick_label(0, task.classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Sample s;
  s.label = pick_label(rng);
  const int kind = s.label % kStaticShapeKinds;
  const double radius = 4.0 + 3.0 * unit(rng);
  const double ch = radius + 1 + unit(rng) * std::max(0.0, H - 2 * radius - 2);
  const double cw = radius + 1 + unit(rng) * std::max(0.0, W - 2 * radius - 2);
  std::vector<double> color(task.channels);
  for (double& c : color) c = 0.5 + 0.5 * unit(rng);
  const double background = 0.1 * unit(rng);

  s.clip = VideoClip<float>(1, H, W, task.channels);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      const bool on = inside_shape(kind, h - ch, w - cw, radius);
      for (int c = 0; c < task.channels; ++c) {
        s.clip.at(0, h, w, c) = static_cast<float>(background + (on ? color[c] : 0.0));
      }
    }
  add_noise_and_clamp(s.clip, task.noise_std, rng);
  return s;
}

}  // namespace

const char* to_string(TaskKind kind) {
  return kind == TaskKind::MotionDirection ? "motion-direction" : "static-shape";
}

TaskKind parse_task_kind(const std::string& text) {
  if (text == "motion-direction" || text == "motion") return TaskKind::MotionDirection;
  if (text == "static-shape" || text == "shape") return TaskKind::StaticShape;
  throw TubeError(ErrorCode::InvalidConfig, "unknown task kind '" + text + "'");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL)); }

SampleStream::SampleStream(SyntheticTask task) : task_(task) {
  if (task_.classes < 2) throw TubeError(ErrorCode::InvalidConfig, "a task needs at least two classes");
  if (task_.kind == TaskKind::StaticShape && task_.classes > kStaticShapeKinds) {
    throw TubeError(ErrorCode::InvalidConfig, "static-shape supports at most 4 classes");
  }
  if (task_.kind == TaskKind::MotionDirection && !(task_.speed > 0.0)) {
    throw TubeError(ErrorCode::InvalidConfig, "motion-direction needs a positive speed");
  }
  const Triple dims = task_.clip_dims();
  if (dims[0] < 1 || dims[1] < 8 || dims[2] < 8 || task_.channels < 1) {
    throw TubeError(ErrorCode::InvalidConfig, "synthetic clips need T >= 1 and H, W >= 8");
  }
}

Sample SampleStream::at(std::uint64_t index) const {
  std::mt19937_64 rng(mix_seed(task_.seed, index));
  return task_.kind == TaskKind::MotionDirection ? motion_sample(task_, rng) : shape_sample(task_, rng);
}

SampleStream make_dataset(const SyntheticTask& task) { return SampleStream(task); }

}  // namespace tubekit
