#pragma once

#include <cstdint>
#include <string>

#include "tubekit/clip.hpp"

namespace tubekit {

enum class TaskKind {
  // A Gaussian blob drifting across a toroidal frame; the label is the drift
  // direction. The start position is uniform, so no single frame says anything
  // about the label.
  MotionDirection,
  // One of several shapes drawn at a random place in a single frame.
  StaticShape,
};

const char* to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

struct SyntheticTask {
  TaskKind kind = TaskKind::MotionDirection;
  Triple dims{16, 32, 32};  // T is forced to 1 for StaticShape
  int channels = 3;
  int classes = 4;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  double speed = 1.0;       // pixels per frame
  double blob_sigma = 2.0;  // pixels

  Triple clip_dims() const { return kind == TaskKind::StaticShape ? Triple{1, dims[1], dims[2]} : dims; }
};

struct Sample {
  VideoClip<float> clip;
  int label = 0;
};

/// Random-access, seed-determined sample stream: sample i depends only on
/// (task, i), so any consumer order reproduces the same data.
class SampleStream {
 public:
  explicit SampleStream(SyntheticTask task);

  Sample at(std::uint64_t index) const;
  Sample next() { return at(cursor_++); }
  const SyntheticTask& task() const { return task_; }

 private:
  SyntheticTask task_;
  std::uint64_t cursor_ = 0;
};

SampleStream make_dataset(const SyntheticTask& task);

/// Seed mixing shared by data and crop generation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

inline constexpr int kStaticShapeKinds = 4;

}  // namespace tubekit
