#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "tubekit/common.hpp"

namespace tubekit {

/// Dense voxel array T x H x W x C, channel fastest. An image is a clip with T = 1.
template <typename Scalar>
struct VideoClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<Scalar> voxels;

  VideoClip() = default;
  VideoClip(int t, int h, int w, int c, Scalar fill = Scalar(0))
      : frames(t), height(h), width(w), channels(c),
        voxels(static_cast<std::size_t>(t) * h * w * c, fill) {}

  Triple dims() const { return {frames, height, width}; }
  std::size_t index(int t, int h, int w, int c = 0) const {
    return ((static_cast<std::size_t>(t) * height + h) * width + w) * channels + c;
  }
  Scalar& at(int t, int h, int w, int c = 0) { return voxels[index(t, h, w, c)]; }
  const Scalar& at(int t, int h, int w, int c = 0) const { return voxels[index(t, h, w, c)]; }

  /// Sub-volume starting at (t0, h0, w0) with the given extent.
  VideoClip crop(const Triple& start, const Triple& extent) const;

  template <typename Other>
  VideoClip<Other> cast() const {
    VideoClip<Other> out(frames, height, width, channels);
    for (std::size_t i = 0; i < voxels.size(); ++i) out.voxels[i] = static_cast<Other>(voxels[i]);
    return out;
  }
};

template <typename Scalar>
VideoClip<Scalar> VideoClip<Scalar>::crop(const Triple& start, const Triple& extent) const {
  if (start[0] < 0 || start[1] < 0 || start[2] < 0 || start[0] + extent[0] > frames ||
      start[1] + extent[1] > height || start[2] + extent[2] > width) {
    throw TubeError(ErrorCode::ShapeMismatch, "crop window outside clip");
  }
  VideoClip out(extent[0], extent[1], extent[2], channels);
  const std::size_t row = static_cast<std::size_t>(extent[2]) * channels;
  for (int t = 0; t < extent[0]; ++t)
    for (int h = 0; h < extent[1]; ++h) {
      const Scalar* src = &at(start[0] + t, start[1] + h, start[2]);
      std::copy(src, src + row, &out.at(t, h, 0));
    }
  return out;
}

/// Clip file: "TVT0", then T, H, W, C as little-endian u32 (20 header bytes in all),
/// then T*H*W*C little-endian f32 voxels.
VideoClip<float> read_clip(const std::filesystem::path& path);
void write_clip(const std::filesystem::path& path, const VideoClip<float>& clip);

}  // namespace tubekit
