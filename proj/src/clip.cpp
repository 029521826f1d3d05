#include "tubekit/clip.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tubekit {

namespace {

static_assert(std::endian::native == std::endian::little, "clip IO assumes a little-endian host");

// Magic plus four u32 dimensions.
constexpr std::size_t kHeaderBytes = 20;

std::uint32_t load_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

VideoClip<float> read_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (path.empty() || !in) throw TubeError(ErrorCode::BadClipFile, "cannot open clip '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), "TVT0", 4) != 0) {
    throw TubeError(ErrorCode::BadClipFile, "missing TVT0 header in '" + path.string() + "'");
  }
  const std::uint32_t t = load_u32(bytes.data() + 4);
  const std::uint32_t h = load_u32(bytes.data() + 8);
  const std::uint32_t w = load_u32(bytes.data() + 12);
  const std::uint32_t c = load_u32(bytes.data() + 16);
  const std::uint64_t count = static_cast<std::uint64_t>(t) * h * w * c;
  if (t == 0 || h == 0 || w == 0 || c == 0 || bytes.size() != kHeaderBytes + count * 4) {
    throw TubeError(ErrorCode::BadClipFile, "clip payload size does not match header in '" + path.string() + "'");
  }
  VideoClip<float> clip(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  std::memcpy(clip.voxels.data(), bytes.data() + kHeaderBytes, count * 4);
  return clip;
}

void write_clip(const std::filesystem::path& path, const VideoClip<float>& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TubeError(ErrorCode::Io, "cannot write clip '" + path.string() + "'");
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(clip.frames),
                                   static_cast<std::uint32_t>(clip.height),
                                   static_cast<std::uint32_t>(clip.width),
                                   static_cast<std::uint32_t>(clip.channels)};
  out.write("TVT0", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(clip.voxels.data()),
            static_cast<std::streamsize>(clip.voxels.size() * sizeof(float)));
  if (!out) throw TubeError(ErrorCode::Io, "short write to '" + path.string() + "'");
}

}  // namespace tubekit
