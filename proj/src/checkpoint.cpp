#include "tubekit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tubekit {

static_assert(std::endian::native == std::endian::little, "checkpoint buffers are written in host order");

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'V', 'C', 'K'};

template <typename Scalar>
const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

[[noreturn]] void corrupt(const std::string& why) { throw TubeError(ErrorCode::CorruptManifest, why); }

}  // namespace

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const TrainState<Scalar>& state,
                     const std::optional<TrainConfig>& train) {
  auto params = parameter_views(const_cast<ModelParams<Scalar>&>(state.model.params));
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& v : params) {
    const std::uint64_t bytes = v.size * sizeof(Scalar);
    entries.push_back({{"name", v.name}, {"shape", v.shape}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  const bool with_adam = !state.adam.m.empty();
  json manifest = {{"format", 1},
                   {"dtype", dtype_name<Scalar>()},
                   {"config", to_json(state.model.config)},
                   {"step", state.step},
                   {"params", entries},
                   {"adam", {{"present", with_adam}, {"step", state.adam.step}, {"offset", offset}}}};
  if (train) {
    manifest["train"] = to_json(*train);
    manifest["seed"] = train->seed;
  }
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TubeError(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, 4);
  const std::uint64_t length = text.size();
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& v : params) out.write(reinterpret_cast<const char*>(v.data), v.size * sizeof(Scalar));
  if (with_adam) {
    for (const auto& m : state.adam.m) out.write(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(Scalar));
    for (const auto& m : state.adam.v) out.write(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(Scalar));
  }
  if (!out) throw TubeError(ErrorCode::Io, "failed writing " + path.string());
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TubeError(ErrorCode::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt("not a checkpoint: " + path.string());
  std::uint64_t length = 0;
  std::memcpy(&length, bytes.data() + 4, sizeof(length));
  if (length > bytes.size() - 12) corrupt("manifest is truncated");
  Checkpoint<Scalar> ck;
  try {
    ck.manifest = json::parse(bytes.substr(12, length));
  } catch (const json::exception& e) {
    corrupt(std::string("manifest does not parse: ") + e.what());
  }
  const std::size_t data_start = 12 + length;
  const std::size_t data_size = bytes.size() - data_start;
  const char* data = bytes.data() + data_start;

  try {
    const json& m = ck.manifest;
    if (m.at("dtype").get<std::string>() != dtype_name<Scalar>()) {
      throw TubeError(ErrorCode::ShapeMismatch, "checkpoint dtype is " + m.at("dtype").get<std::string>());
    }
    const ModelConfig config = parse_config(m.at("config"));
    ck.state.model = init_model<Scalar>(config, 0);
    ck.state.step = m.at("step").get<std::int64_t>();
    auto params = parameter_views(ck.state.model.params);
    const json& entries = m.at("params");
    if (entries.size() != params.size()) {
      throw TubeError(ErrorCode::ShapeMismatch, "checkpoint has " + std::to_string(entries.size()) +
                                                    " tensors, config implies " + std::to_string(params.size()));
    }
    std::uint64_t end = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json& e = entries[i];
      auto& v = params[i];
      if (e.at("name").get<std::string>() != v.name || e.at("shape").get<std::vector<std::int64_t>>() != v.shape) {
        throw TubeError(ErrorCode::ShapeMismatch, "tensor " + std::to_string(i) + " (" +
                                                      e.at("name").get<std::string>() + ") does not match " + v.name);
      }
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto size = e.at("bytes").get<std::uint64_t>();
      if (size != v.size * sizeof(Scalar)) throw TubeError(ErrorCode::ShapeMismatch, "byte size differs for " + v.name);
      if (offset > data_size || size > data_size - offset) corrupt("data for " + v.name + " is truncated");
      std::memcpy(v.data, data + offset, size);
      end = std::max(end, offset + size);
    }
    const json& adam = m.at("adam");
    ck.state.adam.step = adam.at("step").get<std::int64_t>();
    if (adam.at("present").get<bool>()) {
      std::uint64_t offset = adam.at("offset").get<std::uint64_t>();
      for (auto* moments : {&ck.state.adam.m, &ck.state.adam.v}) {
        for (const auto& v : params) {
          const std::uint64_t size = v.size * sizeof(Scalar);
          if (offset > data_size || size > data_size - offset) corrupt("optimizer state is truncated");
          std::vector<Scalar> buf(v.size);
          std::memcpy(buf.data(), data + offset, size);
          moments->push_back(std::move(buf));
          offset += size;
        }
      }
      end = std::max(end, offset);
    }
    if (end != data_size) corrupt("trailing or missing bytes after the last buffer");
    if (m.contains("train")) {
      json doc = {{"train", m.at("train")}};
      ck.train = parse_train(doc);
    }
  } catch (const json::exception& e) {
    corrupt(std::string("manifest is incomplete: ") + e.what());
  }
  return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const TrainState<float>&,
                                     const std::optional<TrainConfig>&);
template void save_checkpoint<double>(const std::filesystem::path&, const TrainState<double>&,
                                      const std::optional<TrainConfig>&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace tubekit
