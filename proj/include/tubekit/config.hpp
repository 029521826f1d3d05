#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubekit/encoder.hpp"
#include "tubekit/posemb.hpp"
#include "tubekit/tube_config.hpp"

namespace tubekit {

enum class PosembKind {
  None,
  Learned,     // one learned vector per token slot
  Fixed,       // sine/cosine of tube centers
  FixedIndex,  // sine/cosine of per-tube grid indices, ignoring stride, offset and kernel
};

const char* to_string(PosembKind kind);
PosembKind parse_posemb_kind(const std::string& text);

/// Everything needed to build a model, parsed from the JSON config file.
/// Unknown top-level sections (e.g. "train", "tasks") are kept in `document`.
struct ModelConfig {
  TubeBank bank;
  EncoderConfig encoder;
  std::vector<HeadSpec> heads;
  int channels = 3;
  bool interpolated = false;
  PosembKind posemb = PosembKind::Fixed;
  ExponentMode exponent = ExponentMode::Normalized;
  Triple input_dims{32, 224, 224};
  nlohmann::json document = nlohmann::json::object();

  EmbeddingParams embedding() const { return {bank.hidden_size, bank.tau, exponent}; }
};

/// Throws InvalidConfig (or the geometry error) describing the first problem.
ModelConfig parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const ModelConfig& cfg);
/// Reads a JSON file; Io when unreadable, InvalidConfig when malformed.
nlohmann::json load_document(const std::filesystem::path& path);
ModelConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical (sorted-key, compact) serialization.
std::string config_hash(const nlohmann::json& doc);

Triple parse_dims(const std::string& text);

}  // namespace tubekit
