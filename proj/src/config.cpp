#include "tubekit/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace tubekit {

using nlohmann::json;

namespace {

Triple read_triple(const json& node, const char* field, const Triple& fallback) {
  if (!node.contains(field)) return fallback;
  const json& v = node.at(field);
  if (!v.is_array() || v.size() != 3) {
    throw TubeError(ErrorCode::InvalidConfig, std::string("'") + field + "' must be a 3-element array");
  }
  Triple out;
  for (int a = 0; a < 3; ++a) {
    if (!v[a].is_number_integer()) {
      throw TubeError(ErrorCode::InvalidConfig, std::string("'") + field + "' entries must be integers");
    }
    out[a] = v[a].get<int>();
  }
  return out;
}

json triple_json(const Triple& t) { return json::array({t[0], t[1], t[2]}); }

template <typename T>
T read_or(const json& node, const char* field, T fallback) {
  if (!node.contains(field)) return fallback;
  try {
    return node.at(field).get<T>();
  } catch (const json::exception&) {
    throw TubeError(ErrorCode::InvalidConfig, std::string("field '") + field + "' has the wrong type");
  }
}

}  // namespace

const char* to_string(PosembKind kind) {
  switch (kind) {
    case PosembKind::None: return "none";
    case PosembKind::Learned: return "learned";
    case PosembKind::Fixed: return "fixed";
    case PosembKind::FixedIndex: return "fixed_index";
  }
  return "fixed";
}

PosembKind parse_posemb_kind(const std::string& text) {
  if (text == "none") return PosembKind::None;
  if (text == "learned") return PosembKind::Learned;
  if (text == "fixed") return PosembKind::Fixed;
  if (text == "fixed_index") return PosembKind::FixedIndex;
  throw TubeError(ErrorCode::InvalidConfig, "unknown positional embedding kind '" + text + "'");
}

ModelConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw TubeError(ErrorCode::InvalidConfig, "config must be a JSON object");
  ModelConfig cfg;
  cfg.document = doc;
  if (!doc.contains("hidden_size") || !doc.contains("tubes")) {
    throw TubeError(ErrorCode::InvalidConfig, "config needs 'hidden_size' and 'tubes'");
  }
  cfg.bank.hidden_size = read_or<int>(doc, "hidden_size", 0);
  cfg.bank.tau = read_or<double>(doc, "tau", 10000.0);
  if (cfg.bank.hidden_size < 6) throw TubeError(ErrorCode::InvalidConfig, "hidden_size must be >= 6");
  if (!(cfg.bank.tau > 1.0)) throw TubeError(ErrorCode::InvalidConfig, "tau must be > 1");

  const json& tubes = doc.at("tubes");
  if (!tubes.is_array() || tubes.empty()) {
    throw TubeError(ErrorCode::EmptyBank, "'tubes' must be a non-empty array");
  }
  for (const json& node : tubes) {
    if (!node.is_object()) throw TubeError(ErrorCode::InvalidConfig, "each tube must be an object");
    TubeSpec tube;
    tube.kernel = read_triple(node, "kernel", tube.kernel);
    tube.stride = read_triple(node, "stride", tube.stride);
    tube.offset = read_triple(node, "offset", tube.offset);
    if (node.contains("s2d_group") && node.at("s2d_group").is_string()) {
      tube.s2d_group = parse_s2d_preset(node.at("s2d_group").get<std::string>());
    } else {
      tube.s2d_group = read_triple(node, "s2d_group", tube.s2d_group);
    }
    tube.image_applicable = read_or<bool>(node, "image_applicable", false);
    cfg.bank.tubes.push_back(tube);
  }
  bool has_image_tube = false;
  for (const TubeSpec& tube : cfg.bank.tubes) has_image_tube |= tube.image_applicable;
  if (!has_image_tube) {
    throw TubeError(ErrorCode::NoImageTube, "at least one tube must be image_applicable");
  }

  const json encoder = doc.value("encoder", json::object());
  cfg.encoder.hidden = cfg.bank.hidden_size;
  cfg.encoder.layers = read_or<int>(encoder, "layers", 12);
  cfg.encoder.heads = read_or<int>(encoder, "heads", 12);
  cfg.encoder.mlp_size = read_or<int>(encoder, "mlp_size", 4 * cfg.bank.hidden_size);
  const std::string pool = read_or<std::string>(encoder, "pool", "mean");
  if (pool == "mean") {
    cfg.encoder.pool = PoolMode::Mean;
  } else if (pool == "cls") {
    cfg.encoder.pool = PoolMode::Cls;
  } else {
    throw TubeError(ErrorCode::InvalidConfig, "pool must be 'mean' or 'cls'");
  }
  if (encoder.contains("gate_layer") && !encoder.at("gate_layer").is_null()) {
    cfg.encoder.gate_layer = read_or<int>(encoder, "gate_layer", 0);
  }
  cfg.encoder.freeze_below = read_or<int>(encoder, "freeze_below", 0);
  cfg.encoder.validate();

  std::set<std::string> names;
  for (const json& node : doc.value("heads", json::array())) {
    HeadSpec head;
    head.name = read_or<std::string>(node, "name", "");
    head.classes = read_or<int>(node, "classes", 0);
    if (head.name.empty() || head.classes < 1) {
      throw TubeError(ErrorCode::InvalidConfig, "heads need a name and classes >= 1");
    }
    if (!names.insert(head.name).second) {
      throw TubeError(ErrorCode::InvalidConfig, "duplicate head '" + head.name + "'");
    }
    cfg.heads.push_back(head);
  }

  cfg.channels = read_or<int>(doc, "channels", 3);
  if (cfg.channels < 1) throw TubeError(ErrorCode::InvalidConfig, "channels must be >= 1");
  cfg.input_dims = read_triple(doc, "input_dims", cfg.input_dims);
  const json tokenizer = doc.value("tokenizer", json::object());
  cfg.interpolated = read_or<bool>(tokenizer, "interpolated", false);
  const json posemb = doc.value("posemb", json::object());
  cfg.posemb = parse_posemb_kind(read_or<std::string>(posemb, "kind", "fixed"));
  const std::string mode = read_or<std::string>(posemb, "mode", "normalized");
  if (mode == "normalized") {
    cfg.exponent = ExponentMode::Normalized;
  } else if (mode == "literal") {
    cfg.exponent = ExponentMode::Literal;
  } else {
    throw TubeError(ErrorCode::InvalidConfig, "posemb mode must be 'normalized' or 'literal'");
  }
  for (std::size_t i = 0; i < cfg.bank.tubes.size(); ++i) {
    const int f = cfg.bank.tubes[i].reduction();
    if (f < 1 || cfg.bank.hidden_size % f != 0) {
      throw TubeError(ErrorCode::BadGrouping, "tube " + std::to_string(i) + ": space-to-depth factor " +
                                                  std::to_string(f) + " does not divide hidden_size");
    }
  }
  return cfg;
}

json to_json(const ModelConfig& cfg) {
  json doc = cfg.document.is_object() ? cfg.document : json::object();
  doc["hidden_size"] = cfg.bank.hidden_size;
  doc["tau"] = cfg.bank.tau;
  json tubes = json::array();
  for (const TubeSpec& t : cfg.bank.tubes) {
    tubes.push_back({{"kernel", triple_json(t.kernel)},
                     {"stride", triple_json(t.stride)},
                     {"offset", triple_json(t.offset)},
                     {"s2d_group", triple_json(t.s2d_group)},
                     {"image_applicable", t.image_applicable}});
  }
  doc["tubes"] = tubes;
  json encoder = {{"layers", cfg.encoder.layers},
                  {"heads", cfg.encoder.heads},
                  {"mlp_size", cfg.encoder.mlp_size},
                  {"pool", cfg.encoder.pool == PoolMode::Cls ? "cls" : "mean"},
                  {"freeze_below", cfg.encoder.freeze_below}};
  if (cfg.encoder.gate_layer) encoder["gate_layer"] = *cfg.encoder.gate_layer;
  doc["encoder"] = encoder;
  json heads = json::array();
  for (const HeadSpec& h : cfg.heads) heads.push_back({{"name", h.name}, {"classes", h.classes}});
  doc["heads"] = heads;
  doc["channels"] = cfg.channels;
  doc["input_dims"] = triple_json(cfg.input_dims);
  doc["tokenizer"] = {{"interpolated", cfg.interpolated}};
  doc["posemb"] = {{"kind", to_string(cfg.posemb)},
                   {"mode", cfg.exponent == ExponentMode::Normalized ? "normalized" : "literal"}};
  return doc;
}

json load_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TubeError(ErrorCode::Io, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw TubeError(ErrorCode::InvalidConfig, "malformed JSON in '" + path.string() + "': " + e.what());
  }
  return doc;
}

ModelConfig load_config(const std::filesystem::path& path) { return parse_config(load_document(path)); }

std::string config_hash(const json& doc) {
  const std::string text = doc.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Triple parse_dims(const std::string& text) {
  Triple out{};
  char c1 = 0, c2 = 0;
  std::istringstream is(text);
  if (!(is >> out[0] >> c1 >> out[1] >> c2 >> out[2]) || (c1 != ',' && c1 != 'x') || c1 != c2 ||
      out[0] < 1 || out[1] < 1 || out[2] < 1) {
    throw TubeError(ErrorCode::InvalidConfig, "dims must look like T,H,W (got '" + text + "')");
  }
  return out;
}

}  // namespace tubekit
