#include "tubekit/tube_config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace tubekit {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::BadGrouping: return "BadGrouping";
    case ErrorCode::StrideNotDivisible: return "StrideNotDivisible";
    case ErrorCode::GridNotDivisible: return "GridNotDivisible";
    case ErrorCode::NoImageTube: return "NoImageTube";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::UnknownHead: return "UnknownHead";
    case ErrorCode::MissingTrace: return "MissingTrace";
    case ErrorCode::IncompatibleWidths: return "IncompatibleWidths";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::BadClipFile: return "BadClipFile";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string format_triple(const Triple& v, char sep) {
  std::ostringstream os;
  os << v[0] << sep << v[1] << sep << v[2];
  return os.str();
}

namespace {

constexpr const char* kAxisNames[3] = {"t", "h", "w"};

bool image_mode(const TubeSpec& tube, const Triple& input_dims) {
  return tube.image_applicable && TubeBank::is_image_input(input_dims);
}

void check_shape(const TubeSpec& tube, std::size_t index, std::vector<ValidationIssue>& issues) {
  for (int a = 0; a < 3; ++a) {
    if (tube.kernel[a] < 1 || tube.stride[a] < 1 || tube.offset[a] < 0 || tube.s2d_group[a] < 1) {
      std::ostringstream os;
      os << "tube " << index << " axis " << kAxisNames[a]
         << ": kernel/stride/group must be >= 1 and offset >= 0";
      issues.push_back({ErrorCode::InvalidConfig, index, a, os.str()});
    }
  }
  if (tube.image_applicable && tube.kernel[0] != 1) {
    issues.push_back({ErrorCode::InvalidConfig, index, 0,
                      "tube " + std::to_string(index) + ": image tubes need a temporal kernel of 1"});
  }
  if (tube.image_applicable && tube.s2d_group[0] != 1) {
    issues.push_back({ErrorCode::BadGrouping, index, 0,
                      "tube " + std::to_string(index) + ": image tubes cannot group along t"});
  }
}

}  // namespace

std::vector<std::size_t> TubeBank::active_tubes(const Triple& input_dims) const {
  std::vector<std::size_t> out;
  const bool image = is_image_input(input_dims);
  for (std::size_t i = 0; i < tubes.size(); ++i) {
    if (!image || tubes[i].image_applicable) out.push_back(i);
  }
  return out;
}

int axis_count(int length, int kernel, int stride, int offset) {
  const int span = length - offset - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

void ValidationReport::raise_if_invalid() const {
  if (!issues.empty()) throw TubeError(issues.front().code, issues.front().message);
}

TokenGrid token_grid(const TubeSpec& tube, const Triple& input_dims) {
  std::vector<ValidationIssue> issues;
  check_shape(tube, 0, issues);
  if (!issues.empty()) throw TubeError(issues.front().code, issues.front().message);

  TokenGrid grid;
  grid.group = tube.s2d_group;
  const bool image = image_mode(tube, input_dims);
  for (int a = 0; a < 3; ++a) {
    const int g = tube.s2d_group[a];
    if (image && a == 0) {
      // Still images collapse the temporal axis to the single frame at t = 0.
      grid.pre_counts[0] = 1;
      grid.pre_stride[0] = 1;
      grid.origin[0] = 0;
      grid.counts[0] = 1;
      grid.axis_centers[0] = {0.5 * (tube.kernel[0] - 1)};
      continue;
    }
    if (tube.stride[a] % g != 0) {
      std::ostringstream os;
      os << "stride " << tube.stride[a] << " on axis " << kAxisNames[a]
         << " is not divisible by its space-to-depth group " << g;
      throw TubeError(ErrorCode::StrideNotDivisible, os.str());
    }
    const int pre_stride = tube.stride[a] / g;
    const int pre = axis_count(input_dims[a], tube.kernel[a], pre_stride, tube.offset[a]);
    const int post = pre / g;
    if (post < 1) {
      std::ostringstream os;
      os << "axis " << kAxisNames[a] << ": kernel " << tube.kernel[a] << " at offset "
         << tube.offset[a] << " (group " << g << ") does not fit input length " << input_dims[a];
      throw TubeError(ErrorCode::EmptyGrid, os.str());
    }
    grid.pre_counts[a] = pre;
    grid.pre_stride[a] = pre_stride;
    grid.origin[a] = tube.offset[a];
    grid.counts[a] = post;
    auto& centers = grid.axis_centers[a];
    centers.resize(post);
    const double base = tube.offset[a] + 0.5 * (tube.kernel[a] - 1);
    for (int i = 0; i < post; ++i) {
      centers[i] = base + pre_stride * (static_cast<double>(i) * g + 0.5 * (g - 1));
    }
  }
  grid.centers.reserve(static_cast<std::size_t>(grid.size()));
  for (double ct : grid.axis_centers[0])
    for (double ch : grid.axis_centers[1])
      for (double cw : grid.axis_centers[2]) grid.centers.push_back({ct, ch, cw});
  return grid;
}

ValidationReport validate_bank(const TubeBank& bank, const Triple& input_dims) {
  ValidationReport report;
  if (bank.tubes.empty()) {
    report.issues.push_back({ErrorCode::EmptyBank, 0, -1, "tube bank has no tubes"});
    return report;
  }
  if (TubeBank::is_image_input(input_dims) && bank.active_tubes(input_dims).empty()) {
    report.issues.push_back(
        {ErrorCode::NoImageTube, 0, -1, "image input but no tube is image_applicable"});
  }
  for (std::size_t i = 0; i < bank.tubes.size(); ++i) {
    const TubeSpec& tube = bank.tubes[i];
    TubeReport tr;
    tr.index = i;
    tr.active = !TubeBank::is_image_input(input_dims) || tube.image_applicable;

    const std::size_t before = report.issues.size();
    check_shape(tube, i, report.issues);
    const int f = tube.reduction();
    if (f > 0 && bank.hidden_size % f != 0) {
      std::ostringstream os;
      os << "tube " << i << ": space-to-depth factor " << f << " does not divide hidden size "
         << bank.hidden_size;
      report.issues.push_back({ErrorCode::BadGrouping, i, -1, os.str()});
    }
    if (report.issues.size() == before && tr.active) {
      // Per-axis diagnostics so every failing axis is listed, not just the first.
      const bool image = image_mode(tube, input_dims);
      for (int a = image ? 1 : 0; a < 3; ++a) {
        const int g = tube.s2d_group[a];
        if (tube.stride[a] % g != 0) {
          std::ostringstream os;
          os << "tube " << i << " axis " << kAxisNames[a] << ": stride " << tube.stride[a]
             << " not divisible by group " << g;
          report.issues.push_back({ErrorCode::StrideNotDivisible, i, a, os.str()});
          continue;
        }
        const int pre = axis_count(input_dims[a], tube.kernel[a], tube.stride[a] / g, tube.offset[a]);
        if (pre / g < 1) {
          std::ostringstream os;
          os << "tube " << i << " axis " << kAxisNames[a] << ": offset " << tube.offset[a]
             << " + kernel " << tube.kernel[a] << " leaves no window (group " << g
             << ") in length " << input_dims[a];
          report.issues.push_back({ErrorCode::EmptyGrid, i, a, os.str()});
        }
      }
      if (report.issues.size() == before) {
        const TokenGrid grid = token_grid(tube, input_dims);
        tr.counts = grid.counts;
        tr.tokens = grid.size();
        report.total_tokens += tr.tokens;
      }
    }
    report.tubes.push_back(tr);
  }
  return report;
}

std::vector<int> coverage_map(const TubeBank& bank, const Triple& input_dims) {
  const auto [T, H, W] = input_dims;
  std::vector<int> out(static_cast<std::size_t>(T) * H * W, 0);
  for (const std::size_t index : bank.active_tubes(input_dims)) {
    const TubeSpec& tube = bank.tubes[index];
    const TokenGrid grid = token_grid(tube, input_dims);
    const Triple used = grid.used_pre_counts();
    std::array<std::vector<char>, 3> hit;
    for (int a = 0; a < 3; ++a) {
      hit[a].assign(input_dims[a], 0);
      for (int i = 0; i < used[a]; ++i) {
        const int start = grid.origin[a] + i * grid.pre_stride[a];
        for (int x = start; x < std::min(start + tube.kernel[a], input_dims[a]); ++x) hit[a][x] = 1;
      }
    }
    std::size_t v = 0;
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w, ++v) out[v] += hit[0][t] & hit[1][h] & hit[2][w];
  }
  return out;
}

std::int64_t total_tokens(const TubeBank& bank, const Triple& input_dims, bool is_video) {
  const Triple dims = is_video ? input_dims : Triple{1, input_dims[1], input_dims[2]};
  const ValidationReport report = validate_bank(bank, dims);
  report.raise_if_invalid();
  return report.total_tokens;
}

std::int64_t encoder_param_count(int hidden, const EncoderShape& shape) {
  const std::int64_t d = hidden;
  const std::int64_t m = shape.mlp_size;
  const std::int64_t attention = 4 * (d * d + d);
  const std::int64_t mlp = 2 * d * m + m + d;
  const std::int64_t norms = 4 * d;
  return shape.layers * (attention + mlp + norms) + 2 * d;
}

CostReport estimate_cost(const TubeBank& bank, const Triple& input_dims, const EncoderShape& shape,
                         int channels, bool is_video) {
  const Triple dims = is_video ? input_dims : Triple{1, input_dims[1], input_dims[2]};
  validate_bank(bank, dims).raise_if_invalid();

  CostReport report;
  const std::int64_t d = bank.hidden_size;
  for (std::size_t i = 0; i < bank.tubes.size(); ++i) {
    const TubeSpec& tube = bank.tubes[i];
    TubeCost cost;
    const std::int64_t kvol = volume(tube.kernel);
    const std::int64_t d_tube = d / tube.reduction();
    cost.kernel_params = kvol * channels * d_tube + d_tube;
    cost.convention_params = kvol * d;
    const bool active = !TubeBank::is_image_input(dims) || tube.image_applicable;
    if (active) {
      const TokenGrid grid = token_grid(tube, dims);
      cost.tokens = grid.size();
      cost.tokenizer_macs = volume(grid.used_pre_counts()) * kvol * channels * d_tube;
    }
    report.tokens += cost.tokens;
    report.tokenizer_params += cost.kernel_params;
    report.tokenizer_macs += cost.tokenizer_macs;
    report.tubes.push_back(cost);
  }
  const std::int64_t n = report.tokens;
  report.encoder_params = encoder_param_count(bank.hidden_size, shape);
  report.attention_macs = shape.layers * (4 * n * d * d + 2 * n * n * d);
  report.mlp_macs = shape.layers * (2 * n * d * shape.mlp_size);
  return report;
}

Triple parse_s2d_preset(const std::string& preset) {
  std::istringstream is(preset);
  int factor = 0;
  char x = 0;
  std::string kind;
  if (!(is >> factor >> x >> kind) || x != 'x' || factor < 1) {
    throw TubeError(ErrorCode::InvalidConfig, "bad space-to-depth preset '" + preset + "'");
  }
  if (kind == "temporal") return {factor, 1, 1};
  if (kind == "spatial") {
    const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(factor))));
    if (root * root == factor) return {1, root, root};
    if (factor == 2) return {1, 1, 2};
  }
  if (kind == "spatiotemporal" && factor % 2 == 0) {
    const int rest = factor / 2;
    const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rest))));
    if (root * root == rest) return {2, root, root};
    if (rest == 2) return {2, 1, 2};
  }
  throw TubeError(ErrorCode::InvalidConfig, "unsupported space-to-depth preset '" + preset + "'");
}

TubeBank with_reduced_strides(const TubeBank& bank, int divisor) {
  TubeBank out = bank;
  for (TubeSpec& tube : out.tubes) {
    for (int a = 0; a < 3; ++a) {
      const int s = tube.stride[a];
      if (s % divisor == 0 && (s / divisor) % tube.s2d_group[a] == 0) tube.stride[a] = s / divisor;
    }
  }
  return out;
}

}  // namespace tubekit
