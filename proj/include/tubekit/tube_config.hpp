#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tubekit/common.hpp"

namespace tubekit {

/// One sparse tube: a 3D convolution window applied with (usually large) strides
/// starting at an offset. With a space-to-depth group g != (1,1,1) the tube emits
/// d/f channels per window at stride/g, then concatenates each g-block of
/// neighbouring windows into one d-channel token (f = g_t*g_h*g_w).
struct TubeSpec {
  Triple kernel{1, 16, 16};
  Triple stride{16, 16, 16};
  Triple offset{0, 0, 0};
  Triple s2d_group{1, 1, 1};
  bool image_applicable = false;

  int reduction() const { return static_cast<int>(volume(s2d_group)); }
  bool operator==(const TubeSpec&) const = default;
};

struct TubeBank {
  std::vector<TubeSpec> tubes;
  int hidden_size = 768;
  double tau = 10000.0;

  /// True when an input of these dims is tokenized as a still image.
  static bool is_image_input(const Triple& input_dims) { return input_dims[0] == 1; }
  /// Tubes that participate for the given input (all for video, image tubes for T=1).
  std::vector<std::size_t> active_tubes(const Triple& input_dims) const;
};

/// Geometry of one tube over one input. Counts and centers are post-merge; the
/// pre-merge grid is what the kernel is actually slid over.
struct TokenGrid {
  Triple counts{0, 0, 0};
  Triple pre_counts{0, 0, 0};  // full pre-merge grid, before truncation to a multiple of the group
  Triple pre_stride{0, 0, 0};
  Triple origin{0, 0, 0};      // first window start per axis
  Triple group{1, 1, 1};
  std::array<std::vector<double>, 3> axis_centers;  // post-merge center per axis index
  std::vector<Center> centers;                      // t-major, then h, then w

  std::int64_t size() const { return volume(counts); }
  /// Number of pre-merge windows actually gathered (counts * group).
  Triple used_pre_counts() const {
    return {counts[0] * group[0], counts[1] * group[1], counts[2] * group[2]};
  }
};

struct ValidationIssue {
  ErrorCode code;
  std::size_t tube;
  int axis = -1;  // -1 when not axis specific
  std::string message;
};

struct TubeReport {
  std::size_t index = 0;
  bool active = true;
  Triple counts{0, 0, 0};
  std::int64_t tokens = 0;
};

struct ValidationReport {
  std::vector<TubeReport> tubes;
  std::vector<ValidationIssue> issues;
  std::int64_t total_tokens = 0;

  bool valid() const { return issues.empty(); }
  /// Throws the first issue as a TubeError; no-op when valid.
  void raise_if_invalid() const;
};

ValidationReport validate_bank(const TubeBank& bank, const Triple& input_dims);

/// Throws EmptyGrid, StrideNotDivisible or BadGrouping.
TokenGrid token_grid(const TubeSpec& tube, const Triple& input_dims);

/// Valid-window count of one axis; 0 when the window does not fit.
int axis_count(int length, int kernel, int stride, int offset);

std::int64_t total_tokens(const TubeBank& bank, const Triple& input_dims, bool is_video);

/// Per-voxel count of tubes with at least one gathered window containing the
/// voxel, t-major then h, then w.
std::vector<int> coverage_map(const TubeBank& bank, const Triple& input_dims);

struct EncoderShape {
  int layers = 12;
  int heads = 12;
  int mlp_size = 3072;
};

struct TubeCost {
  std::int64_t tokens = 0;
  std::int64_t kernel_params = 0;      // k_t*k_h*k_w*C*(d/f) + d/f bias
  std::int64_t convention_params = 0;  // k_t*k_h*k_w*d, the per-tube figure quoted in tube tables
  std::int64_t tokenizer_macs = 0;
};

struct CostReport {
  std::vector<TubeCost> tubes;
  std::int64_t tokens = 0;
  std::int64_t tokenizer_params = 0;
  std::int64_t encoder_params = 0;
  std::int64_t tokenizer_macs = 0;
  std::int64_t attention_macs = 0;
  std::int64_t mlp_macs = 0;

  std::int64_t total_params() const { return tokenizer_params + encoder_params; }
  std::int64_t total_macs() const { return tokenizer_macs + attention_macs + mlp_macs; }
};

/// Parameters of the transformer stack alone (blocks + final layer norm).
std::int64_t encoder_param_count(int hidden, const EncoderShape& shape);

CostReport estimate_cost(const TubeBank& bank, const Triple& input_dims, const EncoderShape& shape,
                         int channels = 3, bool is_video = true);

/// Brings a scalar space-to-depth preset ("2x temporal", "4x spatial") to a group triple.
Triple parse_s2d_preset(const std::string& preset);

/// Same bank with every stride divided by `divisor` where it stays a positive
/// multiple of its space-to-depth group (the eval-token mechanism).
TubeBank with_reduced_strides(const TubeBank& bank, int divisor);

}  // namespace tubekit
