#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tubekit/model.hpp"
#include "tubekit/optimizer.hpp"
#include "tubekit/synthetic.hpp"

namespace tubekit {

/// One dataset in the interleaved loop, bound to the head that classifies it.
struct TaskBinding {
  std::string head;
  SyntheticTask task;
  int mix = 1;               // consecutive steps per round-robin cycle
  double loss_weight = 1.0;  // multiplies this task's loss
};

struct TrainConfig {
  int batch = 16;
  std::int64_t steps = 2000;
  double lr = 1e-3;
  std::int64_t warmup = 100;
  bool cosine = true;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = TUBEKIT_THREADS or 1
  int eval_samples = 500;

  void validate() const;
  LrSchedule schedule() const { return {lr, warmup, steps, cosine}; }
};

template <typename Scalar>
struct TrainState {
  Model<Scalar> model;
  AdamState<Scalar> adam;
  std::int64_t step = 0;
};

struct StepLog {
  std::int64_t step = 0;
  std::string task;
  double loss = 0.0;
  double lr = 0.0;
  double accuracy = 0.0;  // batch accuracy
};

/// Index of the task trained at `step` (deterministic round-robin by mix).
std::size_t task_for_step(const std::vector<TaskBinding>& tasks, std::int64_t step);

/// Parses the config's "tasks" array; every head must exist in `cfg.heads`
/// with matching class counts.
std::vector<TaskBinding> parse_tasks(const nlohmann::json& doc, const ModelConfig& cfg);
TrainConfig parse_train(const nlohmann::json& doc);
nlohmann::json to_json(const TrainConfig& cfg);

/// Effective worker count: cfg.threads, else TUBEKIT_THREADS, else 1.
int worker_threads(int requested);

/// Input dims the model sees for a task (its image shape for single-frame tasks).
Triple model_input_dims(const ModelConfig& cfg, const SyntheticTask& task);

/// Runs steps [state.step, cfg.steps). On divergence the state is left at the
/// last good weights, `on_abort` (if set) is called with it, and NonFinite is
/// rethrown.
template <typename Scalar>
void train_joint(TrainState<Scalar>& state, const std::vector<TaskBinding>& tasks, const TrainConfig& cfg,
                 const std::function<void(const StepLog&)>& on_step = {},
                 const std::function<void(const TrainState<Scalar>&)>& on_abort = {});

/// Convenience: init from seed, then train.
template <typename Scalar>
TrainState<Scalar> train_from_scratch(const ModelConfig& config, const std::vector<TaskBinding>& tasks,
                                      const TrainConfig& cfg,
                                      const std::function<void(const StepLog&)>& on_step = {});

void write_step_log(std::ostream& out, const StepLog& log);

struct EvalSpec {
  int temporal_crops = 1;
  int spatial_crops = 1;
  int stride_divisor = 1;                        // applied through with_reduced_strides
  std::vector<std::optional<Triple>> strides;    // per-tube overrides, applied after the divisor
  int samples = 500;
};

/// "TxX" -> (t, x).
std::pair<int, int> parse_crops(const std::string& text);

struct EvalMetrics {
  std::string head;
  double top1 = 0.0;
  double top5 = 0.0;
  std::int64_t samples = 0;
  std::int64_t tokens = 0;                // per crop
  std::vector<std::vector<double>> per_crop;  // [t][x] top-1 of each crop alone
};

/// Bank used at evaluation time after applying the eval stride changes.
TubeBank eval_bank(const TubeBank& bank, const EvalSpec& spec);

/// Crop origins for a clip of `clip` dims and model input `input`; temporal
/// offsets evenly spaced (centered when t = 1), spatial crops along the diagonal.
std::vector<std::vector<Triple>> crop_grid(const Triple& clip, const Triple& input, int t, int x);

/// Held-out evaluation on a stream disjoint from the training stream.
template <typename Scalar>
EvalMetrics evaluate(const Model<Scalar>& model, const TaskBinding& task, const EvalSpec& spec);

/// Stream of held-out samples for a task.
SampleStream eval_stream(const SyntheticTask& task);
/// Stream of training samples for a task under a training seed.
SampleStream train_stream(const SyntheticTask& task, std::uint64_t train_seed);

struct ResultRow {
  std::string run_id;
  std::string config_hash;
  std::string task;
  double top1 = 0.0;
  double top5 = 0.0;
  std::int64_t tokens = 0;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double wall_seconds = 0.0;
};

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

struct AblationCell {
  std::string id;
  nlohmann::json patch;  // JSON merge patch applied to the base document
};

struct AblationOptions {
  EvalSpec eval;
  bool timing = false;  // wall_seconds stays 0 unless set, so reruns are byte-identical
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
  std::function<void(const std::string& cell, const StepLog&)> on_step;
};

/// Trains and evaluates every cell; one row per (cell, task).
std::vector<ResultRow> ablation_matrix(const nlohmann::json& base, const std::vector<AblationCell>& cells,
                                       const AblationOptions& options);

/// Named grids: posemb, tubes, s2d, interpolated, tokens, joint.
std::vector<AblationCell> preset_grid(const std::string& name, const nlohmann::json& base);

/// Total trainable-or-not parameter count of a model.
template <typename Scalar>
std::int64_t parameter_count(Model<Scalar>& model);

}  // namespace tubekit
