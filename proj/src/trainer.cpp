#include "tubekit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

namespace tubekit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x7472'6169'6eULL;
constexpr std::uint64_t kEvalStream = 0x6576'616cULL;

Triple read_triple(const json& node, const Triple& fallback) {
  if (node.is_null()) return fallback;
  if (!node.is_array() || node.size() != 3) throw TubeError(ErrorCode::InvalidConfig, "expected a 3-element array");
  return {node[0].get<int>(), node[1].get<int>(), node[2].get<int>()};
}

// Runs fn(i) for i in [0, n) over `workers` threads; each index is handled by
// exactly one worker and results are written by index, so the outcome does not
// depend on the worker count.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct LossResult {
  double loss = 0.0;
  bool correct = false;
};

template <typename Scalar>
LossResult softmax_cross_entropy(const RowVector<Scalar>& logits, int label, double scale, RowVector<Scalar>& grad) {
  const Eigen::Index k = logits.cols();
  double m = -std::numeric_limits<double>::infinity();
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double v = static_cast<double>(logits(i));
    if (v > m) {
      m = v;
      best = i;
    }
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) sum += std::exp(static_cast<double>(logits(i)) - m);
  const double lse = m + std::log(sum);
  grad.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double p = std::exp(static_cast<double>(logits(i)) - lse);
    grad(i) = static_cast<Scalar>((p - (i == label ? 1.0 : 0.0)) * scale);
  }
  return {lse - static_cast<double>(logits(label)), best == label};
}

template <typename Scalar>
bool all_finite(const std::vector<ParamView<Scalar>>& views) {
  for (const auto& v : views) {
    for (std::size_t i = 0; i < v.size; ++i) {
      if (!std::isfinite(static_cast<double>(v.data[i]))) return false;
    }
  }
  return true;
}

template <typename Scalar>
VideoClip<Scalar> to_scalar(const VideoClip<float>& clip) {
  if constexpr (std::is_same_v<Scalar, float>) {
    return clip;
  } else {
    return clip.template cast<Scalar>();
  }
}

Triple random_crop(const Triple& clip, const Triple& input, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Triple start{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (clip[a] < input[a]) {
      throw TubeError(ErrorCode::ShapeMismatch, "task clips " + format_triple(clip) + " are smaller than model input " +
                                                    format_triple(input));
    }
    if (clip[a] > input[a]) start[a] = std::uniform_int_distribution<int>(0, clip[a] - input[a])(rng);
  }
  return start;
}

VideoClip<float> crop_to(const VideoClip<float>& clip, const Triple& start, const Triple& input) {
  if (clip.dims() == input) return clip;
  return clip.crop(start, input);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch < 1) throw TubeError(ErrorCode::InvalidConfig, "train.batch must be >= 1");
  if (steps < 0) throw TubeError(ErrorCode::InvalidConfig, "train.steps must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw TubeError(ErrorCode::InvalidConfig, "train.lr must be >= 0");
  if (warmup < 0) throw TubeError(ErrorCode::InvalidConfig, "train.warmup must be >= 0");
  if (!(weight_decay >= 0.0)) throw TubeError(ErrorCode::InvalidConfig, "train.weight_decay must be >= 0");
  if (threads < 0) throw TubeError(ErrorCode::InvalidConfig, "train.threads must be >= 0");
  if (eval_samples < 1) throw TubeError(ErrorCode::InvalidConfig, "train.eval_samples must be >= 1");
}

std::size_t task_for_step(const std::vector<TaskBinding>& tasks, std::int64_t step) {
  std::int64_t cycle = 0;
  for (const auto& t : tasks) cycle += t.mix;
  std::int64_t slot = step % cycle;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (slot < tasks[i].mix) return i;
    slot -= tasks[i].mix;
  }
  return tasks.size() - 1;
}

std::vector<TaskBinding> parse_tasks(const json& doc, const ModelConfig& cfg) {
  if (!doc.contains("tasks") || !doc.at("tasks").is_array() || doc.at("tasks").empty()) {
    throw TubeError(ErrorCode::InvalidConfig, "config needs a non-empty \"tasks\" array");
  }
  std::vector<TaskBinding> out;
  try {
    for (const json& node : doc.at("tasks")) {
      TaskBinding b;
      b.head = node.at("head").get<std::string>();
      const auto head = std::find_if(cfg.heads.begin(), cfg.heads.end(), [&](const HeadSpec& h) { return h.name == b.head; });
      if (head == cfg.heads.end()) throw TubeError(ErrorCode::UnknownHead, "task refers to unknown head '" + b.head + "'");
      SyntheticTask& t = b.task;
      t.kind = parse_task_kind(node.value("kind", std::string("motion-direction")));
      t.dims = read_triple(node.value("dims", json()), cfg.input_dims);
      t.channels = node.value("channels", cfg.channels);
      t.classes = node.value("classes", head->classes);
      t.noise_std = node.value("noise_std", t.noise_std);
      t.seed = node.value("seed", std::uint64_t{0});
      t.speed = node.value("speed", t.speed);
      t.blob_sigma = node.value("blob_sigma", t.blob_sigma);
      b.mix = node.value("mix", 1);
      b.loss_weight = node.value("loss_weight", 1.0);
      if (t.classes != head->classes) {
        throw TubeError(ErrorCode::InvalidConfig, "task '" + b.head + "' has " + std::to_string(t.classes) +
                                                      " classes but its head has " + std::to_string(head->classes));
      }
      if (t.channels != cfg.channels) throw TubeError(ErrorCode::InvalidConfig, "task channels differ from the model");
      if (b.mix < 1) throw TubeError(ErrorCode::InvalidConfig, "task mix must be >= 1");
      if (!(b.loss_weight >= 0.0)) throw TubeError(ErrorCode::InvalidConfig, "task loss_weight must be >= 0");
      SampleStream check(t);  // validates the task
      out.push_back(b);
    }
  } catch (const json::exception& e) {
    throw TubeError(ErrorCode::InvalidConfig, std::string("bad task entry: ") + e.what());
  }
  return out;
}

TrainConfig parse_train(const json& doc) {
  TrainConfig c;
  const json node = doc.value("train", json::object());
  try {
    c.batch = node.value("batch", c.batch);
    c.steps = node.value("steps", c.steps);
    c.lr = node.value("lr", c.lr);
    c.warmup = node.value("warmup", c.warmup);
    c.cosine = node.value("cosine", c.cosine);
    c.weight_decay = node.value("weight_decay", c.weight_decay);
    c.seed = node.value("seed", c.seed);
    c.threads = node.value("threads", c.threads);
    c.eval_samples = node.value("eval_samples", c.eval_samples);
  } catch (const json::exception& e) {
    throw TubeError(ErrorCode::InvalidConfig, std::string("bad train section: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"batch", c.batch},   {"steps", c.steps},   {"lr", c.lr},
          {"warmup", c.warmup}, {"cosine", c.cosine}, {"weight_decay", c.weight_decay},
          {"seed", c.seed},     {"threads", c.threads}, {"eval_samples", c.eval_samples}};
}

int worker_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TUBEKIT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

Triple model_input_dims(const ModelConfig& cfg, const SyntheticTask& task) {
  if (task.clip_dims()[0] == 1) return {1, cfg.input_dims[1], cfg.input_dims[2]};
  return cfg.input_dims;
}

SampleStream train_stream(const SyntheticTask& task, std::uint64_t train_seed) {
  SyntheticTask t = task;
  t.seed = mix_seed(mix_seed(task.seed, train_seed), kTrainStream);
  return SampleStream(t);
}

SampleStream eval_stream(const SyntheticTask& task) {
  SyntheticTask t = task;
  t.seed = mix_seed(task.seed, kEvalStream);
  return SampleStream(t);
}

template <typename Scalar>
void train_joint(TrainState<Scalar>& state, const std::vector<TaskBinding>& tasks, const TrainConfig& cfg,
                 const std::function<void(const StepLog&)>& on_step,
                 const std::function<void(const TrainState<Scalar>&)>& on_abort) {
  cfg.validate();
  if (tasks.empty()) throw TubeError(ErrorCode::InvalidConfig, "training needs at least one task");
  Model<Scalar>& model = state.model;
  for (const auto& t : tasks) (void)model.params.encoder.head(t.head);

  std::vector<SampleStream> streams;
  for (const auto& t : tasks) streams.push_back(train_stream(t.task, cfg.seed));
  const int workers = worker_threads(cfg.threads);
  const LrSchedule schedule = cfg.schedule();
  AdamConfig adam;
  adam.weight_decay = cfg.weight_decay;
  const int freeze_below = model.config.encoder.freeze_below;
  const TubeBank& bank = model.config.bank;

  while (state.step < cfg.steps) {
    const std::int64_t step = state.step;
    const std::size_t ti = task_for_step(tasks, step);
    const TaskBinding& binding = tasks[ti];
    const Triple input = model_input_dims(model.config, binding.task);
    const std::vector<Matrix<Scalar>> kernels = materialize_kernels(bank, model.params.tokenizer);

    std::vector<std::optional<GradientBuffer<Scalar>>> grads(cfg.batch);
    std::vector<LossResult> results(cfg.batch);
    std::vector<std::exception_ptr> errors(cfg.batch);
    const double scale = binding.loss_weight / cfg.batch;
    parallel_for(cfg.batch, workers, [&](int b) {
      try {
        const auto index = static_cast<std::uint64_t>(step) * cfg.batch + b;
        const Sample sample = streams[ti].at(index);
        const Triple start = random_crop(sample.clip.dims(), input, mix_seed(mix_seed(cfg.seed, step), b));
        const VideoClip<Scalar> clip = to_scalar<Scalar>(crop_to(sample.clip, start, input));
        const ModelForward<Scalar> fwd = forward(model, clip, binding.head, true, &kernels);
        RowVector<Scalar> logit_grad;
        results[b] = softmax_cross_entropy(fwd.logits, sample.label, scale, logit_grad);
        grads[b].emplace(model);
        backward(model, fwd, clip, binding.head, logit_grad, kernels, *grads[b]);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    });

    auto abort = [&](const std::string& why) {
      if (on_abort) on_abort(state);
      throw TubeError(ErrorCode::NonFinite, "diverged at step " + std::to_string(step) + ": " + why);
    };
    for (const auto& e : errors) {
      if (!e) continue;
      try {
        std::rethrow_exception(e);
      } catch (const TubeError& err) {
        if (err.code() == ErrorCode::NonFinite) abort(err.what());
        throw;
      }
    }

    GradientBuffer<Scalar> total = std::move(*grads[0]);
    for (int b = 1; b < cfg.batch; ++b) total.add(*grads[b]);
    total.fold(bank);

    StepLog log;
    log.step = step;
    log.task = binding.head;
    int correct = 0;
    for (const auto& r : results) {
      log.loss += r.loss;
      correct += r.correct ? 1 : 0;
    }
    log.loss = log.loss * binding.loss_weight / cfg.batch;
    log.accuracy = static_cast<double>(correct) / cfg.batch;
    log.lr = schedule.at(step);

    auto params = parameter_views(model.params);
    const auto grad_views = parameter_views(total.params);
    if (!std::isfinite(log.loss)) abort("loss is not finite");
    if (!all_finite(grad_views)) abort("gradient is not finite");

    adam_step(params, grad_views, state.adam, log.lr, adam, freeze_below);
    if (!all_finite(std::vector<ParamView<Scalar>>(params))) abort("weights are not finite after the update");
    ++state.step;
    if (on_step) on_step(log);
  }
}

template <typename Scalar>
TrainState<Scalar> train_from_scratch(const ModelConfig& config, const std::vector<TaskBinding>& tasks,
                                      const TrainConfig& cfg, const std::function<void(const StepLog&)>& on_step) {
  TrainState<Scalar> state{init_model<Scalar>(config, cfg.seed), {}, 0};
  train_joint(state, tasks, cfg, on_step);
  return state;
}

void write_step_log(std::ostream& out, const StepLog& log) {
  out << "step " << log.step << " task " << log.task << " loss " << std::setprecision(6) << log.loss << " lr "
      << std::setprecision(6) << log.lr << '\n';
}

std::pair<int, int> parse_crops(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_t = 0, used_x = 0;
    const int t = std::stoi(text.substr(0, x), &used_t);
    const int s = std::stoi(text.substr(x + 1), &used_x);
    if (used_t != x || used_x != text.size() - x - 1 || t < 1 || s < 1) throw std::invalid_argument(text);
    return {t, s};
  } catch (const std::exception&) {
    throw TubeError(ErrorCode::InvalidConfig, "crops must look like TxX with positive integers, got '" + text + "'");
  }
}

TubeBank eval_bank(const TubeBank& bank, const EvalSpec& spec) {
  TubeBank out = spec.stride_divisor > 1 ? with_reduced_strides(bank, spec.stride_divisor) : bank;
  if (spec.strides.size() > out.tubes.size()) throw TubeError(ErrorCode::InvalidConfig, "more stride overrides than tubes");
  for (std::size_t i = 0; i < spec.strides.size(); ++i) {
    if (spec.strides[i]) out.tubes[i].stride = *spec.strides[i];
  }
  return out;
}

std::vector<std::vector<Triple>> crop_grid(const Triple& clip, const Triple& input, int t, int x) {
  for (int a = 0; a < 3; ++a) {
    if (clip[a] < input[a]) throw TubeError(ErrorCode::ShapeMismatch, "clip smaller than model input");
  }
  auto spaced = [](int range, int count, int i) { return count == 1 ? range / 2 : (i * range) / (count - 1); };
  std::vector<std::vector<Triple>> grid(t, std::vector<Triple>(x));
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < x; ++j) {
      grid[i][j] = {spaced(clip[0] - input[0], t, i), spaced(clip[1] - input[1], x, j),
                    spaced(clip[2] - input[2], x, j)};
    }
  }
  return grid;
}

template <typename Scalar>
EvalMetrics evaluate(const Model<Scalar>& trained, const TaskBinding& task, const EvalSpec& spec) {
  if (spec.temporal_crops < 1 || spec.spatial_crops < 1 || spec.samples < 1) {
    throw TubeError(ErrorCode::InvalidConfig, "eval crops and samples must be >= 1");
  }
  Model<Scalar> model = trained;
  model.config.bank = eval_bank(trained.config.bank, spec);
  const Triple input = model_input_dims(model.config, task.task);
  const std::vector<Matrix<Scalar>> kernels = materialize_kernels(model.config.bank, model.params.tokenizer);
  const SampleStream stream = eval_stream(task.task);
  const auto grid = crop_grid(task.task.clip_dims(), input, spec.temporal_crops, spec.spatial_crops);
  const int classes = task.task.classes;
  const int top_k = std::min(5, classes);

  struct PerSample {
    bool top1 = false, top5 = false;
    std::vector<char> crop_correct;
  };
  std::vector<PerSample> results(spec.samples);
  std::vector<std::exception_ptr> errors(spec.samples);
  parallel_for(spec.samples, worker_threads(0), [&](int i) {
    try {
      const Sample sample = stream.at(static_cast<std::uint64_t>(i));
      std::vector<double> mean(classes, 0.0);
      PerSample& r = results[i];
      for (const auto& row : grid) {
        for (const Triple& start : row) {
          const VideoClip<Scalar> clip = to_scalar<Scalar>(crop_to(sample.clip, start, input));
          const RowVector<Scalar> logits = forward(model, clip, task.head, false, &kernels).logits;
          Eigen::Index best = 0;
          for (int k = 0; k < classes; ++k) {
            mean[k] += static_cast<double>(logits(k));
            if (logits(k) > logits(best)) best = k;
          }
          r.crop_correct.push_back(best == sample.label ? 1 : 0);
        }
      }
      int rank = 0;
      for (int k = 0; k < classes; ++k) {
        if (mean[k] > mean[sample.label] || (mean[k] == mean[sample.label] && k < sample.label)) ++rank;
      }
      r.top1 = rank == 0;
      r.top5 = rank < top_k;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalMetrics m;
  m.head = task.head;
  m.samples = spec.samples;
  m.tokens = total_tokens(model.config.bank, input, input[0] > 1);
  m.per_crop.assign(spec.temporal_crops, std::vector<double>(spec.spatial_crops, 0.0));
  for (const PerSample& r : results) {
    m.top1 += r.top1;
    m.top5 += r.top5;
    for (int i = 0; i < spec.temporal_crops; ++i) {
      for (int j = 0; j < spec.spatial_crops; ++j) m.per_crop[i][j] += r.crop_correct[i * spec.spatial_crops + j];
    }
  }
  m.top1 /= spec.samples;
  m.top5 /= spec.samples;
  for (auto& row : m.per_crop) {
    for (double& v : row) v /= spec.samples;
  }
  return m;
}

template <typename Scalar>
std::int64_t parameter_count(Model<Scalar>& model) {
  std::int64_t n = 0;
  for (const auto& v : parameter_views(model.params)) n += static_cast<std::int64_t>(v.size);
  return n;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "run_id,config_hash,task,top1,top5,tokens,params,macs,wall_seconds\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.config_hash << ',' << r.task << ',' << std::fixed << std::setprecision(4) << r.top1
        << ',' << r.top5 << ',' << r.tokens << ',' << r.params << ',' << r.macs << ',' << std::setprecision(3)
        << r.wall_seconds << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

std::vector<ResultRow> ablation_matrix(const json& base, const std::vector<AblationCell>& cells,
                                       const AblationOptions& options) {
  std::vector<ResultRow> rows;
  for (const AblationCell& cell : cells) {
    json doc = base;
    doc.merge_patch(cell.patch);
    if (options.steps) doc["train"]["steps"] = *options.steps;
    if (options.seed) doc["train"]["seed"] = *options.seed;
    const ModelConfig cfg = parse_config(doc);
    const auto tasks = parse_tasks(doc, cfg);
    const TrainConfig train = parse_train(doc);
    const auto begin = std::chrono::steady_clock::now();
    std::function<void(const StepLog&)> on_step;
    if (options.on_step) on_step = [&](const StepLog& log) { options.on_step(cell.id, log); };
    TrainState<float> state = train_from_scratch<float>(cfg, tasks, train, on_step);
    EvalSpec eval = options.eval;
    eval.samples = train.eval_samples;
    for (const auto& task : tasks) {
      const EvalMetrics m = evaluate(state.model, task, eval);
      ResultRow r;
      r.run_id = cell.id;
      r.config_hash = config_hash(doc);
      r.task = task.head;
      r.top1 = m.top1;
      r.top5 = m.top5;
      r.tokens = m.tokens;
      r.params = parameter_count(state.model);
      const Triple input = model_input_dims(cfg, task.task);
      r.macs = estimate_cost(eval_bank(cfg.bank, eval), input,
                             {cfg.encoder.layers, cfg.encoder.heads, cfg.encoder.mlp_size}, cfg.channels,
                             input[0] > 1)
                   .total_macs();
      if (options.timing) {
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
      }
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<AblationCell> preset_grid(const std::string& name, const json& base) {
  std::vector<AblationCell> cells;
  if (name == "posemb") {
    cells.push_back({"posemb-none", {{"posemb", {{"kind", "none"}}}}});
    cells.push_back({"posemb-learned", {{"posemb", {{"kind", "learned"}}}}});
    cells.push_back({"posemb-fixed-index", {{"posemb", {{"kind", "fixed_index"}, {"mode", "normalized"}}}}});
    cells.push_back({"posemb-fixed-literal", {{"posemb", {{"kind", "fixed"}, {"mode", "literal"}}}}});
    cells.push_back({"posemb-fixed", {{"posemb", {{"kind", "fixed"}, {"mode", "normalized"}}}}});
    return cells;
  }
  const json tubes = base.value("tubes", json::array());
  if (name == "tubes") {
    for (std::size_t k = 1; k <= tubes.size(); ++k) {
      json subset = json::array();
      for (std::size_t i = 0; i < k; ++i) subset.push_back(tubes[i]);
      cells.push_back({"tubes-" + std::to_string(k), {{"tubes", subset}}});
    }
    return cells;
  }
  if (name == "s2d") {
    const ModelConfig cfg = parse_config(base);
    for (const std::string preset : {"none", "2x temporal", "4x spatial"}) {
      const Triple group = preset == "none" ? Triple{1, 1, 1} : parse_s2d_preset(preset);
      json patched = json::array();
      for (std::size_t i = 0; i < cfg.bank.tubes.size(); ++i) {
        json node = tubes[i];
        const TubeSpec& tube = cfg.bank.tubes[i];
        bool fits = !tube.image_applicable || group[0] == 1;
        for (int a = 0; a < 3; ++a) fits = fits && tube.stride[a] % group[a] == 0;
        node["s2d_group"] = fits ? json::array({group[0], group[1], group[2]}) : json::array({1, 1, 1});
        patched.push_back(node);
      }
      std::string id = "s2d-" + preset;
      std::replace(id.begin(), id.end(), ' ', '-');
      cells.push_back({id, {{"tubes", patched}}});
    }
    return cells;
  }
  if (name == "interpolated") {
    cells.push_back({"interpolated-off", {{"tokenizer", {{"interpolated", false}}}}});
    cells.push_back({"interpolated-on", {{"tokenizer", {{"interpolated", true}}}}});
    return cells;
  }
  if (name == "tokens") {
    const ModelConfig cfg = parse_config(base);
    for (const int divisor : {1, 2, 4}) {
      ModelConfig reduced = cfg;
      reduced.bank = with_reduced_strides(cfg.bank, divisor);
      cells.push_back({"tokens-div" + std::to_string(divisor), {{"tubes", to_json(reduced)["tubes"]}}});
    }
    return cells;
  }
  if (name == "joint") {
    const json tasks = base.value("tasks", json::array());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      cells.push_back({"only-" + tasks[i].value("head", std::to_string(i)), {{"tasks", json::array({tasks[i]})}}});
    }
    cells.push_back({"joint", json::object()});
    return cells;
  }
  throw TubeError(ErrorCode::InvalidConfig, "unknown ablation grid '" + name + "'");
}

#define TUBEKIT_INSTANTIATE(S)                                                                               \
  template void train_joint<S>(TrainState<S>&, const std::vector<TaskBinding>&, const TrainConfig&,          \
                               const std::function<void(const StepLog&)>&,                                 \
                               const std::function<void(const TrainState<S>&)>&);                          \
  template TrainState<S> train_from_scratch<S>(const ModelConfig&, const std::vector<TaskBinding>&,         \
                                               const TrainConfig&, const std::function<void(const StepLog&)>&); \
  template EvalMetrics evaluate<S>(const Model<S>&, const TaskBinding&, const EvalSpec&);                    \
  template std::int64_t parameter_count<S>(Model<S>&);

TUBEKIT_INSTANTIATE(float)
TUBEKIT_INSTANTIATE(double)

#undef TUBEKIT_INSTANTIATE

}  // namespace tubekit
