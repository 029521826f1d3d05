// tubekit: plan, inspect, train, eval, ablate and scale sparse-tube models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "tubekit/checkpoint.hpp"
#include "tubekit/clip.hpp"
#include "tubekit/config.hpp"
#include "tubekit/posemb.hpp"
#include "tubekit/scale.hpp"
#include "tubekit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tubekit;

namespace {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;   // bad config, bad clip, failed validation, bad flags
constexpr int kExitDiverged = 3;  // NonFinite during training
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string input_dims;
  std::optional<std::int64_t> steps;
  std::string eval_crops = "1x1";
  std::optional<int> freeze_below;
  std::optional<int> gate_layer;
  std::string head;
  bool json_only = false;
  // command specific
  std::string clip;
  std::string checkpoint;
  std::string resume;
  std::string grid;
  std::string cells;
  std::string small;
  std::string large;
  int eval_stride_divisor = 1;
  std::optional<int> eval_samples;
  bool timing = false;
  bool quiet = false;
};

std::string fmt_center(const Center& c) {
  std::ostringstream os;
  os << std::setprecision(6) << '(' << c[0] << ',' << c[1] << ',' << c[2] << ')';
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TubeError(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw TubeError(ErrorCode::Io, "failed writing " + path.string());
}

fs::path out_dir(const Options& o) {
  fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw TubeError(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

/// Config document with command-line overrides folded in, so the hash covers them.
json effective_document(const Options& o, json doc) {
  if (o.seed) doc["train"]["seed"] = *o.seed;
  if (o.steps) doc["train"]["steps"] = *o.steps;
  if (o.eval_samples) doc["train"]["eval_samples"] = *o.eval_samples;
  if (o.freeze_below) doc["encoder"]["freeze_below"] = *o.freeze_below;
  if (o.gate_layer) doc["encoder"]["gate_layer"] = *o.gate_layer;
  if (!o.input_dims.empty()) {
    const Triple d = parse_dims(o.input_dims);
    doc["input_dims"] = {d[0], d[1], d[2]};
  }
  return doc;
}

EvalSpec eval_spec(const Options& o, const TrainConfig& train) {
  EvalSpec spec;
  std::tie(spec.temporal_crops, spec.spatial_crops) = parse_crops(o.eval_crops);
  spec.stride_divisor = o.eval_stride_divisor;
  spec.samples = train.eval_samples;
  return spec;
}

std::vector<TaskBinding> select_tasks(const std::vector<TaskBinding>& tasks, const std::string& head) {
  if (head.empty()) return tasks;
  for (const auto& t : tasks) {
    if (t.head == head) return {t};
  }
  throw TubeError(ErrorCode::UnknownHead, "no task uses head '" + head + "'");
}

json metrics_json(const EvalMetrics& m) {
  return {{"head", m.head},       {"top1", m.top1},         {"top5", m.top5},
          {"samples", m.samples}, {"tokens", m.tokens},     {"per_crop", m.per_crop}};
}

ResultRow result_row(const std::string& run_id, const std::string& hash, const EvalMetrics& m, Model<float>& model,
                     const TaskBinding& task, const EvalSpec& spec) {
  ResultRow r;
  r.run_id = run_id;
  r.config_hash = hash;
  r.task = m.head;
  r.top1 = m.top1;
  r.top5 = m.top5;
  r.tokens = m.tokens;
  r.params = parameter_count(model);
  const ModelConfig& cfg = model.config;
  const Triple input = model_input_dims(cfg, task.task);
  r.macs = estimate_cost(eval_bank(cfg.bank, spec), input, {cfg.encoder.layers, cfg.encoder.heads, cfg.encoder.mlp_size},
                         cfg.channels, input[0] > 1)
               .total_macs();
  return r;
}

void print_metrics(std::ostream& os, const EvalMetrics& m) {
  os << "eval " << m.head << " top1 " << std::fixed << std::setprecision(4) << m.top1 << " top5 " << m.top5
     << " tokens " << m.tokens << " samples " << m.samples << '\n';
  for (std::size_t i = 0; i < m.per_crop.size(); ++i) {
    os << "  crop t" << i << ':';
    for (double v : m.per_crop[i]) os << ' ' << v;
    os << '\n';
  }
  os.unsetf(std::ios::floatfield);
}

// ---------------------------------------------------------------------------

int cmd_plan(const Options& o) {
  const json doc = effective_document(o, load_document(o.config));
  const ModelConfig cfg = parse_config(doc);
  const Triple dims = cfg.input_dims;
  const bool video = !TubeBank::is_image_input(dims);

  const ValidationReport report = validate_bank(cfg.bank, dims);
  if (!report.valid()) {
    std::cerr << "plan: configuration is not valid for input " << format_triple(dims) << '\n';
    for (const auto& issue : report.issues) {
      std::cerr << "  tube " << issue.tube;
      if (issue.axis >= 0) std::cerr << " axis " << "thw"[issue.axis];
      std::cerr << ": " << to_string(issue.code) << ": " << issue.message << '\n';
    }
    return kExitInvalid;
  }

  const EncoderShape shape{cfg.encoder.layers, cfg.encoder.heads, cfg.encoder.mlp_size};
  const CostReport cost = estimate_cost(cfg.bank, dims, shape, cfg.channels, video);
  json tubes = json::array();
  std::ostringstream text;
  text << "input " << format_triple(dims) << (video ? " (video)" : " (image)") << "  hidden " << cfg.bank.hidden_size
       << "  config " << config_hash(doc) << '\n';
  text << "tube  kernel    stride      offset     s2d      active  grid        tokens  first center        last center"
          "         params   per-tube(kvol*d)\n";
  for (std::size_t i = 0; i < cfg.bank.tubes.size(); ++i) {
    const TubeSpec& t = cfg.bank.tubes[i];
    const TubeReport& tr = report.tubes[i];
    const TubeCost& tc = cost.tubes[i];
    json node = {{"index", i},
                 {"kernel", t.kernel},
                 {"stride", t.stride},
                 {"offset", t.offset},
                 {"s2d_group", t.s2d_group},
                 {"image_applicable", t.image_applicable},
                 {"active", tr.active},
                 {"counts", tr.counts},
                 {"tokens", tr.tokens},
                 {"kernel_params", tc.kernel_params},
                 {"convention_params", tc.convention_params},
                 {"tokenizer_macs", tc.tokenizer_macs}};
    std::string first = "-", last = "-";
    if (tr.active) {
      const TokenGrid grid = token_grid(t, dims);
      first = fmt_center(grid.centers.front());
      last = fmt_center(grid.centers.back());
      node["first_center"] = grid.centers.front();
      node["last_center"] = grid.centers.back();
    }
    tubes.push_back(node);
    text << std::left << std::setw(6) << i << std::setw(10) << format_triple(t.kernel) << std::setw(12)
         << format_triple(t.stride) << std::setw(11) << format_triple(t.offset) << std::setw(9)
         << format_triple(t.s2d_group) << std::setw(8) << (tr.active ? "yes" : "no") << std::setw(12)
         << format_triple(tr.counts) << std::setw(8) << tr.tokens << std::setw(20) << first << std::setw(20) << last
         << std::setw(9) << tc.kernel_params << tc.convention_params << '\n';
  }
  text << std::right;
  text << "total tokens " << cost.tokens << '\n';
  json out = {{"valid", true},
              {"input_dims", dims},
              {"is_video", video},
              {"config_hash", config_hash(doc)},
              {"tubes", tubes},
              {"total_tokens", cost.tokens},
              {"params",
               {{"tokenizer", cost.tokenizer_params},
                {"encoder", cost.encoder_params},
                {"total", cost.total_params()}}},
              {"macs",
               {{"tokenizer", cost.tokenizer_macs},
                {"attention", cost.attention_macs},
                {"mlp", cost.mlp_macs},
                {"total", cost.total_macs()}}}};
  if (doc.contains("reference_tokens") && video) {
    const auto ref = doc.at("reference_tokens").get<std::int64_t>();
    out["reference_tokens"] = ref;
    if (ref != cost.tokens) {
      text << "published count " << ref << " (differs by " << std::showpos << cost.tokens - ref << std::noshowpos
           << "); see README, section \"Token counts\"\n";
      out["reference_note"] = "see README, section \"Token counts\"";
    }
  }
  text << "params tokenizer " << cost.tokenizer_params << "  encoder " << cost.encoder_params << "  total "
       << cost.total_params() << '\n';
  text << "MACs tokenizer " << cost.tokenizer_macs << "  attention " << cost.attention_macs << "  mlp " << cost.mlp_macs
       << "  total " << cost.total_macs() << " (" << std::fixed << std::setprecision(2) << cost.total_macs() * 2e-9
       << " GFLOPs)\n";

  if (!o.out.empty()) write_text(out_dir(o) / "plan.json", out.dump(2) + "\n");
  std::cout << (o.json_only ? out.dump(2) + "\n" : text.str());
  return kExitOk;
}

int cmd_inspect(const Options& o) {
  json doc = load_document(o.config);
  const VideoClip<float> clip = read_clip(o.clip);
  doc["input_dims"] = {clip.frames, clip.height, clip.width};
  doc = effective_document(o, doc);
  const ModelConfig cfg = parse_config(doc);
  if (cfg.channels != clip.channels) {
    throw TubeError(ErrorCode::BadClipFile, "clip has " + std::to_string(clip.channels) + " channels, config expects " +
                                                std::to_string(cfg.channels));
  }
  validate_bank(cfg.bank, clip.dims()).raise_if_invalid();
  const std::uint64_t seed = o.seed.value_or(0);
  const Model<float> model = init_model<float>(cfg, seed);
  const TokenBatch<float> tokens = tokenize(clip, cfg.bank, model.params.tokenizer);
  const Matrix<float> positions = position_term(model, tokens);
  const fs::path dir = out_dir(o);

  auto dump = [&](const fs::path& path, const Matrix<float>& values) {
    std::ostringstream os;
    os << "tube_id,t,x,y";
    for (Eigen::Index j = 0; j < values.cols(); ++j) os << ",v" << j;
    os << '\n' << std::setprecision(9);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const Center& c = tokens.centers[i];
      os << tokens.tube_id[i] << ',' << c[0] << ',' << c[2] << ',' << c[1];
      for (Eigen::Index j = 0; j < values.cols(); ++j) os << ',' << values(static_cast<Eigen::Index>(i), j);
      os << '\n';
    }
    write_text(path, os.str());
  };
  dump(dir / "tokens.csv", tokens.tokens);
  dump(dir / "posemb.csv", positions);

  const std::vector<int> coverage = coverage_map(cfg.bank, clip.dims());
  int peak = 1;
  for (int c : coverage) peak = std::max(peak, c);
  std::ostringstream pgm;
  pgm << "P2\n" << clip.frames * clip.width << ' ' << clip.height << '\n' << peak << '\n';
  for (int h = 0; h < clip.height; ++h) {
    for (int t = 0; t < clip.frames; ++t) {
      for (int w = 0; w < clip.width; ++w) {
        const std::size_t v = (static_cast<std::size_t>(t) * clip.height + h) * clip.width + w;
        pgm << coverage[v] << ((t + 1 == clip.frames && w + 1 == clip.width) ? '\n' : ' ');
      }
    }
  }
  write_text(dir / "coverage.pgm", pgm.str());
  std::cout << "inspect " << tokens.size() << " tokens from " << format_triple(clip.dims()) << " clip; wrote "
            << (dir / "tokens.csv").string() << ", " << (dir / "posemb.csv").string() << ", "
            << (dir / "coverage.pgm").string() << '\n';
  return kExitOk;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& doc, std::uint64_t seed,
                    json extra = json::object()) {
  json m = {{"command", command}, {"config_hash", config_hash(doc)}, {"seed", seed}};
  m.update(extra);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

int evaluate_and_report(const fs::path& dir, const std::string& run_id, const std::string& hash, Model<float>& model,
                        const std::vector<TaskBinding>& tasks, const EvalSpec& spec, json& metrics) {
  std::vector<ResultRow> rows;
  metrics = json::array();
  for (const auto& task : tasks) {
    const EvalMetrics m = evaluate(model, task, spec);
    print_metrics(std::cout, m);
    metrics.push_back(metrics_json(m));
    rows.push_back(result_row(run_id, hash, m, model, task, spec));
  }
  std::ostringstream csv;
  write_results_csv(csv, rows);
  write_text(dir / "results.csv", csv.str());
  return kExitOk;
}

int run_training(const Options& o, const std::string& command, const json& doc, TrainState<float> state,
                 const std::vector<TaskBinding>& tasks, const TrainConfig& train) {
  const fs::path dir = out_dir(o);
  const fs::path ckpt = dir / "checkpoint.tvck";
  std::ofstream log(dir / "train.log", std::ios::trunc);
  if (!log) throw TubeError(ErrorCode::Io, "cannot write " + (dir / "train.log").string());
  auto on_step = [&](const StepLog& s) {
    write_step_log(log, s);
    if (!o.quiet && (s.step % 100 == 0 || s.step + 1 == train.steps)) write_step_log(std::cout, s);
  };
  auto on_abort = [&](const TrainState<float>& good) { save_checkpoint(ckpt, good, train); };
  try {
    train_joint<float>(state, tasks, train, on_step, on_abort);
  } catch (const TubeError& e) {
    if (e.code() != ErrorCode::NonFinite) throw;
    std::cerr << command << ": " << e.what() << "; last good weights saved to " << ckpt.string() << '\n';
    return kExitDiverged;
  }
  save_checkpoint(ckpt, state, train);
  json metrics;
  const EvalSpec spec = eval_spec(o, train);
  evaluate_and_report(dir, command, config_hash(doc), state.model, select_tasks(tasks, o.head), spec, metrics);
  write_manifest(dir, command, doc, train.seed,
                 {{"steps", train.steps}, {"checkpoint", "checkpoint.tvck"}, {"metrics", metrics}});
  return kExitOk;
}

int cmd_train(const Options& o) {
  const json doc = effective_document(o, load_document(o.config));
  const ModelConfig cfg = parse_config(doc);
  const auto tasks = parse_tasks(doc, cfg);
  const TrainConfig train = parse_train(doc);
  TrainState<float> state;
  if (!o.resume.empty()) {
    Checkpoint<float> ck = load_checkpoint<float>(o.resume);
    if (to_json(ck.state.model.config) != to_json(cfg)) {
      // Only training-schedule fields may differ on resume.
      json a = to_json(ck.state.model.config), b = to_json(cfg);
      a.erase("train");
      b.erase("train");
      if (a != b) throw TubeError(ErrorCode::ShapeMismatch, "resume checkpoint was trained with a different model config");
    }
    state = std::move(ck.state);
    state.model.config = cfg;  // carry the resumed run's schedule in later checkpoints
  } else {
    state = TrainState<float>{init_model<float>(cfg, train.seed), {}, 0};
  }
  return run_training(o, "train", doc, std::move(state), tasks, train);
}

int cmd_eval(const Options& o) {
  Checkpoint<float> ck = load_checkpoint<float>(o.checkpoint);
  json doc = o.config.empty() ? to_json(ck.state.model.config) : load_document(o.config);
  doc = effective_document(o, doc);
  const ModelConfig cfg = parse_config(doc);
  const auto tasks = select_tasks(parse_tasks(doc, cfg), o.head);
  TrainConfig train = parse_train(doc);
  const EvalSpec spec = eval_spec(o, train);
  const fs::path dir = out_dir(o);
  json metrics;
  evaluate_and_report(dir, "eval", config_hash(to_json(ck.state.model.config)), ck.state.model, tasks, spec, metrics);
  write_text(dir / "eval.json", metrics.dump(2) + "\n");
  write_manifest(dir, "eval", to_json(ck.state.model.config), ck.train ? ck.train->seed : 0,
                 {{"checkpoint", o.checkpoint}, {"eval_crops", o.eval_crops}, {"metrics", metrics}});
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  json doc = effective_document(o, load_document(o.config));
  std::vector<AblationCell> cells;
  if (!o.cells.empty()) {
    for (const json& c : load_document(o.cells)) cells.push_back({c.at("id").get<std::string>(), c.value("patch", json::object())});
  } else {
    cells = preset_grid(o.grid.empty() ? "posemb" : o.grid, doc);
  }
  AblationOptions opts;
  const TrainConfig train = parse_train(doc);
  opts.eval = eval_spec(o, train);
  opts.timing = o.timing;
  if (!o.quiet) {
    opts.on_step = [&](const std::string& cell, const StepLog& s) {
      if (s.step % 500 == 0 || s.step + 1 == train.steps) {
        std::cout << cell << ' ';
        write_step_log(std::cout, s);
      }
    };
  }
  const auto rows = ablation_matrix(doc, cells, opts);
  std::ostringstream csv;
  write_results_csv(csv, rows);
  const fs::path dir = out_dir(o);
  write_text(dir / "results.csv", csv.str());
  std::cout << csv.str();
  json ids = json::array();
  for (const auto& c : cells) ids.push_back(c.id);
  write_manifest(dir, "ablate", doc, train.seed, {{"cells", ids}});
  return kExitOk;
}

int cmd_scale(const Options& o) {
  const Checkpoint<float> small = load_checkpoint<float>(o.small);
  const Checkpoint<float> large = load_checkpoint<float>(o.large);
  ScaleOptions so;
  so.freeze_below = o.freeze_below.value_or(0);
  so.gate_layer = o.gate_layer;
  so.seed = o.seed.value_or(0);
  Model<float> composed = scale_up(small.state.model, large.state.model, so);
  // The task list and schedule come from --config (defaulting to the small model's).
  json doc = o.config.empty() ? to_json(small.state.model.config) : load_document(o.config);
  json composed_doc = to_json(composed.config);
  if (doc.contains("tasks")) composed_doc["tasks"] = doc["tasks"];
  if (doc.contains("train")) composed_doc["train"] = doc["train"];
  Options clean = o;
  clean.freeze_below.reset();
  clean.gate_layer.reset();
  clean.input_dims.clear();
  composed_doc = effective_document(clean, composed_doc);
  composed.config.document = composed_doc;
  const auto tasks = parse_tasks(composed_doc, composed.config);
  const TrainConfig train = parse_train(composed_doc);
  return run_training(o, "scale", composed_doc, TrainState<float>{composed, {}, 0}, tasks, train);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tubekit: sparse video tube tokenizers and a small ViT"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "model/experiment JSON config");
    if (config_required) c->required();
    sub->add_option("--seed", o.seed, "seed (overrides train.seed)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--input-dims", o.input_dims, "input dims T,H,W");
    sub->add_option("--steps", o.steps, "training steps (overrides train.steps)");
    sub->add_option("--eval-crops", o.eval_crops, "multi-crop grid TxX");
    sub->add_option("--eval-stride-divisor", o.eval_stride_divisor, "divide tube strides at eval time");
    sub->add_option("--eval-samples", o.eval_samples, "held-out samples per task");
    sub->add_option("--freeze-below", o.freeze_below, "freeze blocks below this index");
    sub->add_option("--gate-layer", o.gate_layer, "block receiving the gated raw tokens");
    sub->add_option("--head", o.head, "restrict evaluation to one head");
    sub->add_flag("--quiet", o.quiet, "no progress lines");
  };

  auto* plan = app.add_subcommand("plan", "token counts, centers, parameters and MACs of a config");
  common(plan, true);
  plan->add_flag("--json", o.json_only, "print the JSON report instead of the table");
  auto* inspect = app.add_subcommand("inspect", "dump tokens, position embeddings and tube coverage for a clip");
  common(inspect, true);
  inspect->add_option("--clip", o.clip, "clip file")->required();
  auto* train = app.add_subcommand("train", "train on the config's synthetic tasks");
  common(train, true);
  train->add_option("--resume", o.resume, "checkpoint to resume from");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval, false);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  auto* ablate = app.add_subcommand("ablate", "train and evaluate a grid of config variants");
  common(ablate, true);
  ablate->add_option("--grid", o.grid, "posemb | tubes | s2d | interpolated | tokens | joint");
  ablate->add_option("--cells", o.cells, "JSON file with [{id, patch}] cells");
  ablate->add_flag("--timing", o.timing, "record wall_seconds (outputs are then not reproducible)");
  auto* scale = app.add_subcommand("scale", "compose a small tube model with a large image encoder and finetune");
  common(scale, false);
  scale->add_option("--small", o.small, "small tube-model checkpoint")->required();
  scale->add_option("--large", o.large, "large image-model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*plan) return cmd_plan(o);
    if (*inspect) return cmd_inspect(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*scale) return cmd_scale(o);
  } catch (const TubeError& e) {
    std::cerr << "tubekit: " << e.what() << '\n';
    if (e.code() == ErrorCode::Io) return kExitIo;
    if (e.code() == ErrorCode::NonFinite) return kExitDiverged;
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "tubekit: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
