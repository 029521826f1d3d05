// Acceptance suite: one PASS/FAIL line per criterion. Criteria can be
// selected by number on the command line (default: all twelve).
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "oracles/reference.hpp"
#include "tubekit/checkpoint.hpp"
#include "tubekit/config.hpp"
#include "tubekit/model.hpp"
#include "tubekit/posemb.hpp"
#include "tubekit/scale.hpp"
#include "tubekit/trainer.hpp"

using namespace tubekit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

json config_doc(const std::string& name) { return load_document(fs::path(TUBEKIT_CONFIGS) / name); }

TubeSpec make_tube(Triple k, Triple s, Triple o = {0, 0, 0}, Triple g = {1, 1, 1}, bool image = false) {
  TubeSpec t;
  t.kernel = k;
  t.stride = s;
  t.offset = o;
  t.s2d_group = g;
  t.image_applicable = image;
  return t;
}

void progress(const std::string& what) { std::cerr << "  .. " << what << std::endl; }

// A trained model plus what produced it.
struct Trained {
  json doc;
  std::vector<TaskBinding> tasks;
  TrainConfig train;
  TrainState<float> state;
};

Trained train_doc(json doc) {
  Trained t;
  const ModelConfig cfg = parse_config(doc);
  t.tasks = parse_tasks(doc, cfg);
  t.train = parse_train(doc);
  t.doc = std::move(doc);
  t.state = train_from_scratch<float>(cfg, t.tasks, t.train);
  return t;
}

double top1(const Model<float>& model, const TaskBinding& task, int samples) {
  EvalSpec spec;
  spec.samples = samples;
  return evaluate(model, task, spec).top1;
}

// Models shared between criteria 8, 10 and 12.
std::optional<Trained> g_motion_tubes;

const Trained& motion_tubes() {
  if (!g_motion_tubes) {
    progress("training the tube model on motion_tubes.json");
    g_motion_tubes = train_doc(config_doc("motion_tubes.json"));
  }
  return *g_motion_tubes;
}

// ---------------------------------------------------------------------------

Outcome c1_anchor() {
  const auto t0 = std::chrono::steady_clock::now();
  TubeBank bank;
  bank.hidden_size = 768;
  bank.tubes = {make_tube({1, 16, 16}, {16, 16, 16}, {0, 0, 0}, {1, 1, 1}, true)};
  const std::int64_t video = total_tokens(bank, {32, 224, 224}, true);
  const std::int64_t image = total_tokens(bank, {1, 224, 224}, false);
  const double s = seconds_since(t0);
  return {video == 392 && image == 196 && s < 1.0,
          "video " + std::to_string(video) + " (want 392), image " + std::to_string(image) + " (want 196), " +
              fmt(s, 4) + " s"};
}

Outcome c2_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20261018);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int compared = 0, mismatches = 0;
  while (compared < 1500) {
    const Triple dims{pick(1, 64), pick(1, 64), pick(1, 64)};
    TubeSpec t;
    for (int a = 0; a < 3; ++a) {
      t.kernel[a] = pick(1, dims[a]);
      t.s2d_group[a] = pick(1, 2);
      t.stride[a] = t.s2d_group[a] * pick(1, 10);
      t.offset[a] = pick(0, 4);
    }
    t.image_applicable = dims[0] == 1 || pick(0, 1) == 1;
    if (t.image_applicable) t.kernel[0] = 1, t.s2d_group[0] = 1;
    const std::int64_t expected = oracle::brute_force_tokens(t, dims);
    if (expected < 1) continue;
    TubeBank bank;
    bank.hidden_size = 24;
    bank.tubes = {t};
    if (total_tokens(bank, dims, dims[0] > 1) != expected) ++mismatches;
    ++compared;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 30.0,
          std::to_string(compared) + " pairs, " + std::to_string(mismatches) + " mismatches, " + fmt(s, 2) + " s"};
}

struct CliOutput {
  int code = -1;
  std::string out;
};

CliOutput run_cli(const std::string& args) {
  CliOutput r;
  FILE* pipe = popen((std::string(TUBEKIT_CLI) + " " + args).c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Outcome c3_plan() {
  const std::string cfg = (fs::path(TUBEKIT_CONFIGS) / "tubevit_b.json").string();
  const CliOutput text = run_cli("plan --config " + cfg);
  const CliOutput js = run_cli("plan --json --config " + cfg);
  const bool text_ok = text.code == 0 && text.out.find("total tokens 539") != std::string::npos &&
                       text.out.find("published count 559") != std::string::npos &&
                       text.out.find("see README, section \"Token counts\"") != std::string::npos;
  bool json_ok = false;
  if (js.code == 0) {
    const json doc = json::parse(js.out);
    json_ok = doc.at("total_tokens") == 539 && doc.at("reference_tokens") == 559 &&
              doc.at("reference_note").get<std::string>().find("Token counts") != std::string::npos;
  }
  return {text_ok && json_ok, std::string("text report ") + (text_ok ? "ok" : "wrong") + ", json report " +
                                  (json_ok ? "ok" : "wrong") + " (539 computed, 559 published)"};
}

Outcome c4_posemb() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 224.0);
  std::vector<Center> centers(10000);
  for (auto& c : centers) c = {u(rng), u(rng), u(rng)};
  const EmbeddingParams p{768, 10000.0, ExponentMode::Normalized};
  const Matrix<double> e = embed_positions(centers, p);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index k = 0; k < 768; k += 2)
      worst = std::max(worst, std::abs(e(i, k) * e(i, k) + e(i, k + 1) * e(i, k + 1) - 1.0));

  const std::vector<Center> origin{{0.0, 0.0, 0.0}};
  const Matrix<double> o = embed_positions(origin, p);
  bool pattern = true;
  for (int k = 0; k < 768; ++k) pattern &= o(0, k) == (k % 2 == 0 ? 0.0 : 1.0);

  // Image tokens of a tube vs the frame-0 tokens of the same tube on a video.
  TubeBank bank;
  bank.hidden_size = 768;
  bank.tubes = {make_tube({1, 16, 16}, {16, 16, 16}, {0, 0, 0}, {1, 1, 1}, true)};
  const TokenGrid image = token_grid(bank.tubes[0], {1, 224, 224});
  const TokenGrid video = token_grid(bank.tubes[0], {32, 224, 224});
  const std::vector<Center> frame0(video.centers.begin(), video.centers.begin() + 196);
  const Matrix<double> ei = embed_positions(image.centers, p), ev = embed_positions(frame0, p);
  const bool coincide = ei.rows() == 196 && std::memcmp(ei.data(), ev.data(), sizeof(double) * ei.size()) == 0;
  return {worst <= 1e-12 && pattern && coincide, "max |sin^2+cos^2-1| " + sci(worst) + ", origin pattern " +
                                                   (pattern ? "exact" : "wrong") + ", image/frame-0 " +
                                                   (coincide ? "bit-identical" : "differ")};
}

double model_gradient_error(const json& doc, std::string& where) {
  const ModelConfig cfg = parse_config(doc);
  Model<double> model = init_model<double>(cfg, 5);
  model.params.encoder.alpha = 0.3;
  for (auto& b : model.params.tokenizer.biases) b.setConstant(0.05);
  VideoClip<double> clip(cfg.input_dims[0], cfg.input_dims[1], cfg.input_dims[2], cfg.channels);
  for (std::size_t i = 0; i < clip.voxels.size(); ++i) clip.voxels[i] = std::sin(0.37 * i) + 0.3 * std::cos(1.1 * i);
  const int classes = cfg.heads[0].classes;
  RowVector<double> r(classes);
  for (int c = 0; c < classes; ++c) r(c) = std::cos(0.9 * c + 0.2);
  const std::string head = cfg.heads[0].name;

  const auto kernels = materialize_kernels(cfg.bank, model.params.tokenizer);
  const ModelForward<double> fwd = forward(model, clip, head, true, &kernels);
  GradientBuffer<double> grads(model);
  backward(model, fwd, clip, head, r, kernels, grads);
  grads.fold(cfg.bank);

  auto loss = [&] { return forward(model, clip, head, false).logits.dot(r); };
  auto params = parameter_views(model.params);
  const auto analytic = parameter_views(grads.params);
  double worst = 0.0;
  for (std::size_t v = 0; v < params.size(); ++v) {
    const auto numeric = oracle::central_difference(params[v].data, params[v].size, loss, 1e-5);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double err = oracle::relative_error(numeric[i], analytic[v].data[i], 1e-6);
      if (err > worst) worst = err, where = params[v].name;
    }
  }
  return worst;
}

Outcome c5_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const json base = json::parse(R"({
    "hidden_size": 24, "tau": 100, "input_dims": [4, 8, 8], "channels": 3,
    "encoder": {"layers": 2, "heads": 2, "mlp_size": 32, "gate_layer": 1},
    "heads": [{"name": "a", "classes": 5}, {"name": "b", "classes": 3}]
  })");
  json plain = base, s2d = base, interp = base;
  plain["tubes"] = json::parse(R"([{"kernel": [1, 4, 4], "stride": [4, 4, 4], "image_applicable": true},
                                  {"kernel": [2, 4, 4], "stride": [2, 4, 4], "offset": [0, 0, 0]}])");
  s2d["tubes"] = json::parse(R"([{"kernel": [1, 4, 4], "stride": [4, 4, 4], "image_applicable": true},
                                {"kernel": [2, 2, 2], "stride": [2, 4, 4], "s2d_group": [1, 2, 2]}])");
  interp["tubes"] = json::parse(R"([{"kernel": [1, 4, 4], "stride": [4, 4, 4], "image_applicable": true},
                                   {"kernel": [3, 4, 2], "stride": [2, 4, 4]}])");
  interp["tokenizer"] = {{"interpolated", true}};

  std::ostringstream detail;
  bool ok = true;
  for (const auto& [name, doc] : std::vector<std::pair<std::string, json>>{{"plain", plain}, {"s2d", s2d}, {"interpolated", interp}}) {
    const ModelConfig cfg = parse_config(doc);
    const std::int64_t n = total_tokens(cfg.bank, cfg.input_dims, true);
    std::string where;
    const double err = model_gradient_error(doc, where);
    ok &= err < 1e-4 && n <= 20;
    detail << name << " " << std::scientific << std::setprecision(2) << err << " (" << n << " tokens, worst "
           << where << "); ";
  }
  const double s = seconds_since(t0);
  ok &= s < 60.0;
  detail << std::fixed << std::setprecision(1) << s << " s";
  return {ok, detail.str()};
}

json tiny_training_doc() {
  return json::parse(R"({
    "hidden_size": 24, "tau": 100, "input_dims": [4, 8, 8], "channels": 3,
    "tubes": [{"kernel": [1, 4, 4], "stride": [4, 4, 4], "image_applicable": true},
              {"kernel": [2, 4, 4], "stride": [2, 4, 4]}],
    "encoder": {"layers": 2, "heads": 2, "mlp_size": 32},
    "heads": [{"name": "motion", "classes": 4}],
    "tasks": [{"head": "motion", "kind": "motion-direction", "dims": [4, 8, 8], "classes": 4, "seed": 3}],
    "train": {"batch": 8, "steps": 20, "lr": 0.01, "warmup": 2, "seed": 7, "eval_samples": 50}
  })");
}

Outcome c6_gate() {
  json gated_doc = tiny_training_doc();
  gated_doc["encoder"]["gate_layer"] = 1;
  const Model<double> plain = init_model<double>(parse_config(tiny_training_doc()), 3);
  Model<double> gated = plain;
  gated.config = parse_config(gated_doc);
  gated.params.encoder.alpha = 0.0;
  VideoClip<double> clip(4, 8, 8, 3);
  for (std::size_t i = 0; i < clip.voxels.size(); ++i) clip.voxels[i] = std::sin(0.1 * i);
  const RowVector<double> a = forward(plain, clip, "motion", false).logits;
  const RowVector<double> b = forward(gated, clip, "motion", false).logits;
  const bool identical = a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;

  json frozen_doc = tiny_training_doc();
  frozen_doc["encoder"]["freeze_below"] = 1;
  frozen_doc["encoder"]["gate_layer"] = 1;
  const ModelConfig cfg = parse_config(frozen_doc);
  const auto tasks = parse_tasks(frozen_doc, cfg);
  const TrainConfig train = parse_train(frozen_doc);
  TrainState<float> state{init_model<float>(cfg, train.seed), {}, 0};
  std::vector<std::vector<float>> before;
  for (const auto& v : parameter_views(state.model.params)) before.emplace_back(v.data, v.data + v.size);
  train_joint<float>(state, tasks, train);
  int frozen = 0, frozen_changed = 0, trainable_changed = 0;
  const auto views = parameter_views(state.model.params);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const bool same = std::memcmp(before[i].data(), views[i].data, sizeof(float) * views[i].size) == 0;
    if (is_frozen(views[i].layer, 1)) {
      ++frozen;
      frozen_changed += same ? 0 : 1;
    } else {
      trainable_changed += same ? 0 : 1;
    }
  }
  return {identical && frozen > 0 && frozen_changed == 0 && trainable_changed > 0,
          std::string("alpha=0 logits ") + (identical ? "bit-identical" : "differ") + "; " + std::to_string(frozen) +
              " frozen tensors, " + std::to_string(frozen_changed) + " changed after " + std::to_string(train.steps) +
              " steps (" + std::to_string(trainable_changed) + " trainable tensors moved)"};
}

Outcome c7_interpolation() {
  Matrix<double> base = Matrix<double>::Random(8 * 8 * 8 * 3, 7);
  const Matrix<double> same = interpolate_kernel(base, kBaseKernelShape, 3, {8, 8, 8});
  const bool identity = same.size() == base.size() && std::memcmp(same.data(), base.data(), sizeof(double) * base.size()) == 0;

  const Matrix<double> constant = Matrix<double>::Constant(8 * 8 * 8 * 3, 4, -1.25);
  double const_err = 0.0;
  int targets = 0;
  for (int t : {1, 2, 3, 4, 8, 16})
    for (int h : {1, 4, 5, 12, 16})
      for (int w : {1, 2, 7, 16}) {
        const Matrix<double> out = interpolate_kernel(constant, kBaseKernelShape, 3, {t, h, w});
        const_err = std::max(const_err, (out.array() + 1.25).abs().maxCoeff());
        ++targets;
      }

  // v(t,h,w,c) = 0.5 - 0.75 t + 0.25 h + 1.5 w + 0.3 c is reproduced exactly by linear resampling.
  auto ramp = [](double t, double h, double w, int c) { return 0.5 - 0.75 * t + 0.25 * h + 1.5 * w + 0.3 * c; };
  Matrix<double> lin(8 * 8 * 8 * 3, 1);
  Eigen::Index r = 0;
  for (int t = 0; t < 8; ++t)
    for (int h = 0; h < 8; ++h)
      for (int w = 0; w < 8; ++w)
        for (int c = 0; c < 3; ++c) lin(r++, 0) = ramp(t, h, w, c);
  double ramp_err = 0.0;
  auto src = [](int i, int k) { return k == 1 ? 3.5 : i * 7.0 / (k - 1); };
  for (const Triple target : {Triple{16, 4, 4}, Triple{4, 12, 12}, Triple{1, 16, 16}, Triple{3, 5, 9}}) {
    const Matrix<double> out = interpolate_kernel(lin, kBaseKernelShape, 3, target);
    r = 0;
    for (int t = 0; t < target[0]; ++t)
      for (int h = 0; h < target[1]; ++h)
        for (int w = 0; w < target[2]; ++w)
          for (int c = 0; c < 3; ++c, ++r)
            ramp_err = std::max(ramp_err, std::abs(out(r, 0) - ramp(src(t, target[0]), src(h, target[1]), src(w, target[2]), c)));
  }
  return {identity && const_err == 0.0 && ramp_err <= 1e-12,
          std::string("8x8x8 ") + (identity ? "bit-exact" : "differs") + ", constant max err " + sci(const_err) +
              " over " + std::to_string(targets) + " targets, ramp max err " + sci(ramp_err)};
}

Outcome c8_temporal() {
  const auto t0 = std::chrono::steady_clock::now();
  const Trained& tubes = motion_tubes();
  progress("training the 2D-patch model on motion_2d.json");
  const Trained flat = train_doc(config_doc("motion_2d.json"));
  const double tube_acc = 100.0 * top1(tubes.state.model, tubes.tasks[0], tubes.train.eval_samples);
  const double flat_acc = 100.0 * top1(flat.state.model, flat.tasks[0], flat.train.eval_samples);
  const double chance = 100.0 / tubes.tasks[0].task.classes;
  bool has_temporal = false;
  for (const auto& t : tubes.state.model.config.bank.tubes) has_temporal |= t.kernel[0] > 1;
  const bool ok = has_temporal && std::abs(flat_acc - chance) <= 5.0 && tube_acc >= flat_acc + 55.0 &&
                  tubes.train.steps == 2000 && flat.train.steps == 2000;
  return {ok, "2D-only " + fmt(flat_acc, 1) + "% (chance " + fmt(chance, 0) + "%), tubes " + fmt(tube_acc, 1) + "% (" +
                  std::to_string(tubes.train.steps) + " steps, " + std::to_string(tubes.train.eval_samples) +
                  " held-out clips), " + fmt(seconds_since(t0) / 60.0, 1) + " min"};
}

Outcome c9_joint() {
  const auto t0 = std::chrono::steady_clock::now();
  const json joint_base = config_doc("joint.json");
  const std::int64_t joint_steps = joint_base.at("train").at("steps").get<std::int64_t>();
  const std::int64_t single_steps = joint_steps / 2;
  std::map<std::string, std::vector<double>> joint, single;
  std::ostringstream detail;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    json doc = joint_base;
    doc["train"]["seed"] = seed;
    progress("seed " + std::to_string(seed) + ": joint run, " + std::to_string(joint_steps) + " steps");
    const Trained j = train_doc(doc);
    for (const auto& task : j.tasks) joint[task.head].push_back(100.0 * top1(j.state.model, task, j.train.eval_samples));
    for (std::size_t i = 0; i < joint_base.at("tasks").size(); ++i) {
      json one = doc;
      one["tasks"] = json::array({joint_base["tasks"][i]});
      one["train"]["steps"] = single_steps;
      progress("seed " + std::to_string(seed) + ": " + one["tasks"][0]["head"].get<std::string>() + "-only run, " +
               std::to_string(single_steps) + " steps");
      const Trained s = train_doc(one);
      single[s.tasks[0].head].push_back(100.0 * top1(s.state.model, s.tasks[0], s.train.eval_samples));
    }
  }
  bool ok = true;
  for (const auto& [head, accs] : joint) {
    const double jm = (accs[0] + accs[1] + accs[2]) / 3.0;
    const auto& s = single[head];
    const double sm = (s[0] + s[1] + s[2]) / 3.0;
    ok &= jm >= sm - 2.0;
    detail << head << ": joint " << fmt(jm, 1) << "% vs " << head << "-only " << fmt(sm, 1) << "% (seeds";
    for (std::size_t i = 0; i < 3; ++i) detail << " " << fmt(accs[i], 1) << "/" << fmt(s[i], 1);
    detail << "); ";
  }
  detail << fmt(seconds_since(t0) / 60.0, 1) << " min";
  return {ok, detail.str()};
}

Outcome c10_frozen_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  const Trained& small = motion_tubes();
  progress("training the large image model on image_large.json");
  const Trained large = train_doc(config_doc("image_large.json"));
  const int L = large.state.model.config.encoder.layers;
  struct Regime {
    std::string name;
    int freeze_below;
    std::optional<int> gate;
  };
  const std::vector<Regime> regimes{{"head only", L, {}},
                                    {"head+last 2", L - 2, {}},
                                    {"head+last 4+gate", L - 4, L - 4},
                                    {"full", 0, {}}};
  const std::int64_t steps = 800;
  std::vector<double> acc;
  std::ostringstream detail;
  for (const Regime& r : regimes) {
    progress("scale-up regime: " + r.name);
    Model<float> composed = scale_up(small.state.model, large.state.model, {r.freeze_below, r.gate, 0});
    json doc = to_json(composed.config);
    doc["tasks"] = small.doc.at("tasks");
    doc["train"] = small.doc.at("train");
    doc["train"]["steps"] = steps;
    composed.config.document = doc;
    const auto tasks = parse_tasks(doc, composed.config);
    const TrainConfig train = parse_train(doc);
    TrainState<float> state{composed, {}, 0};
    train_joint<float>(state, tasks, train);
    acc.push_back(100.0 * top1(state.model, tasks[0], train.eval_samples));
    detail << r.name << " " << fmt(acc.back(), 1) << "%; ";
  }
  bool monotone = true;
  for (std::size_t i = 1; i < acc.size(); ++i) monotone &= acc[i] >= acc[i - 1];
  const bool gated_ok = acc[2] >= 0.95 * acc[3];
  detail << (monotone ? "monotone" : "not monotone") << ", gated/full " << fmt(acc[2] / acc[3], 3) << "; "
         << fmt(seconds_since(t0) / 60.0, 1) << " min";
  return {monotone && gated_ok, detail.str()};
}

bool same_weights(Model<float>& a, Model<float>& b) {
  const auto va = parameter_views(a.params), vb = parameter_views(b.params);
  if (va.size() != vb.size()) return false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].size != vb[i].size || std::memcmp(va[i].data, vb[i].data, sizeof(float) * va[i].size) != 0) return false;
  }
  return true;
}

Outcome c11_determinism() {
  json doc = config_doc("motion_tubes.json");
  doc["train"]["steps"] = 40;
  const ModelConfig cfg = parse_config(doc);
  const auto tasks = parse_tasks(doc, cfg);
  const TrainConfig train = parse_train(doc);
  TrainState<float> a = train_from_scratch<float>(cfg, tasks, train);
  TrainState<float> b = train_from_scratch<float>(cfg, tasks, train);
  const bool repeat = same_weights(a.model, b.model);

  TrainConfig half = train;
  half.steps = 20;
  TrainState<float> first{init_model<float>(cfg, train.seed), {}, 0};
  train_joint<float>(first, tasks, half);
  const fs::path dir = fs::temp_directory_path() / "tubekit_acceptance";
  fs::create_directories(dir);
  save_checkpoint(dir / "half.tvck", first, half);
  Checkpoint<float> resumed = load_checkpoint<float>(dir / "half.tvck");
  const bool loaded_same = same_weights(first.model, resumed.state.model);
  train_joint<float>(resumed.state, tasks, train);
  const bool resume = same_weights(a.model, resumed.state.model);
  return {repeat && loaded_same && resume,
          std::string("rerun ") + (repeat ? "bit-identical" : "differs") + ", save/load " +
              (loaded_same ? "bit-identical" : "differs") + ", 20+20 resumed vs 40 straight " +
              (resume ? "bit-identical" : "differs")};
}

Outcome c12_eval_tokens() {
  const Trained& tubes = motion_tubes();
  const Model<float>& model = tubes.state.model;
  const TaskBinding& task = tubes.tasks[0];
  const Triple input = model.config.input_dims;
  std::ostringstream detail;
  bool ok = true;
  for (int divisor : {1, 2, 4}) {
    EvalSpec spec;
    spec.samples = 100;
    spec.stride_divisor = divisor;
    const EvalMetrics m = evaluate(model, task, spec);
    const std::int64_t predicted = total_tokens(with_reduced_strides(model.config.bank, divisor), input, true);
    ok &= m.tokens == predicted;
    detail << "stride/" << divisor << " " << m.tokens << " tokens (predicted " << predicted << "); ";
  }

  // Clips larger than the model input so the crops differ.
  TaskBinding big = task;
  big.task.dims = {24, 40, 40};
  for (const auto& [t, x] : std::vector<std::pair<int, int>>{{1, 1}, {4, 3}}) {
    EvalSpec spec;
    spec.samples = 200;
    spec.temporal_crops = t;
    spec.spatial_crops = x;
    const EvalMetrics m = evaluate(model, big, spec);
    int cells = 0;
    bool valid = m.per_crop.size() == static_cast<std::size_t>(t);
    for (const auto& row : m.per_crop) {
      valid &= row.size() == static_cast<std::size_t>(x);
      for (double v : row) valid &= v >= 0.0 && v <= 1.0, ++cells;
    }
    ok &= valid && cells == t * x;
    detail << t << "x" << x << " crops: " << cells << " cells, top1 " << fmt(100.0 * m.top1, 1) << "% [";
    for (std::size_t i = 0; i < m.per_crop.size(); ++i)
      for (std::size_t j = 0; j < m.per_crop[i].size(); ++j) detail << (i + j ? " " : "") << fmt(100.0 * m.per_crop[i][j], 0);
    detail << "]" << (t == 1 ? "; " : "");
  }
  return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"token geometry anchor", c1_anchor},
      {"token geometry vs brute-force oracle", c2_oracle},
      {"published-config discrepancy report", c3_plan},
      {"positional embedding identities", c4_posemb},
      {"finite-difference gradients", c5_gradients},
      {"gate identity and frozen parameters", c6_gate},
      {"interpolated kernel identities", c7_interpolation},
      {"temporal necessity on motion task", c8_temporal},
      {"joint training vs single-task", c9_joint},
      {"frozen scaling regimes", c10_frozen_scaling},
      {"determinism and checkpoint resume", c11_determinism},
      {"eval token counts and multi-crop", c12_eval_tokens},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << id << "] " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
