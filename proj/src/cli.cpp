// Copyright 2026 The handloop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hpe/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "hpe/eval.hpp"
#include "hpe/optim.hpp"

namespace fs = std::filesystem;

namespace hpe {

namespace {

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

long long parse_int(const std::string& key, const std::string& v) {
  size_t idx = 0;
  long long r;
  try {
    r = std::stoll(v, &idx);
  } catch (const std::exception&) {
    throw ConfigError("unparsable integer for key '" + key + "': " + v);
  }
  if (idx != v.size())
    throw ConfigError("unparsable integer for key '" + key + "': " + v);
  return r;
}

double parse_double(const std::string& key, const std::string& v) {
  size_t idx = 0;
  double r;
  try {
    r = std::stod(v, &idx);
  } catch (const std::exception&) {
    throw ConfigError("unparsable number for key '" + key + "': " + v);
  }
  if (idx != v.size())
    throw ConfigError("unparsable number for key '" + key + "': " + v);
  return r;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto i = [&] { return static_cast<int>(parse_int(key, value)); };
  auto d = [&] { return parse_double(key, value); };
  if (key == "data") data = value;
  else if (key == "test_data") test_data = value;
  else if (key == "models") models = value;
  else if (key == "out") out = value;
  else if (key == "pred") pred = value;
  else if (key == "res") res = i();
  else if (key == "joints") joints = i();
  else if (key == "count") count = i();
  else if (key == "test_count") test_count = i();
  else if (key == "half_extent") half_extent = d();
  else if (key == "with_noise") with_noise = i();
  else if (key == "seed") train.seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "batch_size") train.batch_size = i();
  else if (key == "predictor_epochs") train.predictor_epochs = i();
  else if (key == "synth_epochs_per_stage") train.synth_epochs_per_stage = i();
  else if (key == "updater_epochs") train.updater_epochs = i();
  else if (key == "predictor_lr") train.predictor_lr = d();
  else if (key == "synth_lr") train.synth_lr = d();
  else if (key == "updater_lr") train.updater_lr = d();
  else if (key == "lr_decay") train.lr_decay = d();
  else if (key == "gamma") train.gamma = d();
  else if (key == "lambda") train.lambda = d();
  else if (key == "rmsprop_decay") train.rmsprop_decay = d();
  else if (key == "clip") train.clip = d();
  else if (key == "clip_by_norm") train.clip_by_norm = i() != 0;
  else if (key == "epsilon") train.epsilon = d();
  else if (key == "sigma_noise") train.sigma_noise = d();
  else if (key == "copies") train.copies = i();
  else if (key == "error_copies") train.error_copies = i();
  else if (key == "self_augment_period") train.self_augment_period = i();
  else if (key == "iterations") iterations = i();
  else if (key == "max_iterations") baseline.max_iterations = i();
  else if (key == "initial_step") baseline.initial_step = d();
  else if (key == "shrink") baseline.shrink = d();
  else if (key == "sufficient_decrease") baseline.sufficient_decrease = d();
  else if (key == "tolerance") baseline.tolerance = d();
  else if (key == "baseline_frames") baseline_frames = i();
  else if (key == "bench") bench = i();
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingInput("config file '" + path + "' not found");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed line " + std::to_string(lineno) + " in '" +
                        path + "': " + line);
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

std::string RunConfig::to_text() const {
  std::map<std::string, std::string> kv{
      {"data", data},
      {"test_data", test_data},
      {"models", models},
      {"out", out},
      {"pred", pred},
      {"res", std::to_string(res)},
      {"joints", std::to_string(joints)},
      {"count", std::to_string(count)},
      {"test_count", std::to_string(test_count)},
      {"half_extent", fmt_double(half_extent)},
      {"with_noise", std::to_string(with_noise)},
      {"seed", std::to_string(train.seed)},
      {"batch_size", std::to_string(train.batch_size)},
      {"predictor_epochs", std::to_string(train.predictor_epochs)},
      {"synth_epochs_per_stage", std::to_string(train.synth_epochs_per_stage)},
      {"updater_epochs", std::to_string(train.updater_epochs)},
      {"predictor_lr", fmt_double(train.predictor_lr)},
      {"synth_lr", fmt_double(train.synth_lr)},
      {"updater_lr", fmt_double(train.updater_lr)},
      {"lr_decay", fmt_double(train.lr_decay)},
      {"gamma", fmt_double(train.gamma)},
      {"lambda", fmt_double(train.lambda)},
      {"rmsprop_decay", fmt_double(train.rmsprop_decay)},
      {"clip", fmt_double(train.clip)},
      {"clip_by_norm", std::to_string(train.clip_by_norm ? 1 : 0)},
      {"epsilon", fmt_double(train.epsilon)},
      {"sigma_noise", fmt_double(train.sigma_noise)},
      {"copies", std::to_string(train.copies)},
      {"error_copies", std::to_string(train.error_copies)},
      {"self_augment_period", std::to_string(train.self_augment_period)},
      {"iterations", std::to_string(iterations)},
      {"max_iterations", std::to_string(baseline.max_iterations)},
      {"initial_step", fmt_double(baseline.initial_step)},
      {"shrink", fmt_double(baseline.shrink)},
      {"sufficient_decrease", fmt_double(baseline.sufficient_decrease)},
      {"tolerance", fmt_double(baseline.tolerance)},
      {"baseline_frames", std::to_string(baseline_frames)},
      {"bench", std::to_string(bench)},
  };
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  return os.str();
}

namespace {

void require_key(const std::string& value, const char* key) {
  if (value.empty())
    throw ConfigError(std::string("missing required key '") + key + "'");
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw MissingInput(std::string(what) + " '" + path + "' not found");
}

// Resolved config goes next to the outputs: <dir>/<command>.config for
// directory outputs, <file>.config otherwise.
void echo_config(const RunConfig& cfg, const std::string& command,
                 const std::string& out_path, bool out_is_dir) {
  const std::string path =
      out_is_dir ? out_path + "/" + command + ".config" : out_path + ".config";
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw std::runtime_error("cannot write resolved config to '" + path + "'");
  os << cfg.to_text();
}

Dataset load_data(const std::string& path) {
  require_file(path, "dataset");
  return read_dataset(path);
}

struct LoadedModels {
  Predictor predictor;
  Synthesizer synth;
  Updater updater;
};

LoadedModels load_models(const std::string& dir) {
  require_key(dir, "models");
  require_file(dir + "/predictor.hpnn", "model file");
  require_file(dir + "/synthesizer.hpnn", "model file");
  require_file(dir + "/updater.hpnn", "model file");
  LoadedModels m{Predictor::from_model(load_model(dir + "/predictor.hpnn")),
                 Synthesizer::from_model(load_model(dir + "/synthesizer.hpnn")),
                 Updater::from_model(load_model(dir + "/updater.hpnn"))};
  return m;
}

int cmd_gen_data(const RunConfig& cfg) {
  require_key(cfg.out, "out");
  HandSkeleton skel;
  CubeParams cube;
  cube.half_extent = cfg.half_extent;
  Dataset d = generate_dataset(skel, cube, cfg.res, cfg.count, cfg.train.seed,
                               cfg.with_noise != 0);
  if (const auto parent = fs::path(cfg.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_dataset(d, cfg.out);
  echo_config(cfg, "gen-data", cfg.out, false);
  std::cout << "wrote " << d.size() << " frames at res " << d.res << " to "
            << cfg.out << "\n";
  return 0;
}

int cmd_train_predictor(const RunConfig& cfg) {
  require_key(cfg.models, "models");
  Dataset d = load_data(cfg.data);
  fs::create_directories(cfg.models);
  Rng rng(cfg.train.seed);
  Predictor net = Predictor::build(d.res, d.joints, rng);
  TrainResult r = train_predictor(d, cfg.train, net);
  save_model(net.to_model(), cfg.models + "/predictor.hpnn");
  write_loss_csv(r.loss_history, cfg.models + "/predictor-loss.csv");
  echo_config(cfg, "train-predictor", cfg.models, true);
  std::cout << "predictor trained, final loss "
            << fmt_double(r.loss_history.back()) << "\n";
  return 0;
}

int cmd_train_synthesizer(const RunConfig& cfg) {
  require_key(cfg.models, "models");
  Dataset d = load_data(cfg.data);
  fs::create_directories(cfg.models);
  Rng rng(cfg.train.seed + 1);
  Synthesizer net = Synthesizer::build(d.res, d.joints, rng);
  auto history = train_synthesizer_layerwise(d, cfg.train, net);
  save_model(net.to_model(), cfg.models + "/synthesizer.hpnn");
  std::ofstream os(cfg.models + "/synthesizer-loss.csv", std::ios::binary);
  os << "stage,epoch,loss\n";
  for (size_t s = 0; s < history.size(); ++s)
    for (size_t e = 0; e < history[s].size(); ++e)
      os << s << "," << e << "," << fmt_double(history[s][e]) << "\n";
  echo_config(cfg, "train-synthesizer", cfg.models, true);
  std::cout << "synthesizer trained through " << history.size() << " stages\n";
  return 0;
}

int cmd_train_updater(const RunConfig& cfg) {
  require_key(cfg.models, "models");
  Dataset d = load_data(cfg.data);
  require_file(cfg.models + "/predictor.hpnn", "model file");
  require_file(cfg.models + "/synthesizer.hpnn", "model file");
  Predictor pred = Predictor::from_model(load_model(cfg.models + "/predictor.hpnn"));
  Synthesizer synth =
      Synthesizer::from_model(load_model(cfg.models + "/synthesizer.hpnn"));
  Rng build_rng(cfg.train.seed + 2);
  Updater net = Updater::build(d.res, d.joints, build_rng);
  Rng set_rng(cfg.train.seed + 3);
  UpdaterTrainingSet set = build_updater_training_set(d, pred, cfg.train, set_rng);
  TrainResult r = train_updater(set, d, synth, cfg.train, net);
  save_model(net.to_model(), cfg.models + "/updater.hpnn");
  write_loss_csv(r.loss_history, cfg.models + "/updater-loss.csv");
  echo_config(cfg, "train-updater", cfg.models, true);
  std::cout << "updater trained, final hinge loss "
            << fmt_double(r.loss_history.back()) << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg) {
  require_key(cfg.out, "out");
  Dataset d = load_data(cfg.data);
  LoadedModels m = load_models(cfg.models);
  LoopConfig loop{cfg.iterations};
  if (const auto parent = fs::path(cfg.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream os(cfg.out, std::ios::binary);
  if (!os)
    throw std::runtime_error("cannot open '" + cfg.out + "' for writing");
  os << "frame_index,iteration,joint_index,x,y,z\n";
  // Frames go through the loop in blocks so the networks' batched forwards
  // amortize weight streaming.
  constexpr size_t kBlock = 16;
  for (size_t base = 0; base < d.size(); base += kBlock) {
    const size_t n = std::min(kBlock, d.size() - base);
    const std::vector<DepthFrame> block(d.frames.begin() + base,
                                        d.frames.begin() + base + n);
    const std::vector<LoopResult> rs =
        run_feedback_loop_batch(m.predictor, m.synth, m.updater, block, loop);
    for (size_t i = 0; i < n; ++i) {
      for (size_t it = 0; it < rs[i].trace.size(); ++it) {
        const PoseVector& p = rs[i].trace[it];
        for (size_t j = 0; j * 3 < p.size(); ++j)
          os << base + i << "," << it << "," << j << ","
             << fmt_double(p[3 * j]) << "," << fmt_double(p[3 * j + 1]) << ","
             << fmt_double(p[3 * j + 2]) << "\n";
      }
    }
  }
  echo_config(cfg, "infer", cfg.out, false);
  if (cfg.bench != 0 && d.size() > 0) {
    // Dedicated timing pass with no file output; the trace pass above served
    // as warmup. The median per-frame time is reported because it is stable
    // against scheduler interruptions that a mean would absorb.
    std::vector<double> per_frame;
    for (size_t base = 0; base < d.size(); base += kBlock) {
      const size_t n = std::min(kBlock, d.size() - base);
      const std::vector<DepthFrame> block(d.frames.begin() + base,
                                          d.frames.begin() + base + n);
      const auto a = std::chrono::steady_clock::now();
      run_feedback_loop_batch(m.predictor, m.synth, m.updater, block, loop);
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - a)
                            .count();
      per_frame.insert(per_frame.end(), n, ms / static_cast<double>(n));
    }
    std::nth_element(per_frame.begin(), per_frame.begin() + per_frame.size() / 2,
                     per_frame.end());
    std::printf(
        "bench: %.3f ms/frame median over %zu frames (%d loop iterations)\n",
        per_frame[per_frame.size() / 2], d.size(), cfg.iterations);
  }
  std::cout << "wrote traces for " << d.size() << " frames to " << cfg.out
            << "\n";
  return 0;
}

// Final-iteration poses per frame from a trace CSV.
std::vector<PoseVector> read_final_traces(const std::string& path) {
  require_file(path, "trace file");
  std::ifstream is(path);
  std::string line;
  if (!std::getline(is, line) ||
      line.rfind("frame_index,iteration,joint_index", 0) != 0)
    throw std::runtime_error("'" + path + "' is not a trace CSV");
  std::map<size_t, std::map<int, PoseVector>> frames;  // frame -> iter -> pose
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    size_t fi;
    int it, j;
    double x, y, z;
    if (std::sscanf(line.c_str(), "%zu,%d,%d,%lf,%lf,%lf", &fi, &it, &j, &x,
                    &y, &z) != 6)
      throw std::runtime_error("malformed trace row: " + line);
    PoseVector& p = frames[fi][it];
    if (p.size() < static_cast<size_t>(3 * (j + 1)))
      p.resize(static_cast<size_t>(3 * (j + 1)));
    p[3 * j] = x;
    p[3 * j + 1] = y;
    p[3 * j + 2] = z;
  }
  std::vector<PoseVector> out;
  out.reserve(frames.size());
  for (const auto& [fi, iters] : frames) out.push_back(iters.rbegin()->second);
  return out;
}

int cmd_eval(const RunConfig& cfg) {
  require_key(cfg.out, "out");
  require_key(cfg.pred, "pred");
  Dataset d = load_data(cfg.data);
  std::vector<PoseVector> predicted = read_final_traces(cfg.pred);
  if (predicted.size() != d.size())
    throw std::runtime_error("trace covers " + std::to_string(predicted.size()) +
                             " frames, dataset has " + std::to_string(d.size()));
  CubeParams cube;
  cube.half_extent = d.half_extent;
  MetricReport rep = make_report(predicted, d.poses, cube, default_thresholds());
  // Filenames only: metric files must be byte-identical across runs that
  // differ only in output directory.
  rep.metadata["dataset"] = fs::path(cfg.data).filename().string();
  rep.metadata["traces"] = fs::path(cfg.pred).filename().string();
  rep.metadata["frames"] = std::to_string(d.size());
  fs::create_directories(cfg.out);
  emit_csv(rep, cfg.out + "/metrics.csv");
  emit_curve_csv({{"loop", rep.curve}}, cfg.out + "/curve.csv");
  emit_svg({{"loop", rep.curve}}, cfg.out + "/curve.svg");
  echo_config(cfg, "eval", cfg.out, true);
  std::cout << "mean joint error: " << fmt_double(rep.mean_error_mm)
            << " mm over " << d.size() << " frames\n";
  return 0;
}

int cmd_compare_baseline(const RunConfig& cfg) {
  require_key(cfg.out, "out");
  Dataset d = load_data(cfg.data);
  LoadedModels m = load_models(cfg.models);
  CubeParams cube;
  cube.half_extent = d.half_extent;
  const size_t n = cfg.baseline_frames > 0
                       ? std::min(d.size(), static_cast<size_t>(cfg.baseline_frames))
                       : d.size();
  if (n == 0) throw std::runtime_error("dataset is empty");

  std::vector<PoseVector> init_p, loop_p, base_p;
  size_t worsened = 0;
  bool monotone = true;
  LoopConfig loop{cfg.iterations};
  for (size_t i = 0; i < n; ++i) {
    PoseVector p0 = predict_initial(m.predictor, d.frames[i]);
    for (double& c : p0) c = std::clamp(c, -1.0, 1.0);  // baseline box
    LoopResult lr = run_feedback_loop(m.predictor, m.synth, m.updater,
                                      d.frames[i], loop);
    BaselineResult br = baseline_optimize(m.synth, d.frames[i], p0, cfg.baseline);
    for (size_t k = 1; k < br.objective_trace.size(); ++k)
      if (br.objective_trace[k] > br.objective_trace[k - 1]) monotone = false;
    const double e0 = mean_joint_error_mm(
        {joint_errors_mm(p0, d.poses[i], cube)});
    const double eb = mean_joint_error_mm(
        {joint_errors_mm(br.final_pose, d.poses[i], cube)});
    if (eb > e0) ++worsened;
    init_p.push_back(std::move(p0));
    loop_p.push_back(lr.final_pose);
    base_p.push_back(br.final_pose);
  }
  const auto thresholds = default_thresholds();
  MetricReport ri = make_report(init_p, {d.poses.begin(), d.poses.begin() + n},
                                cube, thresholds);
  MetricReport rl = make_report(loop_p, {d.poses.begin(), d.poses.begin() + n},
                                cube, thresholds);
  MetricReport rb = make_report(base_p, {d.poses.begin(), d.poses.begin() + n},
                                cube, thresholds);

  if (const auto parent = fs::path(cfg.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream os(cfg.out, std::ios::binary);
  if (!os)
    throw std::runtime_error("cannot open '" + cfg.out + "' for writing");
  os << "# mean_init_mm=" << fmt_double(ri.mean_error_mm) << "\n"
     << "# mean_loop_mm=" << fmt_double(rl.mean_error_mm) << "\n"
     << "# mean_baseline_mm=" << fmt_double(rb.mean_error_mm) << "\n"
     << "# baseline_worsened_frames=" << worsened << "\n"
     << "# objective_nonincreasing=" << (monotone ? 1 : 0) << "\n"
     << "frame_index,init_mm,loop_mm,baseline_mm\n";
  for (size_t i = 0; i < n; ++i)
    os << i << "," << fmt_double(mean_joint_error_mm({ri.errors_mm[i]})) << ","
       << fmt_double(mean_joint_error_mm({rl.errors_mm[i]})) << ","
       << fmt_double(mean_joint_error_mm({rb.errors_mm[i]})) << "\n";
  os.close();
  const std::string svg = fs::path(cfg.out).replace_extension(".svg").string();
  emit_svg({{"init", ri.curve}, {"loop", rl.curve}, {"baseline", rb.curve}},
           svg);
  echo_config(cfg, "compare-baseline", cfg.out, false);
  std::printf(
      "init %.3f mm, loop %.3f mm, baseline %.3f mm over %zu frames; "
      "baseline worsened %zu\n",
      ri.mean_error_mm, rl.mean_error_mm, rb.mean_error_mm, n, worsened);
  return 0;
}

int cmd_grad_check(const RunConfig& cfg) {
  Rng rng(cfg.train.seed);
  double max_err = 0.0;
  auto rand_tensor = [&](std::vector<int> shape) {
    TensorPtr t = Tensor::make(std::move(shape));
    for (double& v : t->data) v = rng.uniform() * 2.0 - 1.0;
    t->requires_grad = true;
    return t;
  };
  auto check = [&](const char* name, const TensorPtr& x,
                   const std::function<TensorPtr(Tape&)>& f) {
    const double e = finite_diff_check(f, x, 1e-5);
    max_err = std::max(max_err, e);
    std::printf("  %-24s %.3e\n", name, e);
  };

  {
    TensorPtr in = rand_tensor({2, 6, 6});
    TensorPtr w = rand_tensor({3, 2, 3, 3});
    TensorPtr b = rand_tensor({3});
    auto f = [&](Tape& t) { return sum(t, conv2d(t, in, w, b, 1, 1)); };
    check("conv2d/input", in, f);
    check("conv2d/filters", w, f);
    check("conv2d/bias", b, f);
  }
  {
    TensorPtr in = rand_tensor({2, 4, 4});
    TensorPtr w = rand_tensor({2, 2, 5, 5});
    TensorPtr b = rand_tensor({2});
    auto f = [&](Tape& t) { return sum(t, unpool_conv2d(t, in, w, b, 2)); };
    check("unpool_conv2d/input", in, f);
    check("unpool_conv2d/filters", w, f);
  }
  {
    TensorPtr in = rand_tensor({1, 4, 4});
    check("max_pool2d", in, [&](Tape& t) {
      return sum_squares(t, max_pool2d(t, in, 2));
    });
    check("unpool2d", in,
          [&](Tape& t) { return sum_squares(t, unpool2d(t, in, 2)); });
  }
  {
    TensorPtr in = rand_tensor({5});
    TensorPtr w = rand_tensor({3, 5});
    TensorPtr b = rand_tensor({3});
    auto f = [&](Tape& t) {
      return sum_squares(t, fully_connected(t, in, w, b));
    };
    check("fully_connected/input", in, f);
    check("fully_connected/weights", w, f);
    check("fully_connected/bias", b, f);
  }
  {
    TensorPtr a = rand_tensor({6});
    TensorPtr b = rand_tensor({6});
    check("mse", a, [&](Tape& t) { return mse(t, a, b); });
    check("l2_norm", a, [&](Tape& t) { return l2_norm(t, sub(t, a, b)); });
    check("concat+relu", a, [&](Tape& t) {
      return sum_squares(t, relu(t, concat(t, a, b)));
    });
  }
  std::printf("grad-check max relative error: %.3e\n", max_err);
  return max_err < 1e-6 ? 0 : 4;
}

int cmd_pipeline(const RunConfig& cfg) {
  require_key(cfg.out, "out");
  fs::create_directories(cfg.out);
  RunConfig c = cfg;

  c.out = cfg.out + "/train.hpds";
  if (cmd_gen_data(c) != 0) return 4;
  RunConfig ct = cfg;
  ct.count = cfg.test_count;
  ct.train.seed = cfg.train.seed + 1;
  ct.out = cfg.out + "/test.hpds";
  if (cmd_gen_data(ct) != 0) return 4;

  c = cfg;
  c.data = cfg.out + "/train.hpds";
  c.models = cfg.out + "/models";
  if (cmd_train_predictor(c) != 0) return 4;
  if (cmd_train_synthesizer(c) != 0) return 4;
  if (cmd_train_updater(c) != 0) return 4;

  c.data = cfg.out + "/test.hpds";
  c.out = cfg.out + "/traces.csv";
  if (cmd_infer(c) != 0) return 4;

  c.pred = cfg.out + "/traces.csv";
  c.out = cfg.out + "/report";
  if (cmd_eval(c) != 0) return 4;
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  const std::string usage =
      "usage: handloop <gen-data|train-predictor|train-synthesizer|"
      "train-updater|infer|eval|compare-baseline|grad-check|pipeline> "
      "[--config FILE] [--KEY VALUE ...]";
  try {
    if (argc < 2) throw ConfigError("no command given; " + usage);
    const std::string command = argv[1];
    RunConfig cfg;
    for (int i = 2; i < argc; ++i) {
      std::string flag = argv[i];
      if (flag.rfind("--", 0) != 0)
        throw ConfigError("expected a --flag, got '" + flag + "'");
      flag = flag.substr(2);
      for (char& ch : flag)
        if (ch == '-') ch = '_';
      if (flag == "bench") {
        cfg.bench = 1;
        continue;
      }
      if (i + 1 >= argc)
        throw ConfigError("flag '--" + std::string(argv[i]).substr(2) +
                          "' needs a value");
      const std::string value = argv[++i];
      if (flag == "config")
        cfg.load_file(value);
      else if (flag == "iters")
        cfg.set("iterations", value);
      else
        cfg.set(flag, value);
    }

    if (command == "gen-data") return cmd_gen_data(cfg);
    if (command == "train-predictor") return cmd_train_predictor(cfg);
    if (command == "train-synthesizer") return cmd_train_synthesizer(cfg);
    if (command == "train-updater") return cmd_train_updater(cfg);
    if (command == "infer") return cmd_infer(cfg);
    if (command == "eval") return cmd_eval(cfg);
    if (command == "compare-baseline") return cmd_compare_baseline(cfg);
    if (command == "grad-check") return cmd_grad_check(cfg);
    if (command == "pipeline") return cmd_pipeline(cfg);
    throw ConfigError("unknown command '" + command + "'; " + usage);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const MissingInput& e) {
    std::cerr << "error: missing-input: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 4;
  }
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hpe
