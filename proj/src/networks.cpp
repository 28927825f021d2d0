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

#include "hpe/networks.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hpe/optim.hpp"

namespace hpe {

TensorPtr tensor_from_frame(const DepthFrame& f) {
  return Tensor::from_data({f.res, f.res}, f.v);
}

DepthFrame frame_from_tensor(const TensorPtr& t) {
  DepthFrame f;
  if (t->shape.size() == 2 && t->shape[0] == t->shape[1])
    f.res = t->shape[0];
  else if (t->shape.size() == 3 && t->shape[0] == 1 &&
           t->shape[1] == t->shape[2])
    f.res = t->shape[1];
  else
    throw ShapeError("not a square depth frame: " + shape_str(t->shape));
  f.v = t->data;
  return f;
}

TensorPtr tensor_from_pose(const PoseVector& p) {
  return Tensor::from_data({static_cast<int>(p.size())}, p);
}

PoseVector pose_from_tensor(const TensorPtr& t) { return t->data; }

void TrainingConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must be in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (predictor_lr <= 0.0 || synth_lr <= 0.0 || updater_lr <= 0.0 ||
      lr_decay <= 0.0)
    throw std::invalid_argument("learning rates must be positive");
  if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  if (sigma_noise < 0.0)
    throw std::invalid_argument("sigma_noise must be >= 0");
  if (copies < 0 || error_copies < 0)
    throw std::invalid_argument("copy counts must be >= 0");
}

namespace {

using Eigen::MatrixXd;

// One matrix product for a fully connected layer over a whole batch: the
// weight matrix is streamed from memory once per batch instead of once per
// sample, which dominates single-sample inference cost.
MatrixXd fc_batch(const TensorPtr& w, const TensorPtr& b, const MatrixXd& x) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      wm(w->data.data(), w->shape[0], w->shape[1]);
  MatrixXd y = wm * x;
  y.colwise() += Eigen::Map<const Eigen::VectorXd>(b->data.data(), b->numel());
  return y;
}

TensorPtr make_conv_param(int k, int c, int size, Rng& rng) {
  TensorPtr w = Tensor::make({k, c, size, size});
  init_uniform(*w, c * size * size, k * size * size, rng);
  return w;
}

TensorPtr make_fc_param(int m, int n, Rng& rng) {
  TensorPtr w = Tensor::make({m, n});
  init_uniform(*w, n, m, rng);
  return w;
}

std::string header(const char* network, int res, int joints) {
  std::ostringstream os;
  os << "network=" << network << "\nres=" << res << "\njoints=" << joints
     << "\n";
  return os.str();
}

// Parses "network=..." / "res=..." / "joints=..." from a descriptor.
void parse_header(const std::string& descriptor, const char* expected,
                  int& res, int& joints) {
  std::istringstream is(descriptor);
  std::string line;
  std::string network;
  res = joints = 0;
  while (std::getline(is, line)) {
    if (line.rfind("network=", 0) == 0) network = line.substr(8);
    if (line.rfind("res=", 0) == 0) res = std::stoi(line.substr(4));
    if (line.rfind("joints=", 0) == 0) joints = std::stoi(line.substr(7));
  }
  if (network != expected)
    throw SerializeError("model is a '" + network + "', expected '" +
                         expected + "'");
  if (res <= 0 || joints <= 0)
    throw SerializeError("model descriptor lacks res/joints");
}

void bind(const Model& m, const char* name, TensorPtr& dst) {
  const TensorPtr& src = m.param(name);
  if (src->shape != dst->shape)
    throw SerializeError(std::string("parameter '") + name +
                         "' has shape " + shape_str(src->shape) +
                         ", expected " + shape_str(dst->shape));
  dst = src;
}

int predictor_pooled(int res) {
  if ((res - 4) % 4 != 0)
    throw ShapeError("predictor resolution " + std::to_string(res) +
                     " leaves a conv output not divisible by the 4x4 pool");
  return (res - 4) / 4;
}

int synth_stage_count(int res) {
  int r = res, s = 0;
  while (r > 8 && r % 2 == 0) {
    r /= 2;
    ++s;
  }
  if (r != 8)
    throw ShapeError("synthesizer resolution " + std::to_string(res) +
                     " is not a power-of-two multiple of 8");
  return s;
}

std::vector<int> updater_path_sizes(int res) {
  const auto specs = Updater::path_layers();
  std::vector<int> shape{1, res, res};
  std::vector<int> sizes;
  for (const auto& s : specs) {
    shape = s.output_shape(shape);
    if (s.kind == LayerSpec::Kind::Conv) sizes.push_back(shape[1]);
  }
  return sizes;
}

}  // namespace

// ---------------------------------------------------------------- Predictor

Predictor Predictor::build(int res, int joints, Rng& rng) {
  Predictor p;
  p.res = res;
  p.joints = joints;
  const int m = predictor_pooled(res);
  const int flat = 8 * m * m;
  p.conv_w = make_conv_param(8, 1, 5, rng);
  p.conv_b = Tensor::make({8});
  p.fc1_w = make_fc_param(1024, flat, rng);
  p.fc1_b = Tensor::make({1024});
  p.out_w = make_fc_param(3 * joints, 1024, rng);
  p.out_b = Tensor::make({3 * joints});
  return p;
}

std::vector<LayerSpec> Predictor::layers() const {
  return {LayerSpec::conv(8, 5, 1, 0), LayerSpec::relu(),
          LayerSpec::max_pool(4),      LayerSpec::fc(1024),
          LayerSpec::relu(),           LayerSpec::fc(3 * joints),
          LayerSpec::linear_identity()};
}

TensorPtr Predictor::forward(Tape& tape, const TensorPtr& frame) const {
  if (frame->numel() != res * res)
    throw ShapeError("predictor expects a " + std::to_string(res) + "x" +
                     std::to_string(res) + " frame, got " +
                     shape_str(frame->shape));
  TensorPtr x = reshape(tape, frame, {1, res, res});
  x = conv2d(tape, x, conv_w, conv_b, 1, 0);
  x = relu_inplace(tape, x);
  x = max_pool2d(tape, x, 4);
  x = reshape(tape, x, {x->numel()});
  x = fully_connected(tape, x, fc1_w, fc1_b);
  x = relu_inplace(tape, x);
  return fully_connected(tape, x, out_w, out_b);
}

PoseVector Predictor::predict(const DepthFrame& frame) const {
  Tape tape = Tape::inference();
  return pose_from_tensor(forward(tape, tensor_from_frame(frame)));
}

std::vector<PoseVector> Predictor::predict_batch(
    const std::vector<DepthFrame>& frames) const {
  std::vector<PoseVector> out(frames.size());
  if (frames.empty()) return out;
  const int flat = fc1_w->shape[1];
  MatrixXd x(flat, static_cast<long>(frames.size()));
  for (size_t i = 0; i < frames.size(); ++i) {
    // The convolutional front end stays per sample; it is compute-bound.
    Tape tape = Tape::inference();
    TensorPtr h = reshape(tape, tensor_from_frame(frames[i]), {1, res, res});
    h = relu_inplace(tape, conv2d(tape, h, conv_w, conv_b, 1, 0));
    h = max_pool2d(tape, h, 4);
    if (h->numel() != flat)
      throw ShapeError("predictor expects " + std::to_string(res) + "x" +
                       std::to_string(res) + " frames");
    std::copy(h->data.begin(), h->data.end(), x.col(i).data());
  }
  MatrixXd y = fc_batch(fc1_w, fc1_b, x).cwiseMax(0.0);
  y = fc_batch(out_w, out_b, y);
  for (size_t i = 0; i < frames.size(); ++i)
    out[i].assign(y.col(i).data(), y.col(i).data() + 3 * joints);
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> Predictor::params() const {
  return {{"conv.w", conv_w}, {"conv.b", conv_b}, {"fc1.w", fc1_w},
          {"fc1.b", fc1_b},   {"out.w", out_w},   {"out.b", out_b}};
}

Model Predictor::to_model() const {
  Model m;
  std::ostringstream os;
  os << header("predictor", res, joints);
  for (const auto& l : layers()) os << "layer " << to_string(l) << "\n";
  m.descriptor = os.str();
  m.params = params();
  return m;
}

Predictor Predictor::from_model(const Model& m) {
  int res = 0, joints = 0;
  parse_header(m.descriptor, "predictor", res, joints);
  Rng rng(0);
  Predictor p = build(res, joints, rng);
  bind(m, "conv.w", p.conv_w);
  bind(m, "conv.b", p.conv_b);
  bind(m, "fc1.w", p.fc1_w);
  bind(m, "fc1.b", p.fc1_b);
  bind(m, "out.w", p.out_w);
  bind(m, "out.b", p.out_b);
  return p;
}

// -------------------------------------------------------------- Synthesizer

Synthesizer Synthesizer::build(int res, int joints, Rng& rng) {
  Synthesizer s;
  s.res = res;
  s.joints = joints;
  s.stages = synth_stage_count(res);
  const int in = 3 * joints;
  const int widths[4] = {1024, 1024, 1024, 2048};
  int prev = in;
  for (int i = 0; i < 4; ++i) {
    s.fc_w[i] = make_fc_param(widths[i], prev, rng);
    s.fc_b[i] = Tensor::make({widths[i]});
    prev = widths[i];
  }
  for (int i = 0; i < s.stages; ++i) {
    s.stage_w.push_back(make_conv_param(32, 32, 5, rng));
    s.stage_b.push_back(Tensor::make({32}));
  }
  s.combine_w = make_conv_param(1, 32, 5, rng);
  s.combine_b = Tensor::make({1});
  return s;
}

std::vector<LayerSpec> Synthesizer::layers() const {
  std::vector<LayerSpec> ls;
  for (int i = 0; i < 3; ++i) {
    ls.push_back(LayerSpec::fc(1024));
    ls.push_back(LayerSpec::relu());
  }
  ls.push_back(LayerSpec::fc(2048));
  ls.push_back(LayerSpec::relu());
  ls.push_back(LayerSpec::reshape({32, 8, 8}));
  for (int i = 0; i < stages; ++i) {
    ls.push_back(LayerSpec::unpool(2));
    ls.push_back(LayerSpec::conv(32, 5, 1, 2));
    ls.push_back(LayerSpec::relu());
  }
  ls.push_back(LayerSpec::conv(1, 5, 1, 2));
  ls.push_back(LayerSpec::linear_identity());
  return ls;
}

TensorPtr Synthesizer::forward_partial(Tape& tape, const TensorPtr& pose,
                                       int active_stages, const TensorPtr& cw,
                                       const TensorPtr& cb) const {
  if (pose->numel() != 3 * joints)
    throw ShapeError("synthesizer expects a pose of length " +
                     std::to_string(3 * joints) + ", got " +
                     shape_str(pose->shape));
  if (active_stages < 0 || active_stages > stages)
    throw ShapeError("active_stages " + std::to_string(active_stages) +
                     " out of range [0, " + std::to_string(stages) + "]");
  TensorPtr x = pose;
  if (x->shape.size() != 1) x = reshape(tape, x, {3 * joints});
  for (int i = 0; i < 4; ++i)
    x = relu_inplace(tape, fully_connected(tape, x, fc_w[i], fc_b[i]));
  x = reshape(tape, x, {32, 8, 8});
  for (int s = 0; s < active_stages; ++s)
    x = relu_inplace(tape, unpool_conv2d(tape, x, stage_w[s], stage_b[s], 2));
  x = conv2d(tape, x, cw, cb, 1, 2);
  const int r = x->shape[1];
  return reshape(tape, x, {r, r});
}

TensorPtr Synthesizer::forward(Tape& tape, const TensorPtr& pose) const {
  return forward_partial(tape, pose, stages, combine_w, combine_b);
}

DepthFrame Synthesizer::synthesize(const PoseVector& pose) const {
  Tape tape = Tape::inference();
  return frame_from_tensor(forward(tape, tensor_from_pose(pose)));
}

std::vector<DepthFrame> Synthesizer::synthesize_batch(
    const std::vector<PoseVector>& poses) const {
  std::vector<DepthFrame> out(poses.size());
  if (poses.empty()) return out;
  MatrixXd x(3 * joints, static_cast<long>(poses.size()));
  for (size_t i = 0; i < poses.size(); ++i) {
    if (static_cast<int>(poses[i].size()) != 3 * joints)
      throw ShapeError("synthesizer expects poses of length " +
                       std::to_string(3 * joints));
    std::copy(poses[i].begin(), poses[i].end(), x.col(i).data());
  }
  for (int i = 0; i < 4; ++i)
    x = fc_batch(fc_w[i], fc_b[i], x).cwiseMax(0.0);
  for (size_t i = 0; i < poses.size(); ++i) {
    // The decoder convolutions stay per sample; they are compute-bound.
    Tape tape = Tape::inference();
    TensorPtr h = Tensor::from_data(
        {32, 8, 8}, std::vector<double>(x.col(i).data(), x.col(i).data() + 2048));
    for (int s = 0; s < stages; ++s)
      h = relu_inplace(tape, unpool_conv2d(tape, h, stage_w[s], stage_b[s], 2));
    h = conv2d(tape, h, combine_w, combine_b, 1, 2);
    out[i] = frame_from_tensor(h);
  }
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> Synthesizer::params() const {
  std::vector<std::pair<std::string, TensorPtr>> ps;
  for (int i = 0; i < 4; ++i) {
    ps.emplace_back("fc" + std::to_string(i + 1) + ".w", fc_w[i]);
    ps.emplace_back("fc" + std::to_string(i + 1) + ".b", fc_b[i]);
  }
  for (int i = 0; i < stages; ++i) {
    ps.emplace_back("stage" + std::to_string(i + 1) + ".w", stage_w[i]);
    ps.emplace_back("stage" + std::to_string(i + 1) + ".b", stage_b[i]);
  }
  ps.emplace_back("combine.w", combine_w);
  ps.emplace_back("combine.b", combine_b);
  return ps;
}

Model Synthesizer::to_model() const {
  Model m;
  std::ostringstream os;
  os << header("synthesizer", res, joints);
  for (const auto& l : layers()) os << "layer " << to_string(l) << "\n";
  m.descriptor = os.str();
  m.params = params();
  return m;
}

Synthesizer Synthesizer::from_model(const Model& m) {
  int res = 0, joints = 0;
  parse_header(m.descriptor, "synthesizer", res, joints);
  Rng rng(0);
  Synthesizer s = build(res, joints, rng);
  for (int i = 0; i < 4; ++i) {
    bind(m, ("fc" + std::to_string(i + 1) + ".w").c_str(), s.fc_w[i]);
    bind(m, ("fc" + std::to_string(i + 1) + ".b").c_str(), s.fc_b[i]);
  }
  for (int i = 0; i < s.stages; ++i) {
    bind(m, ("stage" + std::to_string(i + 1) + ".w").c_str(), s.stage_w[i]);
    bind(m, ("stage" + std::to_string(i + 1) + ".b").c_str(), s.stage_b[i]);
  }
  bind(m, "combine.w", s.combine_w);
  bind(m, "combine.b", s.combine_b);
  return s;
}

// ------------------------------------------------------------------ Updater

std::vector<LayerSpec> Updater::path_layers() {
  return {LayerSpec::conv(8, 5, 2, 0), LayerSpec::relu(),
          LayerSpec::conv(8, 5, 2, 0), LayerSpec::relu(),
          LayerSpec::conv(8, 3, 2, 0), LayerSpec::relu(),
          LayerSpec::conv(8, 3, 1, 0), LayerSpec::relu()};
}

Updater Updater::build(int res, int joints, Rng& rng) {
  Updater u;
  u.res = res;
  u.joints = joints;
  const int sizes[4] = {5, 5, 3, 3};
  int c = 1;
  for (int i = 0; i < 4; ++i) {
    u.conv_w[i] = make_conv_param(8, c, sizes[i], rng);
    u.conv_b[i] = Tensor::make({8});
    c = 8;
  }
  const auto path = updater_path_sizes(res);  // throws if a map collapses
  const int a = path.back();
  const int flat = 2 * 8 * a * a;
  u.fc1_w = make_fc_param(1024, flat, rng);
  u.fc1_b = Tensor::make({1024});
  u.fc2_w = make_fc_param(1024, 1024, rng);
  u.fc2_b = Tensor::make({1024});
  u.out_w = make_fc_param(3 * joints, 1024, rng);
  u.out_b = Tensor::make({3 * joints});
  return u;
}

TensorPtr Updater::path(Tape& tape, const TensorPtr& frame) const {
  TensorPtr x = frame;
  if (x->shape.size() != 3) x = reshape(tape, x, {1, res, res});
  const int strides[4] = {2, 2, 2, 1};
  for (int i = 0; i < 4; ++i)
    x = relu_inplace(tape, conv2d(tape, x, conv_w[i], conv_b[i], strides[i], 0));
  return reshape(tape, x, {x->numel()});
}

TensorPtr Updater::forward(Tape& tape, const TensorPtr& input_frame,
                           const TensorPtr& synth_frame) const {
  // Fixed order: observed path first, synthesized path second.
  TensorPtr x = concat(tape, path(tape, input_frame), path(tape, synth_frame));
  x = relu_inplace(tape, fully_connected(tape, x, fc1_w, fc1_b));
  x = relu_inplace(tape, fully_connected(tape, x, fc2_w, fc2_b));
  return fully_connected(tape, x, out_w, out_b);
}

PoseVector Updater::update(const DepthFrame& input,
                           const DepthFrame& synth) const {
  Tape tape = Tape::inference();
  return pose_from_tensor(
      forward(tape, tensor_from_frame(input), tensor_from_frame(synth)));
}

std::vector<PoseVector> Updater::update_batch(
    const std::vector<DepthFrame>& inputs,
    const std::vector<DepthFrame>& synths) const {
  if (inputs.size() != synths.size())
    throw ShapeError("updater batch: " + std::to_string(inputs.size()) +
                     " observed frames vs " + std::to_string(synths.size()) +
                     " synthesized");
  std::vector<PoseVector> out(inputs.size());
  if (inputs.empty()) return out;
  const int flat = fc1_w->shape[1];
  MatrixXd x(flat, static_cast<long>(inputs.size()));
  for (size_t i = 0; i < inputs.size(); ++i) {
    // The convolutional paths stay per sample; they are compute-bound.
    Tape tape = Tape::inference();
    TensorPtr a = path(tape, tensor_from_frame(inputs[i]));
    TensorPtr b = path(tape, tensor_from_frame(synths[i]));
    if (a->numel() + b->numel() != flat)
      throw ShapeError("updater expects " + std::to_string(res) + "x" +
                       std::to_string(res) + " frames");
    // Observed path first, matching forward's concatenation order.
    std::copy(a->data.begin(), a->data.end(), x.col(i).data());
    std::copy(b->data.begin(), b->data.end(), x.col(i).data() + a->numel());
  }
  MatrixXd y = fc_batch(fc1_w, fc1_b, x).cwiseMax(0.0);
  y = fc_batch(fc2_w, fc2_b, y).cwiseMax(0.0);
  y = fc_batch(out_w, out_b, y);
  for (size_t i = 0; i < inputs.size(); ++i)
    out[i].assign(y.col(i).data(), y.col(i).data() + 3 * joints);
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> Updater::params() const {
  std::vector<std::pair<std::string, TensorPtr>> ps;
  for (int i = 0; i < 4; ++i) {
    ps.emplace_back("path.conv" + std::to_string(i + 1) + ".w", conv_w[i]);
    ps.emplace_back("path.conv" + std::to_string(i + 1) + ".b", conv_b[i]);
  }
  ps.emplace_back("head.fc1.w", fc1_w);
  ps.emplace_back("head.fc1.b", fc1_b);
  ps.emplace_back("head.fc2.w", fc2_w);
  ps.emplace_back("head.fc2.b", fc2_b);
  ps.emplace_back("head.out.w", out_w);
  ps.emplace_back("head.out.b", out_b);
  return ps;
}

Model Updater::to_model() const {
  Model m;
  std::ostringstream os;
  os << header("updater", res, joints);
  for (const auto& l : path_layers()) os << "path-layer " << to_string(l) << "\n";
  os << "head-layer concat\n";
  os << "head-layer fc neurons=1024\nhead-layer relu\n";
  os << "head-layer fc neurons=1024\nhead-layer relu\n";
  os << "head-layer fc neurons=" << 3 * joints << "\nhead-layer linear\n";
  m.descriptor = os.str();
  m.params = params();
  return m;
}

Updater Updater::from_model(const Model& m) {
  int res = 0, joints = 0;
  parse_header(m.descriptor, "updater", res, joints);
  Rng rng(0);
  Updater u = build(res, joints, rng);
  for (int i = 0; i < 4; ++i) {
    bind(m, ("path.conv" + std::to_string(i + 1) + ".w").c_str(), u.conv_w[i]);
    bind(m, ("path.conv" + std::to_string(i + 1) + ".b").c_str(), u.conv_b[i]);
  }
  bind(m, "head.fc1.w", u.fc1_w);
  bind(m, "head.fc1.b", u.fc1_b);
  bind(m, "head.fc2.w", u.fc2_w);
  bind(m, "head.fc2.b", u.fc2_b);
  bind(m, "head.out.w", u.out_w);
  bind(m, "head.out.b", u.out_b);
  return u;
}

// ----------------------------------------------------------------- Training

DepthFrame box_downsample(const DepthFrame& f, int factor) {
  if (factor == 1) return f;
  if (f.res % factor != 0)
    throw ShapeError("box_downsample: resolution not divisible by factor");
  const int r = f.res / factor;
  DepthFrame out(r);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          acc += f.at(y * factor + dy, x * factor + dx);
      out.at(y, x) = acc * inv;
    }
  return out;
}

namespace {

void set_requires_grad(
    const std::vector<std::pair<std::string, TensorPtr>>& params, bool v) {
  for (const auto& [n, t] : params) {
    t->requires_grad = v;
    t->grad.clear();
  }
}

}  // namespace

TrainResult train_predictor(const Dataset& data, const TrainingConfig& cfg,
                            Predictor& net) {
  cfg.validate();
  if (data.size() == 0)
    throw std::invalid_argument("train_predictor: empty dataset");
  auto params = net.params();
  set_requires_grad(params, true);
  RmsProp opt(params, cfg.rmsprop_decay, cfg.clip, cfg.epsilon,
              cfg.clip_by_norm);
  LrSchedule sched{cfg.predictor_lr, cfg.lr_decay};
  Rng rng(cfg.seed * 3 + 11);
  std::vector<size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), size_t{0});

  TrainResult result;
  for (int epoch = 0; epoch < cfg.predictor_epochs; ++epoch) {
    rng.shuffle(idx);
    const double lr = sched.lr(epoch);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t bn =
          std::min(static_cast<size_t>(cfg.batch_size), idx.size() - start);
      for (size_t k = 0; k < bn; ++k) {
        const size_t i = idx[start + k];
        Tape tape;
        TensorPtr pred = net.forward(tape, tensor_from_frame(data.frames[i]));
        TensorPtr diff = sub(tape, pred, tensor_from_pose(data.poses[i]));
        TensorPtr l = sum_squares(tape, diff);
        epoch_loss += l->data[0];
        tape.backward(scale(tape, l, 1.0 / static_cast<double>(bn)));
      }
      for (const auto& [n, t] : params) apply_weight_decay(t, cfg.gamma);
      opt.step(lr);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  set_requires_grad(params, false);
  return result;
}

std::vector<std::vector<double>> train_synthesizer_layerwise(
    const Dataset& data, const TrainingConfig& cfg, Synthesizer& net) {
  cfg.validate();
  if (data.size() == 0)
    throw std::invalid_argument("train_synthesizer_layerwise: empty dataset");
  if (net.res < 16)
    throw std::invalid_argument(
        "layer-wise training needs at least one decoder stage (res >= 16)");
  Rng rng(cfg.seed * 3 + 23);
  std::vector<size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::vector<std::vector<double>> history;

  for (int stage = 0; stage <= net.stages; ++stage) {
    const int r = 8 << stage;
    const int factor = net.res / r;
    std::vector<TensorPtr> targets;
    targets.reserve(data.size());
    for (const auto& f : data.frames)
      targets.push_back(tensor_from_frame(box_downsample(f, factor)));

    // Fresh combining conv for this stage; the final one ships.
    TensorPtr cw = make_conv_param(1, 32, 5, rng);
    TensorPtr cb = Tensor::make({1});
    if (stage == net.stages) {
      net.combine_w = cw;
      net.combine_b = cb;
    }

    std::vector<std::pair<std::string, TensorPtr>> params;
    for (int i = 0; i < 4; ++i) {
      params.emplace_back("fc" + std::to_string(i + 1) + ".w", net.fc_w[i]);
      params.emplace_back("fc" + std::to_string(i + 1) + ".b", net.fc_b[i]);
    }
    for (int s = 0; s < stage; ++s) {
      params.emplace_back("stage" + std::to_string(s + 1) + ".w",
                          net.stage_w[s]);
      params.emplace_back("stage" + std::to_string(s + 1) + ".b",
                          net.stage_b[s]);
    }
    params.emplace_back("combine.w", cw);
    params.emplace_back("combine.b", cb);
    set_requires_grad(params, true);
    RmsProp opt(params, cfg.rmsprop_decay, cfg.clip, cfg.epsilon,
                cfg.clip_by_norm);
    LrSchedule sched{cfg.synth_lr, cfg.lr_decay};

    std::vector<double> stage_history;
    for (int epoch = 0; epoch < cfg.synth_epochs_per_stage; ++epoch) {
      rng.shuffle(idx);
      const double lr = sched.lr(epoch);
      double epoch_loss = 0.0;
      for (size_t start = 0; start < idx.size();
           start += static_cast<size_t>(cfg.batch_size)) {
        const size_t bn =
            std::min(static_cast<size_t>(cfg.batch_size), idx.size() - start);
        for (size_t k = 0; k < bn; ++k) {
          const size_t i = idx[start + k];
          Tape tape;
          TensorPtr out = net.forward_partial(
              tape, tensor_from_pose(data.poses[i]), stage, cw, cb);
          TensorPtr l = mse(tape, out, targets[i]);
          epoch_loss += l->data[0];
          tape.backward(scale(tape, l, 1.0 / static_cast<double>(bn)));
        }
        opt.step(lr);
      }
      stage_history.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    set_requires_grad(params, false);
    history.push_back(std::move(stage_history));
  }
  return history;
}

UpdaterTrainingSet build_updater_training_set(const Dataset& data,
                                              const Predictor& predictor,
                                              const TrainingConfig& cfg,
                                              Rng& rng) {
  UpdaterTrainingSet set;
  set.poses.resize(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    auto& entries = set.poses[i];
    entries.push_back(data.poses[i]);  // ground truth always present
    entries.push_back(predictor.predict(data.frames[i]));
    const size_t seeds = entries.size();
    for (size_t s = 0; s < seeds; ++s)
      for (int k = 0; k < cfg.copies; ++k)
        entries.push_back(perturb_pose(entries[s], cfg.sigma_noise, rng));
  }
  return set;
}

void self_augment(UpdaterTrainingSet& set, const Updater& updater,
                  const Synthesizer& synth,
                  const std::vector<DepthFrame>& frames,
                  std::vector<std::vector<DepthFrame>>* synth_cache) {
  if (set.poses.size() != frames.size())
    throw std::invalid_argument("self_augment: set/frames size mismatch");
  for (size_t i = 0; i < set.poses.size(); ++i) {
    auto& entries = set.poses[i];
    const size_t n = entries.size();
    for (size_t k = 0; k < n; ++k) {
      DepthFrame rendered;
      if (synth_cache && k < (*synth_cache)[i].size())
        rendered = (*synth_cache)[i][k];
      else
        rendered = synth.synthesize(entries[k]);
      const PoseVector delta = updater.update(frames[i], rendered);
      PoseVector p2 = entries[k];
      for (size_t c = 0; c < p2.size(); ++c) p2[c] += delta[c];
      if (synth_cache) {
        if (k >= (*synth_cache)[i].size())
          (*synth_cache)[i].push_back(rendered);
        (*synth_cache)[i].push_back(synth.synthesize(p2));
      }
      entries.push_back(std::move(p2));
    }
  }
}

PoseVector sample_error_distribution(const std::vector<PoseVector>& pool,
                                     Rng& rng) {
  if (pool.empty())
    throw std::invalid_argument("sample_error_distribution: empty pool");
  return pool[rng.index(pool.size())];
}

TrainResult train_updater(UpdaterTrainingSet& set, const Dataset& data,
                          const Synthesizer& synth, const TrainingConfig& cfg,
                          Updater& net) {
  cfg.validate();
  if (set.poses.size() != data.size())
    throw std::invalid_argument("train_updater: training set does not match dataset");
  // The synthesizer stays frozen: render only, no gradients through it.
  set_requires_grad(synth.params(), false);
  auto params = net.params();
  set_requires_grad(params, true);
  RmsProp opt(params, cfg.rmsprop_decay, cfg.clip, cfg.epsilon,
              cfg.clip_by_norm);
  LrSchedule sched{cfg.updater_lr, cfg.lr_decay};
  Rng rng(cfg.seed * 3 + 37);

  const size_t n = data.size();
  std::vector<std::vector<DepthFrame>> cache(n);
  std::vector<TensorPtr> frame_tensors(n);
  for (size_t i = 0; i < n; ++i) {
    frame_tensors[i] = tensor_from_frame(data.frames[i]);
    cache[i].reserve(set.poses[i].size());
    for (const auto& p : set.poses[i]) cache[i].push_back(synth.synthesize(p));
  }

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.updater_epochs; ++epoch) {
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < set.poses[i].size(); ++k)
        pairs.emplace_back(static_cast<uint32_t>(i), static_cast<uint32_t>(k));
    rng.shuffle(pairs);
    const double lr = sched.lr(epoch - 1);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < pairs.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t bn =
          std::min(static_cast<size_t>(cfg.batch_size), pairs.size() - start);
      for (size_t b = 0; b < bn; ++b) {
        const auto [i, k] = pairs[start + b];
        const PoseVector& seed = set.poses[i][k];
        const PoseVector& gt = data.poses[i];
        double dist0 = 0.0;
        for (size_t c = 0; c < gt.size(); ++c)
          dist0 += (seed[c] - gt[c]) * (seed[c] - gt[c]);
        dist0 = std::sqrt(dist0);

        Tape tape;
        TensorPtr delta = net.forward(tape, frame_tensors[i],
                                      tensor_from_frame(cache[i][k]));
        TensorPtr updated = add(tape, tensor_from_pose(seed), delta);
        TensorPtr dist1 =
            l2_norm(tape, sub(tape, updated, tensor_from_pose(gt)));
        TensorPtr term = relu(
            tape, sub(tape, dist1, Tensor::scalar(cfg.lambda * dist0)));
        epoch_loss += term->data[0];
        tape.backward(scale(tape, term, 1.0 / static_cast<double>(bn)));
      }
      opt.step(lr);
    }
    result.loss_history.push_back(epoch_loss /
                                  static_cast<double>(pairs.size()));

    if (cfg.self_augment_period > 0 && epoch % cfg.self_augment_period == 0) {
      self_augment(set, net, synth, data.frames, &cache);
      if (cfg.error_copies > 0) {
        std::vector<PoseVector> pool;
        for (size_t i = 0; i < n; ++i)
          for (const auto& p : set.poses[i]) {
            PoseVector r(p.size());
            for (size_t c = 0; c < p.size(); ++c) r[c] = p[c] - data.poses[i][c];
            pool.push_back(std::move(r));
          }
        for (size_t i = 0; i < n; ++i)
          for (int c = 0; c < cfg.error_copies; ++c) {
            PoseVector offset = sample_error_distribution(pool, rng);
            PoseVector p = data.poses[i];
            for (size_t j = 0; j < p.size(); ++j) p[j] += offset[j];
            cache[i].push_back(synth.synthesize(p));
            set.poses[i].push_back(std::move(p));
          }
      }
    }
  }
  set_requires_grad(params, false);
  return result;
}

void write_loss_csv(const std::vector<double>& history,
                    const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "epoch,loss\n";
  char buf[64];
  for (size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, history[i]);
    os << buf;
  }
}

}  // namespace hpe
