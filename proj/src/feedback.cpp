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

#include "hpe/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hpe {

void LoopConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
}

void BaselineConfig::validate() const {
  if (max_iterations < 0)
    throw std::invalid_argument("max_iterations must be >= 0");
  if (shrink <= 0.0 || shrink >= 1.0)
    throw std::invalid_argument("shrink must be in (0, 1)");
  if (initial_step <= 0.0)
    throw std::invalid_argument("initial_step must be positive");
  if (sufficient_decrease <= 0.0 || tolerance < 0.0)
    throw std::invalid_argument("bad line-search parameters");
}

PoseVector predict_initial(const Predictor& predictor,
                           const DepthFrame& frame) {
  if (frame.res != predictor.res)
    throw ShapeError("frame resolution " + std::to_string(frame.res) +
                     " does not match the predictor's " +
                     std::to_string(predictor.res));
  return predictor.predict(frame);
}

DepthFrame synthesize(const Synthesizer& synth, const PoseVector& pose) {
  return synth.synthesize(pose);
}

PoseVector update_step(const Updater& updater, const Synthesizer& synth,
                       const DepthFrame& frame, const PoseVector& pose) {
  const PoseVector delta = updater.update(frame, synth.synthesize(pose));
  PoseVector out = pose;
  for (size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
  return out;
}

LoopResult run_feedback_loop(const Predictor& predictor,
                             const Synthesizer& synth, const Updater& updater,
                             const DepthFrame& frame, const LoopConfig& cfg) {
  cfg.validate();
  if (predictor.res != synth.res || predictor.res != updater.res)
    throw ShapeError("network resolutions disagree: predictor " +
                     std::to_string(predictor.res) + ", synthesizer " +
                     std::to_string(synth.res) + ", updater " +
                     std::to_string(updater.res));
  LoopResult r;
  r.trace.push_back(predict_initial(predictor, frame));
  for (int i = 0; i < cfg.iterations; ++i)
    r.trace.push_back(update_step(updater, synth, frame, r.trace.back()));
  r.final_pose = r.trace.back();
  return r;
}

std::vector<LoopResult> run_feedback_loop_batch(
    const Predictor& predictor, const Synthesizer& synth,
    const Updater& updater, const std::vector<DepthFrame>& frames,
    const LoopConfig& cfg) {
  cfg.validate();
  if (predictor.res != synth.res || predictor.res != updater.res)
    throw ShapeError("network resolutions disagree: predictor " +
                     std::to_string(predictor.res) + ", synthesizer " +
                     std::to_string(synth.res) + ", updater " +
                     std::to_string(updater.res));
  for (const DepthFrame& f : frames)
    if (f.res != predictor.res)
      throw ShapeError("frame resolution " + std::to_string(f.res) +
                       " does not match the predictor's " +
                       std::to_string(predictor.res));
  std::vector<LoopResult> results(frames.size());
  if (frames.empty()) return results;
  std::vector<PoseVector> poses = predictor.predict_batch(frames);
  for (size_t i = 0; i < frames.size(); ++i)
    results[i].trace.push_back(poses[i]);
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<DepthFrame> rendered = synth.synthesize_batch(poses);
    const std::vector<PoseVector> deltas =
        updater.update_batch(frames, rendered);
    for (size_t i = 0; i < frames.size(); ++i) {
      for (size_t k = 0; k < poses[i].size(); ++k) poses[i][k] += deltas[i][k];
      results[i].trace.push_back(poses[i]);
    }
  }
  for (size_t i = 0; i < frames.size(); ++i)
    results[i].final_pose = results[i].trace.back();
  return results;
}

namespace {

// Objective and, when grad is non-null, its gradient at p.
double residual_objective(const Synthesizer& synth, const TensorPtr& target,
                          const PoseVector& p, std::vector<double>* grad) {
  Tape tape = grad ? Tape() : Tape::inference();
  TensorPtr pose = tensor_from_pose(p);
  pose->requires_grad = grad != nullptr;
  TensorPtr out = synth.forward(tape, pose);
  TensorPtr loss = sum_squares(tape, sub(tape, target, out));
  const double value = loss->data[0];
  if (grad) {
    tape.backward(loss);
    *grad = pose->grad;
  }
  return value;
}

}  // namespace

BaselineResult baseline_optimize(const Synthesizer& synth,
                                 const DepthFrame& frame,
                                 const PoseVector& initial,
                                 const BaselineConfig& cfg) {
  cfg.validate();
  for (double c : initial)
    if (c < -1.0 || c > 1.0)
      throw std::invalid_argument("initial pose outside the [-1, 1] box");
  const TensorPtr target = tensor_from_frame(frame);
  // Synthesizer parameters are treated as constants here.
  for (const auto& [name, t] : synth.params()) t->requires_grad = false;

  BaselineResult r;
  PoseVector p = initial;
  std::vector<double> grad;
  double f = residual_objective(synth, target, p, &grad);
  r.objective_trace.push_back(f);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    double step = cfg.initial_step;
    PoseVector cand(p.size());
    bool accepted = false;
    // Shrink the step until the projected move gives sufficient decrease.
    while (step > 1e-14) {
      for (size_t i = 0; i < p.size(); ++i)
        cand[i] = std::clamp(p[i] - step * grad[i], -1.0, 1.0);
      double move_dot = 0.0;
      for (size_t i = 0; i < p.size(); ++i)
        move_dot += grad[i] * (p[i] - cand[i]);
      const double f_cand = residual_objective(synth, target, cand, nullptr);
      if (f_cand <= f - cfg.sufficient_decrease * move_dot &&
          f_cand <= f) {
        const double drop = f - f_cand;
        p = cand;
        f = f_cand;
        accepted = true;
        r.objective_trace.push_back(f);
        if (drop < cfg.tolerance) {
          r.final_pose = p;
          return r;
        }
        break;
      }
      step *= cfg.shrink;
    }
    if (!accepted) break;  // no descent direction within the box
    residual_objective(synth, target, p, &grad);
  }
  r.final_pose = p;
  return r;
}

}  // namespace hpe
