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

#ifndef HPE_FEEDBACK_HPP
#define HPE_FEEDBACK_HPP

#include <vector>

#include "hpe/networks.hpp"

namespace hpe {

struct LoopConfig {
  int iterations = 2;

  void validate() const;
};

/// Box-constrained descent on the image residual. Every iterate stays inside
/// the per-coordinate box [-1, 1].
struct BaselineConfig {
  int max_iterations = 50;
  double initial_step = 0.1;
  double shrink = 0.5;             // backtracking factor, in (0, 1)
  double sufficient_decrease = 1e-4;
  double tolerance = 1e-8;         // stop when the objective drop falls below

  void validate() const;
};

/// One predictor forward pass. Rejects frames whose resolution does not match
/// the trained model.
PoseVector predict_initial(const Predictor& predictor, const DepthFrame& frame);

/// One synthesizer forward pass; finite output for any pose, feasible or not.
DepthFrame synthesize(const Synthesizer& synth, const PoseVector& pose);

/// pose + upd(frame, synth(pose)); one synthesizer and one updater pass.
PoseVector update_step(const Updater& updater, const Synthesizer& synth,
                       const DepthFrame& frame, const PoseVector& pose);

struct LoopResult {
  PoseVector final_pose;
  std::vector<PoseVector> trace;  // iterations + 1 entries, entry 0 = initial
};

LoopResult run_feedback_loop(const Predictor& predictor,
                             const Synthesizer& synth, const Updater& updater,
                             const DepthFrame& frame, const LoopConfig& cfg);

/// Runs the loop for several frames in lockstep through the networks'
/// batched forwards. Matches run_feedback_loop per frame up to rounding.
std::vector<LoopResult> run_feedback_loop_batch(
    const Predictor& predictor, const Synthesizer& synth,
    const Updater& updater, const std::vector<DepthFrame>& frames,
    const LoopConfig& cfg);

struct BaselineResult {
  PoseVector final_pose;
  std::vector<double> objective_trace;  // non-increasing, entry 0 = initial
};

/// Projected gradient descent with backtracking line search on
/// ||frame - synth(p)||^2, gradients through the synthesizer.
BaselineResult baseline_optimize(const Synthesizer& synth,
                                 const DepthFrame& frame,
                                 const PoseVector& initial,
                                 const BaselineConfig& cfg);

}  // namespace hpe

#endif  // HPE_FEEDBACK_HPP
