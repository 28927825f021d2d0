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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hpe/feedback.hpp"
#include "hpe/networks.hpp"
#include "hpe/tensor.hpp"

using namespace hpe;

namespace {

constexpr int kJ = 14;

struct Nets {
  Predictor pred;
  Synthesizer synth;
  Updater upd;
};

Nets build_nets(int res, uint64_t seed) {
  Rng rng(seed);
  return {Predictor::build(res, kJ, rng), Synthesizer::build(res, kJ, rng),
          Updater::build(res, kJ, rng)};
}

DepthFrame random_frame(int res, uint64_t seed) {
  DepthFrame f(res);
  Rng rng(seed);
  for (double& v : f.v) v = rng.uniform(-1, 1);
  return f;
}

}  // namespace

TEST_CASE("initial prediction is deterministic with 3 coordinates per joint") {
  const Nets n = build_nets(64, 1);
  const DepthFrame f = random_frame(64, 2);
  const PoseVector a = predict_initial(n.pred, f);
  const PoseVector b = predict_initial(n.pred, f);
  CHECK(a == b);
  CHECK(a.size() == 42);
}

TEST_CASE("initial prediction rejects mismatched resolutions") {
  const Nets n = build_nets(64, 3);
  CHECK_THROWS_AS(predict_initial(n.pred, random_frame(32, 4)), ShapeError);
}

TEST_CASE("synthesis is deterministic and square") {
  const Nets n = build_nets(64, 5);
  PoseVector pose(42);
  Rng rng(6);
  for (double& v : pose) v = rng.uniform(-1, 1);
  const DepthFrame a = synthesize(n.synth, pose);
  const DepthFrame b = synthesize(n.synth, pose);
  CHECK(a.v == b.v);
  CHECK(a.res == 64);
  for (double v : a.v) CHECK(std::isfinite(v));
}

TEST_CASE("a zeroed corrector makes update steps the identity") {
  Nets n = build_nets(64, 7);
  for (double& v : n.upd.out_w->data) v = 0.0;
  for (double& v : n.upd.out_b->data) v = 0.0;
  const DepthFrame f = random_frame(64, 8);
  const PoseVector pose(42, 0.1);
  CHECK(update_step(n.upd, n.synth, f, pose) == pose);
}

TEST_CASE("zero loop iterations return the prediction unchanged") {
  const Nets n = build_nets(64, 9);
  const DepthFrame f = random_frame(64, 10);
  LoopConfig cfg;
  cfg.iterations = 0;
  const LoopResult r = run_feedback_loop(n.pred, n.synth, n.upd, f, cfg);
  CHECK(r.final_pose == predict_initial(n.pred, f));
  CHECK(r.trace.size() == 1);
}

TEST_CASE("the loop trace holds one pose per iteration plus the start") {
  const Nets n = build_nets(64, 11);
  const DepthFrame f = random_frame(64, 12);
  for (int iters : {0, 1, 3}) {
    LoopConfig cfg;
    cfg.iterations = iters;
    const LoopResult r = run_feedback_loop(n.pred, n.synth, n.upd, f, cfg);
    CHECK(r.trace.size() == static_cast<size_t>(iters) + 1);
    CHECK(r.trace.back() == r.final_pose);
  }
}

TEST_CASE("the loop composes exactly from its three building blocks") {
  const Nets n = build_nets(64, 13);
  const DepthFrame f = random_frame(64, 14);
  LoopConfig cfg;
  cfg.iterations = 2;
  const LoopResult r = run_feedback_loop(n.pred, n.synth, n.upd, f, cfg);
  PoseVector p = predict_initial(n.pred, f);
  CHECK(r.trace[0] == p);
  p = update_step(n.upd, n.synth, f, p);
  CHECK(r.trace[1] == p);
  p = update_step(n.upd, n.synth, f, p);
  CHECK(r.trace[2] == p);
  CHECK(r.final_pose == p);
}

TEST_CASE("negative iteration counts are rejected") {
  const Nets n = build_nets(64, 15);
  LoopConfig cfg;
  cfg.iterations = -1;
  CHECK_THROWS_AS(
      run_feedback_loop(n.pred, n.synth, n.upd, random_frame(64, 16), cfg),
      std::invalid_argument);
}

TEST_CASE("disagreeing network resolutions are rejected") {
  Rng rng(17);
  Predictor pred = Predictor::build(64, kJ, rng);
  Synthesizer synth = Synthesizer::build(32, kJ, rng);
  Updater upd = Updater::build(64, kJ, rng);
  CHECK_THROWS_WITH_AS(
      run_feedback_loop(pred, synth, upd, random_frame(64, 18), {}),
      doctest::Contains("disagree"), ShapeError);
}

TEST_CASE("the batched loop matches the per-frame loop") {
  const Nets n = build_nets(64, 19);
  std::vector<DepthFrame> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(random_frame(64, 20 + i));
  LoopConfig cfg;
  cfg.iterations = 2;
  const auto batched =
      run_feedback_loop_batch(n.pred, n.synth, n.upd, frames, cfg);
  REQUIRE(batched.size() == frames.size());
  for (size_t i = 0; i < frames.size(); ++i) {
    const LoopResult single =
        run_feedback_loop(n.pred, n.synth, n.upd, frames[i], cfg);
    REQUIRE(batched[i].trace.size() == single.trace.size());
    for (size_t t = 0; t < single.trace.size(); ++t)
      for (size_t k = 0; k < single.trace[t].size(); ++k)
        CHECK(std::abs(batched[i].trace[t][k] - single.trace[t][k]) <= 1e-12);
  }
}

TEST_CASE("baseline objective traces never increase") {
  Rng brng(25);
  const Synthesizer synth = Synthesizer::build(32, kJ, brng);
  PoseVector init(42);
  Rng rng(26);
  for (double& v : init) v = rng.uniform(-0.5, 0.5);
  BaselineConfig cfg;
  cfg.max_iterations = 20;
  const BaselineResult r =
      baseline_optimize(synth, random_frame(32, 27), init, cfg);
  REQUIRE(r.objective_trace.size() >= 1);
  for (size_t i = 1; i < r.objective_trace.size(); ++i)
    CHECK(r.objective_trace[i] <= r.objective_trace[i - 1]);
}

TEST_CASE("baseline iterates respect the coordinate box") {
  Rng brng(29);
  const Synthesizer synth = Synthesizer::build(32, kJ, brng);
  PoseVector init(42);
  Rng rng(30);
  for (double& v : init) v = rng.uniform(-1.0, 1.0);
  BaselineConfig cfg;
  cfg.max_iterations = 30;
  cfg.initial_step = 1.0;  // large steps so the projection must engage
  const BaselineResult r =
      baseline_optimize(synth, random_frame(32, 31), init, cfg);
  for (double c : r.final_pose) {
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("a zero-gradient start returns unchanged") {
  // A decoder whose combining conv is zero emits a constant image for every
  // pose, so the objective gradient vanishes everywhere.
  Rng brng(33);
  Synthesizer synth = Synthesizer::build(32, kJ, brng);
  for (double& v : synth.combine_w->data) v = 0.0;
  for (double& v : synth.combine_b->data) v = 0.0;
  const PoseVector init(42, 0.25);
  const BaselineResult r =
      baseline_optimize(synth, random_frame(32, 34), init, {});
  CHECK(r.final_pose == init);
}

TEST_CASE("baseline rejects starts outside the box") {
  Rng brng(35);
  const Synthesizer synth = Synthesizer::build(32, kJ, brng);
  PoseVector init(42, 0.0);
  init[5] = 1.5;
  CHECK_THROWS_WITH_AS(
      baseline_optimize(synth, random_frame(32, 36), init, {}),
      doctest::Contains("box"), std::invalid_argument);
}

TEST_CASE("bad baseline configs are rejected") {
  BaselineConfig cfg;
  cfg.shrink = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.initial_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.max_iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.validate();  // defaults are valid
}
