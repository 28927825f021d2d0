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
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hpe/eval.hpp"
#include "hpe/tensor.hpp"

using namespace hpe;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

PoseVector random_pose(int joints, uint64_t seed) {
  PoseVector p(3 * joints);
  Rng rng(seed);
  for (double& v : p) v = rng.uniform(-1, 1);
  return p;
}

// Minimal well-formedness scan: every tag closes, nesting balances.
bool tags_balance(const std::string& xml) {
  std::vector<std::string> stack;
  size_t i = 0;
  while ((i = xml.find('<', i)) != std::string::npos) {
    const size_t end = xml.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = xml.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.rfind("?", 0) == 0 || tag.rfind("!", 0) == 0) continue;
    if (tag.back() == '/') continue;  // self-closing
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
    }
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("identical poses give zero error at every joint") {
  const PoseVector p = random_pose(14, 1);
  CubeParams cube;
  const auto e = joint_errors_mm(p, p, cube);
  REQUIRE(e.size() == 14);
  for (double v : e) CHECK(v == 0.0);
}

TEST_CASE("a tenth of the cube half extent is fifteen millimeters") {
  CubeParams cube;  // half_extent 150
  PoseVector gt(42, 0.0), pred(42, 0.0);
  pred[0] = 0.1;  // x of joint 0
  const auto e = joint_errors_mm(pred, gt, cube);
  CHECK(e[0] == doctest::Approx(15.0).epsilon(1e-12));
  for (size_t j = 1; j < e.size(); ++j) CHECK(e[j] == 0.0);
}

TEST_CASE("joint count mismatches are rejected") {
  CubeParams cube;
  CHECK_THROWS_AS(joint_errors_mm(PoseVector(42, 0.0), PoseVector(39, 0.0),
                                  cube),
                  std::invalid_argument);
}

TEST_CASE("errors are invariant under a shared joint permutation") {
  CubeParams cube;
  const PoseVector pred = random_pose(14, 3);
  const PoseVector gt = random_pose(14, 4);
  const auto base = joint_errors_mm(pred, gt, cube);

  // Rotate the joint order by 5 in both poses.
  auto rotate = [](const PoseVector& p, int by) {
    PoseVector out(p.size());
    const int joints = static_cast<int>(p.size()) / 3;
    for (int j = 0; j < joints; ++j)
      for (int k = 0; k < 3; ++k)
        out[3 * j + k] = p[3 * ((j + by) % joints) + k];
    return out;
  };
  const auto rotated = joint_errors_mm(rotate(pred, 5), rotate(gt, 5), cube);
  for (int j = 0; j < 14; ++j)
    CHECK(rotated[j] == doctest::Approx(base[(j + 5) % 14]).epsilon(1e-12));
}

TEST_CASE("the curve counts frames below each max-error threshold") {
  const std::vector<std::vector<double>> one = {{10.0, 3.0, 7.0}};
  const Curve c = within_max_curve(one, {5.0, 15.0});
  REQUIRE(c.size() == 2);
  CHECK(c[0] == std::pair{5.0, 0.0});
  CHECK(c[1] == std::pair{15.0, 1.0});

  const std::vector<std::vector<double>> two = {{10.0}, {20.0}};
  const Curve h = within_max_curve(two, {15.0});
  CHECK(h[0].second == 0.5);
}

TEST_CASE("curves are non-decreasing and bounded") {
  std::vector<std::vector<double>> errors;
  Rng rng(5);
  for (int f = 0; f < 40; ++f) {
    std::vector<double> e(14);
    for (double& v : e) v = rng.uniform(0.0, 60.0);
    errors.push_back(std::move(e));
  }
  const Curve c = within_max_curve(errors, default_thresholds());
  REQUIRE(c.size() == 81);
  CHECK(c.front().second == 0.0);  // strict comparison at threshold 0
  CHECK(c.back().second == 1.0);   // 80 mm exceeds every error above
  for (size_t i = 1; i < c.size(); ++i) {
    CHECK(c[i].second >= c[i - 1].second);
    CHECK(c[i].second >= 0.0);
    CHECK(c[i].second <= 1.0);
  }
}

TEST_CASE("empty inputs to the curve are rejected") {
  CHECK_THROWS_AS(within_max_curve({{1.0}}, {}), std::invalid_argument);
  CHECK_THROWS_AS(within_max_curve({}, {5.0}), std::invalid_argument);
}

TEST_CASE("default thresholds run from zero to eighty millimeters") {
  const auto t = default_thresholds();
  REQUIRE(t.size() == 81);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 80.0);
  for (size_t i = 1; i < t.size(); ++i)
    CHECK(t[i] - t[i - 1] == doctest::Approx(1.0));
}

TEST_CASE("the mean error matches a direct fold over all pairs") {
  CubeParams cube;
  std::vector<PoseVector> pred, gt;
  for (int f = 0; f < 7; ++f) {
    pred.push_back(random_pose(14, 100 + f));
    gt.push_back(random_pose(14, 200 + f));
  }
  const MetricReport rep = make_report(pred, gt, cube, default_thresholds());

  double sum = 0.0;
  size_t n = 0;
  for (int f = 0; f < 7; ++f) {
    const auto e = joint_errors_mm(pred[f], gt[f], cube);
    for (double v : e) {
      sum += v;
      ++n;
    }
  }
  CHECK(rep.mean_error_mm == doctest::Approx(sum / n).epsilon(1e-12));
  CHECK(mean_joint_error_mm(rep.errors_mm) ==
        doctest::Approx(sum / n).epsilon(1e-12));
  REQUIRE(rep.errors_mm.size() == 7);
  CHECK(rep.curve.size() == 81);
}

TEST_CASE("metric and curve files are byte-deterministic") {
  CubeParams cube;
  std::vector<PoseVector> pred = {random_pose(14, 11)};
  std::vector<PoseVector> gt = {random_pose(14, 12)};
  MetricReport rep = make_report(pred, gt, cube, default_thresholds());
  rep.metadata["dataset"] = "sample.hpds";

  const std::vector<NamedCurve> curves = {{"loop", rep.curve}};
  for (const char* pass : {"a", "b"}) {
    emit_csv(rep, std::string("eval_metrics_") + pass + ".csv");
    emit_curve_csv(curves, std::string("eval_curve_") + pass + ".csv");
    emit_svg(curves, std::string("eval_curve_") + pass + ".svg");
  }
  CHECK(slurp("eval_metrics_a.csv") == slurp("eval_metrics_b.csv"));
  CHECK(slurp("eval_curve_a.csv") == slurp("eval_curve_b.csv"));
  CHECK(slurp("eval_curve_a.svg") == slurp("eval_curve_b.svg"));
  for (const char* f :
       {"eval_metrics_a.csv", "eval_metrics_b.csv", "eval_curve_a.csv",
        "eval_curve_b.csv", "eval_curve_a.svg", "eval_curve_b.svg"})
    std::remove(f);
}

TEST_CASE("the curve file holds one row per threshold plus a header") {
  const std::vector<NamedCurve> curves = {
      {"init", {{0.0, 0.0}, {40.0, 0.5}, {80.0, 1.0}}},
      {"loop", {{0.0, 0.0}, {40.0, 0.75}, {80.0, 1.0}}}};
  const std::string path = "eval_rows.csv";
  emit_curve_csv(curves, path);
  std::ifstream is(path);
  std::string line;
  size_t rows = 0;
  std::getline(is, line);
  CHECK(line.rfind("threshold_mm", 0) == 0);
  CHECK(line.find("init") != std::string::npos);
  CHECK(line.find("loop") != std::string::npos);
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::remove(path.c_str());
}

TEST_CASE("the plot file is well-formed XML") {
  const std::vector<NamedCurve> curves = {
      {"init", {{0.0, 0.0}, {40.0, 0.5}, {80.0, 1.0}}},
      {"baseline", {{0.0, 0.0}, {40.0, 0.25}, {80.0, 0.9}}}};
  const std::string path = "eval_plot.svg";
  emit_svg(curves, path);
  const std::string svg = slurp(path);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("init") != std::string::npos);
  CHECK(svg.find("baseline") != std::string::npos);
  CHECK(tags_balance(svg));
  std::remove(path.c_str());
}

TEST_CASE("unwritable paths are reported") {
  const std::vector<NamedCurve> curves = {{"x", {{0.0, 0.0}}}};
  CHECK_THROWS_AS(emit_svg(curves, "no_such_dir/plot.svg"),
                  std::runtime_error);
  MetricReport rep;
  CHECK_THROWS_AS(emit_csv(rep, "no_such_dir/metrics.csv"),
                  std::runtime_error);
}
