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

#ifndef HPE_EVAL_HPP
#define HPE_EVAL_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hpe/synthdata.hpp"

namespace hpe {

/// (threshold mm, fraction of frames with every joint error below it).
using Curve = std::vector<std::pair<double, double>>;

struct NamedCurve {
  std::string name;
  Curve curve;
};

struct MetricReport {
  std::vector<std::vector<double>> errors_mm;  // per frame, per joint
  double mean_error_mm = 0.0;                  // over all (frame, joint) pairs
  Curve curve;
  std::map<std::string, std::string> metadata;
};

/// Per-joint Euclidean distance, normalized units scaled by cube.half_extent.
std::vector<double> joint_errors_mm(const PoseVector& predicted,
                                    const PoseVector& ground_truth,
                                    const CubeParams& cube);

/// Fraction of frames whose maximum per-joint error is strictly below each
/// threshold. Thresholds must be non-empty; errors must cover >= 1 frame.
Curve within_max_curve(const std::vector<std::vector<double>>& errors_mm,
                       const std::vector<double>& thresholds);

/// 0, 1, 2, ..., 80 mm.
std::vector<double> default_thresholds();

/// Mean over all (frame, joint) pairs.
double mean_joint_error_mm(const std::vector<std::vector<double>>& errors_mm);

MetricReport make_report(const std::vector<PoseVector>& predicted,
                         const std::vector<PoseVector>& ground_truth,
                         const CubeParams& cube,
                         const std::vector<double>& thresholds);

/// metrics.csv: metadata lines, mean error, then frame_index,joint_index,
/// error_mm rows. Byte-deterministic given the same report.
void emit_csv(const MetricReport& report, const std::string& path);

/// threshold_mm followed by one fraction column per curve.
void emit_curve_csv(const std::vector<NamedCurve>& curves,
                    const std::string& path);

/// Standalone axis-labeled line plot, one polyline per curve. Well-formed
/// XML and byte-deterministic given identical inputs.
void emit_svg(const std::vector<NamedCurve>& curves, const std::string& path);

}  // namespace hpe

#endif  // HPE_EVAL_HPP
