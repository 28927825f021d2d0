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

#include "hpe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace hpe {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);  // binary: byte-stable newlines
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  return os;
}

}  // namespace

std::vector<double> joint_errors_mm(const PoseVector& predicted,
                                    const PoseVector& ground_truth,
                                    const CubeParams& cube) {
  if (predicted.size() != ground_truth.size() || predicted.size() % 3 != 0)
    throw std::invalid_argument("joint count mismatch: " +
                                std::to_string(predicted.size()) + " vs " +
                                std::to_string(ground_truth.size()));
  const size_t joints = predicted.size() / 3;
  std::vector<double> errs(joints);
  for (size_t j = 0; j < joints; ++j) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = predicted[3 * j + c] - ground_truth[3 * j + c];
      acc += d * d;
    }
    errs[j] = std::sqrt(acc) * cube.half_extent;
  }
  return errs;
}

Curve within_max_curve(const std::vector<std::vector<double>>& errors_mm,
                       const std::vector<double>& thresholds) {
  if (errors_mm.empty())
    throw std::invalid_argument("within_max_curve: no frames");
  if (thresholds.empty())
    throw std::invalid_argument("within_max_curve: empty threshold list");
  std::vector<double> max_err;
  max_err.reserve(errors_mm.size());
  for (const auto& frame : errors_mm) {
    if (frame.empty())
      throw std::invalid_argument("within_max_curve: frame without joints");
    max_err.push_back(*std::max_element(frame.begin(), frame.end()));
  }
  Curve curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    size_t n = 0;
    for (double e : max_err)
      if (e < t) ++n;
    curve.emplace_back(t, static_cast<double>(n) /
                              static_cast<double>(max_err.size()));
  }
  return curve;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int mm = 0; mm <= 80; ++mm) t.push_back(mm);
  return t;
}

double mean_joint_error_mm(const std::vector<std::vector<double>>& errors_mm) {
  double acc = 0.0;
  size_t n = 0;
  for (const auto& frame : errors_mm) {
    for (double e : frame) acc += e;
    n += frame.size();
  }
  if (n == 0) throw std::invalid_argument("mean_joint_error_mm: no errors");
  return acc / static_cast<double>(n);
}

MetricReport make_report(const std::vector<PoseVector>& predicted,
                         const std::vector<PoseVector>& ground_truth,
                         const CubeParams& cube,
                         const std::vector<double>& thresholds) {
  if (predicted.size() != ground_truth.size())
    throw std::invalid_argument("make_report: frame count mismatch");
  MetricReport r;
  r.errors_mm.reserve(predicted.size());
  for (size_t i = 0; i < predicted.size(); ++i)
    r.errors_mm.push_back(joint_errors_mm(predicted[i], ground_truth[i], cube));
  r.mean_error_mm = mean_joint_error_mm(r.errors_mm);
  r.curve = within_max_curve(r.errors_mm, thresholds);
  return r;
}

void emit_csv(const MetricReport& report, const std::string& path) {
  auto os = open_out(path);
  for (const auto& [k, v] : report.metadata)
    os << "# " << k << "=" << v << "\n";
  os << "# mean_error_mm=" << fmt("%.17g", report.mean_error_mm) << "\n";
  os << "frame_index,joint_index,error_mm\n";
  for (size_t i = 0; i < report.errors_mm.size(); ++i)
    for (size_t j = 0; j < report.errors_mm[i].size(); ++j)
      os << i << "," << j << "," << fmt("%.17g", report.errors_mm[i][j])
         << "\n";
}

void emit_curve_csv(const std::vector<NamedCurve>& curves,
                    const std::string& path) {
  if (curves.empty())
    throw std::invalid_argument("emit_curve_csv: no curves");
  const size_t rows = curves[0].curve.size();
  for (const auto& c : curves)
    if (c.curve.size() != rows)
      throw std::invalid_argument("emit_curve_csv: curve lengths differ");
  auto os = open_out(path);
  os << "threshold_mm";
  for (const auto& c : curves) os << "," << c.name;
  os << "\n";
  for (size_t i = 0; i < rows; ++i) {
    os << fmt("%g", curves[0].curve[i].first);
    for (const auto& c : curves) os << "," << fmt("%.6f", c.curve[i].second);
    os << "\n";
  }
}

namespace {

constexpr int kW = 640, kH = 480;
constexpr int kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;
constexpr const char* kColors[] = {"#1f6fb2", "#c0392b", "#27ae60",
                                   "#8e44ad", "#d68910", "#16a085"};

}  // namespace

void emit_svg(const std::vector<NamedCurve>& curves, const std::string& path) {
  if (curves.empty()) throw std::invalid_argument("emit_svg: no curves");
  double tmax = 0.0;
  for (const auto& c : curves)
    for (const auto& [t, f] : c.curve) tmax = std::max(tmax, t);
  if (tmax <= 0.0) tmax = 1.0;

  const double px = kW - kLeft - kRight;
  const double py = kH - kTop - kBottom;
  auto sx = [&](double t) { return kLeft + t / tmax * px; };
  auto sy = [&](double f) { return kTop + (1.0 - f) * py; };

  auto os = open_out(path);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
     << "\">\n"
     << "<rect width=\"" << kW << "\" height=\"" << kH
     << "\" fill=\"white\"/>\n";
  // axes
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + py << "\" x2=\""
     << kLeft + px << "\" y2=\"" << kTop + py
     << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kTop + py
     << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  // y ticks every 0.2
  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt("%.2f", sy(f))
       << "\" x2=\"" << kLeft << "\" y2=\"" << fmt("%.2f", sy(f))
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << kLeft - 10 << "\" y=\"" << fmt("%.2f", sy(f) + 4)
       << "\" font-size=\"12\" text-anchor=\"end\">" << fmt("%.1f", f)
       << "</text>\n";
  }
  // x ticks at quarters
  for (int i = 0; i <= 4; ++i) {
    const double t = tmax * i / 4.0;
    os << "<line x1=\"" << fmt("%.2f", sx(t)) << "\" y1=\"" << kTop + py
       << "\" x2=\"" << fmt("%.2f", sx(t)) << "\" y2=\"" << kTop + py + 5
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << fmt("%.2f", sx(t)) << "\" y=\"" << kTop + py + 20
       << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt("%g", t)
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft + px / 2 << "\" y=\"" << kH - 12
     << "\" font-size=\"14\" text-anchor=\"middle\">"
     << "max joint error threshold (mm)</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + py / 2
     << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << kTop + py / 2 << ")\">fraction of frames</text>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = kColors[ci % (sizeof(kColors) / sizeof(kColors[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < curves[ci].curve.size(); ++i) {
      const auto& [t, f] = curves[ci].curve[i];
      if (i) os << " ";
      os << fmt("%.2f", sx(t)) << "," << fmt("%.2f", sy(f));
    }
    os << "\"/>\n";
    const double ly = kTop + 16 + 18.0 * static_cast<double>(ci);
    os << "<line x1=\"" << kLeft + px - 150 << "\" y1=\"" << fmt("%.2f", ly)
       << "\" x2=\"" << kLeft + px - 120 << "\" y2=\"" << fmt("%.2f", ly)
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << kLeft + px - 114 << "\" y=\"" << fmt("%.2f", ly + 4)
       << "\" font-size=\"12\">" << curves[ci].name << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace hpe
