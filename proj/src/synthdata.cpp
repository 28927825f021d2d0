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

#include "hpe/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>

namespace hpe {

namespace {

constexpr double kDeg = M_PI / 180.0;

Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(dot(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

struct Mat3 {
  std::array<Vec3, 3> row;
  Vec3 apply(const Vec3& v) const {
    return {dot(row[0], v), dot(row[1], v), dot(row[2], v)};
  }
};

Mat3 rotation_xyz(double rx, double ry, double rz) {
  const double cx = std::cos(rx), sx = std::sin(rx);
  const double cy = std::cos(ry), sy = std::sin(ry);
  const double cz = std::cos(rz), sz = std::sin(rz);
  // R = Rz * Ry * Rx
  Mat3 m;
  m.row[0] = {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx};
  m.row[1] = {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx};
  m.row[2] = {-sy, cy * sx, cy * cx};
  return m;
}

// Direction of a finger segment flexed by `flex` toward the camera and
// abducted by `ab` about the palm normal; canonical direction is +y.
Vec3 segment_dir(double flex, double ab) {
  const double cf = std::cos(flex), sf = std::sin(flex);
  return {-cf * std::sin(ab), cf * std::cos(ab), -sf};
}

Vec3 thumb_segment_dir(const Vec3& planar, double flex) {
  const double cf = std::cos(flex), sf = std::sin(flex);
  return {planar[0] * cf, planar[1] * cf, -sf};
}

}  // namespace

HandSkeleton::HandSkeleton() {
  const double g = 60.0 * kDeg;
  angle_min = {};
  angle_max = {};
  for (int i = 0; i < 3; ++i) {
    angle_min[i] = -g;
    angle_max[i] = g;
  }
  for (int f = 0; f < 4; ++f) {
    const int b = 3 + 3 * f;
    angle_min[b] = -10.0 * kDeg;   // mcp flexion
    angle_max[b] = 80.0 * kDeg;
    angle_min[b + 1] = 0.0;        // pip flexion
    angle_max[b + 1] = 90.0 * kDeg;
    angle_min[b + 2] = -8.0 * kDeg;  // abduction
    angle_max[b + 2] = 8.0 * kDeg;
  }
  angle_min[15] = -20.0 * kDeg;  // thumb swing
  angle_max[15] = 60.0 * kDeg;
  angle_min[16] = -10.0 * kDeg;  // thumb mcp
  angle_max[16] = 60.0 * kDeg;
  angle_min[17] = 0.0;           // thumb ip
  angle_max[17] = 80.0 * kDeg;
}

std::array<Vec3, HandSkeleton::kJoints> forward_kinematics(
    const std::array<double, HandSkeleton::kAngles>& angles,
    const HandSkeleton& skel, const CubeParams& cube) {
  std::array<Vec3, HandSkeleton::kJoints> j;
  j[HandSkeleton::kWristA] = skel.wrist_a;
  j[HandSkeleton::kWristB] = skel.wrist_b;
  j[HandSkeleton::kPalm] = {0.0, 0.0, 0.0};

  const Vec3 td = normalized(skel.thumb_dir);
  const double sw = angles[15];
  const Vec3 ta = {td[0] * std::cos(sw) - td[1] * std::sin(sw),
                   td[0] * std::sin(sw) + td[1] * std::cos(sw), 0.0};
  const Vec3 root = skel.thumb_base + skel.thumb_root_len * ta;
  const Vec3 tmid =
      root + skel.thumb_mid_len * thumb_segment_dir(ta, angles[16]);
  const Vec3 ttip = tmid + skel.thumb_tip_len *
                               thumb_segment_dir(ta, angles[16] + angles[17]);
  j[HandSkeleton::kThumbRoot] = root;
  j[HandSkeleton::kThumbMid] = tmid;
  j[HandSkeleton::kThumbTip] = ttip;

  for (int f = 0; f < 4; ++f) {
    const double mcp = angles[3 + 3 * f];
    const double pip = angles[3 + 3 * f + 1];
    const double ab = angles[3 + 3 * f + 2];
    const Vec3 mid =
        skel.finger_base[f] + skel.finger_proximal[f] * segment_dir(mcp, ab);
    const Vec3 tip = mid + skel.finger_distal[f] * segment_dir(mcp + pip, ab);
    j[HandSkeleton::kIndexMid + 2 * f] = mid;
    j[HandSkeleton::kIndexTip + 2 * f] = tip;
  }

  const Mat3 rot = rotation_xyz(angles[0], angles[1], angles[2]);
  for (auto& p : j) p = rot.apply(p) + cube.center;
  return j;
}

PoseVector normalize_joints(const std::array<Vec3, HandSkeleton::kJoints>& js,
                            const CubeParams& cube) {
  PoseVector p;
  p.reserve(3 * js.size());
  for (const auto& jt : js)
    for (int k = 0; k < 3; ++k)
      p.push_back((jt[k] - cube.center[k]) / cube.half_extent);
  return p;
}

SampledPose sample_pose(const HandSkeleton& skel, const CubeParams& cube,
                        Rng& rng) {
  SampledPose s;
  for (int i = 0; i < HandSkeleton::kAngles; ++i)
    s.angles[i] = rng.uniform(skel.angle_min[i], skel.angle_max[i]);
  s.pose = normalize_joints(forward_kinematics(s.angles, skel, cube), cube);
  return s;
}

HandGeometry build_geometry(
    const std::array<double, HandSkeleton::kAngles>& angles,
    const HandSkeleton& skel, const CubeParams& cube) {
  const auto j = forward_kinematics(angles, skel, cube);
  const Mat3 rot = rotation_xyz(angles[0], angles[1], angles[2]);
  auto world = [&](const Vec3& canonical) {
    return rot.apply(canonical) + cube.center;
  };

  HandGeometry g;
  Ellipsoid palm;
  palm.center = world({0.0, 0.0, 0.0});
  palm.axes = skel.palm_axes;
  // Canonical axis directions in world coordinates (columns of the rotation).
  for (int k = 0; k < 3; ++k)
    palm.rot[k] = rot.apply(Vec3{k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0,
                                 k == 2 ? 1.0 : 0.0});
  g.ellipsoids.push_back(palm);

  auto cap = [&g](const Vec3& a, const Vec3& b, double r) {
    g.capsules.push_back({a, b, r});
  };
  cap(j[HandSkeleton::kWristA], j[HandSkeleton::kWristB], skel.wrist_radius);
  cap(0.5 * (j[HandSkeleton::kWristA] + j[HandSkeleton::kWristB]),
      world({0.0, -20.0, 0.0}), skel.wrist_radius + 1.0);
  for (int f = 0; f < 4; ++f) {
    const Vec3 base = world(skel.finger_base[f]);
    cap(world({0.0, 10.0, 0.0}), base, 8.0);  // palm-to-knuckle webbing
    cap(base, j[HandSkeleton::kIndexMid + 2 * f], skel.finger_radius[f]);
    cap(j[HandSkeleton::kIndexMid + 2 * f], j[HandSkeleton::kIndexTip + 2 * f],
        0.9 * skel.finger_radius[f]);
  }
  cap(world(skel.thumb_base), j[HandSkeleton::kThumbRoot], skel.thumb_radius);
  cap(j[HandSkeleton::kThumbRoot], j[HandSkeleton::kThumbMid],
      0.95 * skel.thumb_radius);
  cap(j[HandSkeleton::kThumbMid], j[HandSkeleton::kThumbTip],
      0.85 * skel.thumb_radius);
  return g;
}

namespace {

// Nearest intersection parameter t of the vertical line O + t*(0,0,1) with a
// sphere; t may be negative.
std::optional<double> line_sphere(const Vec3& o, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double b = oc[2];
  const double cc = dot(oc, oc) - r * r;
  const double h = b * b - cc;
  if (h < 0.0) return std::nullopt;
  return -b - std::sqrt(h);
}

std::optional<double> line_capsule(const Vec3& o, const Capsule& cap) {
  const Vec3 ba = cap.b - cap.a;
  const double baba = dot(ba, ba);
  if (baba < 1e-12) return line_sphere(o, cap.a, cap.radius);
  const Vec3 oa = o - cap.a;
  const double bard = ba[2];
  const double baoa = dot(ba, oa);
  const double rdoa = oa[2];
  const double oaoa = dot(oa, oa);
  const double A = baba - bard * bard;
  const double B = baba * rdoa - baoa * bard;
  const double C = baba * oaoa - baoa * baoa - cap.radius * cap.radius * baba;
  if (A < 1e-12) {  // line parallel to the axis: caps only
    auto ta = line_sphere(o, cap.a, cap.radius);
    auto tb = line_sphere(o, cap.b, cap.radius);
    if (!ta) return tb;
    if (!tb) return ta;
    return std::min(*ta, *tb);
  }
  const double h = B * B - A * C;
  if (h < 0.0) return std::nullopt;
  const double t = (-B - std::sqrt(h)) / A;
  const double y = baoa + t * bard;
  if (y >= 0.0 && y <= baba) return t;
  return line_sphere(o, y < 0.0 ? cap.a : cap.b, cap.radius);
}

std::optional<double> line_ellipsoid(const Vec3& o, const Ellipsoid& e) {
  Vec3 op, dp;
  const Vec3 rel = o - e.center;
  for (int k = 0; k < 3; ++k) {
    op[k] = dot(e.rot[k], rel) / e.axes[k];
    dp[k] = e.rot[k][2] / e.axes[k];
  }
  const double A = dot(dp, dp);
  const double B = dot(op, dp);
  const double C = dot(op, op) - 1.0;
  const double h = B * B - A * C;
  if (h < 0.0) return std::nullopt;
  return (-B - std::sqrt(h)) / A;
}

}  // namespace

DepthFrame render_geometry(const HandGeometry& geom, const CubeParams& cube,
                           int res) {
  DepthFrame frame(res);
  const double half = cube.half_extent;
  for (int row = 0; row < res; ++row) {
    const double y = cube.center[1] + half - (row + 0.5) / res * 2.0 * half;
    for (int col = 0; col < res; ++col) {
      const double x = cube.center[0] - half + (col + 0.5) / res * 2.0 * half;
      const Vec3 o{x, y, cube.center[2]};
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : geom.capsules) {
        if (c.radius <= 0.0) continue;
        if (auto t = line_capsule(o, c)) best = std::min(best, *t);
      }
      for (const auto& e : geom.ellipsoids) {
        if (e.axes[0] <= 0.0 || e.axes[1] <= 0.0 || e.axes[2] <= 0.0) continue;
        if (auto t = line_ellipsoid(o, e)) best = std::min(best, *t);
      }
      if (std::isfinite(best))
        frame.at(row, col) = std::clamp(best / half, -1.0, 1.0);
    }
  }
  return frame;
}

DepthFrame render_depth(const std::array<double, HandSkeleton::kAngles>& angles,
                        const HandSkeleton& skel, const CubeParams& cube,
                        int res) {
  return render_geometry(build_geometry(angles, skel, cube), cube, res);
}

DepthFrame add_sensor_noise(const DepthFrame& frame, Rng& rng,
                            const NoiseSettings& settings,
                            std::vector<uint8_t>* boundary_mask) {
  const int R = frame.res;
  std::vector<uint8_t> edge(static_cast<size_t>(R) * R, 0);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < R; ++c) {
      const double v = frame.at(r, c);
      const bool disc =
          (r + 1 < R && std::abs(frame.at(r + 1, c) - v) > settings.edge_threshold) ||
          (c + 1 < R && std::abs(frame.at(r, c + 1) - v) > settings.edge_threshold);
      if (disc) {
        edge[static_cast<size_t>(r) * R + c] = 1;
        if (r + 1 < R) edge[static_cast<size_t>(r + 1) * R + c] = 1;
        if (c + 1 < R) edge[static_cast<size_t>(r) * R + c + 1] = 1;
      }
    }
  }
  // Dilate by one pixel: everything within 1 px of a discontinuity.
  std::vector<uint8_t> near(edge);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < R; ++c)
      if (edge[static_cast<size_t>(r) * R + c])
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr >= 0 && rr < R && cc >= 0 && cc < R)
              near[static_cast<size_t>(rr) * R + cc] = 1;
          }
  if (boundary_mask) *boundary_mask = near;

  DepthFrame out = frame;
  for (size_t i = 0; i < out.v.size(); ++i)
    if (near[i] && rng.uniform() < settings.p_hole) out.v[i] = 1.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    if (out.v[i] < 1.0 && settings.sigma_depth > 0.0)
      out.v[i] =
          std::clamp(out.v[i] + settings.sigma_depth * rng.normal(), -1.0, 1.0);
  }
  return out;
}

DepthFrame normalize_cube(const std::vector<double>& raw_mm, int res,
                          const CubeParams& cube) {
  if (raw_mm.size() != static_cast<size_t>(res) * res)
    throw DatasetError("raw depth grid size does not match resolution");
  DepthFrame out(res);
  for (size_t i = 0; i < raw_mm.size(); ++i) {
    if (std::isnan(raw_mm[i])) {
      out.v[i] = 1.0;  // undefined depth goes to the rear side
      continue;
    }
    out.v[i] =
        std::clamp((raw_mm[i] - cube.center[2]) / cube.half_extent, -1.0, 1.0);
  }
  return out;
}

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DatasetError("unexpected end of stream");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw DatasetError("unexpected end of stream");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr uint32_t kDatasetVersion = 1;

}  // namespace

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError("cannot open '" + path + "' for writing");
  os.write("HPDS", 4);
  write_u32(os, kDatasetVersion);
  write_u32(os, static_cast<uint32_t>(d.res));
  write_u32(os, static_cast<uint32_t>(d.joints));
  double he = d.half_extent;
  os.write(reinterpret_cast<const char*>(&he), sizeof(he));
  write_u64(os, d.frames.size());
  for (size_t i = 0; i < d.frames.size(); ++i) {
    os.write(reinterpret_cast<const char*>(d.frames[i].v.data()),
             static_cast<std::streamsize>(d.frames[i].v.size() * 8));
    os.write(reinterpret_cast<const char*>(d.poses[i].data()),
             static_cast<std::streamsize>(d.poses[i].size() * 8));
  }
  if (!os) throw DatasetError("write failure");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open '" + path + "' for reading");
  char magic[4];
  if (!is.read(magic, 4)) throw DatasetError("unexpected end of stream");
  if (std::memcmp(magic, "HPDS", 4) != 0) throw DatasetError("bad magic");
  const uint32_t version = read_u32(is);
  if (version != kDatasetVersion)
    throw DatasetError("unsupported HPDS version " + std::to_string(version));
  Dataset d;
  d.res = static_cast<int>(read_u32(is));
  d.joints = static_cast<int>(read_u32(is));
  if (!is.read(reinterpret_cast<char*>(&d.half_extent), 8))
    throw DatasetError("unexpected end of stream");
  const uint64_t n = read_u64(is);
  d.frames.reserve(n);
  d.poses.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    DepthFrame f(d.res);
    if (!is.read(reinterpret_cast<char*>(f.v.data()),
                 static_cast<std::streamsize>(f.v.size() * 8)))
      throw DatasetError("unexpected end of stream");
    PoseVector p(static_cast<size_t>(3) * d.joints);
    if (!is.read(reinterpret_cast<char*>(p.data()),
                 static_cast<std::streamsize>(p.size() * 8)))
      throw DatasetError("unexpected end of stream");
    d.frames.push_back(std::move(f));
    d.poses.push_back(std::move(p));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw DatasetError("trailing data after final record");
  return d;
}

PoseVector perturb_pose(const PoseVector& pose, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  PoseVector out = pose;
  if (sigma > 0.0)
    for (double& v : out) v += sigma * rng.normal();
  return out;
}

Dataset generate_dataset(const HandSkeleton& skel, const CubeParams& cube,
                         int res, int count, uint64_t seed, bool with_noise,
                         const NoiseSettings& noise) {
  Dataset d;
  d.res = res;
  d.joints = HandSkeleton::kJoints;
  d.half_extent = cube.half_extent;
  d.frames.reserve(count);
  d.poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::stream(seed, static_cast<uint64_t>(i));
    SampledPose s = sample_pose(skel, cube, rng);
    DepthFrame f = render_depth(s.angles, skel, cube, res);
    if (with_noise) f = add_sensor_noise(f, rng, noise);
    d.frames.push_back(std::move(f));
    d.poses.push_back(std::move(s.pose));
  }
  return d;
}

}  // namespace hpe
