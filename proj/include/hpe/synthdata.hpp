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

#ifndef HPE_SYNTHDATA_HPP
#define HPE_SYNTHDATA_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hpe/tensor.hpp"

namespace hpe {

using Vec3 = std::array<double, 3>;

/// 3*J joint coordinates normalized to the hand cube, each in [-1, 1] for
/// feasible poses.
using PoseVector = std::vector<double>;

/// R x R normalized depth patch. Front face of the cube maps to -1, rear
/// face to +1; missing/background pixels carry exactly +1.
struct DepthFrame {
  int res = 0;
  std::vector<double> v;

  DepthFrame() = default;
  explicit DepthFrame(int r) : res(r), v(static_cast<size_t>(r) * r, 1.0) {}
  double& at(int row, int col) { return v[static_cast<size_t>(row) * res + col]; }
  double at(int row, int col) const {
    return v[static_cast<size_t>(row) * res + col];
  }
  bool operator==(const DepthFrame&) const = default;
};

/// Fixed-size metric cube around the hand; depths inside map to [-1, 1].
struct CubeParams {
  Vec3 center{0.0, 0.0, 0.0};
  double half_extent = 150.0;  // mm
};

/// Articulated 14-joint hand: two wrist joints, palm center, three thumb
/// joints, and mid+tip for each of four fingers. Canonical frame: x right,
/// y up, z away from the camera, palm center at the origin.
struct HandSkeleton {
  static constexpr int kJoints = 14;
  // joint indices
  enum {
    kWristA = 0,
    kWristB,
    kPalm,
    kThumbRoot,
    kThumbMid,
    kThumbTip,
    kIndexMid,
    kIndexTip,
    kMiddleMid,
    kMiddleTip,
    kRingMid,
    kRingTip,
    kPinkyMid,
    kPinkyTip,
  };

  Vec3 wrist_a{-16.0, -52.0, 0.0};
  Vec3 wrist_b{16.0, -52.0, 0.0};
  Vec3 palm_axes{32.0, 40.0, 12.0};  // ellipsoid semi-axes, mm
  double wrist_radius = 14.0;

  std::array<Vec3, 4> finger_base{
      Vec3{-27.0, 38.0, 0.0}, Vec3{-9.0, 40.0, 0.0}, Vec3{9.0, 38.0, 0.0},
      Vec3{27.0, 34.0, 0.0}};
  std::array<double, 4> finger_proximal{34.0, 38.0, 35.0, 28.0};  // mm
  std::array<double, 4> finger_distal{28.0, 30.0, 28.0, 22.0};    // mm
  std::array<double, 4> finger_radius{7.0, 7.0, 7.0, 6.0};        // mm

  Vec3 thumb_base{-34.0, -14.0, 0.0};
  Vec3 thumb_dir{-0.8, 0.6, 0.0};  // canonical direction, normalized in FK
  double thumb_root_len = 22.0, thumb_mid_len = 30.0, thumb_tip_len = 25.0;
  double thumb_radius = 9.0;

  // Angle vector layout: [rx, ry, rz] global orientation, then per finger
  // [mcp flexion, pip flexion, abduction], then thumb [swing, mcp, ip].
  static constexpr int kAngles = 3 + 4 * 3 + 3;
  std::array<double, kAngles> angle_min{};
  std::array<double, kAngles> angle_max{};

  HandSkeleton();  // fills default joint-angle limits
};

/// Forward kinematics: joint positions in mm, world (cube) frame.
std::array<Vec3, HandSkeleton::kJoints> forward_kinematics(
    const std::array<double, HandSkeleton::kAngles>& angles,
    const HandSkeleton& skel, const CubeParams& cube);

PoseVector normalize_joints(const std::array<Vec3, HandSkeleton::kJoints>& js,
                            const CubeParams& cube);

struct SampledPose {
  std::array<double, HandSkeleton::kAngles> angles;
  PoseVector pose;
};

/// Angles uniform within per-joint limits; pose is the normalized FK result.
SampledPose sample_pose(const HandSkeleton& skel, const CubeParams& cube,
                        Rng& rng);

/// Render primitives: capsules (sphere when a == b) and one ellipsoid.
struct Capsule {
  Vec3 a, b;
  double radius;
};
struct Ellipsoid {
  Vec3 center;
  Vec3 axes;                    // semi-axes
  std::array<Vec3, 3> rot;      // rows of the rotation matrix
};
struct HandGeometry {
  std::vector<Capsule> capsules;
  std::vector<Ellipsoid> ellipsoids;
};

HandGeometry build_geometry(
    const std::array<double, HandSkeleton::kAngles>& angles,
    const HandSkeleton& skel, const CubeParams& cube);

/// Orthographic z-buffer over the cube's front face; deterministic and pure.
DepthFrame render_geometry(const HandGeometry& geom, const CubeParams& cube,
                           int res);

DepthFrame render_depth(const std::array<double, HandSkeleton::kAngles>& angles,
                        const HandSkeleton& skel, const CubeParams& cube,
                        int res);

struct NoiseSettings {
  double p_hole = 0.15;         // missing-depth probability near edges
  double sigma_depth = 0.01;    // Gaussian depth noise, normalized units
  double edge_threshold = 0.2;  // |neighbor difference| marking an edge
};

/// Flips pixels within 1 px of a depth discontinuity to +1 with probability
/// p_hole, perturbs remaining surface pixels with Gaussian depth noise, and
/// re-clamps to [-1, 1]. `boundary_mask`, when given, receives the dilated
/// discontinuity mask.
DepthFrame add_sensor_noise(const DepthFrame& frame, Rng& rng,
                            const NoiseSettings& settings,
                            std::vector<uint8_t>* boundary_mask = nullptr);

/// Maps raw mm depths in [center.z - half, center.z + half] to [-1, 1],
/// clipping out-of-range values; NaN (undefined) pixels go to +1.
DepthFrame normalize_cube(const std::vector<double>& raw_mm, int res,
                          const CubeParams& cube);

/// Ordered (DepthFrame, PoseVector) records plus cube metadata.
struct Dataset {
  int res = 0;
  int joints = HandSkeleton::kJoints;
  double half_extent = 150.0;
  std::vector<DepthFrame> frames;
  std::vector<PoseVector> poses;

  size_t size() const { return frames.size(); }
  bool operator==(const Dataset&) const = default;
};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// HPDS: magic "HPDS", version u32, R u32, J u32, half_extent f64, N u64,
// then N records of (R*R depth scalars, 3*J pose scalars), little-endian.
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Adds i.i.d. Gaussian noise per coordinate; deliberately unclamped so
/// infeasible poses occur.
PoseVector perturb_pose(const PoseVector& pose, double sigma, Rng& rng);

/// Record i draws from Rng::stream(seed, i), so generation order (or
/// parallelism) cannot change the result.
Dataset generate_dataset(const HandSkeleton& skel, const CubeParams& cube,
                         int res, int count, uint64_t seed, bool with_noise,
                         const NoiseSettings& noise = {});

}  // namespace hpe

#endif  // HPE_SYNTHDATA_HPP
