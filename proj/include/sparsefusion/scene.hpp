// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

/// Union of primitive signed distance functions. Every primitive SDF is exact
/// (Lipschitz constant 1), so sphere tracing is safe and the scene doubles as
/// the ground-truth distance oracle rho(s, x).
class AnalyticScene {
public:
    struct Sphere {
        Eigen::Vector3d center = Eigen::Vector3d::Zero();
        double radius = 1.0;
    };
    struct Plane {
        Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // unit; sdf = n.x - offset
        double offset = 0.0;
    };
    struct Box {
        Pose pose;  // box frame -> world
        Eigen::Vector3d half_extents = Eigen::Vector3d::Ones();
    };

    void add_sphere(const Eigen::Vector3d& center, double radius);
    void add_plane(const Eigen::Vector3d& normal, double offset);
    void add_box(const Pose& pose, const Eigen::Vector3d& half_extents);

    bool empty() const { return spheres_.empty() && planes_.empty() && boxes_.empty(); }

    /// Signed distance to the union surface; positive outside.
    double signed_distance(const Eigen::Vector3d& x) const;

    /// Outward unit normal of the closest primitive at x.
    Eigen::Vector3d normal_at(const Eigen::Vector3d& x) const;

    const std::vector<Sphere>& spheres() const { return spheres_; }
    const std::vector<Plane>& planes() const { return planes_; }
    const std::vector<Box>& boxes() const { return boxes_; }

private:
    std::vector<Sphere> spheres_;
    std::vector<Plane> planes_;
    std::vector<Box> boxes_;
};

/// Gaussian depth noise with deviation sigma(z) = sigma0 * z^2, disabled when
/// sigma0 == 0. The per-pixel sigma actually used is recorded in the frame.
struct NoiseModel {
    double sigma0 = 0.0;  // 1/m
    std::uint64_t seed = 0;
};

struct SphereTraceOptions {
    int max_steps = 256;
    double tolerance_scale = 1e-5;  // surface tolerance = scale * domain_size
    double domain_size = 1.0;
};

/// Per-pixel sphere tracing of the scene SDF between the near and far planes.
/// Misses are 0. Depth values are camera-frame z, not ray length.
DepthFrame render_synthetic_depth(const AnalyticScene& scene, const Pose& camera_pose,
                                  const Intrinsics& intrinsics, const NoiseModel& noise = {},
                                  const SphereTraceOptions& trace = {});

/// Camera poses on a circle of the given radius around `target`, all looking
/// at `target`; `axis` is the orbit plane normal.
std::vector<Pose> orbit_trajectory(const Eigen::Vector3d& target, double radius, int frames,
                                   const Eigen::Vector3d& axis = Eigen::Vector3d::UnitY(),
                                   double start_angle = 0.0, double arc = 6.28318530717958648);

}  // namespace sparsefusion
