// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/grid.hpp"
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

/// Per-pixel traversal interval along the (unit-length) view ray. The interval
/// covers every allocated block the ray intersects within the near/far range;
/// pixels with no allocated block get an empty interval (start > end).
struct RayBounds {
    int width = 0;
    int height = 0;
    std::vector<float> t_start;
    std::vector<float> t_end;

    RayBounds() = default;
    RayBounds(int w, int h)
        : width(w), height(h),
          t_start(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::infinity()),
          t_end(static_cast<std::size_t>(w) * h, -std::numeric_limits<float>::infinity()) {}

    std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
    bool empty(int u, int v) const { return !(t_start[index(u, v)] <= t_end[index(u, v)]); }
};

/// 3D DDA over the coarse N^3 block lattice; start/end of the interval are the
/// entry into the first and exit from the last allocated block (clamped to the
/// near/far planes). Plays the role of the rasterized front/back-face bounds.
RayBounds compute_ray_bounds(const SparseTsdfGrid& grid, const Pose& pose,
                             const Intrinsics& intrinsics);

struct RaycastStats {
    std::uint64_t sample_steps = 0;  // stage-1 trilinear samples
    std::uint64_t hit_pixels = 0;
    std::uint64_t rays_with_bounds = 0;

    double steps_per_hit() const {
        return hit_pixels ? static_cast<double>(sample_steps) / hit_pixels : 0.0;
    }
};

struct RaycastResult {
    DepthFrame depth;
    NormalMap normals;
    RaycastStats stats;
};

/// Two-stage raycast: stage 1 marches [t_start, t_end] at step 0.5*delta on
/// the trilinear TSDF (chi samples skipped without a sign test); on a
/// positive -> negative change stage 2 locates the zero by secant iteration to
/// 1e-2 * voxel_size. Normals are the TSDF gradient, in the camera frame.
RaycastResult raycast(const SparseTsdfGrid& grid, const Pose& pose, const Intrinsics& intrinsics,
                      const RayBounds& bounds);
RaycastResult raycast(const SparseTsdfGrid& grid, const Pose& pose, const Intrinsics& intrinsics);

/// Trilinear TSDF at a world point; nullopt when any of the 8 surrounding
/// voxels is chi, in an EMPTY block, or outside the domain.
std::optional<double> sample_tsdf(const SparseTsdfGrid& grid, const Eigen::Vector3d& p);

/// Central-difference gradient of the trilinear TSDF (step h, world frame).
std::optional<Eigen::Vector3d> sample_tsdf_gradient(const SparseTsdfGrid& grid,
                                                    const Eigen::Vector3d& p, double h);

}  // namespace sparsefusion
