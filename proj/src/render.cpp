// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/render.hpp"

#include <algorithm>
#include <cmath>

namespace sparsefusion {

namespace {

// Raw quantized lookup without the per-call overhead of read_voxel.
inline bool voxel_code(const SparseTsdfGrid& grid, const Eigen::Vector3i& vc, double& out) {
    const Eigen::Vector3i bc = grid.block_of_voxel(vc);
    const std::int32_t slot = grid.block_slot(bc);
    if (slot == SparseTsdfGrid::kEmpty) return false;
    const int m = grid.config().voxels_per_block_axis;
    const VoxelPayload payload = grid.block_payload(slot)[grid.local_index(vc - bc * m)];
    if (payload.tsdf_code == kChiCode) return false;
    out = dequantize_tsdf(payload.tsdf_code, grid.delta());
    return true;
}

}  // namespace

std::optional<double> sample_tsdf(const SparseTsdfGrid& grid, const Eigen::Vector3d& p) {
    const GridConfig& cfg = grid.config();
    const double vox = cfg.voxel_size();
    const Eigen::Vector3d g = (p - cfg.box_origin) / vox - Eigen::Vector3d::Constant(0.5);
    const Eigen::Vector3i base(static_cast<int>(std::floor(g.x())),
                               static_cast<int>(std::floor(g.y())),
                               static_cast<int>(std::floor(g.z())));
    const int res = cfg.voxels_per_axis();
    if ((base.array() < 0).any() || ((base.array() + 1) >= res).any()) return std::nullopt;

    const Eigen::Vector3d f = g - base.cast<double>();
    double c[8];
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3i corner = base + Eigen::Vector3i(i & 1, (i >> 1) & 1, (i >> 2) & 1);
        if (!voxel_code(grid, corner, c[i])) return std::nullopt;
    }
    const double x0 = c[0] + (c[1] - c[0]) * f.x();
    const double x1 = c[2] + (c[3] - c[2]) * f.x();
    const double x2 = c[4] + (c[5] - c[4]) * f.x();
    const double x3 = c[6] + (c[7] - c[6]) * f.x();
    const double y0 = x0 + (x1 - x0) * f.y();
    const double y1 = x2 + (x3 - x2) * f.y();
    return y0 + (y1 - y0) * f.z();
}

std::optional<Eigen::Vector3d> sample_tsdf_gradient(const SparseTsdfGrid& grid,
                                                    const Eigen::Vector3d& p, double h) {
    Eigen::Vector3d g;
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d dp = p, dm = p;
        dp[i] += h;
        dm[i] -= h;
        const auto a = sample_tsdf(grid, dp);
        const auto b = sample_tsdf(grid, dm);
        if (!a || !b) return std::nullopt;
        g[i] = (*a - *b) / (2.0 * h);
    }
    return g;
}

RayBounds compute_ray_bounds(const SparseTsdfGrid& grid, const Pose& pose,
                             const Intrinsics& intrinsics) {
    intrinsics.validate();
    RayBounds bounds(intrinsics.width, intrinsics.height);
    if (grid.allocated_count() == 0) return bounds;

    const GridConfig& cfg = grid.config();
    const int n = cfg.blocks_per_axis;
    const double side = grid.block_side();
    const Eigen::Vector3d box_lo = cfg.box_origin;
    const Eigen::Vector3d box_hi = cfg.box_origin + Eigen::Vector3d::Constant(cfg.box_side);
    const Eigen::Vector3d origin = pose.translation;

    for (int v = 0; v < intrinsics.height; ++v) {
        for (int u = 0; u < intrinsics.width; ++u) {
            const Eigen::Vector3d dir_cam = unproject(intrinsics, u, v, 1.0).normalized();
            const Eigen::Vector3d dir = pose.rotation * dir_cam;

            // Clamp by camera depth and by the volume AABB (slab test).
            double lo = intrinsics.near_plane / dir_cam.z();
            double hi = intrinsics.far_plane / dir_cam.z();
            for (int a = 0; a < 3; ++a) {
                if (std::abs(dir[a]) < 1e-15) {
                    if (origin[a] < box_lo[a] || origin[a] > box_hi[a]) {
                        lo = 1.0;
                        hi = 0.0;
                        break;
                    }
                    continue;
                }
                double t0 = (box_lo[a] - origin[a]) / dir[a];
                double t1 = (box_hi[a] - origin[a]) / dir[a];
                if (t0 > t1) std::swap(t0, t1);
                lo = std::max(lo, t0);
                hi = std::min(hi, t1);
            }
            if (!(lo <= hi)) continue;

            // Amanatides-Woo traversal of the coarse lattice.
            const Eigen::Vector3d entry = origin + lo * dir;
            Eigen::Vector3i cell;
            for (int a = 0; a < 3; ++a) {
                cell[a] = static_cast<int>(std::floor((entry[a] - box_lo[a]) / side));
                cell[a] = std::clamp(cell[a], 0, n - 1);
            }
            Eigen::Vector3i step;
            Eigen::Vector3d t_max, t_delta;
            for (int a = 0; a < 3; ++a) {
                if (dir[a] > 1e-15) {
                    step[a] = 1;
                    t_max[a] = lo + (box_lo[a] + (cell[a] + 1) * side - entry[a]) / dir[a];
                    t_delta[a] = side / dir[a];
                } else if (dir[a] < -1e-15) {
                    step[a] = -1;
                    t_max[a] = lo + (box_lo[a] + cell[a] * side - entry[a]) / dir[a];
                    t_delta[a] = -side / dir[a];
                } else {
                    step[a] = 0;
                    t_max[a] = std::numeric_limits<double>::infinity();
                    t_delta[a] = std::numeric_limits<double>::infinity();
                }
            }

            double first = std::numeric_limits<double>::infinity();
            double last = -std::numeric_limits<double>::infinity();
            double t_in = lo;
            while (t_in <= hi) {
                const int axis = t_max.x() <= t_max.y()
                                     ? (t_max.x() <= t_max.z() ? 0 : 2)
                                     : (t_max.y() <= t_max.z() ? 1 : 2);
                const double t_out = std::min(t_max[axis], hi);
                if (grid.block_slot(cell) != SparseTsdfGrid::kEmpty) {
                    first = std::min(first, t_in);
                    last = std::max(last, t_out);
                }
                t_in = t_max[axis];
                cell[axis] += step[axis];
                if (cell[axis] < 0 || cell[axis] >= n) break;
                t_max[axis] += t_delta[axis];
            }
            if (first <= last) {
                const std::size_t idx = bounds.index(u, v);
                bounds.t_start[idx] = static_cast<float>(std::max(first, lo));
                bounds.t_end[idx] = static_cast<float>(std::min(last, hi));
            }
        }
    }
    return bounds;
}

RaycastResult raycast(const SparseTsdfGrid& grid, const Pose& pose,
                      const Intrinsics& intrinsics) {
    return raycast(grid, pose, intrinsics, compute_ray_bounds(grid, pose, intrinsics));
}

RaycastResult raycast(const SparseTsdfGrid& grid, const Pose& pose, const Intrinsics& intrinsics,
                      const RayBounds& bounds) {
    intrinsics.validate();
    RaycastResult result;
    result.depth = DepthFrame(intrinsics);
    result.normals = NormalMap(intrinsics.width, intrinsics.height);

    const double vox = grid.voxel_size();
    const double coarse_step = 0.5 * grid.delta();
    const double fine_tol = 0.01 * vox;
    const Eigen::Matrix3d world_to_cam = pose.rotation.transpose();

    for (int v = 0; v < intrinsics.height; ++v) {
        for (int u = 0; u < intrinsics.width; ++u) {
            if (bounds.empty(u, v)) continue;
            ++result.stats.rays_with_bounds;
            const Eigen::Vector3d dir_cam = unproject(intrinsics, u, v, 1.0).normalized();
            const Eigen::Vector3d dir = pose.rotation * dir_cam;
            const double t0 = bounds.t_start[bounds.index(u, v)];
            const double t1 = bounds.t_end[bounds.index(u, v)];

            double prev_t = 0.0, prev_val = 0.0;
            bool have_prev = false;
            double hit_a = 0.0, hit_b = 0.0, val_a = 0.0, val_b = 0.0;
            bool bracketed = false;

            for (double t = t0;; t += coarse_step) {
                const bool final_sample = t >= t1;
                if (final_sample) t = t1;
                ++result.stats.sample_steps;
                const auto val = sample_tsdf(grid, pose.translation + t * dir);
                if (val.has_value()) {
                    if (have_prev && prev_val > 0.0 && *val < 0.0) {
                        hit_a = prev_t;
                        val_a = prev_val;
                        hit_b = t;
                        val_b = *val;
                        bracketed = true;
                        break;
                    }
                    have_prev = true;
                    prev_t = t;
                    prev_val = *val;
                }
                if (final_sample) break;
            }
            if (!bracketed) continue;

            // Stage 2: secant with a bisection fallback, keeping the bracket.
            double root = hit_b;
            for (int iter = 0; iter < 48 && hit_b - hit_a > fine_tol; ++iter) {
                double t_new = hit_b - val_b * (hit_b - hit_a) / (val_b - val_a);
                if (!(t_new > hit_a) || !(t_new < hit_b)) t_new = 0.5 * (hit_a + hit_b);
                const auto val = sample_tsdf(grid, pose.translation + t_new * dir);
                if (!val.has_value()) {
                    // chi inside the bracket: shrink toward the negative side.
                    hit_a = t_new;
                    val_a = std::max(val_a, 1e-12);
                    continue;
                }
                if (*val > 0.0) {
                    hit_a = t_new;
                    val_a = *val;
                } else {
                    hit_b = t_new;
                    val_b = *val;
                }
            }
            if (val_b != val_a) {
                const double interp = hit_b - val_b * (hit_b - hit_a) / (val_b - val_a);
                root = std::clamp(interp, hit_a, hit_b);
            } else {
                root = 0.5 * (hit_a + hit_b);
            }

            const double depth = root * dir_cam.z();
            if (depth < intrinsics.near_plane || depth > intrinsics.far_plane) continue;
            result.depth.at(u, v) = static_cast<float>(depth);
            ++result.stats.hit_pixels;

            const auto grad =
                sample_tsdf_gradient(grid, pose.translation + root * dir, vox);
            if (grad.has_value() && grad->squaredNorm() > 0.0) {
                // TSDF is positive outside, so the gradient already faces the camera.
                const Eigen::Vector3d n_cam = (world_to_cam * grad->normalized());
                result.normals.at(u, v) = n_cam.cast<float>();
            }
        }
    }
    return result;
}

}  // namespace sparsefusion
