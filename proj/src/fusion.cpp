// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace sparsefusion {

void FusionParams::validate() const {
    if (!(w_fixed > 0.0) || w_fixed > 1.0)
        throw std::invalid_argument("fusion: w_fixed must be in (0, 1]");
    if (!(w_max > 0.0)) throw std::invalid_argument("fusion: w_max must be positive");
    if (sigma0 < 0.0) throw std::invalid_argument("fusion: sigma0 must be >= 0");
    if (refinement_steps < 0) throw std::invalid_argument("fusion: negative refinement_steps");
}

double FusionParams::resolved_q(double delta) const {
    if (process_variance >= 0.0) return process_variance;
    const double step = 0.1 * delta / kTsdfCodeRange;
    return step * step;
}

MeasurementContext MeasurementContext::make(const DepthFrame& frame, const Pose& pose,
                                            const FusionParams& params) {
    MeasurementContext ctx;
    ctx.frame = &frame;
    ctx.camera_from_world = invert(pose);
    ctx.downweight = params.edge_downweight;
    if (!ctx.downweight) return ctx;

    NormalOptions opts;
    opts.sigma0 = params.sigma0;
    opts.spatial_scale = 0.25 * params.delta;  // one voxel at the default band width
    ctx.normals = compute_normals(frame, opts);

    // Pixels within 2 of an invalid neighbor or a depth jump carry noisier
    // data; their weight is halved.
    const Intrinsics& intr = frame.intrinsics;
    ctx.near_edge.assign(frame.pixel_count(), 0);
    std::vector<std::uint8_t> edge(frame.pixel_count(), 0);
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            if (!frame.valid(u, v)) {
                edge[static_cast<std::size_t>(v) * intr.width + u] = 1;
                continue;
            }
            const float z = frame.at(u, v);
            const double jump = 3.0 * params.sigma0 * double(z) * double(z) + 0.02 * double(z);
            bool is_edge = u == 0 || v == 0 || u == intr.width - 1 || v == intr.height - 1;
            for (int k = 0; !is_edge && k < 4; ++k) {
                const int nu = u + (k == 0 ? 1 : k == 1 ? -1 : 0);
                const int nv = v + (k == 2 ? 1 : k == 3 ? -1 : 0);
                if (!frame.valid(nu, nv) || std::abs(frame.at(nu, nv) - z) > jump) is_edge = true;
            }
            if (is_edge) edge[static_cast<std::size_t>(v) * intr.width + u] = 1;
        }
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            bool near = false;
            for (int dv = -2; !near && dv <= 2; ++dv)
                for (int du = -2; !near && du <= 2; ++du) {
                    const int nu = u + du, nv = v + dv;
                    if (frame.in_bounds(nu, nv) &&
                        edge[static_cast<std::size_t>(nv) * intr.width + nu])
                        near = true;
                }
            if (near) ctx.near_edge[static_cast<std::size_t>(v) * intr.width + u] = 1;
        }
    return ctx;
}

MeasurementSample estimate_measurement(const DepthFrame& frame, const Pose& pose,
                                       const Eigen::Vector3d& voxel_center,
                                       const FusionParams& params) {
    return estimate_measurement(MeasurementContext::make(frame, pose, params), voxel_center,
                                params);
}

MeasurementSample estimate_measurement(const MeasurementContext& ctx,
                                       const Eigen::Vector3d& voxel_center,
                                       const FusionParams& params) {
    const DepthFrame& frame = *ctx.frame;
    const Intrinsics& intr = frame.intrinsics;
    const double delta = params.delta;

    MeasurementSample chi;  // tsdf == nullopt
    const Eigen::Vector3d xc = ctx.camera_from_world.apply(voxel_center);
    const auto px = project(intr, xc);
    if (!px) return chi;
    int u = static_cast<int>(std::lround(px->u));
    int v = static_cast<int>(std::lround(px->v));
    if (!frame.in_bounds(u, v) || !frame.valid(u, v)) return chi;

    double measured = frame.at(u, v);
    double tsdf_k = measured - xc.z();

    if (params.refinement_steps > 0) {
        // Fixed-size sub-pixel descent on the squared distance between the
        // voxel and the bilinearly interpolated depth surface.
        auto depth_interp = [&](double uu, double vv) -> double {
            const int u0 = static_cast<int>(std::floor(uu));
            const int v0 = static_cast<int>(std::floor(vv));
            if (!frame.in_bounds(u0, v0) || !frame.in_bounds(u0 + 1, v0 + 1)) return 0.0;
            const float d00 = frame.at(u0, v0), d10 = frame.at(u0 + 1, v0);
            const float d01 = frame.at(u0, v0 + 1), d11 = frame.at(u0 + 1, v0 + 1);
            if (d00 <= 0.0f || d10 <= 0.0f || d01 <= 0.0f || d11 <= 0.0f) return 0.0;
            const double fu = uu - u0, fv = vv - v0;
            return (d00 * (1.0 - fu) + d10 * fu) * (1.0 - fv) +
                   (d01 * (1.0 - fu) + d11 * fu) * fv;
        };
        auto dist_sq = [&](double uu, double vv) {
            const double d = depth_interp(uu, vv);
            if (d <= 0.0) return std::numeric_limits<double>::infinity();
            return (unproject(intr, uu, vv, d) - xc).squaredNorm();
        };
        double cu = px->u, cv = px->v;
        double best = dist_sq(cu, cv);
        if (std::isfinite(best)) {
            const double h = 0.5;  // gradient probe and step length, pixels
            for (int step = 0; step < params.refinement_steps; ++step) {
                const double gu = dist_sq(cu + h, cv) - dist_sq(cu - h, cv);
                const double gv = dist_sq(cu, cv + h) - dist_sq(cu, cv - h);
                const double norm = std::hypot(gu, gv);
                if (!std::isfinite(norm) || norm == 0.0) break;
                const double nu = cu - h * gu / norm;
                const double nv = cv - h * gv / norm;
                const double cand = dist_sq(nu, nv);
                if (!(cand < best)) break;
                best = cand;
                cu = nu;
                cv = nv;
            }
            const double d_here = depth_interp(cu, cv);
            if (d_here > 0.0) {
                u = static_cast<int>(std::lround(cu));
                v = static_cast<int>(std::lround(cv));
                measured = d_here;
                tsdf_k = (d_here >= xc.z() ? 1.0 : -1.0) * std::sqrt(best);
            }
        }
    }

    if (std::abs(tsdf_k) > delta) return chi;

    double sigma = frame.has_sigma() && frame.sigma_at(u, v) > 0.0f
                       ? static_cast<double>(frame.sigma_at(u, v))
                       : params.sigma0 * measured * measured;
    MeasurementSample out;
    out.tsdf = tsdf_k;
    out.variance = std::max(sigma * sigma, params.min_variance);
    out.weight = params.w_fixed;

    if (ctx.downweight) {
        // cos of the view angle; a pixel without a usable normal is itself a
        // low-confidence signal.
        double quality = 0.3;
        if (ctx.normals.valid(u, v)) {
            const Eigen::Vector3d ray = unproject(intr, u, v, 1.0).normalized();
            quality = std::abs(ctx.normals.at(u, v).cast<double>().dot(ray));
        }
        if (!ctx.near_edge.empty() &&
            ctx.near_edge[static_cast<std::size_t>(v) * intr.width + u])
            quality *= 0.5;
        // Grazing rays near silhouettes skew T_k negative (the measured point
        // slides along the surface); drop them instead of folding them in.
        if (quality < 0.2) return chi;
        out.weight *= quality;
        out.variance /= quality;
    }
    return out;
}

namespace {

struct BlockLess {
    bool operator()(const Eigen::Vector3i& a, const Eigen::Vector3i& b) const {
        if (a.z() != b.z()) return a.z() < b.z();
        if (a.y() != b.y()) return a.y() < b.y();
        return a.x() < b.x();
    }
};

}  // namespace

UpdateLists select_update_blocks(const SparseTsdfGrid& grid, const DepthFrame& frame,
                                 const Pose& pose) {
    const Intrinsics& intr = frame.intrinsics;
    const double delta = grid.delta();
    const int stride = std::max(1, (grid.config().voxels_per_block_axis + 1) / 2);

    std::set<Eigen::Vector3i, BlockLess> allocate;
    for (int v = 0; v < intr.height; v += stride) {
        for (int u = 0; u < intr.width; u += stride) {
            if (!frame.valid(u, v)) continue;
            const Eigen::Vector3d dir_cam = unproject(intr, u, v, 1.0).normalized();
            const Eigen::Vector3d dir = pose.rotation * dir_cam;
            const double t_hit = frame.at(u, v) / dir_cam.z();
            for (double offset : {-delta, 0.0, delta}) {
                const Eigen::Vector3d x = pose.translation + (t_hit + offset) * dir;
                const Eigen::Vector3i bc = grid.block_of_point(x);
                if (grid.block_in_range(bc)) allocate.insert(bc);
            }
        }
    }

    UpdateLists lists;
    lists.allocate.assign(allocate.begin(), allocate.end());

    // Visible allocated blocks: inside the frustum and not behind the measured
    // surface by more than delta at all probe points.
    const Pose inv = invert(pose);
    const double side = grid.block_side();
    for (const Eigen::Vector3i& bc : grid.occupied_blocks_in_frustum(pose, intr)) {
        if (allocate.count(bc)) continue;
        const Eigen::Vector3d lo = grid.block_min_corner(bc);
        bool visible = false;
        for (int i = 0; i < 9 && !visible; ++i) {
            const Eigen::Vector3d probe =
                i == 8 ? (lo + Eigen::Vector3d::Constant(0.5 * side)).eval()
                       : (lo + Eigen::Vector3d(i & 1 ? side : 0.0, i & 2 ? side : 0.0,
                                               i & 4 ? side : 0.0)).eval();
            const Eigen::Vector3d xc = inv.apply(probe);
            const auto px = project(intr, xc);
            if (!px) continue;
            const int u = static_cast<int>(std::lround(px->u));
            const int v = static_cast<int>(std::lround(px->v));
            if (!frame.in_bounds(u, v)) continue;
            if (!frame.valid(u, v) || xc.z() <= frame.at(u, v) + delta) visible = true;
        }
        if (visible) lists.update.push_back(bc);
    }
    return lists;
}

std::optional<double> fuse_simple(std::optional<double> tsdf, double tsdf_k, double w_k,
                                  double delta) {
    double out = tsdf.has_value() ? (1.0 - w_k) * *tsdf + w_k * tsdf_k : tsdf_k;
    if (std::abs(out) > delta) return std::nullopt;
    return out;
}

WeightedState fuse_weighted(std::optional<double> tsdf, double weight, double tsdf_k, double w_k,
                            double w_max, double delta) {
    WeightedState out;
    if (!tsdf.has_value()) {
        out.tsdf = tsdf_k;
        out.weight = w_k;
    } else {
        out.tsdf = (weight * *tsdf + w_k * tsdf_k) / (weight + w_k);
        out.weight = std::min(weight + w_k, w_max);
    }
    if (std::abs(*out.tsdf) > delta) out.tsdf = std::nullopt;
    return out;
}

KalmanState fuse_kalman(std::optional<double> tsdf, double variance, double tsdf_k, double p_k,
                        double q, double delta) {
    KalmanState out;
    if (!tsdf.has_value()) {
        out.tsdf = tsdf_k;
        out.variance = p_k;
    } else {
        const double predicted = variance + q;
        const double gain = predicted / (predicted + p_k);
        out.tsdf = *tsdf + gain * (tsdf_k - *tsdf);
        out.variance = (1.0 - gain) * predicted;
    }
    if (std::abs(*out.tsdf) > delta) out.tsdf = std::nullopt;
    return out;
}

FusionStats fuse_frame(SparseTsdfGrid& grid, const DepthFrame& frame, const Pose& pose,
                       const FusionParams& params) {
    params.validate();
    FusionParams local = params;
    local.delta = grid.delta();
    if (params.mode == FusionMode::Kalman &&
        grid.aux_quantization().mode != AuxMode::Variance)
        throw std::invalid_argument("fusion: Kalman mode needs a variance-mode grid");
    if (params.mode != FusionMode::Kalman && grid.aux_quantization().mode != AuxMode::Weight)
        throw std::invalid_argument("fusion: weight-mode grid required for this fusion mode");

    const UpdateLists lists = select_update_blocks(grid, frame, pose);
    const std::size_t before = grid.allocated_count();

    FusionStats stats;
    const MeasurementContext ctx = MeasurementContext::make(frame, pose, local);
    const double q = local.resolved_q(local.delta);
    const int m = grid.config().voxels_per_block_axis;
    FloatShadowGrid* shadow = grid.has_shadow() ? &grid.shadow() : nullptr;

    auto process_block = [&](const Eigen::Vector3i& bc, bool allocate) {
        std::int32_t slot = grid.block_slot(bc);
        if (slot == SparseTsdfGrid::kEmpty) {
            if (!allocate) return;
            slot = grid.allocate_block(bc);
        }
        auto payload = grid.block_payload(slot);
        const Eigen::Vector3i base = bc * m;
        for (int z = 0; z < m; ++z) {
            for (int y = 0; y < m; ++y) {
                for (int x = 0; x < m; ++x) {
                    const Eigen::Vector3i vc = base + Eigen::Vector3i(x, y, z);
                    const MeasurementSample sample =
                        estimate_measurement(ctx, grid.voxel_center(vc), local);
                    if (!sample.tsdf.has_value()) continue;

                    VoxelPayload& cell = payload[grid.local_index({x, y, z})];
                    std::optional<double> prior_tsdf;
                    double prior_aux = 0.0;
                    if (shadow) {
                        const std::size_t idx = shadow->index(vc);
                        if (!FloatShadowGrid::is_chi(shadow->tsdf[idx])) {
                            prior_tsdf = shadow->tsdf[idx];
                            prior_aux = shadow->aux[idx];
                        }
                    } else if (cell.tsdf_code != kChiCode) {
                        prior_tsdf = dequantize_tsdf(cell.tsdf_code, local.delta);
                        prior_aux = grid.aux_quantization().decode(cell.aux_code);
                    }

                    std::optional<double> new_tsdf;
                    double new_aux = 0.0;
                    switch (local.mode) {
                        case FusionMode::Simple: {
                            new_tsdf = fuse_simple(prior_tsdf, *sample.tsdf, sample.weight,
                                                   local.delta);
                            new_aux = sample.weight;
                            break;
                        }
                        case FusionMode::Weighted: {
                            const WeightedState s =
                                fuse_weighted(prior_tsdf, prior_aux, *sample.tsdf, sample.weight,
                                              local.w_max, local.delta);
                            new_tsdf = s.tsdf;
                            new_aux = s.weight;
                            break;
                        }
                        case FusionMode::Kalman: {
                            const KalmanState s = fuse_kalman(prior_tsdf, prior_aux, *sample.tsdf,
                                                              sample.variance, q, local.delta);
                            new_tsdf = s.tsdf;
                            new_aux = s.variance;
                            break;
                        }
                    }

                    if (new_tsdf.has_value()) {
                        cell.tsdf_code = quantize_tsdf(*new_tsdf, local.delta);
                        cell.aux_code = grid.aux_quantization().encode(new_aux);
                    } else {
                        cell = VoxelPayload{};
                    }
                    if (shadow) {
                        const std::size_t idx = shadow->index(vc);
                        shadow->tsdf[idx] = new_tsdf.has_value() ? static_cast<float>(*new_tsdf)
                                                                 : FloatShadowGrid::kChi;
                        shadow->aux[idx] =
                            new_tsdf.has_value() ? static_cast<float>(new_aux) : 0.0f;
                    }
                    ++stats.voxels_updated;
                }
            }
        }
    };

    for (const Eigen::Vector3i& bc : lists.allocate) process_block(bc, true);
    for (const Eigen::Vector3i& bc : lists.update) process_block(bc, false);

    stats.blocks_allocated_now = grid.allocated_count() - before;
    stats.blocks_total = grid.allocated_count();
    stats.memory_bytes = grid.memory_bytes();
    return stats;
}

}  // namespace sparsefusion
