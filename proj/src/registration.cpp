// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/registration.hpp"

#include <algorithm>
#include <cmath>

namespace sparsefusion {

MatchParams MatchParams::for_voxel_size(double voxel_size) {
    MatchParams params;
    params.max_distance = 10.0 * voxel_size;
    params.shrink_floor = voxel_size;
    params.normal_options.spatial_scale = voxel_size;
    return params;
}

std::vector<PointMatch> match_points(const DepthFrame& source, const NormalMap& source_normals,
                                     const DepthFrame& target, const NormalMap& target_normals,
                                     const Pose& delta, const MatchParams& params) {
    const Intrinsics& si = source.intrinsics;
    const Intrinsics& ti = target.intrinsics;
    if (si.width != ti.width || si.height != ti.height)
        throw std::invalid_argument("match: frames must share intrinsics");

    const double cos_max = std::cos(params.max_normal_angle);
    const double max_dist_sq = params.max_distance * params.max_distance;

    std::vector<PointMatch> matches;
    matches.reserve(source.pixel_count() / 4);
    for (int v = 0; v < si.height; ++v) {
        for (int u = 0; u < si.width; ++u) {
            if (!source.valid(u, v) || !source_normals.valid(u, v)) continue;
            const Eigen::Vector3d p = delta.apply(unproject(si, u, v, source.at(u, v)));
            const auto px = project(ti, p);
            if (!px) continue;
            const int tu = static_cast<int>(std::lround(px->u));
            const int tv = static_cast<int>(std::lround(px->v));
            if (!target.in_bounds(tu, tv) || !target.valid(tu, tv) ||
                !target_normals.valid(tu, tv))
                continue;
            const Eigen::Vector3d q = unproject(ti, tu, tv, target.at(tu, tv));
            if ((p - q).squaredNorm() > max_dist_sq) continue;
            const Eigen::Vector3d n = target_normals.at(tu, tv).cast<double>();
            const Eigen::Vector3d ns = delta.rotation * source_normals.at(u, v).cast<double>();
            if (ns.dot(n) < cos_max) continue;
            matches.push_back({p, q, n});
        }
    }
    return matches;
}

ShrinkResult shrink(const std::vector<PointMatch>& matches, double floor) {
    if (matches.empty()) throw std::invalid_argument("shrink: empty match list");
    Eigen::Vector3d lo = matches.front().p;
    Eigen::Vector3d hi = matches.front().p;
    for (const PointMatch& m : matches) {
        lo = lo.cwiseMin(m.p).cwiseMin(m.q);
        hi = hi.cwiseMax(m.p).cwiseMax(m.q);
    }
    ShrinkResult out;
    out.center = 0.5 * (lo + hi);
    out.scale = (hi - lo).cwiseMax(floor);
    const Eigen::Vector3d inv_scale = out.scale.cwiseInverse();
    out.matches.reserve(matches.size());
    for (const PointMatch& m : matches) {
        ShrunkMatch s;
        s.p_hat = inv_scale.cwiseProduct(m.p - out.center);
        s.q_hat = inv_scale.cwiseProduct(m.q - out.center);
        s.c_hat = inv_scale.cwiseProduct(m.p.cross(m.n) - out.center.cross(m.n));
        s.n = m.n;
        out.matches.push_back(s);
    }
    return out;
}

namespace {

// Kahan-compensated accumulator.
struct Compensated {
    double sum = 0.0;
    double carry = 0.0;

    void add(double value) {
        const double y = value - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

NormalEquation assemble(const ShrinkResult& shrunk) {
    NormalEquation eq;
    eq.pair_count = shrunk.matches.size();
    eq.shrink_center = shrunk.center;
    eq.shrink_scale = shrunk.scale;

    std::array<Compensated, 21> upper{};  // upper triangle of A, row major
    std::array<Compensated, 6> rhs{};
    Compensated res_sq;

    for (const ShrunkMatch& m : shrunk.matches) {
        Eigen::Matrix<double, 6, 1> row;
        row << m.c_hat, m.n;
        const double d = (shrunk.scale.cwiseProduct(m.p_hat - m.q_hat)).dot(m.n);
        int k = 0;
        for (int i = 0; i < 6; ++i)
            for (int j = i; j < 6; ++j, ++k) upper[k].add(row[i] * row[j]);
        for (int i = 0; i < 6; ++i) rhs[i].add(-row[i] * d);
        res_sq.add(d * d);
    }

    int k = 0;
    for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j, ++k) {
            eq.A(i, j) = upper[k].sum;
            eq.A(j, i) = upper[k].sum;
        }
    for (int i = 0; i < 6; ++i) eq.b[i] = rhs[i].sum;
    eq.residual_sq_sum = res_sq.sum;
    return eq;
}

void eigendecompose_sym6(const Eigen::Matrix<double, 6, 6>& a, std::array<double, 6>& eigenvalues,
                         Eigen::Matrix<double, 6, 6>& eigenvectors) {
    Eigen::Matrix<double, 6, 6> m = 0.5 * (a + a.transpose());
    Eigen::Matrix<double, 6, 6> v = Eigen::Matrix<double, 6, 6>::Identity();
    const double scale = std::max(1.0, m.norm());
    const double tol = 1e-12 * scale;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 6; ++p)
            for (int q = p + 1; q < 6; ++q) off += m(p, q) * m(p, q);
        if (std::sqrt(off) <= tol) break;
        for (int p = 0; p < 6; ++p) {
            for (int q = p + 1; q < 6; ++q) {
                const double apq = m(p, q);
                if (std::abs(apq) <= tol / 30.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Eigen::Matrix<double, 6, 6> rot = Eigen::Matrix<double, 6, 6>::Identity();
                rot(p, p) = c;
                rot(q, q) = c;
                rot(p, q) = s;
                rot(q, p) = -s;
                m = rot.transpose() * m * rot;
                v = v * rot;
            }
        }
    }

    std::array<int, 6> order = {0, 1, 2, 3, 4, 5};
    std::sort(order.begin(), order.end(), [&](int i, int j) { return m(i, i) < m(j, j); });
    Eigen::Matrix<double, 6, 6> sorted;
    for (int i = 0; i < 6; ++i) {
        eigenvalues[i] = m(order[i], order[i]);
        sorted.col(i) = v.col(order[i]);
    }
    eigenvectors = sorted;
}

SmallMotion unshrink_motion(const Eigen::Matrix<double, 6, 1>& x_hat,
                            const Eigen::Vector3d& center, const Eigen::Vector3d& scale) {
    SmallMotion motion;
    motion.r = scale.cwiseInverse().cwiseProduct(x_hat.head<3>());
    motion.t = x_hat.tail<3>() - motion.r.cross(center);
    return motion;
}

GatedSolution solve_gated(const NormalEquation& eq, double theta) {
    if (eq.pair_count == 0) throw std::invalid_argument("solve: no matched pairs");
    GatedSolution out;
    out.pair_count = eq.pair_count;
    out.residual_rms = std::sqrt(std::max(0.0, eq.residual_sq_sum) / eq.pair_count);
    eigendecompose_sym6(eq.A, out.eigenvalues, out.eigenvectors);

    Eigen::Matrix<double, 6, 1> x_hat = Eigen::Matrix<double, 6, 1>::Zero();
    const double n_pairs = static_cast<double>(eq.pair_count);
    for (int i = 0; i < 6; ++i) {
        out.gated_mask[i] = out.eigenvalues[i] / n_pairs > theta;
        if (!out.gated_mask[i]) continue;
        const Eigen::Matrix<double, 6, 1> v = out.eigenvectors.col(i);
        x_hat += v * (v.dot(eq.b) / out.eigenvalues[i]);
    }
    out.shrunk_motion_norm = x_hat.norm();
    out.motion = unshrink_motion(x_hat, eq.shrink_center, eq.shrink_scale);
    return out;
}

IcpResult icp(const DepthFrame& source, const NormalMap& source_normals, const DepthFrame& target,
              const NormalMap& target_normals, const Pose& initial, const MatchParams& params) {
    IcpResult result;
    result.delta = initial;
    for (int iter = 0; iter < params.max_iterations; ++iter) {
        std::vector<PointMatch> matches = match_points(source, source_normals, target,
                                                       target_normals, result.delta, params);
        if (matches.size() < 10)
            throw TrackingLost("icp: only " + std::to_string(matches.size()) +
                               " correspondences");
        result.matches = matches.size();
        const ShrinkResult shrunk = shrink(matches, params.shrink_floor);
        const NormalEquation eq = assemble(shrunk);
        result.solution = solve_gated(eq, params.eigen_threshold);
        result.delta = apply_motion(result.delta, result.solution.motion);
        result.iterations = iter + 1;
        if (result.solution.shrunk_motion_norm < params.convergence_epsilon) break;
    }
    return result;
}

IcpResult icp(const DepthFrame& source, const DepthFrame& target,
              const NormalMap& target_normals, const Pose& initial, const MatchParams& params) {
    const NormalMap source_normals = compute_normals(source, params.normal_options);
    return icp(source, source_normals, target, target_normals, initial, params);
}

Pose initial_transform_hook(const Pose& previous, const std::optional<Pose>& external_delta) {
    return external_delta.has_value() ? compose(previous, *external_delta) : previous;
}

}  // namespace sparsefusion
