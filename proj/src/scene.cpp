// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/scene.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace sparsefusion {

namespace {

double sphere_sdf(const AnalyticScene::Sphere& s, const Eigen::Vector3d& x) {
    return (x - s.center).norm() - s.radius;
}

double plane_sdf(const AnalyticScene::Plane& p, const Eigen::Vector3d& x) {
    return p.normal.dot(x) - p.offset;
}

double box_sdf(const AnalyticScene::Box& b, const Eigen::Vector3d& x) {
    const Eigen::Vector3d local = b.pose.rotation.transpose() * (x - b.pose.translation);
    const Eigen::Vector3d q = local.cwiseAbs() - b.half_extents;
    const Eigen::Vector3d outside = q.cwiseMax(0.0);
    return outside.norm() + std::min(q.maxCoeff(), 0.0);
}

Eigen::Vector3d box_normal(const AnalyticScene::Box& b, const Eigen::Vector3d& x) {
    const Eigen::Vector3d local = b.pose.rotation.transpose() * (x - b.pose.translation);
    // Central differences in the box frame; exact SDF makes this robust.
    const double h = 1e-6;
    Eigen::Vector3d g;
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d dp = local, dm = local;
        dp[i] += h;
        dm[i] -= h;
        const Eigen::Vector3d qp = dp.cwiseAbs() - b.half_extents;
        const Eigen::Vector3d qm = dm.cwiseAbs() - b.half_extents;
        g[i] = (qp.cwiseMax(0.0).norm() + std::min(qp.maxCoeff(), 0.0)) -
               (qm.cwiseMax(0.0).norm() + std::min(qm.maxCoeff(), 0.0));
    }
    if (g.squaredNorm() == 0.0) g = Eigen::Vector3d::UnitZ();
    return (b.pose.rotation * g).normalized();
}

}  // namespace

void AnalyticScene::add_sphere(const Eigen::Vector3d& center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("scene: sphere radius must be positive");
    spheres_.push_back({center, radius});
}

void AnalyticScene::add_plane(const Eigen::Vector3d& normal, double offset) {
    const double len = normal.norm();
    if (!(len > 0.0)) throw std::invalid_argument("scene: plane normal must be nonzero");
    planes_.push_back({normal / len, offset / len});
}

void AnalyticScene::add_box(const Pose& pose, const Eigen::Vector3d& half_extents) {
    if (!(half_extents.minCoeff() > 0.0))
        throw std::invalid_argument("scene: box half extents must be positive");
    boxes_.push_back({pose, half_extents});
}

double AnalyticScene::signed_distance(const Eigen::Vector3d& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : spheres_) best = std::min(best, sphere_sdf(s, x));
    for (const auto& p : planes_) best = std::min(best, plane_sdf(p, x));
    for (const auto& b : boxes_) best = std::min(best, box_sdf(b, x));
    return best;
}

Eigen::Vector3d AnalyticScene::normal_at(const Eigen::Vector3d& x) const {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Vector3d n = Eigen::Vector3d::UnitZ();
    for (const auto& s : spheres_) {
        const double d = sphere_sdf(s, x);
        if (d < best) {
            best = d;
            const Eigen::Vector3d r = x - s.center;
            n = r.squaredNorm() > 0.0 ? r.normalized() : Eigen::Vector3d::UnitZ();
        }
    }
    for (const auto& p : planes_) {
        const double d = plane_sdf(p, x);
        if (d < best) {
            best = d;
            n = p.normal;
        }
    }
    for (const auto& b : boxes_) {
        const double d = box_sdf(b, x);
        if (d < best) {
            best = d;
            n = box_normal(b, x);
        }
    }
    return n;
}

DepthFrame render_synthetic_depth(const AnalyticScene& scene, const Pose& camera_pose,
                                  const Intrinsics& intrinsics, const NoiseModel& noise,
                                  const SphereTraceOptions& trace) {
    intrinsics.validate();
    DepthFrame frame(intrinsics);
    const bool noisy = noise.sigma0 > 0.0;
    if (noisy) frame.sigma.assign(frame.pixel_count(), 0.0f);
    if (scene.empty()) return frame;

    const double tolerance = trace.tolerance_scale * trace.domain_size;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int v = 0; v < intrinsics.height; ++v) {
        for (int u = 0; u < intrinsics.width; ++u) {
            const Eigen::Vector3d dir_cam = unproject(intrinsics, u, v, 1.0).normalized();
            const Eigen::Vector3d dir = camera_pose.rotation * dir_cam;
            const double t_near = intrinsics.near_plane / dir_cam.z();
            const double t_far = intrinsics.far_plane / dir_cam.z();

            double t = t_near;
            double depth = 0.0;
            for (int step = 0; step < trace.max_steps && t <= t_far; ++step) {
                const Eigen::Vector3d x = camera_pose.translation + t * dir;
                const double d = scene.signed_distance(x);
                if (d < tolerance) {
                    depth = t * dir_cam.z();
                    break;
                }
                t += d;
            }
            if (depth <= 0.0) continue;
            if (noisy) {
                const double sigma = noise.sigma0 * depth * depth;
                depth += sigma * gauss(rng);
                frame.sigma[static_cast<std::size_t>(v) * intrinsics.width + u] =
                    static_cast<float>(sigma);
            }
            if (depth < intrinsics.near_plane || depth > intrinsics.far_plane) {
                if (noisy) frame.sigma[static_cast<std::size_t>(v) * intrinsics.width + u] = 0.0f;
                continue;
            }
            frame.at(u, v) = static_cast<float>(depth);
        }
    }
    return frame;
}

std::vector<Pose> orbit_trajectory(const Eigen::Vector3d& target, double radius, int frames,
                                   const Eigen::Vector3d& axis, double start_angle, double arc) {
    if (frames < 0) throw std::invalid_argument("orbit: negative frame count");
    const Eigen::Vector3d up = axis.normalized();
    // Some reference direction orthogonal to the orbit axis.
    Eigen::Vector3d ref = up.cross(Eigen::Vector3d::UnitZ());
    if (ref.squaredNorm() < 1e-12) ref = up.cross(Eigen::Vector3d::UnitX());
    ref.normalize();
    const Eigen::Vector3d ref2 = up.cross(ref);

    std::vector<Pose> out;
    out.reserve(frames);
    for (int k = 0; k < frames; ++k) {
        const double angle = start_angle + (frames > 1 ? arc * k / frames : 0.0);
        const Eigen::Vector3d offset = radius * (std::cos(angle) * ref + std::sin(angle) * ref2);
        Pose pose;
        pose.translation = target + offset;
        const Eigen::Vector3d forward = (target - pose.translation).normalized();
        Eigen::Vector3d right = forward.cross(up);
        if (right.squaredNorm() < 1e-12) right = forward.cross(ref);
        right.normalize();
        const Eigen::Vector3d down = forward.cross(right).normalized();
        pose.rotation.col(0) = right;
        pose.rotation.col(1) = down;
        pose.rotation.col(2) = forward;
        out.push_back(pose);
    }
    return out;
}

}  // namespace sparsefusion
