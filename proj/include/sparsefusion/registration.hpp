// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

/// Raised when ICP cannot find enough correspondences to keep tracking.
struct TrackingLost : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MatchParams {
    double max_distance = 0.1;                 // meters
    double max_normal_angle = 0.5235987755983; // 30 deg
    int max_iterations = 15;
    double convergence_epsilon = 1e-5;         // threshold on the shrunk motion norm
    double eigen_threshold = 0.005;            // theta
    double shrink_floor = 1e-6;                // per-axis lower bound on the shrink box
    NormalOptions normal_options;

    /// Defaults tied to the reconstruction resolution: max_distance = 10
    /// voxels, shrink box floored at one voxel.
    static MatchParams for_voxel_size(double voxel_size);
};

/// One projective correspondence: p is the source point already transformed by
/// the current pose delta, q/n the matched target point and unit normal.
struct PointMatch {
    Eigen::Vector3d p;
    Eigen::Vector3d q;
    Eigen::Vector3d n;
};

struct ShrunkMatch {
    Eigen::Vector3d p_hat;
    Eigen::Vector3d q_hat;
    Eigen::Vector3d c_hat;
    Eigen::Vector3d n;
};

struct ShrinkResult {
    std::vector<ShrunkMatch> matches;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();  // m
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();   // diagonal of S (box dimensions)
};

/// The 6x6 point-to-plane system accumulated over matches, in shrunk
/// coordinates. Unknown order: (r_hat, t_hat).
struct NormalEquation {
    Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    std::size_t pair_count = 0;
    double residual_sq_sum = 0.0;  // sum of ((p - q) . n)^2 over matches
    Eigen::Vector3d shrink_center = Eigen::Vector3d::Zero();
    Eigen::Vector3d shrink_scale = Eigen::Vector3d::Ones();
};

struct GatedSolution {
    SmallMotion motion;                        // unshrunk
    std::array<double, 6> eigenvalues{};       // ascending
    Eigen::Matrix<double, 6, 6> eigenvectors;  // columns, matching eigenvalues
    std::array<bool, 6> gated_mask{};          // true <=> lambda_i / N > theta (direction kept)
    double residual_rms = 0.0;                 // meters
    double shrunk_motion_norm = 0.0;           // |x_hat'|
    std::size_t pair_count = 0;
};

struct IcpResult {
    Pose delta;
    GatedSolution solution;
    int iterations = 0;
    std::size_t matches = 0;
};

/// Projective matching: every valid source pixel is unprojected, moved by
/// `delta`, projected into the target (nearest pixel), and paired with that
/// pixel's point and normal; rejected on distance or normal deviation.
std::vector<PointMatch> match_points(const DepthFrame& source, const NormalMap& source_normals,
                                     const DepthFrame& target, const NormalMap& target_normals,
                                     const Pose& delta, const MatchParams& params);

/// Maps the bounding box of all p_i, q_i to the unit cube:
///   p_hat = S^-1 (p - m), q_hat = S^-1 (q - m), c_hat = S^-1 (p x n - m x n),
/// with every box dimension floored at `floor` to keep S invertible.
ShrinkResult shrink(const std::vector<PointMatch>& matches, double floor = 1e-6);

/// Accumulates the shrunk normal equation; compensated summation keeps the
/// result order-independent to ~1e-10.
NormalEquation assemble(const ShrinkResult& shrunk);

/// Cyclic Jacobi eigendecomposition of a symmetric 6x6 matrix. Eigenvalues
/// ascending, eigenvectors as columns.
void eigendecompose_sym6(const Eigen::Matrix<double, 6, 6>& a,
                         std::array<double, 6>& eigenvalues,
                         Eigen::Matrix<double, 6, 6>& eigenvectors);

/// Recovers the metric motion from a shrunk solution: r = S^-1 r_hat,
/// t = t_hat - r x m. (Validated against the unshrunk system; see tests.)
SmallMotion unshrink_motion(const Eigen::Matrix<double, 6, 1>& x_hat,
                            const Eigen::Vector3d& center, const Eigen::Vector3d& scale);

/// Eigen-gated solve: directions with lambda_i / N <= theta are discarded, the
/// rest solved spectrally (equivalent to solving A x = b and projecting the
/// solution onto the kept eigenvectors, but stable when A is singular).
GatedSolution solve_gated(const NormalEquation& eq, double theta);

/// Point-to-plane ICP: match -> shrink -> assemble -> gated solve ->
/// apply_motion, until the shrunk motion norm drops below convergence_epsilon
/// or max_iterations is reached. Throws TrackingLost below 10 matches.
IcpResult icp(const DepthFrame& source, const NormalMap& source_normals,
              const DepthFrame& target, const NormalMap& target_normals, const Pose& initial,
              const MatchParams& params);
IcpResult icp(const DepthFrame& source, const DepthFrame& target,
              const NormalMap& target_normals, const Pose& initial, const MatchParams& params);

/// Seeds ICP from an externally provided delta (trajectory file, texture
/// registration, ...) composed onto the previous pose; without one the
/// previous pose is returned unchanged (no constant-velocity assumption).
Pose initial_transform_hook(const Pose& previous, const std::optional<Pose>& external_delta);

}  // namespace sparsefusion
