// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace sparsefusion {

/// Rigid transform of the sensor in the scene frame: x_scene = R * x_camera + t.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

    static Pose identity() { return {}; }
};

/// Linearized rigid motion: r = (alpha, beta, gamma) rotations about x,y,z, t translation.
/// Meaningful only for small angles.
struct SmallMotion {
    Eigen::Vector3d r = Eigen::Vector3d::Zero();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    double norm() const { return std::sqrt(r.squaredNorm() + t.squaredNorm()); }
};

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& a);

/// Projects an arbitrary matrix to the nearest rotation (polar factor, det +1).
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

/// Builds the small-angle rotation matrix
///   [  1  -g   b ]
///   [  g   1  -a ]
///   [ -b   a   1 ]
/// from m.r, orthonormalizes it, and composes the resulting rigid correction
/// onto `pose` from the left (the motion acts in pose's target frame).
Pose apply_motion(const Pose& pose, const SmallMotion& m);

/// True when R is orthonormal with det +1 within `tol`.
bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-9);

}  // namespace sparsefusion
