// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

Pose invert(const Pose& a) {
    Pose out;
    out.rotation = a.rotation.transpose();
    out.translation = -(out.rotation * a.translation);
    return out;
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return r;
}

Pose apply_motion(const Pose& pose, const SmallMotion& m) {
    const double a = m.r.x();
    const double b = m.r.y();
    const double g = m.r.z();
    Eigen::Matrix3d lin;
    lin << 1.0, -g, b,
           g, 1.0, -a,
           -b, a, 1.0;
    Pose correction;
    correction.rotation = nearest_rotation(lin);
    correction.translation = m.t;
    return compose(correction, pose);
}

bool is_rotation(const Eigen::Matrix3d& r, double tol) {
    const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace sparsefusion
