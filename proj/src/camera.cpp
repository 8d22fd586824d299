// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsefusion {

void Intrinsics::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: non-positive image size");
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("intrinsics: non-positive focal length");
    if (!(near_plane > 0.0) || !(near_plane < far_plane))
        throw std::invalid_argument("intrinsics: need 0 < near < far");
}

Intrinsics Intrinsics::simple(int width, int height, double focal_px, double near_plane,
                              double far_plane) {
    Intrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = focal_px;
    intr.fy = focal_px;
    intr.cx = 0.5 * (width - 1);
    intr.cy = 0.5 * (height - 1);
    intr.near_plane = near_plane;
    intr.far_plane = far_plane;
    intr.validate();
    return intr;
}

Eigen::Vector3d unproject(const Intrinsics& intr, double u, double v, double depth) {
    return {(u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth};
}

std::optional<PixelDepth> project(const Intrinsics& intr, const Eigen::Vector3d& p) {
    if (!(p.z() > 0.0)) return std::nullopt;
    PixelDepth out;
    out.u = intr.fx * p.x() / p.z() + intr.cx;
    out.v = intr.fy * p.y() / p.z() + intr.cy;
    out.depth = p.z();
    return out;
}

NormalMap compute_normals(const DepthFrame& frame, const NormalOptions& opts) {
    const Intrinsics& intr = frame.intrinsics;
    NormalMap map(intr.width, intr.height);
    for (int v = 1; v + 1 < intr.height; ++v) {
        for (int u = 1; u + 1 < intr.width; ++u) {
            const float z = frame.valid(u, v) ? frame.at(u, v) : 0.0f;
            if (z <= 0.0f) continue;
            const float zl = frame.at(u - 1, v);
            const float zr = frame.at(u + 1, v);
            const float zu = frame.at(u, v - 1);
            const float zd = frame.at(u, v + 1);
            if (zl <= 0.0f || zr <= 0.0f || zu <= 0.0f || zd <= 0.0f) continue;

            const double threshold = 3.0 * opts.sigma0 * double(z) * double(z) + 2.0 * opts.spatial_scale;
            if (std::abs(zl - z) > threshold || std::abs(zr - z) > threshold ||
                std::abs(zu - z) > threshold || std::abs(zd - z) > threshold)
                continue;

            const Eigen::Vector3d du =
                unproject(intr, u + 1, v, zr) - unproject(intr, u - 1, v, zl);
            const Eigen::Vector3d dv =
                unproject(intr, u, v + 1, zd) - unproject(intr, u, v - 1, zu);
            Eigen::Vector3d n = du.cross(dv);
            const double len = n.norm();
            if (!(len > 0.0)) continue;
            n /= len;
            // Orient toward the camera.
            if (n.dot(unproject(intr, u, v, z)) > 0.0) n = -n;
            map.at(u, v) = n.cast<float>();
        }
    }
    return map;
}

}  // namespace sparsefusion
