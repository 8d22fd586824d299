// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace sparsefusion {

/// Pinhole model. Convention: right-handed, z forward, image origin top-left,
/// pixel centers at integer coordinates.
struct Intrinsics {
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double near_plane = 0.1;
    double far_plane = 10.0;

    void validate() const;  // throws std::invalid_argument

    /// Simple symmetric camera looking down +z.
    static Intrinsics simple(int width, int height, double focal_px,
                             double near_plane = 0.1, double far_plane = 10.0);
};

struct PixelDepth {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

/// Camera-frame point of pixel (u, v) at the given depth (z = depth).
Eigen::Vector3d unproject(const Intrinsics& intr, double u, double v, double depth);

/// Pixel and depth of a camera-frame point; nullopt when z <= 0.
std::optional<PixelDepth> project(const Intrinsics& intr, const Eigen::Vector3d& p);

/// Rectangular grid of metric depths. 0 = invalid. `sigma` (optional, same
/// size) records the per-pixel noise deviation used when the frame was made.
struct DepthFrame {
    Intrinsics intrinsics;
    std::vector<float> depth;
    std::vector<float> sigma;

    DepthFrame() = default;
    explicit DepthFrame(const Intrinsics& intr)
        : intrinsics(intr), depth(static_cast<std::size_t>(intr.width) * intr.height, 0.0f) {}

    bool in_bounds(int u, int v) const {
        return u >= 0 && v >= 0 && u < intrinsics.width && v < intrinsics.height;
    }
    float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * intrinsics.width + u]; }
    float& at(int u, int v) { return depth[static_cast<std::size_t>(v) * intrinsics.width + u]; }
    bool valid(int u, int v) const { return in_bounds(u, v) && at(u, v) > 0.0f; }
    bool has_sigma() const { return !sigma.empty(); }
    float sigma_at(int u, int v) const { return sigma[static_cast<std::size_t>(v) * intrinsics.width + u]; }
    std::size_t pixel_count() const { return depth.size(); }
};

/// Per-pixel unit normals in the camera frame, oriented toward the camera
/// (n . view_dir < 0). Invalid entries are stored as the zero vector.
struct NormalMap {
    int width = 0;
    int height = 0;
    std::vector<Eigen::Vector3f> normals;

    NormalMap() = default;
    NormalMap(int w, int h) : width(w), height(h), normals(static_cast<std::size_t>(w) * h, Eigen::Vector3f::Zero()) {}

    const Eigen::Vector3f& at(int u, int v) const { return normals[static_cast<std::size_t>(v) * width + u]; }
    Eigen::Vector3f& at(int u, int v) { return normals[static_cast<std::size_t>(v) * width + u]; }
    bool valid(int u, int v) const { return at(u, v).squaredNorm() > 0.0f; }
};

/// Controls the depth-discontinuity rejection threshold:
///   threshold(z) = 3 * sigma0 * z^2 + 2 * spatial_scale.
struct NormalOptions {
    double sigma0 = 2.5e-4;
    double spatial_scale = 0.0;
};

/// Normals from central differences of unprojected neighbor points. A pixel is
/// invalid when any 4-neighbor is invalid or differs in depth by more than the
/// discontinuity threshold.
NormalMap compute_normals(const DepthFrame& frame, const NormalOptions& opts = {});

}  // namespace sparsefusion
