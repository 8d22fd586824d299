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

enum class FusionMode { Simple, Weighted, Kalman };

struct FusionParams {
    FusionMode mode = FusionMode::Simple;
    double w_fixed = 0.1;            // Simple: fixed update weight, in (0, 1]
    double w_max = 20.0;             // Weighted: accumulated weight bound
    double process_variance = -1.0;  // Kalman Q, m^2; negative -> (0.1 * tsdf step)^2
    double sigma0 = 2.5e-4;          // 1/m, measurement deviation sigma(z) = sigma0 z^2
    double delta = 0.0;              // meters; <= 0 -> taken from the grid
    int refinement_steps = 0;        // gradient steps refining T_k in the depth map
    bool edge_downweight = true;     // cos(view angle) scaling + halving near depth edges
    double min_variance = 1e-12;     // m^2 floor keeping p_k positive on noise-free data

    void validate() const;
    double resolved_q(double delta) const;
};

/// Per-voxel measurement: T_k (nullopt == chi), its variance p_k and weight w_k.
struct MeasurementSample {
    std::optional<double> tsdf;
    double variance = 0.0;  // p_k, m^2
    double weight = 0.0;    // w_k
};

/// Per-frame data reused across the per-voxel measurement estimates: normals
/// for the view-angle weighting and a mask of pixels near depth edges.
struct MeasurementContext {
    const DepthFrame* frame = nullptr;
    Pose camera_from_world;  // inverse sensor pose
    NormalMap normals;
    std::vector<std::uint8_t> near_edge;
    bool downweight = false;

    static MeasurementContext make(const DepthFrame& frame, const Pose& pose,
                                   const FusionParams& params);
};

/// Projects the voxel center x onto the depth map and returns
/// T_k = measured_depth - camera_depth(x) (positive in front of the surface);
/// chi when the pixel is invalid or |T_k| > delta.
MeasurementSample estimate_measurement(const DepthFrame& frame, const Pose& pose,
                                       const Eigen::Vector3d& voxel_center,
                                       const FusionParams& params);
MeasurementSample estimate_measurement(const MeasurementContext& ctx,
                                       const Eigen::Vector3d& voxel_center,
                                       const FusionParams& params);

struct UpdateLists {
    std::vector<Eigen::Vector3i> allocate;  // blocks intersected by the truncation shell
    std::vector<Eigen::Vector3i> update;    // other visible already-allocated blocks
};

/// Samples the measured surface on a pixel stride of ceil(M/2) with three
/// samples across [-delta, +delta] along each ray; blocks hit by samples are
/// to be allocated, remaining visible allocated blocks only updated.
UpdateLists select_update_blocks(const SparseTsdfGrid& grid, const DepthFrame& frame,
                                 const Pose& pose);

// Scalar integration rules. All require T_k != chi and apply the |T| > delta
// -> chi cutoff to their result.
std::optional<double> fuse_simple(std::optional<double> tsdf, double tsdf_k, double w_k,
                                  double delta);

struct WeightedState {
    std::optional<double> tsdf;
    double weight = 0.0;
};
WeightedState fuse_weighted(std::optional<double> tsdf, double weight, double tsdf_k, double w_k,
                            double w_max, double delta);

struct KalmanState {
    std::optional<double> tsdf;
    double variance = 0.0;
};
KalmanState fuse_kalman(std::optional<double> tsdf, double variance, double tsdf_k, double p_k,
                        double q, double delta);

struct FusionStats {
    std::size_t voxels_updated = 0;
    std::size_t blocks_allocated_now = 0;
    std::size_t blocks_total = 0;
    std::uint64_t memory_bytes = 0;
};

/// One full integration step: select blocks, allocate, and run the configured
/// filter over every voxel with a non-chi measurement.
FusionStats fuse_frame(SparseTsdfGrid& grid, const DepthFrame& frame, const Pose& pose,
                       const FusionParams& params);

}  // namespace sparsefusion
