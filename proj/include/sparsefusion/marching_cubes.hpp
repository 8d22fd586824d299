// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/grid.hpp"
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

struct Mesh {
    std::vector<Eigen::Vector3f> vertices;
    std::vector<Eigen::Vector3f> normals;  // unit, per vertex
    std::vector<std::array<std::uint32_t, 3>> triangles;

    bool empty() const { return triangles.empty(); }
};

/// Restricts polygonization to blocks inside this camera frustum.
struct FrustumRegion {
    Pose pose;
    Intrinsics intrinsics;
};

struct MarchingCubesOptions {
    std::optional<FrustumRegion> region;
    /// Rough per-batch output budget; blocks are grouped until their counted
    /// triangles would exceed it (count pass -> offset pass -> emit pass).
    std::size_t batch_memory_budget = 64ull << 20;
};

/// Polygonizes every cube of the allocated (and optionally frustum-filtered)
/// blocks whose 8 corners are all non-chi with at least one sign change, by
/// the standard 256-case table. Vertices welded per batch by cube-edge id;
/// normals from the TSDF gradient.
Mesh marching_cubes(const SparseTsdfGrid& grid, const MarchingCubesOptions& options = {});

// Canonical tables (corner/edge numbering in marching_cubes.cpp).
extern const std::int8_t kMcTriangleTable[256][16];
extern const std::uint16_t* mc_edge_table();

}  // namespace sparsefusion
