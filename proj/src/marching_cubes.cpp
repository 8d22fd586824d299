// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/marching_cubes.hpp"

#include <cmath>
#include <unordered_map>

#include "sparsefusion/render.hpp"

namespace sparsefusion {

namespace {

// Corner numbering: 0 (0,0,0), 1 (1,0,0), 2 (1,1,0), 3 (0,1,0), then the same
// square at z+1 for corners 4..7. Bit i of the cube index is set when corner i
// is inside (tsdf < 0).
constexpr int kCornerOffset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

inline bool fetch_tsdf(const SparseTsdfGrid& grid, const Eigen::Vector3i& vc, double& out) {
    const Eigen::Vector3i bc = grid.block_of_voxel(vc);
    const std::int32_t slot = grid.block_slot(bc);
    if (slot == SparseTsdfGrid::kEmpty) return false;
    const int m = grid.config().voxels_per_block_axis;
    const VoxelPayload payload = grid.block_payload(slot)[grid.local_index(vc - bc * m)];
    if (payload.tsdf_code == kChiCode) return false;
    out = dequantize_tsdf(payload.tsdf_code, grid.delta());
    return true;
}

struct CubeSample {
    double value[8];
    int index = 0;
    bool usable = false;
};

CubeSample sample_cube(const SparseTsdfGrid& grid, const Eigen::Vector3i& base) {
    CubeSample cube;
    for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3i vc = base + Eigen::Vector3i(kCornerOffset[i][0],
                                                          kCornerOffset[i][1],
                                                          kCornerOffset[i][2]);
        if (!fetch_tsdf(grid, vc, cube.value[i])) return cube;
        if (cube.value[i] < 0.0) cube.index |= 1 << i;
    }
    cube.usable = cube.index != 0 && cube.index != 255;
    return cube;
}

int cube_triangle_count(const CubeSample& cube) {
    if (!cube.usable) return 0;
    int count = 0;
    while (count < 5 && kMcTriangleTable[cube.index][3 * count] >= 0) ++count;
    return count;
}

// Canonical id of a cube edge: the lexically smaller endpoint voxel plus the
// edge axis. Shared edges of neighboring cubes map to the same id.
std::uint64_t edge_key(const Eigen::Vector3i& base, int edge, int res) {
    const int* ca = kCornerOffset[kEdgeCorners[edge][0]];
    const int* cb = kCornerOffset[kEdgeCorners[edge][1]];
    Eigen::Vector3i a = base + Eigen::Vector3i(ca[0], ca[1], ca[2]);
    Eigen::Vector3i b = base + Eigen::Vector3i(cb[0], cb[1], cb[2]);
    int axis = 0;
    for (int i = 0; i < 3; ++i)
        if (a[i] != b[i]) axis = i;
    const Eigen::Vector3i lo = a[axis] < b[axis] ? a : b;
    return (((static_cast<std::uint64_t>(lo.z()) * res) + lo.y()) * res + lo.x()) * 3 + axis;
}

}  // namespace

Mesh marching_cubes(const SparseTsdfGrid& grid, const MarchingCubesOptions& options) {
    std::vector<Eigen::Vector3i> blocks =
        options.region.has_value()
            ? grid.occupied_blocks_in_frustum(options.region->pose, options.region->intrinsics)
            : grid.allocated_blocks();

    const GridConfig& cfg = grid.config();
    const int res = cfg.voxels_per_axis();
    const int m = cfg.voxels_per_block_axis;
    const double vox = cfg.voxel_size();

    // Count pass: triangles per block.
    std::vector<std::size_t> block_tris(blocks.size(), 0);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const Eigen::Vector3i base = blocks[bi] * m;
        for (int z = 0; z < m; ++z) {
            if (base.z() + z + 1 >= res) break;
            for (int y = 0; y < m && base.y() + y + 1 < res; ++y)
                for (int x = 0; x < m && base.x() + x + 1 < res; ++x)
                    block_tris[bi] += cube_triangle_count(
                        sample_cube(grid, base + Eigen::Vector3i(x, y, z)));
        }
    }

    // Offset pass: group blocks into batches under the memory budget.
    constexpr std::size_t kBytesPerTriangle = 3 * (2 * sizeof(Eigen::Vector3f)) + 12;
    std::vector<std::size_t> batch_starts = {0};
    std::size_t batch_bytes = 0;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const std::size_t bytes = block_tris[bi] * kBytesPerTriangle;
        if (batch_bytes > 0 && batch_bytes + bytes > options.batch_memory_budget) {
            batch_starts.push_back(bi);
            batch_bytes = 0;
        }
        batch_bytes += bytes;
    }
    batch_starts.push_back(blocks.size());

    Mesh mesh;
    std::vector<std::uint32_t> pending_normals;  // vertices awaiting a face-normal fallback

    for (std::size_t batch = 0; batch + 1 < batch_starts.size(); ++batch) {
        std::unordered_map<std::uint64_t, std::uint32_t> weld;
        for (std::size_t bi = batch_starts[batch]; bi < batch_starts[batch + 1]; ++bi) {
            if (block_tris[bi] == 0) continue;
            const Eigen::Vector3i base_block = blocks[bi] * m;
            for (int z = 0; z < m; ++z) {
                if (base_block.z() + z + 1 >= res) break;
                for (int y = 0; y < m && base_block.y() + y + 1 < res; ++y) {
                    for (int x = 0; x < m && base_block.x() + x + 1 < res; ++x) {
                        const Eigen::Vector3i base = base_block + Eigen::Vector3i(x, y, z);
                        const CubeSample cube = sample_cube(grid, base);
                        if (!cube.usable) continue;
                        const std::int8_t* tris = kMcTriangleTable[cube.index];
                        for (int k = 0; k < 16 && tris[k] >= 0; k += 3) {
                            std::array<std::uint32_t, 3> idx;
                            for (int e = 0; e < 3; ++e) {
                                const int edge = tris[k + e];
                                const std::uint64_t key = edge_key(base, edge, res);
                                auto found = weld.find(key);
                                if (found != weld.end()) {
                                    idx[e] = found->second;
                                    continue;
                                }
                                const int a = kEdgeCorners[edge][0];
                                const int b = kEdgeCorners[edge][1];
                                const double va = cube.value[a];
                                const double vb = cube.value[b];
                                const double t = va / (va - vb);  // zero crossing
                                const Eigen::Vector3d pa = grid.voxel_center(
                                    base + Eigen::Vector3i(kCornerOffset[a][0],
                                                           kCornerOffset[a][1],
                                                           kCornerOffset[a][2]));
                                const Eigen::Vector3d pb = grid.voxel_center(
                                    base + Eigen::Vector3i(kCornerOffset[b][0],
                                                           kCornerOffset[b][1],
                                                           kCornerOffset[b][2]));
                                const Eigen::Vector3d pos = pa + t * (pb - pa);

                                Eigen::Vector3f normal = Eigen::Vector3f::Zero();
                                auto grad = sample_tsdf_gradient(grid, pos, vox);
                                if (!grad) grad = sample_tsdf_gradient(grid, pos, 0.5 * vox);
                                if (grad && grad->squaredNorm() > 0.0)
                                    normal = grad->normalized().cast<float>();

                                idx[e] = static_cast<std::uint32_t>(mesh.vertices.size());
                                weld.emplace(key, idx[e]);
                                mesh.vertices.push_back(pos.cast<float>());
                                mesh.normals.push_back(normal);
                                if (normal.squaredNorm() == 0.0f) pending_normals.push_back(idx[e]);
                            }
                            // The table winds triangles facing the inside; flip so
                            // right-hand-rule face normals align with the outward
                            // TSDF gradient.
                            const Eigen::Vector3d v0 = mesh.vertices[idx[0]].cast<double>();
                            const Eigen::Vector3d v1 = mesh.vertices[idx[2]].cast<double>();
                            const Eigen::Vector3d v2 = mesh.vertices[idx[1]].cast<double>();
                            if ((v1 - v0).cross(v2 - v0).norm() <= 1e-12) continue;
                            mesh.triangles.push_back({idx[0], idx[2], idx[1]});
                        }
                    }
                }
            }
        }
    }

    if (!pending_normals.empty()) {
        // Face-normal fallback where the gradient was unavailable (chi nearby).
        std::vector<Eigen::Vector3f> accum(mesh.vertices.size(), Eigen::Vector3f::Zero());
        for (const auto& tri : mesh.triangles) {
            const Eigen::Vector3f a = mesh.vertices[tri[0]];
            const Eigen::Vector3f face =
                (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a);
            for (const std::uint32_t i : tri) accum[i] += face;
        }
        for (const std::uint32_t i : pending_normals) {
            const float len = accum[i].norm();
            mesh.normals[i] = len > 0.0f ? Eigen::Vector3f(accum[i] / len)
                                         : Eigen::Vector3f::UnitZ();
        }
    }
    return mesh;
}

}  // namespace sparsefusion
