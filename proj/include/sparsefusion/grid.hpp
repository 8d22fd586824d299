// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

/// Reserved tsdf code meaning "no surface within the truncation band".
inline constexpr std::int8_t kChiCode = -128;
/// Largest magnitude of a non-sentinel tsdf code; codes map [-127,127] -> [-delta,delta].
inline constexpr int kTsdfCodeRange = 127;

/// Raised when allocate_block finds no free pool slot: the N/M budget was exceeded.
struct PoolExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridConfig {
    int blocks_per_axis = 16;       // N
    int voxels_per_block_axis = 8;  // M
    Eigen::Vector3d box_origin = Eigen::Vector3d::Zero();
    double box_side = 1.0;          // meters
    double truncation = 0.0;        // delta, meters; <= 0 means 4 * voxel_size

    int voxels_per_axis() const { return blocks_per_axis * voxels_per_block_axis; }
    double voxel_size() const { return box_side / voxels_per_axis(); }
    double delta() const { return truncation > 0.0 ? truncation : 4.0 * voxel_size(); }

    void validate() const;  // throws std::invalid_argument
};

/// d clamped to [-delta, delta], mapped linearly onto [-127, 127].
std::int8_t quantize_tsdf(double d, double delta);
double dequantize_tsdf(std::int8_t code, double delta);

/// chi-aware wrappers: nullopt <-> kChiCode.
std::int8_t encode_tsdf(std::optional<double> d, double delta);
std::optional<double> decode_tsdf(std::int8_t code, double delta);

/// The 8-bit auxiliary channel holds either an accumulated weight (linear over
/// [0, w_max]) or a filter variance (log scale over [p_min, p_max]; variances
/// span orders of magnitude because measurement deviation grows as z^2).
enum class AuxMode { Weight, Variance };

struct AuxQuantization {
    AuxMode mode = AuxMode::Weight;
    double w_max = 20.0;
    double p_min = 1e-8;  // m^2
    double p_max = 1e-2;  // m^2

    std::uint8_t encode(double value) const;
    double decode(std::uint8_t code) const;
};

struct VoxelPayload {
    std::int8_t tsdf_code = kChiCode;
    std::uint8_t aux_code = 0;
};

struct VoxelData {
    double tsdf = 0.0;
    double aux = 0.0;
};

/// Full-precision dense companion used in oracle/test mode; same chi semantics
/// as the quantized payloads. Limited to <= 128^3 voxels.
struct FloatShadowGrid {
    static constexpr float kChi = std::numeric_limits<float>::infinity();

    int voxels_per_axis = 0;
    std::vector<float> tsdf;
    std::vector<float> aux;

    std::size_t index(const Eigen::Vector3i& v) const {
        return (static_cast<std::size_t>(v.z()) * voxels_per_axis + v.y()) * voxels_per_axis + v.x();
    }
    static bool is_chi(float value) { return !(value < kChi); }
};

/// Two-level block-sparse TSDF volume: an N^3 offset table mapping block
/// coordinates to slots of a preallocated pool of M^3-voxel payload blocks.
///
/// Structural mutation (allocate/free) is single-writer. Reads and voxel
/// writes to distinct blocks may proceed concurrently; writers must never
/// share a block.
class SparseTsdfGrid {
public:
    static constexpr std::int32_t kEmpty = -1;

    SparseTsdfGrid(const GridConfig& config, std::size_t pool_capacity = 0,
                   const AuxQuantization& aux = {});

    const GridConfig& config() const { return config_; }
    const AuxQuantization& aux_quantization() const { return aux_; }
    double delta() const { return delta_; }
    double voxel_size() const { return config_.voxel_size(); }
    std::size_t pool_capacity() const { return pool_capacity_; }
    std::size_t allocated_count() const { return allocated_count_; }

    bool block_in_range(const Eigen::Vector3i& bc) const;
    bool voxel_in_range(const Eigen::Vector3i& vc) const;

    std::int32_t block_slot(const Eigen::Vector3i& bc) const;
    bool is_allocated(const Eigen::Vector3i& bc) const { return block_slot(bc) != kEmpty; }

    /// Pops a slot from the free list and fills it with chi. Idempotent:
    /// returns the existing slot when the block is already allocated.
    std::int32_t allocate_block(const Eigen::Vector3i& bc);

    /// Marks the block EMPTY and returns its slot to the free list. No-op on
    /// unallocated blocks. Never called automatically during scanning.
    void free_block(const Eigen::Vector3i& bc);

    /// nullopt == chi (also for any coordinate inside an EMPTY block).
    std::optional<VoxelData> read_voxel(const Eigen::Vector3i& vc) const;

    /// Writes a quantized payload. |tsdf| > delta is stored as chi. Writing a
    /// non-chi value to an unallocated block throws (fusion allocates first);
    /// writing chi to an EMPTY block is a no-op.
    void write_voxel(const Eigen::Vector3i& vc, std::optional<double> tsdf, double aux);

    /// 2 * allocated * M^3 + 4 * N^3, independent of pool preallocation slack.
    std::uint64_t memory_bytes() const;

    /// Allocated blocks whose AABB intersects the view frustum (exact
    /// separating-axis test). Near/far default to the intrinsics planes.
    std::vector<Eigen::Vector3i> occupied_blocks_in_frustum(const Pose& pose,
                                                            const Intrinsics& intrinsics,
                                                            double near_plane,
                                                            double far_plane) const;
    std::vector<Eigen::Vector3i> occupied_blocks_in_frustum(const Pose& pose,
                                                            const Intrinsics& intrinsics) const;

    std::vector<Eigen::Vector3i> allocated_blocks() const;

    // Geometry helpers. Voxel (i,j,k) center sits at origin + (i+0.5)*voxel_size.
    Eigen::Vector3d voxel_center(const Eigen::Vector3i& vc) const;
    Eigen::Vector3d block_min_corner(const Eigen::Vector3i& bc) const;
    double block_side() const { return config_.voxel_size() * config_.voxels_per_block_axis; }
    Eigen::Vector3i block_of_voxel(const Eigen::Vector3i& vc) const;
    Eigen::Vector3i block_of_point(const Eigen::Vector3d& p) const;  // may be out of range
    Eigen::Vector3i voxel_of_point(const Eigen::Vector3d& p) const;  // may be out of range

    // Raw payload access for bulk passes (fusion, rendering, snapshots).
    std::span<VoxelPayload> block_payload(std::int32_t slot);
    std::span<const VoxelPayload> block_payload(std::int32_t slot) const;
    std::size_t voxels_per_block() const { return voxels_per_block_; }
    /// Index of voxel `local` inside a block payload, x fastest.
    std::size_t local_index(const Eigen::Vector3i& local) const {
        return (static_cast<std::size_t>(local.z()) * config_.voxels_per_block_axis + local.y()) *
                   config_.voxels_per_block_axis + local.x();
    }

    // Full-precision shadow (test/oracle mode).
    void enable_shadow();
    bool has_shadow() const { return shadow_.has_value(); }
    FloatShadowGrid& shadow() { return shadow_.value(); }
    const FloatShadowGrid& shadow() const { return shadow_.value(); }

    void save_snapshot(const std::string& path) const;
    static SparseTsdfGrid load_snapshot(const std::string& path, std::size_t pool_capacity = 0);

    /// Internal-consistency audit used by tests: offset table, free list and
    /// allocated_count reconcile and no slot is double-referenced.
    void check_consistency() const;

private:
    std::size_t table_index(const Eigen::Vector3i& bc) const {
        return (static_cast<std::size_t>(bc.z()) * config_.blocks_per_axis + bc.y()) *
                   config_.blocks_per_axis + bc.x();
    }

    GridConfig config_;
    AuxQuantization aux_;
    double delta_ = 0.0;
    std::size_t voxels_per_block_ = 0;
    std::size_t pool_capacity_ = 0;
    std::size_t allocated_count_ = 0;
    std::vector<std::int32_t> offset_table_;
    std::vector<VoxelPayload> payload_pool_;
    std::vector<std::int32_t> free_list_;  // stack, lowest slot on top
    std::optional<FloatShadowGrid> shadow_;
};

}  // namespace sparsefusion
