// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace sparsefusion {

void GridConfig::validate() const {
    if (blocks_per_axis < 1 || voxels_per_block_axis < 1)
        throw std::invalid_argument("grid: N and M must be >= 1");
    if (!(box_side > 0.0)) throw std::invalid_argument("grid: box_side must be positive");
    if (delta() < 2.0 * voxel_size() - 1e-12)
        throw std::invalid_argument("grid: truncation must be >= 2 * voxel_size");
}

std::int8_t quantize_tsdf(double d, double delta) {
    const double clamped = std::clamp(d, -delta, delta);
    return static_cast<std::int8_t>(std::lround(clamped / delta * kTsdfCodeRange));
}

double dequantize_tsdf(std::int8_t code, double delta) {
    return static_cast<double>(code) / kTsdfCodeRange * delta;
}

std::int8_t encode_tsdf(std::optional<double> d, double delta) {
    return d.has_value() ? quantize_tsdf(*d, delta) : kChiCode;
}

std::optional<double> decode_tsdf(std::int8_t code, double delta) {
    if (code == kChiCode) return std::nullopt;
    return dequantize_tsdf(code, delta);
}

std::uint8_t AuxQuantization::encode(double value) const {
    if (mode == AuxMode::Weight) {
        const double clamped = std::clamp(value, 0.0, w_max);
        return static_cast<std::uint8_t>(std::lround(clamped / w_max * 255.0));
    }
    const double clamped = std::clamp(value, p_min, p_max);
    const double s = std::log(clamped / p_min) / std::log(p_max / p_min);
    return static_cast<std::uint8_t>(std::lround(s * 255.0));
}

double AuxQuantization::decode(std::uint8_t code) const {
    if (mode == AuxMode::Weight) return static_cast<double>(code) / 255.0 * w_max;
    return p_min * std::exp(static_cast<double>(code) / 255.0 * std::log(p_max / p_min));
}

SparseTsdfGrid::SparseTsdfGrid(const GridConfig& config, std::size_t pool_capacity,
                               const AuxQuantization& aux)
    : config_(config), aux_(aux) {
    config_.validate();
    delta_ = config_.delta();
    const std::size_t n = static_cast<std::size_t>(config_.blocks_per_axis);
    const std::size_t table_size = n * n * n;
    if (pool_capacity == 0) pool_capacity = std::max<std::size_t>(1, table_size / 8);
    if (pool_capacity > table_size)
        throw std::invalid_argument("grid: pool_capacity must be <= N^3");
    pool_capacity_ = pool_capacity;
    const std::size_t m = static_cast<std::size_t>(config_.voxels_per_block_axis);
    voxels_per_block_ = m * m * m;
    offset_table_.assign(table_size, kEmpty);
    payload_pool_.assign(pool_capacity_ * voxels_per_block_, VoxelPayload{});
    free_list_.resize(pool_capacity_);
    // Stack with the lowest slot on top so fresh grids allocate slot 0 first.
    for (std::size_t i = 0; i < pool_capacity_; ++i)
        free_list_[i] = static_cast<std::int32_t>(pool_capacity_ - 1 - i);
}

bool SparseTsdfGrid::block_in_range(const Eigen::Vector3i& bc) const {
    return (bc.array() >= 0).all() && (bc.array() < config_.blocks_per_axis).all();
}

bool SparseTsdfGrid::voxel_in_range(const Eigen::Vector3i& vc) const {
    return (vc.array() >= 0).all() && (vc.array() < config_.voxels_per_axis()).all();
}

std::int32_t SparseTsdfGrid::block_slot(const Eigen::Vector3i& bc) const {
    if (!block_in_range(bc)) throw std::out_of_range("grid: block coordinate out of range");
    return offset_table_[table_index(bc)];
}

std::int32_t SparseTsdfGrid::allocate_block(const Eigen::Vector3i& bc) {
    const std::int32_t existing = block_slot(bc);
    if (existing != kEmpty) return existing;
    if (free_list_.empty())
        throw PoolExhausted("grid: payload pool exhausted (" + std::to_string(pool_capacity_) +
                            " blocks); increase pool capacity or lower resolution");
    const std::int32_t slot = free_list_.back();
    free_list_.pop_back();
    offset_table_[table_index(bc)] = slot;
    ++allocated_count_;
    auto payload = block_payload(slot);
    std::fill(payload.begin(), payload.end(), VoxelPayload{});
    return slot;
}

void SparseTsdfGrid::free_block(const Eigen::Vector3i& bc) {
    const std::int32_t slot = block_slot(bc);
    if (slot == kEmpty) return;
    offset_table_[table_index(bc)] = kEmpty;
    free_list_.push_back(slot);
    --allocated_count_;
    if (shadow_.has_value()) {
        const int m = config_.voxels_per_block_axis;
        const Eigen::Vector3i base = bc * m;
        for (int z = 0; z < m; ++z)
            for (int y = 0; y < m; ++y)
                for (int x = 0; x < m; ++x) {
                    const std::size_t idx = shadow_->index(base + Eigen::Vector3i(x, y, z));
                    shadow_->tsdf[idx] = FloatShadowGrid::kChi;
                    shadow_->aux[idx] = 0.0f;
                }
    }
}

std::optional<VoxelData> SparseTsdfGrid::read_voxel(const Eigen::Vector3i& vc) const {
    if (!voxel_in_range(vc)) throw std::out_of_range("grid: voxel coordinate out of range");
    const Eigen::Vector3i bc = block_of_voxel(vc);
    const std::int32_t slot = offset_table_[table_index(bc)];
    if (slot == kEmpty) return std::nullopt;
    const int m = config_.voxels_per_block_axis;
    const VoxelPayload payload = block_payload(slot)[local_index(vc - bc * m)];
    if (payload.tsdf_code == kChiCode) return std::nullopt;
    return VoxelData{dequantize_tsdf(payload.tsdf_code, delta_), aux_.decode(payload.aux_code)};
}

void SparseTsdfGrid::write_voxel(const Eigen::Vector3i& vc, std::optional<double> tsdf, double aux) {
    if (!voxel_in_range(vc)) throw std::out_of_range("grid: voxel coordinate out of range");
    if (tsdf.has_value() && std::abs(*tsdf) > delta_) tsdf = std::nullopt;
    const Eigen::Vector3i bc = block_of_voxel(vc);
    const std::int32_t slot = offset_table_[table_index(bc)];
    if (slot == kEmpty) {
        if (!tsdf.has_value()) return;  // chi into an EMPTY block: already chi
        throw std::logic_error("grid: write to unallocated block (allocate first)");
    }
    const int m = config_.voxels_per_block_axis;
    VoxelPayload& payload = block_payload(slot)[local_index(vc - bc * m)];
    if (tsdf.has_value()) {
        payload.tsdf_code = quantize_tsdf(*tsdf, delta_);
        payload.aux_code = aux_.encode(aux);
    } else {
        payload = VoxelPayload{};
    }
    if (shadow_.has_value()) {
        const std::size_t idx = shadow_->index(vc);
        shadow_->tsdf[idx] = tsdf.has_value() ? static_cast<float>(*tsdf) : FloatShadowGrid::kChi;
        shadow_->aux[idx] = tsdf.has_value() ? static_cast<float>(aux) : 0.0f;
    }
}

std::uint64_t SparseTsdfGrid::memory_bytes() const {
    const std::uint64_t n = config_.blocks_per_axis;
    const std::uint64_t m = config_.voxels_per_block_axis;
    return 2ull * allocated_count_ * m * m * m + 4ull * n * n * n;
}

std::vector<Eigen::Vector3i> SparseTsdfGrid::allocated_blocks() const {
    std::vector<Eigen::Vector3i> out;
    out.reserve(allocated_count_);
    const int n = config_.blocks_per_axis;
    std::size_t idx = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x, ++idx)
                if (offset_table_[idx] != kEmpty) out.emplace_back(x, y, z);
    return out;
}

namespace {

struct ConvexHullPoints {
    std::vector<Eigen::Vector3d> points;

    void project(const Eigen::Vector3d& axis, double& lo, double& hi) const {
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (const auto& p : points) {
            const double d = axis.dot(p);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
};

// Exact convex-convex separating-axis test between the frustum and an AABB.
bool frustum_intersects_aabb(const ConvexHullPoints& frustum,
                             const std::vector<Eigen::Vector3d>& frustum_axes,
                             const std::vector<Eigen::Vector3d>& frustum_edges,
                             const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    ConvexHullPoints box;
    for (int i = 0; i < 8; ++i)
        box.points.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                                i & 4 ? hi.z() : lo.z());

    auto separated = [&](const Eigen::Vector3d& axis) {
        if (axis.squaredNorm() < 1e-18) return false;
        double alo, ahi, blo, bhi;
        frustum.project(axis, alo, ahi);
        box.project(axis, blo, bhi);
        return ahi < blo || bhi < alo;
    };

    static const Eigen::Vector3d box_axes[3] = {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                                                Eigen::Vector3d::UnitZ()};
    for (const auto& a : box_axes)
        if (separated(a)) return false;
    for (const auto& a : frustum_axes)
        if (separated(a)) return false;
    for (const auto& e : frustum_edges)
        for (const auto& a : box_axes)
            if (separated(e.cross(a))) return false;
    return true;
}

}  // namespace

std::vector<Eigen::Vector3i> SparseTsdfGrid::occupied_blocks_in_frustum(
    const Pose& pose, const Intrinsics& intrinsics) const {
    return occupied_blocks_in_frustum(pose, intrinsics, intrinsics.near_plane,
                                      intrinsics.far_plane);
}

std::vector<Eigen::Vector3i> SparseTsdfGrid::occupied_blocks_in_frustum(
    const Pose& pose, const Intrinsics& intrinsics, double near_plane, double far_plane) const {
    intrinsics.validate();
    // Frustum corners in world space. The image plane spans pixel area
    // [-0.5, W-0.5] x [-0.5, H-0.5] (pixel centers at integer coordinates).
    ConvexHullPoints frustum;
    const double us[2] = {-0.5, intrinsics.width - 0.5};
    const double vs[2] = {-0.5, intrinsics.height - 0.5};
    for (double z : {near_plane, far_plane})
        for (double v : {vs[0], vs[1]})
            for (double u : {us[0], us[1]})
                frustum.points.push_back(pose.apply(unproject(intrinsics, u, v, z)));

    // Face normals: near/far share the optical axis; four side planes.
    std::vector<Eigen::Vector3d> axes;
    const Eigen::Vector3d optical = pose.rotation.col(2);
    axes.push_back(optical);
    const auto corner_ray = [&](double u, double v) {
        return (pose.rotation * unproject(intrinsics, u, v, 1.0)).normalized();
    };
    const Eigen::Vector3d r00 = corner_ray(us[0], vs[0]);
    const Eigen::Vector3d r10 = corner_ray(us[1], vs[0]);
    const Eigen::Vector3d r01 = corner_ray(us[0], vs[1]);
    const Eigen::Vector3d r11 = corner_ray(us[1], vs[1]);
    axes.push_back(r00.cross(r10));  // top
    axes.push_back(r11.cross(r01));  // bottom
    axes.push_back(r01.cross(r00));  // left
    axes.push_back(r10.cross(r11));  // right

    // Edge directions: four corner rays plus the two image-plane axes.
    std::vector<Eigen::Vector3d> edges = {r00, r10, r01, r11, pose.rotation.col(0),
                                          pose.rotation.col(1)};

    std::vector<Eigen::Vector3i> out;
    const double side = block_side();
    for (const Eigen::Vector3i& bc : allocated_blocks()) {
        const Eigen::Vector3d lo = block_min_corner(bc);
        const Eigen::Vector3d hi = lo + Eigen::Vector3d::Constant(side);
        if (frustum_intersects_aabb(frustum, axes, edges, lo, hi)) out.push_back(bc);
    }
    return out;
}

Eigen::Vector3d SparseTsdfGrid::voxel_center(const Eigen::Vector3i& vc) const {
    return config_.box_origin + (vc.cast<double>() + Eigen::Vector3d::Constant(0.5)) * voxel_size();
}

Eigen::Vector3d SparseTsdfGrid::block_min_corner(const Eigen::Vector3i& bc) const {
    return config_.box_origin + bc.cast<double>() * block_side();
}

Eigen::Vector3i SparseTsdfGrid::block_of_voxel(const Eigen::Vector3i& vc) const {
    return vc / config_.voxels_per_block_axis;
}

Eigen::Vector3i SparseTsdfGrid::block_of_point(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d rel = (p - config_.box_origin) / block_side();
    return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
            static_cast<int>(std::floor(rel.z()))};
}

Eigen::Vector3i SparseTsdfGrid::voxel_of_point(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d rel = (p - config_.box_origin) / voxel_size();
    return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
            static_cast<int>(std::floor(rel.z()))};
}

std::span<VoxelPayload> SparseTsdfGrid::block_payload(std::int32_t slot) {
    return {payload_pool_.data() + static_cast<std::size_t>(slot) * voxels_per_block_,
            voxels_per_block_};
}

std::span<const VoxelPayload> SparseTsdfGrid::block_payload(std::int32_t slot) const {
    return {payload_pool_.data() + static_cast<std::size_t>(slot) * voxels_per_block_,
            voxels_per_block_};
}

void SparseTsdfGrid::enable_shadow() {
    const int res = config_.voxels_per_axis();
    if (res > 128) throw std::invalid_argument("grid: float shadow limited to <= 128^3 voxels");
    if (shadow_.has_value()) return;
    FloatShadowGrid s;
    s.voxels_per_axis = res;
    const std::size_t total = static_cast<std::size_t>(res) * res * res;
    s.tsdf.assign(total, FloatShadowGrid::kChi);
    s.aux.assign(total, 0.0f);
    shadow_ = std::move(s);
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

}  // namespace

void SparseTsdfGrid::save_snapshot(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("grid: cannot open " + path + " for writing");
    out.write("STSG", 4);
    write_raw<std::uint32_t>(out, 1u);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(config_.blocks_per_axis));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(config_.voxels_per_block_axis));
    for (int i = 0; i < 3; ++i) write_raw<double>(out, config_.box_origin[i]);
    write_raw<double>(out, config_.box_side);
    write_raw<double>(out, delta_);
    write_raw<std::uint8_t>(out, aux_.mode == AuxMode::Weight ? 0 : 1);
    write_raw<double>(out, aux_.w_max);
    write_raw<double>(out, aux_.p_min);
    write_raw<double>(out, aux_.p_max);
    out.write(reinterpret_cast<const char*>(offset_table_.data()),
              static_cast<std::streamsize>(offset_table_.size() * sizeof(std::int32_t)));
    // Allocated payloads ordered by pool slot.
    std::vector<std::int32_t> slots;
    for (const std::int32_t slot : offset_table_)
        if (slot != kEmpty) slots.push_back(slot);
    std::sort(slots.begin(), slots.end());
    for (const std::int32_t slot : slots) {
        const auto payload = block_payload(slot);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(VoxelPayload)));
    }
    if (!out) throw std::runtime_error("grid: write failed for " + path);
}

SparseTsdfGrid SparseTsdfGrid::load_snapshot(const std::string& path, std::size_t pool_capacity) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("grid: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::strncmp(magic, "STSG", 4) != 0)
        throw std::runtime_error("grid: " + path + " is not a STSG snapshot");
    const auto version = read_raw<std::uint32_t>(in);
    if (version != 1u) throw std::runtime_error("grid: unsupported STSG version");
    GridConfig config;
    config.blocks_per_axis = static_cast<int>(read_raw<std::uint32_t>(in));
    config.voxels_per_block_axis = static_cast<int>(read_raw<std::uint32_t>(in));
    for (int i = 0; i < 3; ++i) config.box_origin[i] = read_raw<double>(in);
    config.box_side = read_raw<double>(in);
    config.truncation = read_raw<double>(in);
    AuxQuantization aux;
    aux.mode = read_raw<std::uint8_t>(in) == 0 ? AuxMode::Weight : AuxMode::Variance;
    aux.w_max = read_raw<double>(in);
    aux.p_min = read_raw<double>(in);
    aux.p_max = read_raw<double>(in);

    const std::size_t n = static_cast<std::size_t>(config.blocks_per_axis);
    std::vector<std::int32_t> table(n * n * n);
    in.read(reinterpret_cast<char*>(table.data()),
            static_cast<std::streamsize>(table.size() * sizeof(std::int32_t)));

    std::vector<std::pair<std::int32_t, std::size_t>> slot_to_table;  // (slot, table index)
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i] != kEmpty) slot_to_table.emplace_back(table[i], i);
    std::sort(slot_to_table.begin(), slot_to_table.end());

    if (pool_capacity == 0)
        pool_capacity = std::max<std::size_t>(
            {std::size_t{1}, slot_to_table.size(), n * n * n / 8});
    SparseTsdfGrid grid(config, pool_capacity, aux);
    const int nn = config.blocks_per_axis;
    for (const auto& [slot, tidx] : slot_to_table) {
        const Eigen::Vector3i bc(static_cast<int>(tidx % nn), static_cast<int>((tidx / nn) % nn),
                                 static_cast<int>(tidx / (static_cast<std::size_t>(nn) * nn)));
        const std::int32_t new_slot = grid.allocate_block(bc);
        auto payload = grid.block_payload(new_slot);
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(VoxelPayload)));
    }
    if (!in) throw std::runtime_error("grid: truncated STSG snapshot " + path);
    return grid;
}

void SparseTsdfGrid::check_consistency() const {
    std::vector<bool> referenced(pool_capacity_, false);
    std::size_t used = 0;
    for (const std::int32_t slot : offset_table_) {
        if (slot == kEmpty) continue;
        if (slot < 0 || static_cast<std::size_t>(slot) >= pool_capacity_)
            throw std::logic_error("grid: offset table references slot out of range");
        if (referenced[slot]) throw std::logic_error("grid: pool slot double-referenced");
        referenced[slot] = true;
        ++used;
    }
    if (used != allocated_count_) throw std::logic_error("grid: allocated_count out of sync");
    if (used + free_list_.size() != pool_capacity_)
        throw std::logic_error("grid: free list size out of sync");
    for (const std::int32_t slot : free_list_)
        if (slot < 0 || static_cast<std::size_t>(slot) >= pool_capacity_ || referenced[slot])
            throw std::logic_error("grid: free list slot invalid or still referenced");
}

}  // namespace sparsefusion
