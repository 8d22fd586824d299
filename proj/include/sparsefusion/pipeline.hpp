// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsefusion/config.hpp"
#include "sparsefusion/fusion.hpp"
#include "sparsefusion/grid.hpp"
#include "sparsefusion/marching_cubes.hpp"
#include "sparsefusion/registration.hpp"
#include "sparsefusion/scene.hpp"

namespace sparsefusion {

enum class TrackingMode { Icp, GroundTruth, IcpWithHook };
enum class InputKind { Synthetic, DfrmDirectory };

struct PipelineConfig {
    GridConfig grid;
    std::size_t pool_capacity = 0;  // 0 -> N^3 / 8
    FusionParams fusion;
    MatchParams match;
    Intrinsics camera;

    InputKind input = InputKind::Synthetic;
    AnalyticScene scene;
    double render_noise_sigma0 = 0.0;
    std::string trajectory_path;
    std::string dfrm_dir;

    TrackingMode tracking = TrackingMode::Icp;
    std::string output_dir = "out";
    std::string save_grid_path;  // optional STSG snapshot of the final grid
    std::uint64_t seed = 1;
    int max_frames = -1;

    // experiment subcommands
    int experiment_steps = 200;
    int experiment_seeds = 30;
    double experiment_sigma = 2e-3;   // starting deviation, meters
    double experiment_ramp = 10.0;    // final/initial deviation ratio
    double experiment_signal = 0.0;   // constant true value, meters
    std::uint64_t memory_threshold = 1536ull << 20;

    static PipelineConfig from_file(const std::string& path);
    static PipelineConfig from_config(const KeyValueConfig& kv);
    void validate() const;
};

enum class RunStatus { Ok, TrackingLost, PoolExhausted };

struct FrameMetrics {
    int frame = 0;
    bool registered = false;
    int iterations = 0;
    std::size_t matches = 0;
    double residual_rms = 0.0;
    std::array<double, 6> lambda_over_n{};
    std::array<bool, 6> gated_mask{};
    FusionStats fusion;
    Pose estimated_pose;
    Pose reference_pose;  // trajectory entry when available
    // In-memory only: stage ordering stamps and durations (kept out of the CSV
    // so outputs stay byte-identical across runs).
    std::uint64_t seq_render = 0, seq_register = 0, seq_fuse = 0;
    double t_render = 0.0, t_register = 0.0, t_fuse = 0.0;
};

struct RunMetrics {
    RunStatus status = RunStatus::Ok;
    std::string error;
    std::vector<FrameMetrics> frames;
    std::size_t mesh_vertices = 0;
    std::size_t mesh_triangles = 0;
    double mesh_rms = -1.0;  // vs the analytic scene, synthetic input only
    double mesh_max = -1.0;
    std::uint64_t final_memory_bytes = 0;
    std::size_t final_blocks = 0;
    double share_render = 0.0, share_register = 0.0, share_fuse = 0.0;
};

/// The full acquire -> render scene -> register -> fuse loop; writes mesh.ply,
/// metrics.csv and summary.txt into output_dir. TrackingLost / PoolExhausted
/// end the run early with partial outputs and a flagged status.
RunMetrics run(const PipelineConfig& config);

struct FilterExperimentResult {
    int steps = 0;
    int seeds = 0;
    double matched_weight = 0.0;   // fixed weight matched to the Kalman gain
    double win_rate_kalman = 0.0;  // fraction of seeds with final SE <= fixed-weight SE
    std::vector<double> mean_se_simple;
    std::vector<double> mean_se_weighted;
    std::vector<double> mean_se_kalman;
};

/// Single-voxel comparison of the three filters on seeded noise sequences with
/// linearly ramping deviation; writes filters_trace.csv / filters_summary.csv.
FilterExperimentResult experiment_filters(const PipelineConfig& config);

struct MemoryExperimentRow {
    int blocks_per_axis = 0;
    int voxels_per_block_axis = 0;
    std::size_t blocks_allocated = 0;
    std::uint64_t memory_bytes = 0;
    bool exceeds_threshold = false;
    bool pool_exhausted = false;
};

/// Ground-truth-tracked fusion sweep over (N, M); writes memory.csv.
std::vector<MemoryExperimentRow> experiment_memory(const PipelineConfig& config,
                                                   const std::vector<std::pair<int, int>>& sweep,
                                                   std::uint64_t threshold_bytes = 1536ull << 20);

/// Deterministic per-frame RNG stream seed.
std::uint64_t frame_seed(std::uint64_t base, int frame);

}  // namespace sparsefusion
