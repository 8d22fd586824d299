// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sparsefusion/frame_io.hpp"
#include "sparsefusion/mesh_io.hpp"
#include "sparsefusion/pipeline.hpp"
#include "sparsefusion/render.hpp"

namespace {

using namespace sparsefusion;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitTrackingLost = 2;
constexpr int kExitPoolExhausted = 3;

int status_code(RunStatus status) {
    switch (status) {
        case RunStatus::Ok: return kExitOk;
        case RunStatus::TrackingLost: return kExitTrackingLost;
        case RunStatus::PoolExhausted: return kExitPoolExhausted;
    }
    return kExitError;
}

std::vector<std::pair<int, int>> parse_sweep(const std::string& text) {
    std::vector<std::pair<int, int>> sweep;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto x = item.find('x');
        if (x == std::string::npos)
            throw std::runtime_error("sweep: expected entries like 16x8, got '" + item + "'");
        sweep.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
    }
    if (sweep.empty()) throw std::runtime_error("sweep: empty list");
    return sweep;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-sparse TSDF fusion pipeline"};
    app.require_subcommand(1);

    std::string config_path, tracking_override, sweep_text, grid_path, pose_row, out_dir = ".";
    std::string save_grid_path;
    int frames_override = -1;

    CLI::App* cmd_run = app.add_subcommand("run", "Run the acquire/render/register/fuse loop");
    cmd_run->add_option("--config", config_path, "Pipeline config file")->required();
    cmd_run->add_option("--frames", frames_override, "Process at most this many frames");
    cmd_run->add_option("--tracking", tracking_override, "icp|ground_truth|icp_with_hook");
    cmd_run->add_option("--save-grid", save_grid_path, "Write the final grid as an STSG snapshot");

    CLI::App* cmd_exp = app.add_subcommand("experiment", "Reproduce the evaluation experiments");
    cmd_exp->require_subcommand(1);
    CLI::App* cmd_filters =
        cmd_exp->add_subcommand("filters", "Single-voxel filter comparison, ramping variance");
    cmd_filters->add_option("--config", config_path, "Pipeline config file")->required();
    CLI::App* cmd_memory = cmd_exp->add_subcommand("memory", "Memory consumption sweep over N,M");
    cmd_memory->add_option("--config", config_path, "Pipeline config file")->required();
    cmd_memory->add_option("--sweep", sweep_text, "Comma-separated NxM list, e.g. 8x8,16x8")
        ->required();

    CLI::App* cmd_render = app.add_subcommand("render", "Raycast a grid snapshot");
    cmd_render->add_option("--grid", grid_path, "STSG snapshot")->required();
    cmd_render->add_option("--pose", pose_row, "Trajectory CSV row (12 or 13 values)")->required();
    cmd_render->add_option("--config", config_path, "Config supplying camera intrinsics");
    cmd_render->add_option("--out", out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            PipelineConfig config = PipelineConfig::from_file(config_path);
            if (frames_override >= 0) config.max_frames = frames_override;
            if (!save_grid_path.empty()) config.save_grid_path = save_grid_path;
            if (!tracking_override.empty()) {
                if (tracking_override == "icp") config.tracking = TrackingMode::Icp;
                else if (tracking_override == "ground_truth")
                    config.tracking = TrackingMode::GroundTruth;
                else if (tracking_override == "icp_with_hook")
                    config.tracking = TrackingMode::IcpWithHook;
                else throw std::runtime_error("unknown tracking mode: " + tracking_override);
            }
            const RunMetrics metrics = run(config);
            std::cout << "frames=" << metrics.frames.size()
                      << " blocks=" << metrics.final_blocks
                      << " memory_bytes=" << metrics.final_memory_bytes
                      << " mesh_vertices=" << metrics.mesh_vertices << "\n";
            if (metrics.status != RunStatus::Ok)
                std::cerr << "run aborted: " << metrics.error << "\n";
            return status_code(metrics.status);
        }
        if (cmd_filters->parsed()) {
            const PipelineConfig config = PipelineConfig::from_file(config_path);
            const FilterExperimentResult result = experiment_filters(config);
            std::cout << "matched_weight=" << result.matched_weight
                      << " win_rate_kalman=" << result.win_rate_kalman << "\n";
            return kExitOk;
        }
        if (cmd_memory->parsed()) {
            const PipelineConfig config = PipelineConfig::from_file(config_path);
            const auto rows = experiment_memory(config, parse_sweep(sweep_text),
                                                config.memory_threshold);
            for (const auto& row : rows)
                std::cout << row.blocks_per_axis << "x" << row.voxels_per_block_axis
                          << " blocks=" << row.blocks_allocated
                          << " memory_bytes=" << row.memory_bytes
                          << (row.pool_exhausted ? " pool_exhausted" : "") << "\n";
            return kExitOk;
        }
        if (cmd_render->parsed()) {
            const SparseTsdfGrid grid = SparseTsdfGrid::load_snapshot(grid_path);
            Intrinsics camera = Intrinsics::simple(320, 240, 0.55 * 320);
            if (!config_path.empty()) {
                const PipelineConfig config = PipelineConfig::from_file(config_path);
                camera = config.camera;
            }
            const TrajectoryEntry entry = parse_trajectory_row(pose_row);
            const RaycastResult result = raycast(grid, entry.pose, camera);
            std::filesystem::create_directories(out_dir);
            write_pfm(result.depth,
                      (std::filesystem::path(out_dir) / "depth.pfm").string());
            write_pgm(result.depth,
                      (std::filesystem::path(out_dir) / "depth.pgm").string());
            std::cout << "hit_pixels=" << result.stats.hit_pixels << "\n";
            return kExitOk;
        }
    } catch (const TrackingLost& e) {
        std::cerr << "tracking lost: " << e.what() << "\n";
        return kExitTrackingLost;
    } catch (const PoolExhausted& e) {
        std::cerr << "pool exhausted: " << e.what() << "\n";
        return kExitPoolExhausted;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
