// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "sparsefusion/frame_io.hpp"
#include "sparsefusion/mesh_io.hpp"
#include "sparsefusion/render.hpp"

namespace sparsefusion {

namespace fs = std::filesystem;

std::uint64_t frame_seed(std::uint64_t base, int frame) {
    // splitmix64 mix of (base, frame)
    std::uint64_t x = base + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(frame) + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

namespace {

const std::set<std::string> kKnownKeys = {
    "grid.blocks_per_axis", "grid.voxels_per_block_axis", "grid.box_origin", "grid.box_side",
    "grid.truncation", "grid.pool_capacity",
    "camera.width", "camera.height", "camera.fx", "camera.fy", "camera.cx", "camera.cy",
    "camera.near", "camera.far",
    "fusion.mode", "fusion.w_fixed", "fusion.w_max", "fusion.process_variance", "fusion.sigma0",
    "fusion.refinement_steps", "fusion.edge_downweight",
    "match.max_distance", "match.max_normal_angle_deg", "match.max_iterations",
    "match.convergence_epsilon", "match.eigen_threshold",
    "input.type", "input.trajectory", "input.dfrm_dir", "input.noise_sigma0",
    "scene.sphere", "scene.plane", "scene.box",
    "tracking.mode", "output.dir", "output.save_grid", "seed", "frames",
    "experiment.steps", "experiment.seeds", "experiment.sigma", "experiment.ramp",
    "experiment.signal", "experiment.memory_threshold"};

struct StageClock {
    std::uint64_t sequence = 0;
    std::chrono::steady_clock::time_point mark;

    std::uint64_t begin() {
        mark = std::chrono::steady_clock::now();
        return ++sequence;
    }
    double end() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - mark).count();
    }
};

std::string format_mask(const std::array<bool, 6>& mask) {
    std::string out(6, '0');
    for (int i = 0; i < 6; ++i)
        if (mask[i]) out[i] = '1';
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<FrameMetrics>& frames,
                       FusionMode mode) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("metrics: cannot open " + path + " for writing");
    out << std::setprecision(17);
    out << "frame,iterations,matches,residual_rms,l1_over_n,l2_over_n,l3_over_n,l4_over_n,"
           "l5_over_n,l6_over_n,gated_mask,mode,voxels_updated,blocks_allocated_now,"
           "blocks_total,memory_bytes\n";
    const char* mode_name = mode == FusionMode::Simple ? "simple"
                            : mode == FusionMode::Weighted ? "weighted" : "kalman";
    for (const FrameMetrics& f : frames) {
        out << f.frame << "," << f.iterations << "," << f.matches << "," << f.residual_rms;
        for (int i = 0; i < 6; ++i) out << "," << f.lambda_over_n[i];
        out << "," << format_mask(f.gated_mask) << "," << mode_name << ","
            << f.fusion.voxels_updated << "," << f.fusion.blocks_allocated_now << ","
            << f.fusion.blocks_total << "," << f.fusion.memory_bytes << "\n";
    }
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    return from_config(KeyValueConfig::parse_file(path));
}

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& kv) {
    for (const std::string& key : kv.keys())
        if (!kKnownKeys.count(key)) throw std::runtime_error("config: unknown key '" + key + "'");

    PipelineConfig c;
    c.grid.blocks_per_axis = kv.get_int("grid.blocks_per_axis", 16);
    c.grid.voxels_per_block_axis = kv.get_int("grid.voxels_per_block_axis", 8);
    c.grid.box_origin = kv.get_vec3("grid.box_origin", Eigen::Vector3d(-1, -1, 0));
    c.grid.box_side = kv.get_double("grid.box_side", 2.0);
    c.grid.truncation = kv.get_double("grid.truncation", 0.0);
    c.pool_capacity = static_cast<std::size_t>(kv.get_int("grid.pool_capacity", 0));

    const int width = kv.get_int("camera.width", 320);
    const int height = kv.get_int("camera.height", 240);
    c.camera.width = width;
    c.camera.height = height;
    c.camera.fx = kv.get_double("camera.fx", 0.55 * width);
    c.camera.fy = kv.get_double("camera.fy", c.camera.fx);
    c.camera.cx = kv.get_double("camera.cx", 0.5 * (width - 1));
    c.camera.cy = kv.get_double("camera.cy", 0.5 * (height - 1));
    c.camera.near_plane = kv.get_double("camera.near", 0.1);
    c.camera.far_plane = kv.get_double("camera.far", 10.0);

    const std::string mode = kv.get_string("fusion.mode", "simple");
    if (mode == "simple") c.fusion.mode = FusionMode::Simple;
    else if (mode == "weighted") c.fusion.mode = FusionMode::Weighted;
    else if (mode == "kalman") c.fusion.mode = FusionMode::Kalman;
    else throw std::runtime_error("config: fusion.mode must be simple|weighted|kalman");
    c.fusion.w_fixed = kv.get_double("fusion.w_fixed", 0.1);
    c.fusion.w_max = kv.get_double("fusion.w_max", 20.0);
    c.fusion.process_variance = kv.get_double("fusion.process_variance", -1.0);
    c.fusion.sigma0 = kv.get_double("fusion.sigma0", 2.5e-4);
    c.fusion.refinement_steps = kv.get_int("fusion.refinement_steps", 0);
    c.fusion.edge_downweight = kv.get_bool("fusion.edge_downweight", true);

    c.match = MatchParams::for_voxel_size(c.grid.voxel_size());
    if (kv.has("match.max_distance")) c.match.max_distance = kv.get_double("match.max_distance", 0);
    c.match.max_normal_angle = kv.get_double("match.max_normal_angle_deg", 30.0) * M_PI / 180.0;
    c.match.max_iterations = kv.get_int("match.max_iterations", 15);
    c.match.convergence_epsilon = kv.get_double("match.convergence_epsilon", 1e-5);
    c.match.eigen_threshold = kv.get_double("match.eigen_threshold", 0.005);
    c.match.normal_options.sigma0 = kv.get_double("input.noise_sigma0", 0.0);

    const std::string input = kv.get_string("input.type", "synthetic");
    if (input == "synthetic") c.input = InputKind::Synthetic;
    else if (input == "dfrm") c.input = InputKind::DfrmDirectory;
    else throw std::runtime_error("config: input.type must be synthetic|dfrm");
    c.trajectory_path = kv.get_string("input.trajectory", "");
    c.dfrm_dir = kv.get_string("input.dfrm_dir", "");
    c.render_noise_sigma0 = kv.get_double("input.noise_sigma0", 0.0);

    for (const std::string& text : kv.all("scene.sphere")) {
        const auto p = parse_double_list(text);
        if (p.size() != 4) throw std::runtime_error("config: scene.sphere needs 'cx cy cz r'");
        c.scene.add_sphere({p[0], p[1], p[2]}, p[3]);
    }
    for (const std::string& text : kv.all("scene.plane")) {
        const auto p = parse_double_list(text);
        if (p.size() != 4)
            throw std::runtime_error("config: scene.plane needs 'nx ny nz offset'");
        c.scene.add_plane({p[0], p[1], p[2]}, p[3]);
    }
    for (const std::string& text : kv.all("scene.box")) {
        const auto p = parse_double_list(text);
        if (p.size() != 6)
            throw std::runtime_error("config: scene.box needs 'cx cy cz hx hy hz'");
        Pose pose;
        pose.translation = {p[0], p[1], p[2]};
        c.scene.add_box(pose, {p[3], p[4], p[5]});
    }

    const std::string tracking = kv.get_string("tracking.mode", "icp");
    if (tracking == "icp") c.tracking = TrackingMode::Icp;
    else if (tracking == "ground_truth") c.tracking = TrackingMode::GroundTruth;
    else if (tracking == "icp_with_hook") c.tracking = TrackingMode::IcpWithHook;
    else throw std::runtime_error("config: tracking.mode must be icp|ground_truth|icp_with_hook");

    c.output_dir = kv.get_string("output.dir", "out");
    c.save_grid_path = kv.get_string("output.save_grid", "");
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
    c.max_frames = kv.get_int("frames", -1);

    c.experiment_steps = kv.get_int("experiment.steps", 200);
    c.experiment_seeds = kv.get_int("experiment.seeds", 30);
    c.experiment_sigma = kv.get_double("experiment.sigma", 2e-3);
    c.experiment_ramp = kv.get_double("experiment.ramp", 10.0);
    c.experiment_signal = kv.get_double("experiment.signal", 0.0);
    c.memory_threshold =
        static_cast<std::uint64_t>(kv.get_double("experiment.memory_threshold", 1536.0 * (1 << 20)));
    c.validate();
    return c;
}

void PipelineConfig::validate() const {
    grid.validate();
    camera.validate();
    fusion.validate();
    if (input == InputKind::Synthetic) {
        if (scene.empty()) throw std::runtime_error("config: synthetic input needs scene.*");
        if (trajectory_path.empty())
            throw std::runtime_error("config: synthetic input needs input.trajectory");
    } else if (dfrm_dir.empty()) {
        throw std::runtime_error("config: dfrm input needs input.dfrm_dir");
    }
    if (!trajectory_path.empty() && !fs::exists(trajectory_path))
        throw std::runtime_error("config: trajectory file not found: " + trajectory_path);
    if (!dfrm_dir.empty() && input == InputKind::DfrmDirectory && !fs::is_directory(dfrm_dir))
        throw std::runtime_error("config: dfrm directory not found: " + dfrm_dir);
    if (tracking == TrackingMode::GroundTruth && trajectory_path.empty())
        throw std::runtime_error("config: ground_truth tracking needs input.trajectory");
}

RunMetrics run(const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);

    std::vector<TrajectoryEntry> trajectory;
    if (!config.trajectory_path.empty()) trajectory = read_trajectory(config.trajectory_path);

    std::vector<std::string> dfrm_files;
    if (config.input == InputKind::DfrmDirectory) {
        for (const auto& entry : fs::directory_iterator(config.dfrm_dir))
            if (entry.path().extension() == ".dfrm") dfrm_files.push_back(entry.path().string());
        std::sort(dfrm_files.begin(), dfrm_files.end());
    }

    int frame_count = config.input == InputKind::Synthetic ? static_cast<int>(trajectory.size())
                                                           : static_cast<int>(dfrm_files.size());
    if (config.max_frames >= 0) frame_count = std::min(frame_count, config.max_frames);

    AuxQuantization aux;
    aux.mode = config.fusion.mode == FusionMode::Kalman ? AuxMode::Variance : AuxMode::Weight;
    aux.w_max = config.fusion.w_max;
    SparseTsdfGrid grid(config.grid, config.pool_capacity, aux);

    const SphereTraceOptions trace{256, 1e-5, config.grid.box_side};
    RunMetrics metrics;
    StageClock clock;
    Pose current_pose;  // identity until the first trajectory entry
    if (!trajectory.empty()) current_pose = trajectory.front().pose;

    for (int k = 0; k < frame_count; ++k) {
        FrameMetrics fm;
        fm.frame = k;

        // Acquisition.
        DepthFrame captured;
        if (config.input == InputKind::Synthetic) {
            NoiseModel noise{config.render_noise_sigma0, frame_seed(config.seed, k)};
            captured = render_synthetic_depth(config.scene, trajectory[k].pose, config.camera,
                                              noise, trace);
        } else {
            captured = read_dfrm(dfrm_files[k]);
        }
        if (static_cast<std::size_t>(k) < trajectory.size())
            fm.reference_pose = trajectory[k].pose;

        try {
            if (k == 0) {
                // No model yet: fuse at the trajectory's initial pose.
                fm.estimated_pose = current_pose;
            } else if (config.tracking == TrackingMode::GroundTruth) {
                fm.seq_render = clock.begin();  // scene render skipped, stamp kept monotonic
                fm.estimated_pose = trajectory[k].pose;
                current_pose = fm.estimated_pose;
            } else {
                fm.seq_render = clock.begin();
                const RaycastResult rendered = raycast(grid, current_pose, config.camera);
                fm.t_render = clock.end();

                std::optional<Pose> external;
                if (config.tracking == TrackingMode::IcpWithHook &&
                    static_cast<std::size_t>(k) < trajectory.size())
                    external = compose(invert(trajectory[k - 1].pose), trajectory[k].pose);
                const Pose initial_pose = initial_transform_hook(current_pose, external);
                const Pose initial_delta = compose(invert(current_pose), initial_pose);

                fm.seq_register = clock.begin();
                const IcpResult icp_result = icp(captured, rendered.depth, rendered.normals,
                                                 initial_delta, config.match);
                fm.t_register = clock.end();

                fm.registered = true;
                fm.iterations = icp_result.iterations;
                fm.matches = icp_result.matches;
                fm.residual_rms = icp_result.solution.residual_rms;
                for (int i = 0; i < 6; ++i)
                    fm.lambda_over_n[i] = icp_result.solution.eigenvalues[i] /
                                          static_cast<double>(icp_result.solution.pair_count);
                fm.gated_mask = icp_result.solution.gated_mask;
                fm.estimated_pose = compose(current_pose, icp_result.delta);
                current_pose = fm.estimated_pose;
            }

            fm.seq_fuse = clock.begin();
            fm.fusion = fuse_frame(grid, captured, fm.estimated_pose, config.fusion);
            fm.t_fuse = clock.end();
        } catch (const TrackingLost& e) {
            metrics.status = RunStatus::TrackingLost;
            metrics.error = e.what();
            metrics.frames.push_back(fm);
            break;
        } catch (const PoolExhausted& e) {
            metrics.status = RunStatus::PoolExhausted;
            metrics.error = e.what();
            metrics.frames.push_back(fm);
            break;
        }
        metrics.frames.push_back(fm);
    }

    // Final polygonization and outputs (also for flagged partial runs).
    if (!config.save_grid_path.empty()) grid.save_snapshot(config.save_grid_path);
    const Mesh mesh = marching_cubes(grid);
    write_ply(mesh, (fs::path(config.output_dir) / "mesh.ply").string());
    write_metrics_csv((fs::path(config.output_dir) / "metrics.csv").string(), metrics.frames,
                      config.fusion.mode);

    metrics.mesh_vertices = mesh.vertices.size();
    metrics.mesh_triangles = mesh.triangles.size();
    metrics.final_memory_bytes = grid.memory_bytes();
    metrics.final_blocks = grid.allocated_count();

    if (config.input == InputKind::Synthetic && !mesh.vertices.empty()) {
        double sq_sum = 0.0, max_abs = 0.0;
        for (const Eigen::Vector3f& v : mesh.vertices) {
            const double d = std::abs(config.scene.signed_distance(v.cast<double>()));
            sq_sum += d * d;
            max_abs = std::max(max_abs, d);
        }
        metrics.mesh_rms = std::sqrt(sq_sum / mesh.vertices.size());
        metrics.mesh_max = max_abs;
    }

    double total = 0.0, t_render = 0.0, t_register = 0.0, t_fuse = 0.0;
    for (const FrameMetrics& f : metrics.frames) {
        t_render += f.t_render;
        t_register += f.t_register;
        t_fuse += f.t_fuse;
    }
    total = t_render + t_register + t_fuse;
    if (total > 0.0) {
        metrics.share_render = t_render / total;
        metrics.share_register = t_register / total;
        metrics.share_fuse = t_fuse / total;
    }

    std::ofstream summary((fs::path(config.output_dir) / "summary.txt").string());
    summary << std::setprecision(6);
    summary << "status: "
            << (metrics.status == RunStatus::Ok ? "ok"
                : metrics.status == RunStatus::TrackingLost ? "tracking_lost" : "pool_exhausted")
            << "\n";
    if (!metrics.error.empty()) summary << "error: " << metrics.error << "\n";
    summary << "frames: " << metrics.frames.size() << "\n";
    summary << "blocks_allocated: " << metrics.final_blocks << "\n";
    summary << "memory_bytes: " << metrics.final_memory_bytes << "\n";
    summary << "mesh_vertices: " << metrics.mesh_vertices << "\n";
    summary << "mesh_triangles: " << metrics.mesh_triangles << "\n";
    if (metrics.mesh_rms >= 0.0) {
        summary << "mesh_rms_m: " << metrics.mesh_rms << "\n";
        summary << "mesh_max_m: " << metrics.mesh_max << "\n";
    }
    summary << "stage_share_render: " << metrics.share_render << "\n";
    summary << "stage_share_register: " << metrics.share_register << "\n";
    summary << "stage_share_fuse: " << metrics.share_fuse << "\n";
    return metrics;
}

FilterExperimentResult experiment_filters(const PipelineConfig& config) {
    fs::create_directories(config.output_dir);
    const int steps = config.experiment_steps;
    const int seeds = config.experiment_seeds;
    const double sigma0 = config.experiment_sigma;
    const double ramp = config.experiment_ramp;
    const double signal = config.experiment_signal;
    if (steps < 1 || seeds < 1 || sigma0 < 0.0 || ramp < 1.0)
        throw std::runtime_error("experiment: invalid steps/seeds/sigma/ramp");
    if (std::abs(signal) > config.grid.delta())
        throw std::runtime_error(
            "experiment: signal lies outside the truncation band; every filter would stay chi");
    const double delta = config.grid.delta();
    const double q = config.fusion.resolved_q(delta);

    // Parameter matching. Ramping variance (the robustness comparison): fixed
    // weight = Kalman steady-state gain at the starting deviation, so all
    // filters smooth equally in the early phase. Constant variance with Q = 0:
    // every filter reduces to the running mean (w_k = 1/k, uncapped weights,
    // gain 1/k). Zero noise: w = 1 and everything is exact after step one.
    const bool running_mean = q == 0.0 && ramp <= 1.0;
    double w_matched = 1.0;
    if (sigma0 > 0.0 && !running_mean) {
        double p_state = sigma0 * sigma0;
        double gain = 0.5;
        for (int i = 0; i < 500; ++i) {
            const double predicted = p_state + q;
            gain = predicted / (predicted + sigma0 * sigma0);
            p_state = (1.0 - gain) * predicted;
        }
        w_matched = std::clamp(gain, 1e-4, 1.0);
    }
    // Weighted steady-state gain w/(W_max + w) equals w_matched at this cap.
    const double w_max_matched =
        running_mean ? 1e18 : std::max(1.0 - w_matched, 1e-6);

    FilterExperimentResult result;
    result.steps = steps;
    result.seeds = seeds;
    result.matched_weight = w_matched;
    result.mean_se_simple.assign(steps, 0.0);
    result.mean_se_weighted.assign(steps, 0.0);
    result.mean_se_kalman.assign(steps, 0.0);

    int kalman_wins = 0;
    std::vector<std::array<double, 3>> final_se(seeds);
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(frame_seed(config.seed, s));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::optional<double> t_simple, t_weighted, t_kalman;
        double w_accum = 0.0, p_accum = 0.0;
        for (int k = 0; k < steps; ++k) {
            const double sigma = sigma0 * (1.0 + (ramp - 1.0) * k / std::max(1, steps - 1));
            const double measurement = signal + sigma * gauss(rng);
            const double w_simple = running_mean ? 1.0 / (k + 1) : w_matched;
            t_simple = fuse_simple(t_simple, measurement, w_simple, delta);
            const WeightedState ws = fuse_weighted(t_weighted, w_accum, measurement, w_matched,
                                                   w_max_matched, delta);
            t_weighted = ws.tsdf;
            w_accum = ws.weight;
            const KalmanState ks =
                fuse_kalman(t_kalman, p_accum, measurement, sigma * sigma, q, delta);
            t_kalman = ks.tsdf;
            p_accum = ks.variance;

            const double se_s = t_simple ? (*t_simple - signal) * (*t_simple - signal) : 0.0;
            const double se_w = t_weighted ? (*t_weighted - signal) * (*t_weighted - signal) : 0.0;
            const double se_k = t_kalman ? (*t_kalman - signal) * (*t_kalman - signal) : 0.0;
            result.mean_se_simple[k] += se_s / seeds;
            result.mean_se_weighted[k] += se_w / seeds;
            result.mean_se_kalman[k] += se_k / seeds;
            if (k == steps - 1) final_se[s] = {se_s, se_w, se_k};
        }
        if (final_se[s][2] <= final_se[s][0]) ++kalman_wins;
    }
    result.win_rate_kalman = static_cast<double>(kalman_wins) / seeds;

    std::ofstream trace((fs::path(config.output_dir) / "filters_trace.csv").string());
    trace << std::setprecision(17);
    trace << "step,sigma,se_simple,se_weighted,se_kalman\n";
    for (int k = 0; k < steps; ++k) {
        const double sigma = sigma0 * (1.0 + (ramp - 1.0) * k / std::max(1, steps - 1));
        trace << k << "," << sigma << "," << result.mean_se_simple[k] << ","
              << result.mean_se_weighted[k] << "," << result.mean_se_kalman[k] << "\n";
    }
    std::ofstream summary((fs::path(config.output_dir) / "filters_summary.csv").string());
    summary << std::setprecision(17);
    summary << "seed,final_se_simple,final_se_weighted,final_se_kalman\n";
    for (int s = 0; s < seeds; ++s)
        summary << s << "," << final_se[s][0] << "," << final_se[s][1] << "," << final_se[s][2]
                << "\n";
    summary << "# matched_weight=" << w_matched << " win_rate_kalman=" << result.win_rate_kalman
            << "\n";
    return result;
}

std::vector<MemoryExperimentRow> experiment_memory(const PipelineConfig& config,
                                                   const std::vector<std::pair<int, int>>& sweep,
                                                   std::uint64_t threshold_bytes) {
    fs::create_directories(config.output_dir);
    std::vector<MemoryExperimentRow> rows;
    for (const auto& [n, m] : sweep) {
        PipelineConfig local = config;
        local.grid.blocks_per_axis = n;
        local.grid.voxels_per_block_axis = m;
        local.tracking = TrackingMode::GroundTruth;
        // Adapt the pool to the sweep entry: generous headroom, capped at N^3.
        const std::size_t table = static_cast<std::size_t>(n) * n * n;
        local.pool_capacity = config.pool_capacity == 0
                                  ? std::max<std::size_t>(1, table / 2)
                                  : std::min(config.pool_capacity, table);
        local.output_dir = (fs::path(config.output_dir) /
                            ("memory_n" + std::to_string(n) + "_m" + std::to_string(m)))
                               .string();
        MemoryExperimentRow row;
        row.blocks_per_axis = n;
        row.voxels_per_block_axis = m;
        const RunMetrics metrics = run(local);
        row.blocks_allocated = metrics.final_blocks;
        row.memory_bytes = metrics.final_memory_bytes;
        row.exceeds_threshold = metrics.final_memory_bytes > threshold_bytes;
        row.pool_exhausted = metrics.status == RunStatus::PoolExhausted;
        rows.push_back(row);
    }
    std::ofstream out((fs::path(config.output_dir) / "memory.csv").string());
    out << "blocks_per_axis,voxels_per_block_axis,voxels_per_axis,blocks_allocated,memory_bytes,"
           "exceeds_threshold,pool_exhausted\n";
    for (const MemoryExperimentRow& row : rows)
        out << row.blocks_per_axis << "," << row.voxels_per_block_axis << ","
            << row.blocks_per_axis * row.voxels_per_block_axis << "," << row.blocks_allocated
            << "," << row.memory_bytes << "," << (row.exceeds_threshold ? 1 : 0) << ","
            << (row.pool_exhausted ? 1 : 0) << "\n";
    return rows;
}

}  // namespace sparsefusion
