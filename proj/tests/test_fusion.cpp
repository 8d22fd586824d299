// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "sparsefusion/fusion.hpp"
#include "sparsefusion/scene.hpp"
#include "dense_oracle.hpp"
#include "test_utils.hpp"

using namespace sparsefusion;
using namespace sparsefusion::testutil;

namespace {

GridConfig wall_grid_config() {
    GridConfig cfg;
    cfg.blocks_per_axis = 8;
    cfg.voxels_per_block_axis = 8;
    cfg.box_origin = {-1.0, -1.0, 0.5};
    cfg.box_side = 2.0;
    return cfg;
}

AnalyticScene wall_scene(double z = 1.5) {
    AnalyticScene scene;
    scene.add_plane({0.0, 0.0, -1.0}, -z);  // plane z = const facing the camera
    return scene;
}

FusionParams simple_params(double delta) {
    FusionParams params;
    params.mode = FusionMode::Simple;
    params.delta = delta;
    params.edge_downweight = false;
    return params;
}

}  // namespace

TEST_CASE("estimate_measurement: projective distance with the chi cutoffs") {
    const AnalyticScene scene = wall_scene(2.0);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    const DepthFrame frame = render_synthetic_depth(scene, Pose::identity(), intr);
    FusionParams params = simple_params(0.1);
    params.sigma0 = 2.5e-4;

    // Voxel exactly on the measured surface.
    const auto on_surface = estimate_measurement(frame, Pose::identity(), {0.0, 0.0, 2.0}, params);
    REQUIRE(on_surface.tsdf.has_value());
    CHECK(std::abs(*on_surface.tsdf) < 1e-6);
    // p_k = (sigma0 * z^2)^2 at z = 2.
    CHECK(on_surface.variance == doctest::Approx(1e-6).epsilon(1e-3));
    CHECK(on_surface.weight == params.w_fixed);

    // In front of the surface inside the band: positive (outside).
    const auto in_front =
        estimate_measurement(frame, Pose::identity(), {0.0, 0.0, 2.0 - 0.05}, params);
    REQUIRE(in_front.tsdf.has_value());
    CHECK(*in_front.tsdf == doctest::Approx(0.05).epsilon(1e-3));

    // Behind the surface inside the band: negative (inside).
    const auto behind =
        estimate_measurement(frame, Pose::identity(), {0.0, 0.0, 2.0 + 0.05}, params);
    REQUIRE(behind.tsdf.has_value());
    CHECK(*behind.tsdf == doctest::Approx(-0.05).epsilon(1e-3));

    // 2 delta in front of the surface -> chi; far behind -> chi.
    CHECK(!estimate_measurement(frame, Pose::identity(), {0.0, 0.0, 1.8}, params).tsdf);
    CHECK(!estimate_measurement(frame, Pose::identity(), {0.0, 0.0, 2.2}, params).tsdf);
    // Behind the camera / outside the image -> chi.
    CHECK(!estimate_measurement(frame, Pose::identity(), {0.0, 0.0, -1.0}, params).tsdf);
    CHECK(!estimate_measurement(frame, Pose::identity(), {5.0, 0.0, 2.0}, params).tsdf);
}

TEST_CASE("estimate_measurement prefers the recorded sigma plane") {
    const AnalyticScene scene = wall_scene(2.0);
    Intrinsics intr = Intrinsics::simple(32, 24, 28.0);
    const DepthFrame frame =
        render_synthetic_depth(scene, Pose::identity(), intr, NoiseModel{1e-4, 7});
    REQUIRE(frame.has_sigma());
    FusionParams params = simple_params(0.2);
    params.sigma0 = 123.0;  // would dominate if the recorded plane were ignored
    const auto sample = estimate_measurement(frame, Pose::identity(), {0.0, 0.0, 2.0}, params);
    REQUIRE(sample.tsdf.has_value());
    const double recorded = frame.sigma_at(16, 12);
    CHECK(sample.variance == doctest::Approx(recorded * recorded).epsilon(1e-6));
}

TEST_CASE("edge down-weighting halves the weight near depth discontinuities") {
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0);
    DepthFrame frame(intr);
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) frame.at(u, v) = u < 32 ? 1.0f : 1.6f;
    FusionParams params;
    params.mode = FusionMode::Simple;
    params.delta = 0.1;
    params.edge_downweight = true;
    const MeasurementContext ctx = MeasurementContext::make(frame, Pose::identity(), params);

    // Pixel u=16 is far from the jump, u=29 within the two-pixel halo, u=31
    // right at it (no usable normal there: rejected outright).
    const Eigen::Vector3d far_from_edge = unproject(intr, 16, 24, 1.0);
    const Eigen::Vector3d near_edge = unproject(intr, 29, 24, 1.0);
    const Eigen::Vector3d at_edge = unproject(intr, 31, 24, 1.0);
    const auto clean = estimate_measurement(ctx, far_from_edge, params);
    const auto edgy = estimate_measurement(ctx, near_edge, params);
    REQUIRE(clean.tsdf.has_value());
    REQUIRE(edgy.tsdf.has_value());
    CHECK(edgy.weight < 0.6 * clean.weight);
    CHECK(edgy.variance > 1.5 * clean.variance);
    CHECK(!estimate_measurement(ctx, at_edge, params).tsdf.has_value());
}

TEST_CASE("measurement refinement does not worsen the estimate on a slanted plane") {
    AnalyticScene scene;
    scene.add_plane(Eigen::Vector3d(0.35, 0.0, -1.0).normalized(), -1.2);
    Intrinsics intr = Intrinsics::simple(96, 72, 80.0);
    const DepthFrame frame = render_synthetic_depth(scene, Pose::identity(), intr);
    FusionParams plain = simple_params(0.15);
    FusionParams refined = plain;
    refined.refinement_steps = 3;

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(-0.2, 0.2), uz(-0.08, 0.08);
    double err_plain = 0.0, err_refined = 0.0;
    int used = 0;
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector3d probe(ux(rng), ux(rng), 1.35 + ux(rng) * 0.3 + uz(rng));
        const auto a = estimate_measurement(frame, Pose::identity(), probe, plain);
        const auto b = estimate_measurement(frame, Pose::identity(), probe, refined);
        if (!a.tsdf || !b.tsdf) continue;
        const double true_dist = std::abs(scene.signed_distance(probe));
        const double ea = std::abs(std::abs(*a.tsdf) - true_dist);
        const double eb = std::abs(std::abs(*b.tsdf) - true_dist);
        CHECK(eb <= ea + 1e-3);  // never much worse pointwise
        err_plain += ea;
        err_refined += eb;
        ++used;
    }
    REQUIRE(used > 100);
    // The slant makes the projective estimate overshoot; refinement removes
    // most of that bias.
    CHECK(err_refined < 0.7 * err_plain);
}

TEST_CASE("fuse_simple follows the linear blend with the chi branches") {
    const double delta = 1.0;
    CHECK(fuse_simple(std::nullopt, 0.5, 0.3, delta).value() == 0.5);
    CHECK(fuse_simple(0.2, 0.4, 0.5, delta).value() == doctest::Approx(0.3));
    CHECK(!fuse_simple(0.9, 1.2, 0.9, 1.0).has_value() ==
          (std::abs(0.1 * 0.9 + 0.9 * 1.2) > 1.0));
    // Result magnitude just above delta becomes chi.
    CHECK(!fuse_simple(std::nullopt, 1.01, 1.0, 1.0).has_value());
}

TEST_CASE("fuse_weighted accumulates a running weighted mean capped at w_max") {
    const double delta = 10.0;
    WeightedState s = fuse_weighted(std::nullopt, 0.0, 4.0, 0.5, 20.0, delta);
    CHECK(s.tsdf.value() == 4.0);
    CHECK(s.weight == 0.5);

    // Equal weights: running mean of the sequence.
    const double values[5] = {1.0, 3.0, 2.0, 5.0, -1.0};
    std::optional<double> tsdf;
    double weight = 0.0;
    double mean = 0.0;
    for (int k = 0; k < 5; ++k) {
        const WeightedState next = fuse_weighted(tsdf, weight, values[k], 1.0, 100.0, delta);
        tsdf = next.tsdf;
        weight = next.weight;
        mean = (mean * k + values[k]) / (k + 1);
        CHECK(tsdf.value() == doctest::Approx(mean).epsilon(1e-12));
    }

    // The cap holds and stays.
    WeightedState capped{0.0, 20.0};
    capped = fuse_weighted(capped.tsdf.has_value() ? capped.tsdf : std::optional<double>(0.0),
                           20.0, 1.0, 0.7, 20.0, delta);
    CHECK(capped.weight == 20.0);
}

TEST_CASE("fuse_kalman: gain blending and the averaging reduction") {
    // Symmetric gain example.
    const KalmanState s = fuse_kalman(0.0, 1.0, 1.0, 1.0, 0.0, 10.0);
    CHECK(s.tsdf.value() == doctest::Approx(0.5));
    CHECK(s.variance == doctest::Approx(0.5));

    const KalmanState init = fuse_kalman(std::nullopt, 0.0, 0.1, 1e-6, 0.0, 10.0);
    CHECK(init.tsdf.value() == 0.1);
    CHECK(init.variance == 1e-6);

    // Q = 0 with constant p reduces to the sample mean with variance p/n.
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    const double p = 2.5e-5;
    std::vector<double> samples;
    std::optional<double> tsdf;
    double variance = 0.0;
    for (int n = 1; n <= 50; ++n) {
        const double value = 0.02 + 0.005 * g(rng);
        samples.push_back(value);
        const KalmanState next = fuse_kalman(tsdf, variance, value, p, 0.0, 10.0);
        tsdf = next.tsdf;
        variance = next.variance;
        double mean = 0.0;
        for (double v : samples) mean += v;
        mean /= samples.size();
        CHECK(std::abs(*tsdf - mean) < 1e-12);
        CHECK(std::abs(variance - p / samples.size()) < 1e-12);
    }
}

TEST_CASE("select_update_blocks covers every shell block of a plane") {
    const GridConfig cfg = wall_grid_config();
    SparseTsdfGrid grid(cfg, 256);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    const double z_plane = 1.5;
    const DepthFrame frame = render_synthetic_depth(wall_scene(z_plane), Pose::identity(), intr);

    const UpdateLists lists = select_update_blocks(grid, frame, Pose::identity());
    CHECK(!lists.allocate.empty());
    CHECK(lists.update.empty());  // nothing allocated yet

    const double delta = grid.delta();
    const double side = grid.block_side();
    std::set<std::array<int, 3>> allocated;
    for (const auto& bc : lists.allocate) {
        allocated.insert({bc.x(), bc.y(), bc.z()});
        // Soundness: every selected block overlaps the truncation slab.
        const double z_lo = grid.block_min_corner(bc).z();
        CHECK(z_lo <= z_plane + delta);
        CHECK(z_lo + side >= z_plane - delta);
    }

    // Completeness on the safely-visible interior: every block whose AABB
    // meets the slab and sits well inside the sampled footprint is selected.
    int expected = 0;
    for (int bz = 0; bz < cfg.blocks_per_axis; ++bz)
        for (int by = 0; by < cfg.blocks_per_axis; ++by)
            for (int bx = 0; bx < cfg.blocks_per_axis; ++bx) {
                const Eigen::Vector3d lo = grid.block_min_corner({bx, by, bz});
                const Eigen::Vector3d hi = lo + Eigen::Vector3d::Constant(side);
                if (hi.z() < z_plane - delta || lo.z() > z_plane + delta) continue;
                if (lo.x() < -0.55 || hi.x() > 0.55 || lo.y() < -0.4 || hi.y() > 0.4) continue;
                ++expected;
                CHECK(allocated.count({bx, by, bz}) == 1);
            }
    CHECK(expected >= 8);
}

TEST_CASE("an allocated block in free space is updated but not (re)allocated") {
    const GridConfig cfg = wall_grid_config();
    SparseTsdfGrid grid(cfg, 256);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    const DepthFrame frame = render_synthetic_depth(wall_scene(1.5), Pose::identity(), intr);

    // Block in front of the surface, on the optical axis.
    const Eigen::Vector3i free_space = grid.block_of_point({0.0, 0.0, 0.9});
    grid.allocate_block(free_space);
    const UpdateLists lists = select_update_blocks(grid, frame, Pose::identity());
    const auto in_list = [&](const std::vector<Eigen::Vector3i>& list, const Eigen::Vector3i& bc) {
        for (const auto& b : list)
            if (b == bc) return true;
        return false;
    };
    CHECK(in_list(lists.update, free_space));
    CHECK(!in_list(lists.allocate, free_space));
}

TEST_CASE("nothing is selected when the surface is outside the frustum") {
    SparseTsdfGrid grid(wall_grid_config(), 64);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    Pose away;  // turn the camera 180 degrees: the scene volume is behind it
    away.rotation = Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const DepthFrame frame = render_synthetic_depth(wall_scene(1.5), away, intr);
    const UpdateLists lists = select_update_blocks(grid, frame, away);
    CHECK(lists.allocate.empty());
    CHECK(lists.update.empty());
}

TEST_CASE("fuse_frame places the stored zero crossing within one voxel of the surface") {
    GridConfig cfg;
    cfg.blocks_per_axis = 8;
    cfg.voxels_per_block_axis = 8;
    cfg.box_origin = {-0.75, -0.75, 0.55};
    cfg.box_side = 1.5;
    SparseTsdfGrid grid(cfg, 512);
    AnalyticScene scene;
    scene.add_sphere({0.0, 0.0, 1.3}, 0.4);
    Intrinsics intr = Intrinsics::simple(128, 96, 110.0, 0.1, 10.0);
    const DepthFrame frame = render_synthetic_depth(scene, Pose::identity(), intr);
    FusionParams params = simple_params(0.0);
    const FusionStats stats = fuse_frame(grid, frame, Pose::identity(), params);
    CHECK(stats.voxels_updated > 1000);
    CHECK(stats.blocks_total > 10);
    CHECK(stats.memory_bytes == grid.memory_bytes());

    const double vox = grid.voxel_size();
    const int res = cfg.voxels_per_axis();
    int crossings = 0;
    for (int z = 0; z + 1 < res; ++z)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                const auto a = grid.read_voxel({x, y, z});
                const auto b = grid.read_voxel({x, y, z + 1});
                if (!a || !b) continue;
                if (a->tsdf > 0.0 && b->tsdf < 0.0) {
                    const double t = a->tsdf / (a->tsdf - b->tsdf);
                    const Eigen::Vector3d p = grid.voxel_center({x, y, z}) +
                                              t * (grid.voxel_center({x, y, z + 1}) -
                                                   grid.voxel_center({x, y, z}));
                    CHECK(std::abs(scene.signed_distance(p)) <= vox);
                    ++crossings;
                }
            }
    CHECK(crossings > 300);
}

TEST_CASE("re-fusing the same noise-free frame is a fixed point (simple mode)") {
    SparseTsdfGrid grid(wall_grid_config(), 256);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    const DepthFrame frame = render_synthetic_depth(wall_scene(1.5), Pose::identity(), intr);
    FusionParams params = simple_params(0.0);
    params.w_fixed = 0.3;
    fuse_frame(grid, frame, Pose::identity(), params);

    std::vector<std::optional<VoxelData>> first;
    const int res = grid.config().voxels_per_axis();
    for (int z = 0; z < res; ++z)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) first.push_back(grid.read_voxel({x, y, z}));

    fuse_frame(grid, frame, Pose::identity(), params);
    std::size_t idx = 0;
    const double step = grid.delta() / kTsdfCodeRange;
    for (int z = 0; z < res; ++z)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x, ++idx) {
                const auto second = grid.read_voxel({x, y, z});
                REQUIRE(second.has_value() == first[idx].has_value());
                if (second) CHECK(std::abs(second->tsdf - first[idx]->tsdf) <= step);
            }
}

TEST_CASE("a frame viewing empty space touches no voxels") {
    SparseTsdfGrid grid(wall_grid_config(), 64);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    AnalyticScene far_scene = wall_scene(9.0);  // surface far outside the box
    const DepthFrame frame = render_synthetic_depth(far_scene, Pose::identity(), intr);
    const FusionStats stats = fuse_frame(grid, frame, Pose::identity(), simple_params(0.0));
    CHECK(stats.voxels_updated == 0);
    CHECK(stats.blocks_total == 0);
}

TEST_CASE("fusion never stores a non-chi value beyond the truncation band") {
    SparseTsdfGrid grid(wall_grid_config(), 256);
    Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
    FusionParams params;
    params.mode = FusionMode::Weighted;
    params.edge_downweight = true;
    const AnalyticScene scene = wall_scene(1.5);
    for (int k = 0; k < 5; ++k) {
        const DepthFrame frame = render_synthetic_depth(
            scene, Pose::identity(), intr, NoiseModel{2e-3, 100 + static_cast<std::uint64_t>(k)});
        fuse_frame(grid, frame, Pose::identity(), params);
    }
    const double delta = grid.delta();
    const int res = grid.config().voxels_per_axis();
    for (int z = 0; z < res; ++z)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                const auto v = grid.read_voxel({x, y, z});
                if (v) CHECK(std::abs(v->tsdf) <= delta + 1e-12);
            }
}

TEST_CASE("weighted mode converges faster than simple mode early on") {
    // Single-voxel sequences, MSE aggregated over seeds after 5 frames.
    const double delta = 1.0;
    const double w = 0.1;
    const double sigma = 0.05;
    double mse_simple = 0.0, mse_weighted = 0.0;
    for (int seed = 0; seed < 200; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, sigma);
        std::optional<double> ts, tw;
        double weight = 0.0;
        for (int k = 0; k < 5; ++k) {
            const double value = g(rng);
            ts = fuse_simple(ts, value, w, delta);
            const WeightedState next = fuse_weighted(tw, weight, value, w, 20.0, delta);
            tw = next.tsdf;
            weight = next.weight;
        }
        mse_simple += *ts * *ts;
        mse_weighted += *tw * *tw;
    }
    CHECK(mse_weighted <= mse_simple);
}

TEST_CASE("sparse fusion in float-shadow mode matches a dense brute-force oracle") {
    for (FusionMode mode : {FusionMode::Simple, FusionMode::Weighted, FusionMode::Kalman}) {
        GridConfig cfg;
        cfg.blocks_per_axis = 4;
        cfg.voxels_per_block_axis = 8;
        cfg.box_origin = {-0.6, -0.6, 0.8};
        cfg.box_side = 1.2;
        AuxQuantization aux;
        aux.mode = mode == FusionMode::Kalman ? AuxMode::Variance : AuxMode::Weight;
        SparseTsdfGrid grid(cfg, 64, aux);
        grid.enable_shadow();
        DenseOracle oracle(cfg.voxels_per_axis());

        AnalyticScene scene;
        scene.add_sphere({0.05, -0.05, 1.35}, 0.3);
        Intrinsics intr = Intrinsics::simple(64, 48, 55.0, 0.1, 10.0);
        FusionParams params;
        params.mode = mode;
        params.edge_downweight = true;

        for (int frame_idx = 0; frame_idx < 2; ++frame_idx) {
            const Pose pose = orbit_trajectory({0.05, -0.05, 1.35}, 1.35, 8)[frame_idx];
            const DepthFrame frame = render_synthetic_depth(
                scene, pose, intr, NoiseModel{1e-3, static_cast<std::uint64_t>(frame_idx)});
            const UpdateLists lists = select_update_blocks(grid, frame, pose);
            oracle.apply(grid, lists, frame, pose, params);
            fuse_frame(grid, frame, pose, params);
        }

        const FloatShadowGrid& shadow = grid.shadow();
        std::size_t non_chi = 0;
        for (std::size_t i = 0; i < shadow.tsdf.size(); ++i) {
            CHECK(shadow.tsdf[i] == oracle.tsdf[i]);
            CHECK(shadow.aux[i] == oracle.aux[i]);
            if (!FloatShadowGrid::is_chi(shadow.tsdf[i])) ++non_chi;
        }
        CHECK(non_chi > 500);
    }
}

TEST_CASE("fuse_frame rejects a grid whose aux mode mismatches the filter") {
    AuxQuantization aux;
    aux.mode = AuxMode::Weight;
    SparseTsdfGrid grid(wall_grid_config(), 64, aux);
    Intrinsics intr = Intrinsics::simple(32, 24, 28.0);
    const DepthFrame frame = render_synthetic_depth(wall_scene(1.5), Pose::identity(), intr);
    FusionParams params;
    params.mode = FusionMode::Kalman;
    CHECK_THROWS_AS(fuse_frame(grid, frame, Pose::identity(), params), std::invalid_argument);
}

TEST_CASE("fusion params validate their ranges") {
    FusionParams params;
    params.w_fixed = 0.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params.w_fixed = 1.0;  // 1.0 allowed: w_k = 1/K starts at K = 1
    CHECK_NOTHROW(params.validate());
    params.w_max = 0.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
}
