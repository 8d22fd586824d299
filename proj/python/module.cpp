// SPDX-License-Identifier: Apache-2.0
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sparsefusion/frame_io.hpp"
#include "sparsefusion/fusion.hpp"
#include "sparsefusion/grid.hpp"
#include "sparsefusion/marching_cubes.hpp"
#include "sparsefusion/mesh_io.hpp"
#include "sparsefusion/pipeline.hpp"
#include "sparsefusion/registration.hpp"
#include "sparsefusion/render.hpp"
#include "sparsefusion/scene.hpp"

namespace py = pybind11;
using namespace sparsefusion;

namespace {

py::array_t<float> depth_array(const DepthFrame& frame) {
    py::array_t<float> out({frame.intrinsics.height, frame.intrinsics.width});
    std::memcpy(out.mutable_data(), frame.depth.data(), frame.depth.size() * sizeof(float));
    return out;
}

py::array_t<float> sigma_array(const DepthFrame& frame) {
    if (!frame.has_sigma()) return py::array_t<float>();
    py::array_t<float> out({frame.intrinsics.height, frame.intrinsics.width});
    std::memcpy(out.mutable_data(), frame.sigma.data(), frame.sigma.size() * sizeof(float));
    return out;
}

DepthFrame frame_from_array(const Intrinsics& intr, py::array_t<float, py::array::c_style> depth) {
    if (depth.ndim() != 2 || depth.shape(0) != intr.height || depth.shape(1) != intr.width)
        throw std::invalid_argument("depth array must be (height, width)");
    DepthFrame frame(intr);
    std::memcpy(frame.depth.data(), depth.data(), frame.depth.size() * sizeof(float));
    return frame;
}

py::array_t<float> normals_array(const NormalMap& map) {
    py::array_t<float> out({map.height, map.width, 3});
    auto view = out.mutable_unchecked<3>();
    for (int v = 0; v < map.height; ++v)
        for (int u = 0; u < map.width; ++u) {
            const Eigen::Vector3f& n = map.at(u, v);
            view(v, u, 0) = n.x();
            view(v, u, 1) = n.y();
            view(v, u, 2) = n.z();
        }
    return out;
}

NormalMap normals_from_array(py::array_t<float, py::array::c_style> array) {
    if (array.ndim() != 3 || array.shape(2) != 3)
        throw std::invalid_argument("normal array must be (height, width, 3)");
    NormalMap map(static_cast<int>(array.shape(1)), static_cast<int>(array.shape(0)));
    auto view = array.unchecked<3>();
    for (int v = 0; v < map.height; ++v)
        for (int u = 0; u < map.width; ++u)
            map.at(u, v) = Eigen::Vector3f(view(v, u, 0), view(v, u, 1), view(v, u, 2));
    return map;
}

py::tuple mesh_arrays(const Mesh& mesh) {
    py::array_t<float> vertices({static_cast<py::ssize_t>(mesh.vertices.size()),
                                 static_cast<py::ssize_t>(3)});
    py::array_t<float> normals({static_cast<py::ssize_t>(mesh.normals.size()),
                                static_cast<py::ssize_t>(3)});
    py::array_t<std::uint32_t> triangles({static_cast<py::ssize_t>(mesh.triangles.size()),
                                          static_cast<py::ssize_t>(3)});
    std::memcpy(vertices.mutable_data(), mesh.vertices.data(),
                mesh.vertices.size() * sizeof(Eigen::Vector3f));
    std::memcpy(normals.mutable_data(), mesh.normals.data(),
                mesh.normals.size() * sizeof(Eigen::Vector3f));
    std::memcpy(triangles.mutable_data(), mesh.triangles.data(),
                mesh.triangles.size() * 3 * sizeof(std::uint32_t));
    return py::make_tuple(vertices, normals, triangles);
}

Mesh mesh_from_arrays(py::array_t<float, py::array::c_style> vertices,
                      py::array_t<float, py::array::c_style> normals,
                      py::array_t<std::uint32_t, py::array::c_style> triangles) {
    if (vertices.ndim() != 2 || vertices.shape(1) != 3) throw std::invalid_argument("vertices");
    if (normals.ndim() != 2 || normals.shape(1) != 3) throw std::invalid_argument("normals");
    if (triangles.ndim() != 2 || triangles.shape(1) != 3) throw std::invalid_argument("triangles");
    Mesh mesh;
    mesh.vertices.resize(vertices.shape(0));
    mesh.normals.resize(normals.shape(0));
    mesh.triangles.resize(triangles.shape(0));
    std::memcpy(mesh.vertices.data(), vertices.data(),
                mesh.vertices.size() * sizeof(Eigen::Vector3f));
    std::memcpy(mesh.normals.data(), normals.data(),
                mesh.normals.size() * sizeof(Eigen::Vector3f));
    std::memcpy(mesh.triangles.data(), triangles.data(),
                mesh.triangles.size() * 3 * sizeof(std::uint32_t));
    return mesh;
}

}  // namespace

PYBIND11_MODULE(sparsefusion, m) {
    m.doc() = "Block-sparse TSDF fusion: depth-map integration, point-to-plane ICP with "
              "eigenvalue gating, raycasting and marching cubes";

    py::register_exception<PoolExhausted>(m, "PoolExhausted");
    py::register_exception<TrackingLost>(m, "TrackingLost");

    py::class_<Intrinsics>(m, "Intrinsics")
        .def(py::init<>())
        .def_static("simple", &Intrinsics::simple, py::arg("width"), py::arg("height"),
                    py::arg("focal_px"), py::arg("near") = 0.1, py::arg("far") = 10.0)
        .def_readwrite("width", &Intrinsics::width)
        .def_readwrite("height", &Intrinsics::height)
        .def_readwrite("fx", &Intrinsics::fx)
        .def_readwrite("fy", &Intrinsics::fy)
        .def_readwrite("cx", &Intrinsics::cx)
        .def_readwrite("cy", &Intrinsics::cy)
        .def_readwrite("near", &Intrinsics::near_plane)
        .def_readwrite("far", &Intrinsics::far_plane);

    py::class_<Pose>(m, "Pose")
        .def(py::init<>())
        .def_readwrite("rotation", &Pose::rotation)
        .def_readwrite("translation", &Pose::translation)
        .def("apply", &Pose::apply)
        .def_static("identity", &Pose::identity);
    m.def("compose", &compose);
    m.def("invert", &invert);
    m.def("apply_motion", [](const Pose& pose, const Eigen::Vector3d& r,
                             const Eigen::Vector3d& t) {
        return apply_motion(pose, SmallMotion{r, t});
    });
    m.def("orbit_trajectory", &orbit_trajectory, py::arg("target"), py::arg("radius"),
          py::arg("frames"), py::arg("axis") = Eigen::Vector3d::UnitY(),
          py::arg("start_angle") = 0.0, py::arg("arc") = 2.0 * M_PI);

    py::class_<DepthFrame>(m, "DepthFrame")
        .def(py::init(&frame_from_array), py::arg("intrinsics"), py::arg("depth"))
        .def_property_readonly("intrinsics",
                               [](const DepthFrame& f) { return f.intrinsics; })
        .def_property_readonly("depth", &depth_array)
        .def_property_readonly("sigma", &sigma_array);

    py::class_<NormalMap>(m, "NormalMap")
        .def(py::init(&normals_from_array), py::arg("normals"))
        .def_property_readonly("array", &normals_array);

    py::class_<AnalyticScene>(m, "AnalyticScene")
        .def(py::init<>())
        .def("add_sphere", &AnalyticScene::add_sphere, py::arg("center"), py::arg("radius"))
        .def("add_plane", &AnalyticScene::add_plane, py::arg("normal"), py::arg("offset"))
        .def("add_box",
             [](AnalyticScene& scene, const Eigen::Vector3d& center,
                const Eigen::Vector3d& half_extents) {
                 Pose pose;
                 pose.translation = center;
                 scene.add_box(pose, half_extents);
             },
             py::arg("center"), py::arg("half_extents"))
        .def("signed_distance", &AnalyticScene::signed_distance)
        .def("normal_at", &AnalyticScene::normal_at);

    m.def("render_synthetic_depth",
          [](const AnalyticScene& scene, const Pose& pose, const Intrinsics& intr, double sigma0,
             std::uint64_t seed) {
              return render_synthetic_depth(scene, pose, intr, NoiseModel{sigma0, seed});
          },
          py::arg("scene"), py::arg("pose"), py::arg("intrinsics"), py::arg("sigma0") = 0.0,
          py::arg("seed") = 0);

    m.def("compute_normals",
          [](const DepthFrame& frame, double sigma0, double spatial_scale) {
              return compute_normals(frame, NormalOptions{sigma0, spatial_scale});
          },
          py::arg("frame"), py::arg("sigma0") = 2.5e-4, py::arg("spatial_scale") = 0.0);

    py::enum_<AuxMode>(m, "AuxMode")
        .value("Weight", AuxMode::Weight)
        .value("Variance", AuxMode::Variance);

    py::class_<GridConfig>(m, "GridConfig")
        .def(py::init<>())
        .def_readwrite("blocks_per_axis", &GridConfig::blocks_per_axis)
        .def_readwrite("voxels_per_block_axis", &GridConfig::voxels_per_block_axis)
        .def_readwrite("box_origin", &GridConfig::box_origin)
        .def_readwrite("box_side", &GridConfig::box_side)
        .def_readwrite("truncation", &GridConfig::truncation)
        .def_property_readonly("voxel_size", &GridConfig::voxel_size)
        .def_property_readonly("delta", &GridConfig::delta);

    py::class_<SparseTsdfGrid>(m, "SparseTsdfGrid")
        .def(py::init([](const GridConfig& cfg, std::size_t pool_capacity, AuxMode aux_mode,
                         double w_max) {
                 AuxQuantization aux;
                 aux.mode = aux_mode;
                 aux.w_max = w_max;
                 return SparseTsdfGrid(cfg, pool_capacity, aux);
             }),
             py::arg("config"), py::arg("pool_capacity") = 0,
             py::arg("aux_mode") = AuxMode::Weight, py::arg("w_max") = 20.0)
        .def_property_readonly("config", &SparseTsdfGrid::config)
        .def_property_readonly("allocated_count", &SparseTsdfGrid::allocated_count)
        .def_property_readonly("pool_capacity", &SparseTsdfGrid::pool_capacity)
        .def_property_readonly("voxel_size", &SparseTsdfGrid::voxel_size)
        .def_property_readonly("delta", &SparseTsdfGrid::delta)
        .def("memory_bytes", &SparseTsdfGrid::memory_bytes)
        .def("allocate_block", &SparseTsdfGrid::allocate_block)
        .def("free_block", &SparseTsdfGrid::free_block)
        .def("is_allocated", &SparseTsdfGrid::is_allocated)
        .def("read_voxel",
             [](const SparseTsdfGrid& grid, const Eigen::Vector3i& vc)
                 -> std::optional<std::pair<double, double>> {
                 const auto value = grid.read_voxel(vc);
                 if (!value) return std::nullopt;
                 return std::make_pair(value->tsdf, value->aux);
             })
        .def("write_voxel",
             [](SparseTsdfGrid& grid, const Eigen::Vector3i& vc, std::optional<double> tsdf,
                double aux) { grid.write_voxel(vc, tsdf, aux); },
             py::arg("voxel"), py::arg("tsdf"), py::arg("aux") = 0.0)
        .def("voxel_center", &SparseTsdfGrid::voxel_center)
        .def("save_snapshot", &SparseTsdfGrid::save_snapshot)
        .def_static("load_snapshot", &SparseTsdfGrid::load_snapshot, py::arg("path"),
                    py::arg("pool_capacity") = 0);

    py::enum_<FusionMode>(m, "FusionMode")
        .value("Simple", FusionMode::Simple)
        .value("Weighted", FusionMode::Weighted)
        .value("Kalman", FusionMode::Kalman);

    py::class_<FusionParams>(m, "FusionParams")
        .def(py::init<>())
        .def_readwrite("mode", &FusionParams::mode)
        .def_readwrite("w_fixed", &FusionParams::w_fixed)
        .def_readwrite("w_max", &FusionParams::w_max)
        .def_readwrite("process_variance", &FusionParams::process_variance)
        .def_readwrite("sigma0", &FusionParams::sigma0)
        .def_readwrite("refinement_steps", &FusionParams::refinement_steps)
        .def_readwrite("edge_downweight", &FusionParams::edge_downweight);

    py::class_<FusionStats>(m, "FusionStats")
        .def_readonly("voxels_updated", &FusionStats::voxels_updated)
        .def_readonly("blocks_allocated_now", &FusionStats::blocks_allocated_now)
        .def_readonly("blocks_total", &FusionStats::blocks_total)
        .def_readonly("memory_bytes", &FusionStats::memory_bytes);

    m.def("fuse_frame", &fuse_frame, py::arg("grid"), py::arg("frame"), py::arg("pose"),
          py::arg("params"));

    py::class_<MatchParams>(m, "MatchParams")
        .def(py::init<>())
        .def_static("for_voxel_size", &MatchParams::for_voxel_size)
        .def_readwrite("max_distance", &MatchParams::max_distance)
        .def_readwrite("max_normal_angle", &MatchParams::max_normal_angle)
        .def_readwrite("max_iterations", &MatchParams::max_iterations)
        .def_readwrite("convergence_epsilon", &MatchParams::convergence_epsilon)
        .def_readwrite("eigen_threshold", &MatchParams::eigen_threshold);

    py::class_<IcpResult>(m, "IcpResult")
        .def_readonly("delta", &IcpResult::delta)
        .def_readonly("iterations", &IcpResult::iterations)
        .def_readonly("matches", &IcpResult::matches)
        .def_property_readonly("residual_rms",
                               [](const IcpResult& r) { return r.solution.residual_rms; })
        .def_property_readonly("gated_mask",
                               [](const IcpResult& r) { return r.solution.gated_mask; })
        .def_property_readonly("eigenvalues",
                               [](const IcpResult& r) { return r.solution.eigenvalues; });

    m.def("icp",
          [](const DepthFrame& source, const DepthFrame& target, const NormalMap& target_normals,
             const Pose& initial, const MatchParams& params) {
              return icp(source, target, target_normals, initial, params);
          },
          py::arg("source"), py::arg("target"), py::arg("target_normals"), py::arg("initial"),
          py::arg("params"));
    m.def("initial_transform_hook", &initial_transform_hook, py::arg("previous"),
          py::arg("external_delta") = std::nullopt);

    m.def("raycast",
          [](const SparseTsdfGrid& grid, const Pose& pose, const Intrinsics& intr) {
              RaycastResult result = raycast(grid, pose, intr);
              return py::make_tuple(std::move(result.depth), std::move(result.normals),
                                    result.stats.hit_pixels);
          },
          py::arg("grid"), py::arg("pose"), py::arg("intrinsics"));

    m.def("marching_cubes",
          [](const SparseTsdfGrid& grid) { return mesh_arrays(marching_cubes(grid)); },
          py::arg("grid"));

    m.def("write_ply",
          [](py::array_t<float, py::array::c_style> vertices,
             py::array_t<float, py::array::c_style> normals,
             py::array_t<std::uint32_t, py::array::c_style> triangles, const std::string& path) {
              write_ply(mesh_from_arrays(vertices, normals, triangles), path);
          },
          py::arg("vertices"), py::arg("normals"), py::arg("triangles"), py::arg("path"));
    m.def("read_ply", [](const std::string& path) { return mesh_arrays(read_ply(path)); });

    m.def("write_dfrm", &write_dfrm);
    m.def("read_dfrm", &read_dfrm);
    m.def("write_trajectory",
          [](const std::vector<Pose>& poses, const std::string& path) {
              std::vector<TrajectoryEntry> entries;
              for (std::size_t i = 0; i < poses.size(); ++i)
                  entries.push_back({static_cast<int>(i), poses[i]});
              write_trajectory(entries, path);
          },
          py::arg("poses"), py::arg("path"));

    py::class_<RunMetrics>(m, "RunMetrics")
        .def_property_readonly("status",
                               [](const RunMetrics& r) {
                                   switch (r.status) {
                                       case RunStatus::Ok: return "ok";
                                       case RunStatus::TrackingLost: return "tracking_lost";
                                       case RunStatus::PoolExhausted: return "pool_exhausted";
                                   }
                                   return "unknown";
                               })
        .def_property_readonly("frames",
                               [](const RunMetrics& r) { return r.frames.size(); })
        .def_readonly("mesh_vertices", &RunMetrics::mesh_vertices)
        .def_readonly("mesh_triangles", &RunMetrics::mesh_triangles)
        .def_readonly("mesh_rms", &RunMetrics::mesh_rms)
        .def_readonly("mesh_max", &RunMetrics::mesh_max)
        .def_readonly("final_memory_bytes", &RunMetrics::final_memory_bytes)
        .def_readonly("final_blocks", &RunMetrics::final_blocks);

    m.def("run_pipeline",
          [](const std::string& config_path) { return run(PipelineConfig::from_file(config_path)); },
          py::arg("config_path"),
          "Run the full acquire/render/register/fuse loop from a config file");
}
