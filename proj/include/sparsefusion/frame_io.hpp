// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/pose.hpp"

namespace sparsefusion {

/// "DFRM" v1: u32 width/height, f32 fx, fy, cx, cy, near, far, row-major f32
/// depths (top-left first), then a u32 flag and the optional f32 sigma plane.
/// Little-endian throughout; depth 0 = invalid.
void write_dfrm(const DepthFrame& frame, const std::string& path);
DepthFrame read_dfrm(const std::string& path);

struct TrajectoryEntry {
    int frame_index = 0;
    Pose pose;
};

/// CSV rows: frame_index, 9 row-major rotation entries, 3 translation entries.
void write_trajectory(const std::vector<TrajectoryEntry>& trajectory, const std::string& path);
std::vector<TrajectoryEntry> read_trajectory(const std::string& path);

/// Parses one trajectory row ("frame,r00,...,t2", the frame index optional).
TrajectoryEntry parse_trajectory_row(const std::string& row);

}  // namespace sparsefusion
