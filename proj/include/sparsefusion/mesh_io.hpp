// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "sparsefusion/camera.hpp"
#include "sparsefusion/marching_cubes.hpp"

namespace sparsefusion {

/// Binary little-endian PLY 1.0: vertex x,y,z,nx,ny,nz (f32) and faces as
/// (u8 count=3, u32 indices). Byte-stable for identical meshes.
void write_ply(const Mesh& mesh, const std::string& path);

/// Reads the layout written by write_ply.
Mesh read_ply(const std::string& path);

/// Grayscale PFM ("Pf", f32 little-endian, scale -1.0, rows bottom-up).
/// Invalid depths are written as 0.
void write_pfm(const DepthFrame& frame, const std::string& path);
DepthFrame read_pfm(const std::string& path);

/// 8-bit PGM dump, depth normalized into [near, far]; debugging aid only.
void write_pgm(const DepthFrame& frame, const std::string& path);

}  // namespace sparsefusion
