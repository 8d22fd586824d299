// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/mesh_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sparsefusion {

namespace {

[[noreturn]] void io_fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

}  // namespace

void write_ply(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail("ply: cannot open for writing", path);
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property float nx\nproperty float ny\nproperty float nz\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar uint vertex_indices\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        float row[6] = {mesh.vertices[i].x(), mesh.vertices[i].y(), mesh.vertices[i].z(),
                        mesh.normals[i].x(), mesh.normals[i].y(), mesh.normals[i].z()};
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
    }
    for (const auto& tri : mesh.triangles) {
        const std::uint8_t count = 3;
        out.write(reinterpret_cast<const char*>(&count), 1);
        out.write(reinterpret_cast<const char*>(tri.data()), 3 * sizeof(std::uint32_t));
    }
    if (!out) io_fail("ply: write failed", path);
}

Mesh read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail("ply: cannot open", path);
    std::string line;
    std::size_t vertex_count = 0, face_count = 0;
    bool has_normals = false;
    if (!std::getline(in, line) || line != "ply") io_fail("ply: bad magic", path);
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "binary_little_endian") io_fail("ply: unsupported format", path);
        } else if (word == "element") {
            std::string name;
            std::size_t count;
            ss >> name >> count;
            if (name == "vertex") vertex_count = count;
            else if (name == "face") face_count = count;
        } else if (word == "property") {
            if (line.find("nx") != std::string::npos) has_normals = true;
        } else if (word == "end_header") {
            break;
        }
    }
    Mesh mesh;
    mesh.vertices.resize(vertex_count);
    mesh.normals.resize(vertex_count, Eigen::Vector3f::Zero());
    const int floats = has_normals ? 6 : 3;
    std::vector<float> row(floats);
    for (std::size_t i = 0; i < vertex_count; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(floats * sizeof(float)));
        mesh.vertices[i] = {row[0], row[1], row[2]};
        if (has_normals) mesh.normals[i] = {row[3], row[4], row[5]};
    }
    mesh.triangles.resize(face_count);
    for (std::size_t i = 0; i < face_count; ++i) {
        std::uint8_t count = 0;
        in.read(reinterpret_cast<char*>(&count), 1);
        if (count != 3) io_fail("ply: non-triangle face", path);
        in.read(reinterpret_cast<char*>(mesh.triangles[i].data()), 3 * sizeof(std::uint32_t));
    }
    if (!in) io_fail("ply: truncated file", path);
    return mesh;
}

void write_pfm(const DepthFrame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail("pfm: cannot open for writing", path);
    const Intrinsics& intr = frame.intrinsics;
    out << "Pf\n" << intr.width << " " << intr.height << "\n-1.0\n";
    for (int v = intr.height - 1; v >= 0; --v)  // bottom-up row order
        out.write(reinterpret_cast<const char*>(&frame.depth[static_cast<std::size_t>(v) *
                                                             intr.width]),
                  static_cast<std::streamsize>(intr.width * sizeof(float)));
    if (!out) io_fail("pfm: write failed", path);
}

DepthFrame read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail("pfm: cannot open", path);
    std::string magic;
    int width = 0, height = 0;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    if (magic != "Pf" || width <= 0 || height <= 0 || scale >= 0.0)
        io_fail("pfm: unsupported header", path);
    in.get();  // single whitespace after the header
    Intrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = intr.fy = 1.0;
    DepthFrame frame(intr);
    for (int v = height - 1; v >= 0; --v)
        in.read(reinterpret_cast<char*>(&frame.depth[static_cast<std::size_t>(v) * width]),
                static_cast<std::streamsize>(width * sizeof(float)));
    if (!in) io_fail("pfm: truncated file", path);
    return frame;
}

void write_pgm(const DepthFrame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail("pgm: cannot open for writing", path);
    const Intrinsics& intr = frame.intrinsics;
    out << "P5\n" << intr.width << " " << intr.height << "\n255\n";
    const double lo = intr.near_plane, hi = intr.far_plane;
    for (float d : frame.depth) {
        const double s = d > 0.0f ? std::clamp((d - lo) / (hi - lo), 0.0, 1.0) : 0.0;
        const auto byte = static_cast<std::uint8_t>(std::lround(s * 255.0));
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!out) io_fail("pgm: write failed", path);
}

}  // namespace sparsefusion
