// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/frame_io.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace sparsefusion {

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

void write_dfrm(const DepthFrame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("dfrm: cannot open " + path + " for writing");
    const Intrinsics& intr = frame.intrinsics;
    out.write("DFRM", 4);
    write_raw<std::uint32_t>(out, 1u);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(intr.width));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(intr.height));
    for (double value : {intr.fx, intr.fy, intr.cx, intr.cy, intr.near_plane, intr.far_plane})
        write_raw<float>(out, static_cast<float>(value));
    out.write(reinterpret_cast<const char*>(frame.depth.data()),
              static_cast<std::streamsize>(frame.depth.size() * sizeof(float)));
    write_raw<std::uint32_t>(out, frame.has_sigma() ? 1u : 0u);
    if (frame.has_sigma())
        out.write(reinterpret_cast<const char*>(frame.sigma.data()),
                  static_cast<std::streamsize>(frame.sigma.size() * sizeof(float)));
    if (!out) throw std::runtime_error("dfrm: write failed for " + path);
}

DepthFrame read_dfrm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("dfrm: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::strncmp(magic, "DFRM", 4) != 0)
        throw std::runtime_error("dfrm: " + path + " is not a DFRM file");
    if (read_raw<std::uint32_t>(in) != 1u)
        throw std::runtime_error("dfrm: unsupported version in " + path);
    Intrinsics intr;
    intr.width = static_cast<int>(read_raw<std::uint32_t>(in));
    intr.height = static_cast<int>(read_raw<std::uint32_t>(in));
    intr.fx = read_raw<float>(in);
    intr.fy = read_raw<float>(in);
    intr.cx = read_raw<float>(in);
    intr.cy = read_raw<float>(in);
    intr.near_plane = read_raw<float>(in);
    intr.far_plane = read_raw<float>(in);
    intr.validate();
    DepthFrame frame(intr);
    in.read(reinterpret_cast<char*>(frame.depth.data()),
            static_cast<std::streamsize>(frame.depth.size() * sizeof(float)));
    if (read_raw<std::uint32_t>(in) == 1u) {
        frame.sigma.resize(frame.depth.size());
        in.read(reinterpret_cast<char*>(frame.sigma.data()),
                static_cast<std::streamsize>(frame.sigma.size() * sizeof(float)));
    }
    if (!in) throw std::runtime_error("dfrm: truncated file " + path);
    // Out-of-range depths are treated as invalid rather than rejecting the file.
    for (float& d : frame.depth)
        if (d != 0.0f && (d < intr.near_plane || d > intr.far_plane)) d = 0.0f;
    return frame;
}

void write_trajectory(const std::vector<TrajectoryEntry>& trajectory, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("trajectory: cannot open " + path + " for writing");
    out << std::setprecision(17);
    for (const TrajectoryEntry& entry : trajectory) {
        out << entry.frame_index;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out << "," << entry.pose.rotation(r, c);
        for (int i = 0; i < 3; ++i) out << "," << entry.pose.translation[i];
        out << "\n";
    }
    if (!out) throw std::runtime_error("trajectory: write failed for " + path);
}

TrajectoryEntry parse_trajectory_row(const std::string& row) {
    std::vector<double> fields;
    std::stringstream ss(row);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        fields.push_back(std::stod(token));
    }
    if (fields.size() != 12 && fields.size() != 13)
        throw std::runtime_error("trajectory: row needs 12 or 13 comma-separated values");
    TrajectoryEntry entry;
    std::size_t k = 0;
    if (fields.size() == 13) entry.frame_index = static_cast<int>(fields[k++]);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) entry.pose.rotation(r, c) = fields[k++];
    for (int i = 0; i < 3; ++i) entry.pose.translation[i] = fields[k++];
    if (!is_rotation(entry.pose.rotation, 1e-6))
        entry.pose.rotation = nearest_rotation(entry.pose.rotation);
    return entry;
}

std::vector<TrajectoryEntry> read_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("trajectory: cannot open " + path);
    std::vector<TrajectoryEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(parse_trajectory_row(line));
    }
    return out;
}

}  // namespace sparsefusion
