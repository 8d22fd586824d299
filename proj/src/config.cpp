// SPDX-License-Identifier: Apache-2.0
#include "sparsefusion/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sparsefusion {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: line " + std::to_string(line_no) +
                                     " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config: empty key on line " +
                                                  std::to_string(line_no));
        config.values_[key].push_back(value);
    }
    return config;
}

const std::vector<std::string>& KeyValueConfig::all(const std::string& key) const {
    static const std::vector<std::string> empty;
    const auto it = values_.find(key);
    return it == values_.end() ? empty : it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second.back();
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    try {
        return std::stod(get_string(key));
    } catch (const std::exception&) {
        throw std::runtime_error("config: '" + key + "' is not a number");
    }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    try {
        return std::stoi(get_string(key));
    } catch (const std::exception&) {
        throw std::runtime_error("config: '" + key + "' is not an integer");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = get_string(key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw std::runtime_error("config: '" + key + "' is not a boolean");
}

Eigen::Vector3d KeyValueConfig::get_vec3(const std::string& key,
                                         const Eigen::Vector3d& fallback) const {
    if (!has(key)) return fallback;
    const std::vector<double> parts = parse_double_list(get_string(key));
    if (parts.size() != 3)
        throw std::runtime_error("config: '" + key + "' needs exactly 3 numbers");
    return {parts[0], parts[1], parts[2]};
}

std::vector<std::string> KeyValueConfig::keys() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [key, _] : values_) out.push_back(key);
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream ss(text);
    double value;
    while (ss >> value) out.push_back(value);
    return out;
}

}  // namespace sparsefusion
