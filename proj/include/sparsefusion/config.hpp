// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sparsefusion {

/// Line-based "key = value" configuration with dotted section names.
/// '#' starts a comment; keys may repeat (scene primitives).
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::vector<std::string>& all(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    Eigen::Vector3d get_vec3(const std::string& key, const Eigen::Vector3d& fallback) const;

    std::vector<std::string> keys() const;

private:
    std::map<std::string, std::vector<std::string>> values_;
};

/// Whitespace-separated doubles ("0.5 1 2.25").
std::vector<double> parse_double_list(const std::string& text);

}  // namespace sparsefusion
