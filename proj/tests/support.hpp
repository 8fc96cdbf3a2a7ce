#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pulse/rng.hpp"
#include "pulse/tensor.hpp"

namespace test {

template <typename T = float>
pulse::BasicTensor<T> randn(pulse::Rng& rng, pulse::Shape shape, double scale = 1.0) {
    pulse::BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(scale * rng.normal());
    return t;
}

template <typename T = float>
pulse::BasicTensor<T> tensor(pulse::Shape shape, std::vector<T> values) {
    return pulse::BasicTensor<T>(std::move(shape), std::move(values));
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("pulse_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace test
