// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit suites.

#pragma once

#include <cstddef>
#include <vector>

#include "uniat/core/rng.hpp"
#include "uniat/tensor/tensor.hpp"

namespace uniat::testing {

template <typename T = double>
tensor::Tensor<T> random_tensor(Rng& rng, tensor::Shape shape, double scale = 1.0, bool requires_grad = false) {
    std::vector<T> v(tensor::shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.uniform(-scale, scale));
    return tensor::Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

}  // namespace uniat::testing

#include <filesystem>
#include <string>
#include <unistd.h>

namespace uniat::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(std::filesystem::temp_directory_path() /
                ("uniat_" + tag + "_" + std::to_string(::getpid()))) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace uniat::testing
