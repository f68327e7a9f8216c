// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "uniat/tensor/tensor.hpp"

namespace uniat::tensor {

template <typename T>
using ScalarFn = std::function<Tensor<T>(Tape<T>&)>;

template <typename T>
struct GradCheckOptions {
    T step = T(1e-5);
    /// Fault injection for testing the checker itself (see Tape::inject_fault).
    std::string fault_op;
    T fault_scale = T(0);
};

template <typename T>
struct GradCheckResult {
    T max_rel_error = T(0);
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    T analytic = T(0);
    T numeric = T(0);
    std::size_t coordinates = 0;
};

/// |a - c| / (|a| + |c| + 1e-12)
template <typename T>
[[nodiscard]] T relative_error(T analytic, T numeric);

/// Compares the tape gradient of the scalar f against central differences for
/// every coordinate of every input. f must rebuild its graph on each call from
/// the (possibly perturbed) input values.
template <typename T>
GradCheckResult<T> finite_diff_check(const ScalarFn<T>& f, std::span<Tensor<T>> inputs,
                                     const GradCheckOptions<T>& options = {});

template <typename T>
GradCheckResult<T> finite_diff_check(const ScalarFn<T>& f, Tensor<T> x, T step);

}  // namespace uniat::tensor
