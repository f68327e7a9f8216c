// SPDX-License-Identifier: Apache-2.0

#include "uniat/tensor/grad_check.hpp"

#include <cmath>
#include <vector>

#include "uniat/core/error.hpp"

namespace uniat::tensor {

template <typename T>
T relative_error(T analytic, T numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + T(1e-12));
}

template <typename T>
GradCheckResult<T> finite_diff_check(const ScalarFn<T>& f, std::span<Tensor<T>> inputs,
                                     const GradCheckOptions<T>& options) {
    if (!(options.step > T(0))) throw ValidationError("finite_diff_check: step must be positive");

    std::vector<bool> saved_flags;
    for (Tensor<T>& x : inputs) {
        saved_flags.push_back(x.requires_grad());
        x.set_requires_grad(true);
        x.drop_grad();
    }

    Tape<T> tape;
    if (!options.fault_op.empty()) tape.inject_fault(options.fault_op, options.fault_scale);
    Tensor<T> loss = f(tape);
    tape.backward(loss);

    std::vector<std::vector<T>> analytic;
    for (Tensor<T>& x : inputs) {
        if (x.has_grad())
            analytic.emplace_back(x.grad().begin(), x.grad().end());
        else
            analytic.emplace_back(x.numel(), T(0));
    }

    auto evaluate = [&f]() {
        Tape<T> probe = Tape<T>::inference();
        return f(probe).item();
    };

    GradCheckResult<T> result;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto values = inputs[t].values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T original = values[i];
            values[i] = original + options.step;
            const T up = evaluate();
            values[i] = original - options.step;
            const T down = evaluate();
            values[i] = original;
            const T numeric = (up - down) / (T(2) * options.step);
            const T err = relative_error(analytic[t][i], numeric);
            ++result.coordinates;
            if (err > result.max_rel_error || std::isnan(err)) {
                result.max_rel_error = err;
                result.worst_input = t;
                result.worst_index = i;
                result.analytic = analytic[t][i];
                result.numeric = numeric;
            }
        }
    }

    for (std::size_t t = 0; t < inputs.size(); ++t) inputs[t].set_requires_grad(saved_flags[t]);
    return result;
}

template <typename T>
GradCheckResult<T> finite_diff_check(const ScalarFn<T>& f, Tensor<T> x, T step) {
    GradCheckOptions<T> options;
    options.step = step;
    return finite_diff_check(f, std::span<Tensor<T>>(&x, 1), options);
}

template float relative_error(float, float);
template double relative_error(double, double);
template GradCheckResult<float> finite_diff_check(const ScalarFn<float>&, std::span<Tensor<float>>,
                                                  const GradCheckOptions<float>&);
template GradCheckResult<double> finite_diff_check(const ScalarFn<double>&, std::span<Tensor<double>>,
                                                   const GradCheckOptions<double>&);
template GradCheckResult<float> finite_diff_check(const ScalarFn<float>&, Tensor<float>, float);
template GradCheckResult<double> finite_diff_check(const ScalarFn<double>&, Tensor<double>, double);

}  // namespace uniat::tensor
