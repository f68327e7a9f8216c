// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference suite at 64-bit: one row per tensor primitive plus the
// full loss pipeline on a small model.

#pragma once

#include <string>
#include <vector>

namespace uniat::cli {

inline constexpr double kGradTolerance = 1e-4;

struct GradCheckRow {
    std::string component;
    double max_rel_error = 0;
    std::size_t coordinates = 0;
    bool passed = false;
};

struct GradSuiteOptions {
    double step = 1e-5;
    /// Scales the adjoint of this primitive by (1 + fault_scale) everywhere.
    std::string fault_op;
    double fault_scale = 0.1;
    bool include_pipeline = true;
};

[[nodiscard]] std::vector<GradCheckRow> run_grad_suite(const GradSuiteOptions& options = {});

[[nodiscard]] std::string format_grad_table(const std::vector<GradCheckRow>& rows);

}  // namespace uniat::cli
