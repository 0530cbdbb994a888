// Copyright 2026 The ZIAN Landmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "zian/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace zian {

struct GradCheckOptions {
    double h = 1e-5;
    double abs_floor = 1e-8;
    /// 0 checks every element; otherwise a seeded sample of this many
    /// elements per input.
    std::size_t max_elements_per_input = 0;
    std::uint64_t sample_seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_input;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t checked = 0;
    /// Elements whose +/-h evaluations crossed a ReLU or argmax decision.
    std::size_t skipped_nonsmooth = 0;

    bool passed(double tolerance) const { return checked > 0 && max_rel_error <= tolerance; }
};

/// Compares the reverse-mode gradient of the scalar `loss` closure with
/// central differences, element by element, for each of `inputs`. The
/// relative error is |a - n| / max(|a|, |n|, abs_floor). Throws NumericError
/// when the closure produces a non-finite value.
GradCheckResult finite_difference_check(const std::function<Tensor<double>()>& loss,
                                        const ParameterList<double>& inputs,
                                        const GradCheckOptions& options = {});

}  // namespace zian
