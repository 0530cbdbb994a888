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

#include "zian/gradcheck.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace zian {

/// A named finite-difference check, parameterized by seed.
struct GradCheckCase {
    std::string name;
    std::function<GradCheckResult(std::uint64_t seed)> run;
};

/// Every differentiable op plus the composite blocks, all at 64-bit.
const std::vector<GradCheckCase>& gradcheck_cases();
/// Throws std::invalid_argument listing the known names.
const GradCheckCase& find_gradcheck_case(const std::string& name);

struct GradCheckSummary {
    std::string name;
    int seeds = 0;
    int failed_seeds = 0;
    double max_rel_error = 0.0;
    std::uint64_t worst_seed = 0;
    std::string worst_input;
    std::size_t checked = 0;
    std::size_t skipped_nonsmooth = 0;
    double seconds = 0.0;

    bool passed() const { return failed_seeds == 0 && checked > 0; }
};

/// Runs seeds 0 .. seeds-1 of `c`.
GradCheckSummary run_gradcheck_case(const GradCheckCase& c, int seeds, double tolerance);

}  // namespace zian
