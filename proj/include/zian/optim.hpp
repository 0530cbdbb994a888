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
#include <vector>

namespace zian {

template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<T>> m;  // one entry per trainable parameter, in list order
    std::vector<std::vector<T>> v;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Coupled L2 penalty added to the gradient; 0 disables it.
    double weight_decay = 0.0;
};

/// One bias-corrected Adam update over the trainable entries of `params`.
/// Throws std::invalid_argument naming the first trainable parameter whose
/// gradient was never populated.
template <typename T>
void adam_step(const ParameterList<T>& params, AdamState<T>& state);

}  // namespace zian
