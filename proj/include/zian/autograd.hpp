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
#include <vector>

namespace zian {

template <typename T>
using BackwardFn = std::function<void(detail::Node<T>& self)>;

/// Records an op result on the graph. `backward` receives the result node;
/// its `grad` holds dL/d(result) and `parents` are `inputs` in order. When
/// no input requires a gradient (or recording is disabled) the result is a
/// plain leaf and `backward` is dropped.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward);

/// True when parent `parent` of a recorded result needs its gradient.
template <typename T>
inline bool wants_grad(const detail::Node<T>& self, std::size_t parent) {
    return self.parents[parent] && self.parents[parent]->requires_grad;
}

/// Fingerprint of the discrete choices (ReLU sign patterns, argmax picks)
/// made during forward evaluation. Finite differences across a change of
/// fingerprint straddle a kink and are not comparable with the analytic
/// gradient.
namespace nonsmooth {

bool active() noexcept;
void record(std::uint64_t value) noexcept;

class Probe {
public:
    Probe();
    ~Probe();
    Probe(const Probe&) = delete;
    Probe& operator=(const Probe&) = delete;

    std::uint64_t signature() const noexcept;
    void reset() noexcept;

private:
    bool m_previous;
};

}  // namespace nonsmooth

}  // namespace zian
