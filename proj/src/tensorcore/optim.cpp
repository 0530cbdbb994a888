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

#include "zian/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace zian {

template <typename T>
void adam_step(const ParameterList<T>& params, AdamState<T>& state) {
    std::vector<Tensor<T>> trainable;
    for (const auto& p : params) {
        if (!p.trainable)
            continue;
        if (!p.tensor.has_grad())
            throw std::invalid_argument("adam_step: missing gradient for parameter '" + p.name + "'");
        trainable.push_back(p.tensor);
    }
    if (state.m.empty()) {
        for (const auto& t : trainable) {
            state.m.emplace_back(t.size(), T(0));
            state.v.emplace_back(t.size(), T(0));
        }
    }
    if (state.m.size() != trainable.size())
        throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                                    " parameters, got " + std::to_string(trainable.size()));
    for (std::size_t i = 0; i < trainable.size(); ++i)
        if (state.m[i].size() != trainable[i].size() || state.v[i].size() != trainable[i].size())
            throw std::invalid_argument("adam_step: moment shape mismatch for parameter #" + std::to_string(i));

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        auto& param = trainable[i];
        auto w = param.mutable_data();
        const auto g = param.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            T gk = g[k];
            if (state.weight_decay != 0.0)
                gk += static_cast<T>(state.weight_decay) * w[k];
            m[k] = b1 * m[k] + (T(1) - b1) * gk;
            v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
            const double mhat = static_cast<double>(m[k]) / c1;
            const double vhat = static_cast<double>(v[k]) / c2;
            w[k] -= static_cast<T>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

template void adam_step(const ParameterList<float>&, AdamState<float>&);
template void adam_step(const ParameterList<double>&, AdamState<double>&);

}  // namespace zian
