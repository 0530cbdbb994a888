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

#include "zian/gradcheck.hpp"

#include "zian/autograd.hpp"
#include "zian/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zian {

namespace {

double evaluate(const std::function<Tensor<double>()>& loss, std::uint64_t& signature) {
    NoGradGuard no_grad;
    nonsmooth::Probe probe;
    const auto out = loss();
    if (out.size() != 1)
        throw DimensionError("finite_difference_check", "loss must be a single element, got " +
                                                             shape_string(out.shape()));
    const double v = out.item();
    if (!std::isfinite(v))
        throw NumericError("finite_difference_check: non-finite loss value");
    signature = probe.signature();
    return v;
}

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (limit == 0 || limit >= n)
        return idx;
    // partial Fisher-Yates keeps the draw independent of std::shuffle's algorithm
    for (std::size_t i = 0; i < limit; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Tensor<double>()>& loss,
                                        const ParameterList<double>& inputs, const GradCheckOptions& options) {
    for (const auto& in : inputs) {
        auto t = in.tensor;
        if (!t.requires_grad())
            t.set_requires_grad(true);
        t.zero_grad();
    }

    std::uint64_t base_signature = 0;
    {
        nonsmooth::Probe probe;
        const auto out = loss();
        if (out.size() != 1)
            throw DimensionError("finite_difference_check", "loss must be a single element, got " +
                                                                 shape_string(out.shape()));
        if (!std::isfinite(out.item()))
            throw NumericError("finite_difference_check: non-finite loss value");
        base_signature = probe.signature();
        out.backward();
    }

    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs)
        analytic.emplace_back(in.tensor.grad().begin(), in.tensor.grad().end());

    GradCheckResult result;
    Rng rng(options.sample_seed);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto t = inputs[i].tensor;
        auto values = t.mutable_data();
        for (auto k : pick_indices(values.size(), options.max_elements_per_input, rng)) {
            const double original = values[k];
            std::uint64_t sig_plus = 0, sig_minus = 0;
            values[k] = original + options.h;
            const double plus = evaluate(loss, sig_plus);
            values[k] = original - options.h;
            const double minus = evaluate(loss, sig_minus);
            values[k] = original;
            if (sig_plus != base_signature || sig_minus != base_signature) {
                ++result.skipped_nonsmooth;
                continue;
            }
            const double numeric = (plus - minus) / (2.0 * options.h);
            const double a = analytic[i][k];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++result.checked;
            if (rel > result.max_rel_error || result.checked == 1) {
                result.max_rel_error = rel;
                result.worst_input = inputs[i].name;
                result.worst_index = k;
                result.analytic_at_worst = a;
                result.numeric_at_worst = numeric;
            }
        }
    }
    return result;
}

}  // namespace zian
