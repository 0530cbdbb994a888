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


#include "zian/metrics.hpp"

#include <cmath>
#include <string>

namespace zian {

std::vector<double> landmark_errors(const std::vector<Point>& preds, const std::vector<Point>& gts) {
    if (preds.size() != gts.size())
        throw MetricError("metric: " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(gts.size()) + " ground-truth landmarks");
    if (preds.empty())
        throw MetricError("metric: empty prediction set");
    std::vector<double> e(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        e[i] = std::hypot(preds[i].u - gts[i].u, preds[i].v - gts[i].v);
    return e;
}

double avg_l2(const std::vector<Point>& preds, const std::vector<Point>& gts) {
    double total = 0.0;
    for (double e : landmark_errors(preds, gts))
        total += e;
    return total / static_cast<double>(preds.size());
}

double sdr(const std::vector<Point>& preds, const std::vector<Point>& gts, double threshold_px) {
    if (!(threshold_px > 0.0))
        throw MetricError("sdr: threshold must be positive");
    std::size_t hits = 0;
    for (double e : landmark_errors(preds, gts))
        hits += e <= threshold_px ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace zian
