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

#include "zian/heatmap.hpp"

#include <stdexcept>
#include <vector>

namespace zian {

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Per-sample Euclidean distances; throws MetricError on empty or unequal
/// inputs.
std::vector<double> landmark_errors(const std::vector<Point>& preds, const std::vector<Point>& gts);

/// Mean Euclidean distance in pixels.
double avg_l2(const std::vector<Point>& preds, const std::vector<Point>& gts);

/// Percentage of samples whose error is <= threshold_px.
double sdr(const std::vector<Point>& preds, const std::vector<Point>& gts, double threshold_px);

inline const std::vector<double>& default_sdr_thresholds() {
    static const std::vector<double> t{5.0, 10.0, 20.0};
    return t;
}

}  // namespace zian
