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

#include "zian/data.hpp"
#include "zian/metrics.hpp"
#include "zian/model.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace zian {

enum class Precision { F32, F64 };
/// What happens at lr_drop_epoch: the learning rate is multiplied by
/// lr_drop_factor, or a coupled L2 weight decay of lr_drop_factor starts.
enum class Schedule { LrDrop, WeightDecay };

struct TrainConfig {
    std::uint64_t seed = 1;
    Precision precision = Precision::F32;
    int epochs = 30;
    int batch_size = 16;
    double lr = 2e-4;
    int lr_drop_epoch = 90;
    double lr_drop_factor = 0.1;
    Schedule schedule = Schedule::LrDrop;
};

enum class DataSource { Synthetic, Manifest };

struct DataConfig {
    DataSource source = DataSource::Synthetic;
    int train_count = 512;
    int eval_count = 128;
    /// Synthetic train samples use seeds data_seed + i, held-out samples
    /// data_seed + kHeldOutSeedOffset + i.
    std::uint64_t data_seed = 1000;
    std::filesystem::path train_manifest;
    std::filesystem::path eval_manifest;
    /// Replace each manifest image by the mirrored half holding its landmark.
    bool bilateral = false;
    bool augment = true;
    AugmentRanges augment_ranges;
    PreprocessConfig preprocess;
    SyntheticConfig synthetic;

    static constexpr std::uint64_t kHeldOutSeedOffset = 1'000'000;
};

struct ExperimentConfig {
    TrainConfig train;
    DataConfig data;
    Ablation ablation = Ablation::Full;
    /// Model fields not fixed by the ablation or the preprocessing chain.
    ModelConfig model;
    std::filesystem::path output_dir = "runs/default";
    std::vector<double> sdr_thresholds = default_sdr_thresholds();

    /// Model configuration with the ablation and input side applied.
    ModelConfig resolved_model() const;
    void validate() const;
};

/// Sectioned key = value text ([experiment], [data], [augment], [synthetic],
/// [model], [backbone], [attention], [report]). Unknown sections or keys are
/// errors; missing keys keep their defaults. Relative manifest paths resolve
/// against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field except output_dir, in a fixed order and format; parse_config
/// reads it back.
std::string canonical_config_text(const ExperimentConfig& cfg);
/// Hex SHA-256 of the canonical text.
std::string config_hash(const ExperimentConfig& cfg);
std::string sha256_hex(const std::string& bytes);

struct SampleResult {
    std::string id;
    Point gt;
    Point pred;
    Point coarse_pred;
    double error = 0.0;
    double coarse_error = 0.0;
    bool fell_back = false;
};

struct EvalReport {
    std::string config_hash;
    std::string ablation;
    double avg_l2 = 0.0;
    double coarse_avg_l2 = 0.0;
    std::map<double, double> sdr;  // threshold px -> percentage
    std::vector<SampleResult> samples;
    std::size_t fallbacks = 0;
};

std::string report_json(const EvalReport& r);
/// Plain-text table with AVG L2 and the SDR columns.
std::string report_table(const EvalReport& r);
void write_report(const EvalReport& r, const std::filesystem::path& dir);

/// Loaded raw samples of one split.
std::vector<Sample> load_split(const DataConfig& cfg, bool held_out);

/// Raised when the loss turns non-finite; the last good checkpoint is left
/// in place.
class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentResult {
    EvalReport report;
    std::filesystem::path checkpoint;
    std::filesystem::path loss_log;
    double train_seconds = 0.0;
};

struct RunOptions {
    /// Called after every optimizer step with (epoch, step, total loss).
    std::function<void(int, int, double)> on_step;
    bool quiet = true;
};

/// Trains on the training split, evaluates on the held-out split and writes
/// model.ckpt, last_good.ckpt, loss.log, report.json and report.txt under
/// cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Evaluation of a checkpointed model on `samples`.
EvalReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::vector<Sample>& samples);

/// Eval-mode predictions of a trained model on raw samples, in raw pixels.
template <typename T>
EvalReport evaluate_model(const ZianModel<T>& model, const ExperimentConfig& cfg, const std::vector<Sample>& samples);

}  // namespace zian
