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


#include "zian/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace zian {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct Field {
    const char* section;
    const char* key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    /// Run locations are not part of the experiment's identity.
    bool hashed = true;
};

[[noreturn]] void bad_value(const Field& f, const std::string& v, const char* expected) {
    throw ConfigError(std::string("config [") + f.section + "] " + f.key + " = '" + v + "': expected " + expected);
}

template <typename V>
V parse_number(const Field& f, const std::string& text) {
    V v{};
    const auto s = trim(text);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
        bad_value(f, text, std::is_integral_v<V> ? "an integer" : "a number");
    return v;
}

bool parse_bool(const Field& f, const std::string& text) {
    const auto s = trim(text);
    if (s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "false" || s == "0" || s == "no")
        return false;
    bad_value(f, text, "true or false");
}

template <typename V>
std::vector<V> parse_list(const Field& f, const std::string& text) {
    std::vector<V> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_number<V>(f, item));
    if (out.empty())
        bad_value(f, text, "a comma-separated list");
    return out;
}

template <typename V>
std::string join(const std::vector<V>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            s += ",";
        if constexpr (std::is_floating_point_v<V>)
            s += fmt_double(v[i]);
        else
            s += std::to_string(v[i]);
    }
    return s;
}

#define ZIAN_INT(sec, key, member)                                                                       \
    Field{sec, key, [](const ExperimentConfig& c) { return std::to_string(c.member); },                  \
          [](ExperimentConfig& c, const std::string& v) {                                               \
              c.member = parse_number<std::decay_t<decltype(c.member)>>(Field{sec, key, {}, {}}, v);      \
          }}
#define ZIAN_REAL(sec, key, member)                                                                      \
    Field{sec, key, [](const ExperimentConfig& c) { return fmt_double(c.member); },                      \
          [](ExperimentConfig& c, const std::string& v) { c.member = parse_number<double>(Field{sec, key, {}, {}}, v); }}
#define ZIAN_BOOL(sec, key, member)                                                                      \
    Field{sec, key, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); },  \
          [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(Field{sec, key, {}, {}}, v); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        ZIAN_INT("experiment", "seed", train.seed),
        Field{"experiment", "precision",
              [](const ExperimentConfig& c) { return std::string(c.train.precision == Precision::F32 ? "f32" : "f64"); },
              [](ExperimentConfig& c, const std::string& v) {
                  const auto s = trim(v);
                  if (s == "f32" || s == "float")
                      c.train.precision = Precision::F32;
                  else if (s == "f64" || s == "double")
                      c.train.precision = Precision::F64;
                  else
                      bad_value(Field{"experiment", "precision", {}, {}}, v, "f32 or f64");
              }},
        ZIAN_INT("experiment", "epochs", train.epochs),
        ZIAN_INT("experiment", "batch_size", train.batch_size),
        ZIAN_REAL("experiment", "lr", train.lr),
        ZIAN_INT("experiment", "lr_drop_epoch", train.lr_drop_epoch),
        ZIAN_REAL("experiment", "lr_drop_factor", train.lr_drop_factor),
        Field{"experiment", "schedule",
              [](const ExperimentConfig& c) {
                  return std::string(c.train.schedule == Schedule::LrDrop ? "lr_drop" : "weight_decay");
              },
              [](ExperimentConfig& c, const std::string& v) {
                  const auto s = trim(v);
                  if (s == "lr_drop")
                      c.train.schedule = Schedule::LrDrop;
                  else if (s == "weight_decay")
                      c.train.schedule = Schedule::WeightDecay;
                  else
                      bad_value(Field{"experiment", "schedule", {}, {}}, v, "lr_drop or weight_decay");
              }},
        Field{"experiment", "output_dir", [](const ExperimentConfig& c) { return c.output_dir.string(); },
              [](ExperimentConfig& c, const std::string& v) { c.output_dir = trim(v); }, false},

        Field{"data", "source",
              [](const ExperimentConfig& c) {
                  return std::string(c.data.source == DataSource::Synthetic ? "synthetic" : "manifest");
              },
              [](ExperimentConfig& c, const std::string& v) {
                  const auto s = trim(v);
                  if (s == "synthetic")
                      c.data.source = DataSource::Synthetic;
                  else if (s == "manifest")
                      c.data.source = DataSource::Manifest;
                  else
                      bad_value(Field{"data", "source", {}, {}}, v, "synthetic or manifest");
              }},
        ZIAN_INT("data", "train_count", data.train_count),
        ZIAN_INT("data", "eval_count", data.eval_count),
        ZIAN_INT("data", "data_seed", data.data_seed),
        Field{"data", "train_manifest", [](const ExperimentConfig& c) { return c.data.train_manifest.string(); },
              [](ExperimentConfig& c, const std::string& v) { c.data.train_manifest = trim(v); }},
        Field{"data", "eval_manifest", [](const ExperimentConfig& c) { return c.data.eval_manifest.string(); },
              [](ExperimentConfig& c, const std::string& v) { c.data.eval_manifest = trim(v); }},
        ZIAN_BOOL("data", "bilateral", data.bilateral),
        ZIAN_BOOL("data", "augment", data.augment),
        ZIAN_REAL("data", "desk_factor", data.preprocess.factor),
        ZIAN_INT("data", "crop_retries", data.preprocess.crop_retries),

        ZIAN_REAL("augment", "flip_probability", data.augment_ranges.flip_probability),
        ZIAN_REAL("augment", "shift_fraction", data.augment_ranges.shift_fraction),
        ZIAN_REAL("augment", "scale_min", data.augment_ranges.scale_min),
        ZIAN_REAL("augment", "scale_max", data.augment_ranges.scale_max),
        ZIAN_REAL("augment", "rotation_degrees", data.augment_ranges.rotation_degrees),

        ZIAN_INT("synthetic", "side", data.synthetic.side),
        ZIAN_REAL("synthetic", "fraction", data.synthetic.fraction),
        ZIAN_REAL("synthetic", "central_fraction", data.synthetic.central_fraction),
        ZIAN_REAL("synthetic", "radius_min", data.synthetic.radius_min),
        ZIAN_REAL("synthetic", "radius_max", data.synthetic.radius_max),
        ZIAN_REAL("synthetic", "min_gap", data.synthetic.min_gap),
        ZIAN_REAL("synthetic", "max_gap", data.synthetic.max_gap),
        ZIAN_REAL("synthetic", "edge_softness", data.synthetic.edge_softness),
        ZIAN_REAL("synthetic", "contrast", data.synthetic.contrast),
        ZIAN_REAL("synthetic", "background_amplitude", data.synthetic.background_amplitude),
        ZIAN_REAL("synthetic", "noise_sigma", data.synthetic.noise_sigma),

        Field{"model", "ablation", [](const ExperimentConfig& c) { return to_string(c.ablation); },
              [](ExperimentConfig& c, const std::string& v) { c.ablation = parse_ablation(trim(v)); }},
        Field{"model", "roi_scales", [](const ExperimentConfig& c) { return join(c.model.roi.scales); },
              [](ExperimentConfig& c, const std::string& v) {
                  c.model.roi.scales = parse_list<double>(Field{"model", "roi_scales", {}, {}}, v);
              }},
        ZIAN_INT("model", "roi_base_side", model.roi.base_side),
        ZIAN_INT("model", "fine_input_side", model.roi.fine_input_side),
        ZIAN_REAL("model", "delta", model.delta),
        ZIAN_REAL("model", "alpha", model.loss.alpha),
        ZIAN_REAL("model", "beta", model.loss.beta),
        ZIAN_REAL("model", "gamma", model.loss.gamma),

        Field{"backbone", "channels", [](const ExperimentConfig& c) { return join(c.model.backbone.channels); },
              [](ExperimentConfig& c, const std::string& v) {
                  c.model.backbone.channels = parse_list<int>(Field{"backbone", "channels", {}, {}}, v);
              }},
        ZIAN_INT("backbone", "feature_channels", model.backbone.feature_channels),
        ZIAN_INT("backbone", "output_stride", model.backbone.output_stride),

        ZIAN_INT("attention", "inducing_tokens", model.attention.inducing_tokens),
        ZIAN_INT("attention", "model_dim", model.attention.model_dim),
        ZIAN_INT("attention", "heads", model.attention.heads),
        ZIAN_INT("attention", "co_attention_resample", model.attention.co_attention_resample),

        Field{"report", "sdr_thresholds", [](const ExperimentConfig& c) { return join(c.sdr_thresholds); },
              [](ExperimentConfig& c, const std::string& v) {
                  c.sdr_thresholds = parse_list<double>(Field{"report", "sdr_thresholds", {}, {}}, v);
              }},
    };
    return f;
}

#undef ZIAN_INT
#undef ZIAN_REAL
#undef ZIAN_BOOL

}  // namespace

ModelConfig ExperimentConfig::resolved_model() const {
    ModelConfig m = model;
    m.apply_ablation(ablation);
    m.input_side = data.preprocess.crop_side();
    m.coarse_downsample = 4;
    return m;
}

void ExperimentConfig::validate() const {
    if (train.epochs < 1)
        throw ConfigError("config: epochs must be >= 1");
    if (train.batch_size < 1)
        throw ConfigError("config: batch_size must be >= 1");
    if (!(train.lr > 0.0))
        throw ConfigError("config: lr must be positive");
    if (train.lr_drop_epoch < 0 || !(train.lr_drop_factor >= 0.0))
        throw ConfigError("config: lr_drop_epoch and lr_drop_factor must be >= 0");
    if (data.source == DataSource::Synthetic) {
        if (data.train_count < 1 || data.eval_count < 1)
            throw ConfigError("config: train_count and eval_count must be >= 1");
        data.synthetic.validate();
    } else if (data.train_manifest.empty() && data.eval_manifest.empty()) {
        throw ConfigError("config: manifest source needs train_manifest or eval_manifest");
    }
    const auto& a = data.augment_ranges;
    if (a.flip_probability < 0.0 || a.flip_probability > 1.0 || a.shift_fraction < 0.0 || !(a.scale_min > 0.0) ||
        a.scale_max < a.scale_min || a.rotation_degrees < 0.0)
        throw ConfigError("config: augment ranges out of bounds");
    data.preprocess.validate();
    if (sdr_thresholds.empty())
        throw ConfigError("config: at least one sdr threshold is required");
    for (double t : sdr_thresholds)
        if (!(t > 0.0))
            throw ConfigError("config: sdr thresholds must be positive");
    resolved_model().validate();
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    ExperimentConfig cfg;
    std::set<std::string> sections;
    for (const auto& f : fields())
        sections.insert(f.section);
    for (const auto& [section, body] : tree) {
        if (!sections.count(section))
            throw ConfigError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            const auto it = std::find_if(fields().begin(), fields().end(), [&, &sec = section, &k = key](const Field& f) {
                return sec == f.section && k == f.key;
            });
            if (it == fields().end())
                throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
            it->set(cfg, value.data());
        }
    }
    if (!base_dir.empty()) {
        for (auto* p : {&cfg.data.train_manifest, &cfg.data.eval_manifest})
            if (!p->empty() && p->is_relative())
                *p = base_dir / *p;
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string canonical_config_text(const ExperimentConfig& cfg) {
    std::string out, section;
    for (const auto& f : fields()) {
        if (!f.hashed)
            continue;
        if (section != f.section) {
            section = f.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(f.key) + " = " + f.get(cfg) + "\n";
    }
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[digest[i] >> 4];
        s += hex[digest[i] & 15];
    }
    return s;
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(canonical_config_text(cfg)); }

}  // namespace zian
