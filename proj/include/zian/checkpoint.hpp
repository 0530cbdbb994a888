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
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace zian {

// Binary layout, little endian:
//   magic "ZIANCKPT", u32 version
//   str precision, u64 seed, str config_hash, str config_text
//   u64 entry count, then per entry:
//     str name, u8 trainable, u32 rank, i64 extents[rank], f32 values[numel]
// where str = u64 byte length followed by the bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointHeader {
    std::string precision;  // "f32" or "f64"
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string config_text;
};

struct CheckpointEntry {
    Shape shape;
    std::vector<float> values;
    bool trainable = true;
};

struct Checkpoint {
    CheckpointHeader header;
    std::vector<std::string> order;
    std::map<std::string, CheckpointEntry> entries;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const ParameterList<T>& params);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `params`; every parameter must be present
/// with an identical shape.
template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, const ParameterList<T>& params);

}  // namespace zian
