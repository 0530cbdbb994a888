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

#include "zian/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace zian {

namespace {

constexpr char kMagic[8] = {'Z', 'I', 'A', 'N', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::ostream& os, V value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename V>
V get(std::istream& is, const std::filesystem::path& path) {
    V value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(V)))
        throw CheckpointError("truncated checkpoint: " + path.string());
    return value;
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
    const auto n = get<std::uint64_t>(is, path);
    if (n > (1ULL << 32))
        throw CheckpointError("corrupt string length in checkpoint: " + path.string());
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n)))
        throw CheckpointError("truncated checkpoint: " + path.string());
    return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const ParameterList<T>& params) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    // write-then-rename keeps the previous checkpoint intact on failure
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw CheckpointError("cannot open checkpoint for writing: " + tmp.string());
        os.write(kMagic, sizeof(kMagic));
        put<std::uint32_t>(os, kCheckpointVersion);
        put_string(os, header.precision);
        put<std::uint64_t>(os, header.seed);
        put_string(os, header.config_hash);
        put_string(os, header.config_text);
        put<std::uint64_t>(os, params.size());
        for (const auto& p : params) {
            put_string(os, p.name);
            put<std::uint8_t>(os, p.trainable ? 1 : 0);
            const auto& shape = p.tensor.shape();
            put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
            for (auto e : shape)
                put<std::int64_t>(os, e);
            for (T v : p.tensor.data())
                put<float>(os, static_cast<float>(v));
        }
        if (!os)
            throw CheckpointError("failed writing checkpoint: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw CheckpointError("cannot open checkpoint: " + path.string());
    char magic[sizeof(kMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("not a checkpoint file: " + path.string());
    const auto version = get<std::uint32_t>(is, path);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.header.precision = get_string(is, path);
    ck.header.seed = get<std::uint64_t>(is, path);
    ck.header.config_hash = get_string(is, path);
    ck.header.config_text = get_string(is, path);
    const auto count = get<std::uint64_t>(is, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto name = get_string(is, path);
        CheckpointEntry e;
        e.trainable = get<std::uint8_t>(is, path) != 0;
        const auto rank = get<std::uint32_t>(is, path);
        if (rank == 0 || rank > 8)
            throw CheckpointError("corrupt rank for entry '" + name + "'");
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto extent = get<std::int64_t>(is, path);
            if (extent < 1)
                throw CheckpointError("corrupt extent for entry '" + name + "'");
            e.shape.push_back(extent);
        }
        e.values.resize(static_cast<std::size_t>(shape_numel(e.shape)));
        if (!is.read(reinterpret_cast<char*>(e.values.data()),
                     static_cast<std::streamsize>(e.values.size() * sizeof(float))))
            throw CheckpointError("truncated values for entry '" + name + "'");
        ck.order.push_back(name);
        ck.entries.emplace(std::move(name), std::move(e));
    }
    return ck;
}

template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, const ParameterList<T>& params) {
    for (const auto& p : params) {
        const auto it = ckpt.entries.find(p.name);
        if (it == ckpt.entries.end())
            throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
        if (it->second.shape != p.tensor.shape())
            throw CheckpointError("shape mismatch for '" + p.name + "': checkpoint " +
                                  shape_string(it->second.shape) + ", model " + shape_string(p.tensor.shape()));
        auto t = p.tensor;
        auto dst = t.mutable_data();
        for (std::size_t k = 0; k < dst.size(); ++k)
            dst[k] = static_cast<T>(it->second.values[k]);
    }
}

template void save_checkpoint(const std::filesystem::path&, const CheckpointHeader&, const ParameterList<float>&);
template void save_checkpoint(const std::filesystem::path&, const CheckpointHeader&, const ParameterList<double>&);
template void apply_checkpoint(const Checkpoint&, const ParameterList<float>&);
template void apply_checkpoint(const Checkpoint&, const ParameterList<double>&);

}  // namespace zian
