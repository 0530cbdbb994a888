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

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zian {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised when operand extents disagree. `axis()` names the offending axis
/// ("C", "H", "inner", ...) or is empty when the mismatch is about rank.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(std::string op, std::string axis, std::int64_t expected, std::int64_t actual);
    DimensionError(std::string op, std::string message);

    const std::string& op() const noexcept { return m_op; }
    const std::string& axis() const noexcept { return m_axis; }
    std::int64_t expected() const noexcept { return m_expected; }
    std::int64_t actual() const noexcept { return m_actual; }

private:
    std::string m_op;
    std::string m_axis;
    std::int64_t m_expected = -1;
    std::int64_t m_actual = -1;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.empty())
            grad.assign(data.size(), T(0));
        return grad;
    }
};

std::uint64_t next_sequence() noexcept;

}  // namespace detail

/// Gradient recording is on by default; NoGradGuard turns it off for the
/// current thread (inference, data preparation, finite differences).
bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool m_previous;
};

/// Dense row-major array with an optional gradient slot.
///
/// Copies share storage (handle semantics); use `detach()` for a deep copy
/// that is cut from the graph. Every op result that depends on a tensor with
/// `requires_grad()` records itself on the graph so `backward()` can replay
/// the recorded primitives in reverse creation order.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);
    explicit Tensor(std::shared_ptr<detail::Node<T>> node) : m_node(std::move(node)) {}

    /// Leaf tensor that participates in gradient computation.
    static Tensor parameter(Shape shape, std::vector<T> values);

    bool defined() const noexcept { return m_node != nullptr; }
    const Shape& shape() const;
    int rank() const;
    std::int64_t dim(int axis) const;  // negative axes count from the back
    std::size_t size() const;

    std::span<const T> data() const;
    std::span<T> mutable_data();
    T item() const;
    T at(std::initializer_list<std::int64_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const T> grad() const;
    std::span<T> mutable_grad();
    void zero_grad();

    /// Reverse pass from a single-element tensor. Gradients accumulate into
    /// every reachable tensor that requires them.
    void backward() const;

    Tensor detach() const;
    const char* op_name() const;

    const std::shared_ptr<detail::Node<T>>& node() const noexcept { return m_node; }

private:
    const detail::Node<T>& checked() const;
    detail::Node<T>& checked();

    std::shared_ptr<detail::Node<T>> m_node;
};

/// Named handle used by parameter stores, the optimizer and checkpoints.
/// Buffers (batchnorm running statistics) are carried with trainable=false.
template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
};

template <typename T>
using ParameterList = std::vector<NamedTensor<T>>;

}  // namespace zian
