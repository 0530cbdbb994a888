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

#include "zian/autograd.hpp"
#include "zian/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace zian {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto extent : shape)
        n *= extent;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

std::string describe(const std::string& op, const std::string& axis, std::int64_t expected,
                     std::int64_t actual) {
    std::ostringstream os;
    os << op << ": axis " << axis << " expected " << expected << ", got " << actual;
    return os.str();
}

void validate_shape(const Shape& shape, const char* where) {
    if (shape.empty())
        throw DimensionError(where, "rank-0 shapes are not supported");
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (shape[i] < 1)
            throw DimensionError(where, std::to_string(i), 1, shape[i]);
}

thread_local bool t_grad_enabled = true;
thread_local bool t_probe_active = false;
thread_local std::uint64_t t_probe_hash = 0;

}  // namespace

DimensionError::DimensionError(std::string op, std::string axis, std::int64_t expected,
                               std::int64_t actual)
    : std::invalid_argument(describe(op, axis, expected, actual)),
      m_op(std::move(op)),
      m_axis(std::move(axis)),
      m_expected(expected),
      m_actual(actual) {}

DimensionError::DimensionError(std::string op, std::string message)
    : std::invalid_argument(op + ": " + message), m_op(std::move(op)) {}

namespace detail {

std::uint64_t next_sequence() noexcept {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

}  // namespace detail

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : m_previous(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = m_previous; }

namespace nonsmooth {

bool active() noexcept { return t_probe_active; }

void record(std::uint64_t value) noexcept {
    // splitmix64 finalizer folded into a running hash
    std::uint64_t z = value + 0x9e3779b97f4a7c15ULL + (t_probe_hash << 6) + (t_probe_hash >> 2);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    t_probe_hash = z ^ (z >> 31);
}

Probe::Probe() : m_previous(t_probe_active) {
    t_probe_active = true;
    t_probe_hash = 0;
}

Probe::~Probe() { t_probe_active = m_previous; }

std::uint64_t Probe::signature() const noexcept { return t_probe_hash; }
void Probe::reset() noexcept { t_probe_hash = 0; }

}  // namespace nonsmooth

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) {
    validate_shape(shape, "Tensor");
    m_node = std::make_shared<detail::Node<T>>();
    m_node->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    m_node->shape = std::move(shape);
    m_node->seq = detail::next_sequence();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
    validate_shape(shape, "Tensor");
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
        throw DimensionError("Tensor", "numel", shape_numel(shape),
                             static_cast<std::int64_t>(values.size()));
    m_node = std::make_shared<detail::Node<T>>();
    m_node->data = std::move(values);
    m_node->shape = std::move(shape);
    m_node->seq = detail::next_sequence();
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.m_node->requires_grad = true;
    return t;
}

template <typename T>
const detail::Node<T>& Tensor<T>::checked() const {
    if (!m_node)
        throw std::logic_error("use of an undefined tensor");
    return *m_node;
}

template <typename T>
detail::Node<T>& Tensor<T>::checked() {
    if (!m_node)
        throw std::logic_error("use of an undefined tensor");
    return *m_node;
}

template <typename T>
const Shape& Tensor<T>::shape() const { return checked().shape; }

template <typename T>
int Tensor<T>::rank() const { return static_cast<int>(checked().shape.size()); }

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
    const auto& s = checked().shape;
    const int r = static_cast<int>(s.size());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r)
        throw DimensionError("dim", "axis " + std::to_string(axis) + " out of range for " +
                                        shape_string(s));
    return s[static_cast<std::size_t>(a)];
}

template <typename T>
std::size_t Tensor<T>::size() const { return checked().data.size(); }

template <typename T>
std::span<const T> Tensor<T>::data() const { return checked().data; }

template <typename T>
std::span<T> Tensor<T>::mutable_data() { return checked().data; }

template <typename T>
T Tensor<T>::item() const {
    const auto& n = checked();
    if (n.data.size() != 1)
        throw DimensionError("item", "numel", 1, static_cast<std::int64_t>(n.data.size()));
    return n.data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
    const auto& n = checked();
    if (index.size() != n.shape.size())
        throw DimensionError("at", "rank", static_cast<std::int64_t>(n.shape.size()),
                             static_cast<std::int64_t>(index.size()));
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= n.shape[axis])
            throw DimensionError("at", std::to_string(axis), n.shape[axis], i);
        flat = flat * n.shape[axis] + i;
        ++axis;
    }
    return n.data[static_cast<std::size_t>(flat)];
}

template <typename T>
bool Tensor<T>::requires_grad() const { return checked().requires_grad; }

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    auto& n = checked();
    if (n.backward && !on)
        throw std::logic_error("cannot clear requires_grad on a recorded result; use detach()");
    n.requires_grad = on;
    return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const { return !checked().grad.empty(); }

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    const auto& n = checked();
    if (n.grad.empty())
        throw std::logic_error(std::string("no gradient populated for tensor from op ") + n.op);
    return n.grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() { return checked().ensure_grad(); }

template <typename T>
void Tensor<T>::zero_grad() {
    auto& n = checked();
    n.grad.assign(n.data.size(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
    auto& root = const_cast<detail::Node<T>&>(checked());
    if (root.data.size() != 1)
        throw DimensionError("backward", "requires a single-element tensor, got " +
                                             shape_string(root.shape));
    if (!root.requires_grad)
        throw std::logic_error("backward() on a tensor that does not require grad");

    std::vector<detail::Node<T>*> order;
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<detail::Node<T>*> stack{&root};
    seen.insert(&root);
    while (!stack.empty()) {
        auto* node = stack.back();
        stack.pop_back();
        order.push_back(node);
        for (const auto& parent : node->parents) {
            if (parent && parent->requires_grad && seen.insert(parent.get()).second)
                stack.push_back(parent.get());
        }
    }
    // Children are always created after their parents.
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->seq > b->seq; });

    root.ensure_grad()[0] += T(1);
    for (auto* node : order) {
        if (node->backward && !node->grad.empty())
            node->backward(*node);
    }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    const auto& n = checked();
    return Tensor(n.shape, n.data);
}

template <typename T>
const char* Tensor<T>::op_name() const { return checked().op; }

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward) {
    Tensor<T> out(std::move(shape), std::move(data));
    auto& node = *out.node();
    node.op = op;
    if (!grad_enabled())
        return out;
    bool any = false;
    for (const auto& in : inputs)
        any = any || (in.defined() && in.requires_grad());
    if (!any)
        return out;
    node.requires_grad = true;
    node.parents.reserve(inputs.size());
    for (const auto& in : inputs)
        node.parents.push_back(in.node());
    node.backward = std::move(backward);
    return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(const char*, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   BackwardFn<float>);
template Tensor<double> make_result(const char*, Shape, std::vector<double>,
                                    std::vector<Tensor<double>>, BackwardFn<double>);

}  // namespace zian
