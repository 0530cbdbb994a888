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

#include "zian/ops.hpp"

#include "gemm.hpp"
#include "zian/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace zian {

namespace {

using std::size_t;

template <typename T>
std::vector<T>& pgrad(detail::Node<T>& self, size_t i) {
    return self.parents[i]->ensure_grad();
}

template <typename T>
const std::vector<T>& pdata(const detail::Node<T>& self, size_t i) {
    return self.parents[i]->data;
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
    if (s.size() != rank)
        throw DimensionError(op, "rank", static_cast<std::int64_t>(rank),
                             static_cast<std::int64_t>(s.size()));
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    require_rank(op, b, a.size());
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i])
            throw DimensionError(op, std::to_string(i), a[i], b[i]);
}

int normalize_axis(const char* op, int axis, int rank) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw DimensionError(op, "axis " + std::to_string(axis) + " out of range for rank " +
                                     std::to_string(rank));
    return a;
}

struct Span3 {
    size_t outer = 1, len = 1, inner = 1;
};

Span3 split_at(const Shape& s, int axis) {
    Span3 r;
    for (int i = 0; i < axis; ++i)
        r.outer *= static_cast<size_t>(s[static_cast<size_t>(i)]);
    r.len = static_cast<size_t>(s[static_cast<size_t>(axis)]);
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
        r.inner *= static_cast<size_t>(s[i]);
    return r;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sb.size() > sa.size())
        throw DimensionError("add", "rank", static_cast<std::int64_t>(sa.size()),
                             static_cast<std::int64_t>(sb.size()));
    const size_t skip = sa.size() - sb.size();
    for (size_t i = 0; i < sb.size(); ++i)
        if (sa[skip + i] != sb[i])
            throw DimensionError("add", std::to_string(skip + i), sa[skip + i], sb[i]);

    const size_t inner = b.size();
    const size_t outer = a.size() / inner;
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(a.size());
    for (size_t o = 0; o < outer; ++o)
        for (size_t i = 0; i < inner; ++i)
            out[o * inner + i] = ad[o * inner + i] + bd[i];

    return make_result<T>("add", sa, std::move(out), {a, b}, [outer, inner](detail::Node<T>& self) {
        const auto& g = self.grad;
        if (wants_grad(self, 0)) {
            auto& da = pgrad(self, 0);
            for (size_t k = 0; k < g.size(); ++k)
                da[k] += g[k];
        }
        if (wants_grad(self, 1)) {
            auto& db = pgrad(self, 1);
            for (size_t o = 0; o < outer; ++o)
                for (size_t i = 0; i < inner; ++i)
                    db[i] += g[o * inner + i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("sub", a.shape(), b.shape());
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(a.size());
    for (size_t k = 0; k < out.size(); ++k)
        out[k] = ad[k] - bd[k];
    return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        const auto& g = self.grad;
        if (wants_grad(self, 0)) {
            auto& da = pgrad(self, 0);
            for (size_t k = 0; k < g.size(); ++k)
                da[k] += g[k];
        }
        if (wants_grad(self, 1)) {
            auto& db = pgrad(self, 1);
            for (size_t k = 0; k < g.size(); ++k)
                db[k] -= g[k];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a.shape(), b.shape());
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(a.size());
    for (size_t k = 0; k < out.size(); ++k)
        out[k] = ad[k] * bd[k];
    return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        const auto& g = self.grad;
        if (wants_grad(self, 0)) {
            auto& da = pgrad(self, 0);
            const auto& bd = pdata(self, 1);
            for (size_t k = 0; k < g.size(); ++k)
                da[k] += g[k] * bd[k];
        }
        if (wants_grad(self, 1)) {
            auto& db = pgrad(self, 1);
            const auto& ad = pdata(self, 0);
            for (size_t k = 0; k < g.size(); ++k)
                db[k] += g[k] * ad[k];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    const auto ad = a.data();
    std::vector<T> out(a.size());
    for (size_t k = 0; k < out.size(); ++k)
        out[k] = ad[k] * factor;
    return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](detail::Node<T>& self) {
        auto& da = pgrad(self, 0);
        const auto& g = self.grad;
        for (size_t k = 0; k < g.size(); ++k)
            da[k] += g[k] * factor;
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    const auto xd = x.data();
    std::vector<T> out(x.size());
    for (size_t k = 0; k < out.size(); ++k)
        out[k] = xd[k] > T(0) ? xd[k] : T(0);
    if (nonsmooth::active()) {
        std::uint64_t word = 0;
        for (size_t k = 0; k < xd.size(); ++k) {
            word = (word << 1) | (xd[k] > T(0) ? 1u : 0u);
            if (k % 64 == 63) {
                nonsmooth::record(word);
                word = 0;
            }
        }
        nonsmooth::record(word);
    }
    return make_result<T>("relu", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
        auto& dx = pgrad(self, 0);
        const auto& xd = pdata(self, 0);
        const auto& g = self.grad;
        for (size_t k = 0; k < g.size(); ++k)
            if (xd[k] > T(0))
                dx[k] += g[k];
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = T(0);
    for (T v : x.data())
        total += v;
    return make_result<T>("sum", {1}, {total}, {x}, [](detail::Node<T>& self) {
        auto& dx = pgrad(self, 0);
        const T g = self.grad[0];
        for (auto& v : dx)
            v += g;
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    T total = T(0);
    for (T v : x.data())
        total += v;
    const T n = static_cast<T>(x.size());
    return make_result<T>("mean", {1}, {total / n}, {x}, [n](detail::Node<T>& self) {
        auto& dx = pgrad(self, 0);
        const T g = self.grad[0] / n;
        for (auto& v : dx)
            v += g;
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != static_cast<std::int64_t>(x.size()))
        throw DimensionError("reshape", "numel", static_cast<std::int64_t>(x.size()),
                             shape_numel(shape));
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {x},
                          [](detail::Node<T>& self) {
                              auto& dx = pgrad(self, 0);
                              const auto& g = self.grad;
                              for (size_t k = 0; k < g.size(); ++k)
                                  dx[k] += g[k];
                          });
}

namespace {

// Visits (output index, source index) pairs of a permutation in output order.
template <typename F>
void for_each_permuted(const Shape& in, const std::vector<int>& order, F&& visit) {
    const size_t r = in.size();
    std::vector<size_t> in_stride(r, 1);
    for (size_t i = r - 1; i-- > 0;)
        in_stride[i] = in_stride[i + 1] * static_cast<size_t>(in[i + 1]);
    std::vector<size_t> out_extent(r), src_stride(r);
    for (size_t i = 0; i < r; ++i) {
        out_extent[i] = static_cast<size_t>(in[static_cast<size_t>(order[i])]);
        src_stride[i] = in_stride[static_cast<size_t>(order[i])];
    }
    const size_t total = static_cast<size_t>(shape_numel(in));
    std::vector<size_t> idx(r, 0);
    size_t src = 0;
    for (size_t out = 0; out < total; ++out) {
        visit(out, src);
        for (size_t ax = r; ax-- > 0;) {
            ++idx[ax];
            src += src_stride[ax];
            if (idx[ax] < out_extent[ax])
                break;
            src -= src_stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order) {
    const auto& in = x.shape();
    if (order.size() != in.size())
        throw DimensionError("permute", "rank", static_cast<std::int64_t>(in.size()),
                             static_cast<std::int64_t>(order.size()));
    std::vector<int> check = order;
    std::sort(check.begin(), check.end());
    for (size_t i = 0; i < check.size(); ++i)
        if (check[i] != static_cast<int>(i))
            throw DimensionError("permute", "order is not a permutation");
    Shape out_shape(in.size());
    for (size_t i = 0; i < in.size(); ++i)
        out_shape[i] = in[static_cast<size_t>(order[i])];

    const auto xd = x.data();
    std::vector<T> out(x.size());
    for_each_permuted(in, order, [&](size_t o, size_t s) { out[o] = xd[s]; });
    return make_result<T>("permute", std::move(out_shape), std::move(out), {x},
                          [in, order](detail::Node<T>& self) {
                              auto& dx = pgrad(self, 0);
                              const auto& g = self.grad;
                              for_each_permuted(in, order, [&](size_t o, size_t s) { dx[s] += g[o]; });
                          });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> xs, int axis) {
    if (xs.empty())
        throw DimensionError("concat", "no inputs");
    const auto& s0 = xs[0].shape();
    const int ax = normalize_axis("concat", axis, static_cast<int>(s0.size()));
    std::vector<size_t> lens;
    Shape out_shape = s0;
    out_shape[static_cast<size_t>(ax)] = 0;
    for (const auto& x : xs) {
        const auto& s = x.shape();
        require_rank("concat", s, s0.size());
        for (size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != ax && s[i] != s0[i])
                throw DimensionError("concat", std::to_string(i), s0[i], s[i]);
        lens.push_back(static_cast<size_t>(s[static_cast<size_t>(ax)]));
        out_shape[static_cast<size_t>(ax)] += s[static_cast<size_t>(ax)];
    }
    const auto split = split_at(out_shape, ax);
    const size_t inner = split.inner;
    const size_t total_len = split.len;
    std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
    size_t base = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const auto xd = xs[k].data();
        const size_t block = lens[k] * inner;
        for (size_t o = 0; o < split.outer; ++o)
            std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * total_len * inner + base * inner));
        base += lens[k];
    }
    std::vector<Tensor<T>> inputs(xs.begin(), xs.end());
    return make_result<T>(
        "concat", std::move(out_shape), std::move(out), std::move(inputs),
        [lens, split](detail::Node<T>& self) {
            const auto& g = self.grad;
            size_t base = 0;
            for (size_t k = 0; k < lens.size(); ++k) {
                const size_t block = lens[k] * split.inner;
                if (wants_grad(self, k)) {
                    auto& dx = pgrad(self, k);
                    for (size_t o = 0; o < split.outer; ++o) {
                        const size_t src = o * split.len * split.inner + base * split.inner;
                        for (size_t i = 0; i < block; ++i)
                            dx[o * block + i] += g[src + i];
                    }
                }
                base += lens[k];
            }
        });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs) {
    for (const auto& x : xs)
        require_rank("concat_channels", x.shape(), 4);
    return concat(xs, 1);
}

template <typename T>
Tensor<T> repeat_batch(const Tensor<T>& x, std::int64_t count) {
    if (count < 1)
        throw DimensionError("repeat_batch", "count", 1, count);
    Shape out_shape{count};
    out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
    const auto xd = x.data();
    std::vector<T> out;
    out.reserve(x.size() * static_cast<size_t>(count));
    for (std::int64_t n = 0; n < count; ++n)
        out.insert(out.end(), xd.begin(), xd.end());
    return make_result<T>("repeat_batch", std::move(out_shape), std::move(out), {x},
                          [](detail::Node<T>& self) {
                              auto& dx = pgrad(self, 0);
                              const auto& g = self.grad;
                              const size_t m = dx.size();
                              for (size_t k = 0; k < g.size(); ++k)
                                  dx[k % m] += g[k];
                          });
}

template <typename T>
Tensor<T> select_batch(const Tensor<T>& x, std::int64_t i) {
    const auto& s = x.shape();
    if (s.size() < 2)
        throw DimensionError("select_batch", "rank", 2, static_cast<std::int64_t>(s.size()));
    if (i < 0 || i >= s[0])
        throw DimensionError("select_batch", "0", s[0], i);
    Shape out_shape(s.begin() + 1, s.end());
    const size_t block = static_cast<size_t>(shape_numel(out_shape));
    const auto xd = x.data();
    std::vector<T> out(xd.begin() + static_cast<std::ptrdiff_t>(block * static_cast<size_t>(i)),
                       xd.begin() + static_cast<std::ptrdiff_t>(block * static_cast<size_t>(i + 1)));
    const size_t start = block * static_cast<size_t>(i);
    return make_result<T>("select_batch", std::move(out_shape), std::move(out), {x},
                          [start](detail::Node<T>& self) {
                              auto& dx = pgrad(self, 0);
                              const auto& g = self.grad;
                              for (size_t k = 0; k < g.size(); ++k)
                                  dx[start + k] += g[k];
                          });
}

namespace {

struct ConvGeometry {
    size_t N, C, H, W, O, k, OH, OW;
    int stride, padding;
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    const size_t P = g.OH * g.OW;
    for (size_t c = 0; c < g.C; ++c)
        for (size_t ky = 0; ky < g.k; ++ky)
            for (size_t kx = 0; kx < g.k; ++kx) {
                T* row = cols + ((c * g.k + ky) * g.k + kx) * P;
                for (size_t oy = 0; oy < g.OH; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ky);
                    T* dst = row + oy * g.OW;
                    if (iy < 0 || iy >= static_cast<long>(g.H)) {
                        std::fill(dst, dst + g.OW, T(0));
                        continue;
                    }
                    const T* src = x + (c * g.H + static_cast<size_t>(iy)) * g.W;
                    for (size_t ox = 0; ox < g.OW; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kx);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.W)) ? T(0) : src[ix];
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
    const size_t P = g.OH * g.OW;
    for (size_t c = 0; c < g.C; ++c)
        for (size_t ky = 0; ky < g.k; ++ky)
            for (size_t kx = 0; kx < g.k; ++kx) {
                const T* row = cols + ((c * g.k + ky) * g.k + kx) * P;
                for (size_t oy = 0; oy < g.OH; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ky);
                    if (iy < 0 || iy >= static_cast<long>(g.H))
                        continue;
                    T* dst = dx + (c * g.H + static_cast<size_t>(iy)) * g.W;
                    const T* src = row + oy * g.OW;
                    for (size_t ox = 0; ox < g.OW; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kx);
                        if (ix >= 0 && ix < static_cast<long>(g.W))
                            dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
    const auto& si = input.shape();
    const auto& sw = weight.shape();
    require_rank("conv2d", si, 4);
    require_rank("conv2d", sw, 4);
    if (stride < 1)
        throw DimensionError("conv2d", "stride", 1, stride);
    if (padding < 0)
        throw DimensionError("conv2d", "padding", 0, padding);
    if (sw[1] != si[1])
        throw DimensionError("conv2d", "C", sw[1], si[1]);
    if (sw[2] != sw[3])
        throw DimensionError("conv2d", "kW", sw[2], sw[3]);
    if (bias.defined()) {
        require_rank("conv2d", bias.shape(), 1);
        if (bias.shape()[0] != sw[0])
            throw DimensionError("conv2d", "O", sw[0], bias.shape()[0]);
    }
    ConvGeometry g{};
    g.N = static_cast<size_t>(si[0]);
    g.C = static_cast<size_t>(si[1]);
    g.H = static_cast<size_t>(si[2]);
    g.W = static_cast<size_t>(si[3]);
    g.O = static_cast<size_t>(sw[0]);
    g.k = static_cast<size_t>(sw[2]);
    g.stride = stride;
    g.padding = padding;
    const long oh = (static_cast<long>(g.H) + 2 * padding - static_cast<long>(g.k)) / stride + 1;
    const long ow = (static_cast<long>(g.W) + 2 * padding - static_cast<long>(g.k)) / stride + 1;
    if (static_cast<long>(g.H) + 2 * padding < static_cast<long>(g.k) || oh < 1)
        throw DimensionError("conv2d", "H", static_cast<std::int64_t>(g.k),
                             static_cast<std::int64_t>(g.H) + 2 * padding);
    if (static_cast<long>(g.W) + 2 * padding < static_cast<long>(g.k) || ow < 1)
        throw DimensionError("conv2d", "W", static_cast<std::int64_t>(g.k),
                             static_cast<std::int64_t>(g.W) + 2 * padding);
    g.OH = static_cast<size_t>(oh);
    g.OW = static_cast<size_t>(ow);

    const size_t P = g.OH * g.OW;
    const size_t CKK = g.C * g.k * g.k;
    const bool pointwise = g.k == 1 && stride == 1 && padding == 0;
    const auto xd = input.data();
    const auto wd = weight.data();
    std::vector<T> out(g.N * g.O * P);
    std::vector<T> cols(pointwise ? 0 : CKK * P);
    for (size_t n = 0; n < g.N; ++n) {
        const T* xn = xd.data() + n * g.C * g.H * g.W;
        const T* colsn = xn;
        if (!pointwise) {
            im2col(xn, g, cols.data());
            colsn = cols.data();
        }
        T* on = out.data() + n * g.O * P;
        kernels::gemm_nn(g.O, P, CKK, wd.data(), colsn, on, false);
        if (bias.defined()) {
            const auto bd = bias.data();
            for (size_t o = 0; o < g.O; ++o)
                for (size_t p = 0; p < P; ++p)
                    on[o * P + p] += bd[o];
        }
    }

    return make_result<T>(
        "conv2d", {si[0], sw[0], oh, ow}, std::move(out), {input, weight, bias},
        [g, pointwise](detail::Node<T>& self) {
            const size_t P = g.OH * g.OW;
            const size_t CKK = g.C * g.k * g.k;
            const auto& gd = self.grad;
            const auto& xd = pdata(self, 0);
            const auto& wd = pdata(self, 1);
            const bool need_x = wants_grad(self, 0);
            const bool need_w = wants_grad(self, 1);
            const bool need_b = self.parents[2] && wants_grad(self, 2);
            std::vector<T> cols(pointwise ? 0 : CKK * P);
            std::vector<T> dcols(pointwise || !need_x ? 0 : CKK * P);
            for (size_t n = 0; n < g.N; ++n) {
                const T* gn = gd.data() + n * g.O * P;
                const T* xn = xd.data() + n * g.C * g.H * g.W;
                if (need_w) {
                    const T* colsn = xn;
                    if (!pointwise) {
                        im2col(xn, g, cols.data());
                        colsn = cols.data();
                    }
                    kernels::gemm_nt(g.O, CKK, P, gn, colsn, pgrad(self, 1).data(), true);
                }
                if (need_x) {
                    T* dxn = pgrad(self, 0).data() + n * g.C * g.H * g.W;
                    if (pointwise) {
                        kernels::gemm_tn(CKK, P, g.O, wd.data(), gn, dxn, true);
                    } else {
                        kernels::gemm_tn(CKK, P, g.O, wd.data(), gn, dcols.data(), false);
                        col2im_add(dcols.data(), g, dxn);
                    }
                }
                if (need_b) {
                    auto& db = pgrad(self, 2);
                    for (size_t o = 0; o < g.O; ++o) {
                        T acc = T(0);
                        for (size_t p = 0; p < P; ++p)
                            acc += gn[o * P + p];
                        db[o] += acc;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool training, double momentum,
                      double eps) {
    const auto& s = x.shape();
    require_rank("batchnorm2d", s, 4);
    const size_t N = static_cast<size_t>(s[0]);
    const size_t C = static_cast<size_t>(s[1]);
    const size_t HW = static_cast<size_t>(s[2] * s[3]);
    for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
        require_rank("batchnorm2d", p->shape(), 1);
        if (p->shape()[0] != s[1])
            throw DimensionError("batchnorm2d", "C", s[1], p->shape()[0]);
    }
    const size_t count = N * HW;
    if (training && count < 2)
        throw DimensionError("batchnorm2d", "N*H*W", 2, static_cast<std::int64_t>(count));

    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();
    std::vector<T> out(x.size());
    std::vector<T> xhat(training ? x.size() : 0);
    std::vector<T> invstd(C);
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (size_t c = 0; c < C; ++c) {
        double m, inv;
        if (training) {
            double acc = 0.0;
            for (size_t n = 0; n < N; ++n)
                for (size_t p = 0; p < HW; ++p)
                    acc += static_cast<double>(xd[(n * C + c) * HW + p]);
            m = acc / static_cast<double>(count);
            double sq = 0.0;
            for (size_t n = 0; n < N; ++n)
                for (size_t p = 0; p < HW; ++p) {
                    const double d = static_cast<double>(xd[(n * C + c) * HW + p]) - m;
                    sq += d * d;
                }
            const double var = sq / static_cast<double>(count);
            inv = 1.0 / std::sqrt(var + eps);
            const double unbiased = sq / static_cast<double>(count - 1);
            rm[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(rm[c]) + momentum * m);
            rv[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(rv[c]) + momentum * unbiased);
        } else {
            m = static_cast<double>(rm[c]);
            inv = 1.0 / std::sqrt(static_cast<double>(rv[c]) + eps);
        }
        invstd[c] = static_cast<T>(inv);
        const T mt = static_cast<T>(m);
        const T it = static_cast<T>(inv);
        for (size_t n = 0; n < N; ++n)
            for (size_t p = 0; p < HW; ++p) {
                const size_t k = (n * C + c) * HW + p;
                const T h = (xd[k] - mt) * it;
                if (training)
                    xhat[k] = h;
                out[k] = h * gd[c] + bd[c];
            }
    }

    return make_result<T>(
        "batchnorm2d", s, std::move(out), {x, gamma, beta},
        [N, C, HW, training, xhat = std::move(xhat), invstd = std::move(invstd),
         rmean = std::vector<T>(rm.begin(), rm.end())](detail::Node<T>& self) {
            const auto& g = self.grad;
            const auto& xd = pdata(self, 0);
            const auto& gam = pdata(self, 1);
            const size_t count = N * HW;
            for (size_t c = 0; c < C; ++c) {
                double sum_g = 0.0, sum_gh = 0.0;
                for (size_t n = 0; n < N; ++n)
                    for (size_t p = 0; p < HW; ++p) {
                        const size_t k = (n * C + c) * HW + p;
                        const double h = training ? static_cast<double>(xhat[k])
                                                  : (static_cast<double>(xd[k]) - static_cast<double>(rmean[c])) *
                                                        static_cast<double>(invstd[c]);
                        sum_g += static_cast<double>(g[k]);
                        sum_gh += static_cast<double>(g[k]) * h;
                    }
                if (wants_grad(self, 1))
                    pgrad(self, 1)[c] += static_cast<T>(sum_gh);
                if (wants_grad(self, 2))
                    pgrad(self, 2)[c] += static_cast<T>(sum_g);
                if (!wants_grad(self, 0))
                    continue;
                auto& dx = pgrad(self, 0);
                const double gi = static_cast<double>(gam[c]) * static_cast<double>(invstd[c]);
                if (training) {
                    const double mg = sum_g / static_cast<double>(count);
                    const double mgh = sum_gh / static_cast<double>(count);
                    for (size_t n = 0; n < N; ++n)
                        for (size_t p = 0; p < HW; ++p) {
                            const size_t k = (n * C + c) * HW + p;
                            dx[k] += static_cast<T>(
                                gi * (static_cast<double>(g[k]) - mg - static_cast<double>(xhat[k]) * mgh));
                        }
                } else {
                    for (size_t n = 0; n < N; ++n)
                        for (size_t p = 0; p < HW; ++p) {
                            const size_t k = (n * C + c) * HW + p;
                            dx[k] += static_cast<T>(gi * static_cast<double>(g[k]));
                        }
                }
            }
        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    const auto& s = x.shape();
    const size_t D = static_cast<size_t>(s.back());
    for (const auto* p : {&gamma, &beta}) {
        require_rank("layer_norm", p->shape(), 1);
        if (p->shape()[0] != s.back())
            throw DimensionError("layer_norm", "D", s.back(), p->shape()[0]);
    }
    const size_t rows = x.size() / D;
    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();
    std::vector<T> out(x.size()), xhat(x.size()), invstd(rows);
    for (size_t r = 0; r < rows; ++r) {
        const T* xr = xd.data() + r * D;
        double m = 0.0;
        for (size_t d = 0; d < D; ++d)
            m += static_cast<double>(xr[d]);
        m /= static_cast<double>(D);
        double v = 0.0;
        for (size_t d = 0; d < D; ++d) {
            const double e = static_cast<double>(xr[d]) - m;
            v += e * e;
        }
        v /= static_cast<double>(D);
        const double inv = 1.0 / std::sqrt(v + eps);
        invstd[r] = static_cast<T>(inv);
        for (size_t d = 0; d < D; ++d) {
            const T h = static_cast<T>((static_cast<double>(xr[d]) - m) * inv);
            xhat[r * D + d] = h;
            out[r * D + d] = h * gd[d] + bd[d];
        }
    }
    return make_result<T>(
        "layer_norm", s, std::move(out), {x, gamma, beta},
        [D, rows, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<T>& self) {
            const auto& g = self.grad;
            const auto& gam = pdata(self, 1);
            const bool need_x = wants_grad(self, 0);
            for (size_t r = 0; r < rows; ++r) {
                double mg = 0.0, mgh = 0.0;
                for (size_t d = 0; d < D; ++d) {
                    const size_t k = r * D + d;
                    const double dh = static_cast<double>(g[k]) * static_cast<double>(gam[d]);
                    mg += dh;
                    mgh += dh * static_cast<double>(xhat[k]);
                }
                mg /= static_cast<double>(D);
                mgh /= static_cast<double>(D);
                if (need_x) {
                    auto& dx = pgrad(self, 0);
                    for (size_t d = 0; d < D; ++d) {
                        const size_t k = r * D + d;
                        const double dh = static_cast<double>(g[k]) * static_cast<double>(gam[d]);
                        dx[k] += static_cast<T>(static_cast<double>(invstd[r]) *
                                                (dh - mg - static_cast<double>(xhat[k]) * mgh));
                    }
                }
            }
            if (wants_grad(self, 1)) {
                auto& dg = pgrad(self, 1);
                for (size_t k = 0; k < g.size(); ++k)
                    dg[k % D] += g[k] * xhat[k];
            }
            if (wants_grad(self, 2)) {
                auto& db = pgrad(self, 2);
                for (size_t k = 0; k < g.size(); ++k)
                    db[k % D] += g[k];
            }
        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if ((sa.size() != 2 && sa.size() != 3) || (sb.size() != 2 && sb.size() != 3))
        throw DimensionError("matmul", "operands must be rank 2 or 3, got " + shape_string(sa) +
                                           " and " + shape_string(sb));
    const bool a_batched = sa.size() == 3;
    const bool b_batched = sb.size() == 3;
    const size_t M = static_cast<size_t>(sa[sa.size() - 2]);
    const size_t K = static_cast<size_t>(sa.back());
    const size_t K2 = static_cast<size_t>(sb[sb.size() - 2]);
    const size_t N = static_cast<size_t>(sb.back());
    if (K != K2)
        throw DimensionError("matmul", "K", static_cast<std::int64_t>(K), static_cast<std::int64_t>(K2));
    size_t B = 1;
    if (a_batched && b_batched && sa[0] != sb[0])
        throw DimensionError("matmul", "batch", sa[0], sb[0]);
    if (a_batched)
        B = static_cast<size_t>(sa[0]);
    else if (b_batched)
        B = static_cast<size_t>(sb[0]);

    Shape out_shape;
    if (a_batched || b_batched)
        out_shape.push_back(static_cast<std::int64_t>(B));
    out_shape.push_back(static_cast<std::int64_t>(M));
    out_shape.push_back(static_cast<std::int64_t>(N));

    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(B * M * N);
    const size_t a_step = a_batched ? M * K : 0;
    const size_t b_step = b_batched ? K * N : 0;
    if (!a_batched && b_batched) {
        for (size_t i = 0; i < B; ++i)
            kernels::gemm_nn(M, N, K, ad.data(), bd.data() + i * b_step, out.data() + i * M * N, false);
    } else if (a_batched && !b_batched) {
        // shared right operand: one product over the stacked rows
        kernels::gemm_nn(B * M, N, K, ad.data(), bd.data(), out.data(), false);
    } else {
        for (size_t i = 0; i < B; ++i)
            kernels::gemm_nn(M, N, K, ad.data() + i * a_step, bd.data() + i * b_step,
                             out.data() + i * M * N, false);
    }

    return make_result<T>(
        "matmul", std::move(out_shape), std::move(out), {a, b},
        [B, M, N, K, a_step, b_step](detail::Node<T>& self) {
            const auto& g = self.grad;
            const auto& ad = pdata(self, 0);
            const auto& bd = pdata(self, 1);
            if (wants_grad(self, 0)) {
                auto& da = pgrad(self, 0);
                for (size_t i = 0; i < B; ++i)
                    kernels::gemm_nt(M, K, N, g.data() + i * M * N, bd.data() + i * b_step,
                                     da.data() + i * a_step, true);
            }
            if (wants_grad(self, 1)) {
                auto& db = pgrad(self, 1);
                for (size_t i = 0; i < B; ++i)
                    kernels::gemm_tn(K, N, M, ad.data() + i * a_step, g.data() + i * M * N,
                                     db.data() + i * b_step, true);
            }
        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const auto& s = x.shape();
    const int ax = normalize_axis("softmax", axis, static_cast<int>(s.size()));
    require_finite(x, "softmax");
    const auto sp = split_at(s, ax);
    const auto xd = x.data();
    std::vector<T> out(x.size());
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t i = 0; i < sp.inner; ++i) {
            const size_t base = o * sp.len * sp.inner + i;
            T mx = xd[base];
            for (size_t l = 1; l < sp.len; ++l)
                mx = std::max(mx, xd[base + l * sp.inner]);
            T total = T(0);
            for (size_t l = 0; l < sp.len; ++l) {
                const T e = std::exp(xd[base + l * sp.inner] - mx);
                out[base + l * sp.inner] = e;
                total += e;
            }
            for (size_t l = 0; l < sp.len; ++l)
                out[base + l * sp.inner] /= total;
        }
    return make_result<T>("softmax", s, std::move(out), {x}, [sp](detail::Node<T>& self) {
        const auto& g = self.grad;
        const auto& y = self.data;
        auto& dx = pgrad(self, 0);
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t i = 0; i < sp.inner; ++i) {
                const size_t base = o * sp.len * sp.inner + i;
                T dot = T(0);
                for (size_t l = 0; l < sp.len; ++l)
                    dot += g[base + l * sp.inner] * y[base + l * sp.inner];
                for (size_t l = 0; l < sp.len; ++l) {
                    const size_t k = base + l * sp.inner;
                    dx[k] += y[k] * (g[k] - dot);
                }
            }
    });
}

namespace {

template <typename T>
struct Tap {
    size_t i0 = 0, i1 = 0;
    T w0 = T(0), w1 = T(0);
};

template <typename T>
Tap<T> make_tap(double src, size_t extent, Padding padding) {
    Tap<T> t;
    const double last = static_cast<double>(extent) - 1.0;
    if (padding == Padding::Border) {
        const double s = std::clamp(src, 0.0, last);
        const double f = std::floor(s);
        t.i0 = static_cast<size_t>(f);
        t.i1 = std::min(t.i0 + 1, extent - 1);
        t.w1 = static_cast<T>(s - f);
        t.w0 = static_cast<T>(1.0 - (s - f));
        return t;
    }
    const double f = std::floor(src);
    const long i0 = static_cast<long>(f);
    const long i1 = i0 + 1;
    const double frac = src - f;
    const bool in0 = i0 >= 0 && i0 < static_cast<long>(extent);
    const bool in1 = i1 >= 0 && i1 < static_cast<long>(extent);
    t.i0 = in0 ? static_cast<size_t>(i0) : 0;
    t.i1 = in1 ? static_cast<size_t>(i1) : 0;
    t.w0 = in0 ? static_cast<T>(1.0 - frac) : T(0);
    t.w1 = in1 ? static_cast<T>(frac) : T(0);
    return t;
}

}  // namespace

template <typename T>
Tensor<T> resample(const Tensor<T>& x, int out_h, int out_w, std::span<const AxisMap> rows,
                   std::span<const AxisMap> cols, Padding padding) {
    const auto& s = x.shape();
    require_rank("resample", s, 4);
    if (out_h < 1)
        throw DimensionError("resample", "outH", 1, out_h);
    if (out_w < 1)
        throw DimensionError("resample", "outW", 1, out_w);
    const size_t N = static_cast<size_t>(s[0]);
    const size_t C = static_cast<size_t>(s[1]);
    const size_t H = static_cast<size_t>(s[2]);
    const size_t W = static_cast<size_t>(s[3]);
    for (auto* maps : {&rows, &cols})
        if (maps->size() != 1 && maps->size() != N)
            throw DimensionError("resample", "maps", static_cast<std::int64_t>(N),
                                 static_cast<std::int64_t>(maps->size()));
    const size_t OH = static_cast<size_t>(out_h);
    const size_t OW = static_cast<size_t>(out_w);
    std::vector<Tap<T>> ty(N * OH), tx(N * OW);
    for (size_t n = 0; n < N; ++n) {
        const auto& ry = rows.size() == 1 ? rows[0] : rows[n];
        const auto& rx = cols.size() == 1 ? cols[0] : cols[n];
        for (size_t y = 0; y < OH; ++y)
            ty[n * OH + y] = make_tap<T>(ry.scale * static_cast<double>(y) + ry.offset, H, padding);
        for (size_t xo = 0; xo < OW; ++xo)
            tx[n * OW + xo] = make_tap<T>(rx.scale * static_cast<double>(xo) + rx.offset, W, padding);
    }

    const auto xd = x.data();
    std::vector<T> out(N * C * OH * OW);
    for (size_t n = 0; n < N; ++n)
        for (size_t c = 0; c < C; ++c) {
            const T* src = xd.data() + (n * C + c) * H * W;
            T* dst = out.data() + (n * C + c) * OH * OW;
            for (size_t y = 0; y < OH; ++y) {
                const auto& a = ty[n * OH + y];
                const T* r0 = src + a.i0 * W;
                const T* r1 = src + a.i1 * W;
                for (size_t xo = 0; xo < OW; ++xo) {
                    const auto& b = tx[n * OW + xo];
                    dst[y * OW + xo] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                                       a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
                }
            }
        }

    return make_result<T>(
        "resample", {s[0], s[1], out_h, out_w}, std::move(out), {x},
        [N, C, H, W, OH, OW, ty = std::move(ty), tx = std::move(tx)](detail::Node<T>& self) {
            const auto& g = self.grad;
            auto& dx = pgrad(self, 0);
            for (size_t n = 0; n < N; ++n)
                for (size_t c = 0; c < C; ++c) {
                    T* dst = dx.data() + (n * C + c) * H * W;
                    const T* gs = g.data() + (n * C + c) * OH * OW;
                    for (size_t y = 0; y < OH; ++y) {
                        const auto& a = ty[n * OH + y];
                        T* r0 = dst + a.i0 * W;
                        T* r1 = dst + a.i1 * W;
                        for (size_t xo = 0; xo < OW; ++xo) {
                            const auto& b = tx[n * OW + xo];
                            const T v = gs[y * OW + xo];
                            r0[b.i0] += a.w0 * b.w0 * v;
                            r0[b.i1] += a.w0 * b.w1 * v;
                            r1[b.i0] += a.w1 * b.w0 * v;
                            r1[b.i1] += a.w1 * b.w1 * v;
                        }
                    }
                }
        });
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w, bool align_corners) {
    require_rank("bilinear_resize", x.shape(), 4);
    if (out_h < 1)
        throw DimensionError("bilinear_resize", "outH", 1, out_h);
    if (out_w < 1)
        throw DimensionError("bilinear_resize", "outW", 1, out_w);
    auto axis_map = [align_corners](std::int64_t in, int out) {
        AxisMap m;
        if (align_corners) {
            m.scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
            m.offset = 0.0;
        } else {
            m.scale = static_cast<double>(in) / static_cast<double>(out);
            m.offset = 0.5 * m.scale - 0.5;
        }
        return m;
    };
    const AxisMap ry = axis_map(x.dim(2), out_h);
    const AxisMap rx = axis_map(x.dim(3), out_w);
    return resample(x, out_h, out_w, std::span<const AxisMap>(&ry, 1), std::span<const AxisMap>(&rx, 1),
                    Padding::Border);
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require_same_shape("mse_loss", pred.shape(), target.shape());
    const auto pd = pred.data();
    const auto td = target.data();
    T total = T(0);
    for (size_t k = 0; k < pd.size(); ++k) {
        const T d = pd[k] - td[k];
        total += d * d;
    }
    const T n = static_cast<T>(pd.size());
    return make_result<T>("mse_loss", {1}, {total / n}, {pred, target}, [n](detail::Node<T>& self) {
        const T g = self.grad[0] * T(2) / n;
        const auto& pd = pdata(self, 0);
        const auto& td = pdata(self, 1);
        if (wants_grad(self, 0)) {
            auto& dp = pgrad(self, 0);
            for (size_t k = 0; k < dp.size(); ++k)
                dp[k] += g * (pd[k] - td[k]);
        }
        if (wants_grad(self, 1)) {
            auto& dt = pgrad(self, 1);
            for (size_t k = 0; k < dt.size(); ++k)
                dt[k] -= g * (pd[k] - td[k]);
        }
    });
}

template <typename T>
void require_finite(const Tensor<T>& x, const char* where) {
    const auto xd = x.data();
    for (size_t k = 0; k < xd.size(); ++k)
        if (!std::isfinite(xd[k])) {
            std::ostringstream os;
            os << where << ": non-finite value " << xd[k] << " at flat index " << k << " of "
               << shape_string(x.shape());
            throw NumericError(os.str());
        }
}

#define ZIAN_INSTANTIATE_OPS(T)                                                                       \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> scale(const Tensor<T>&, T);                                                    \
    template Tensor<T> relu(const Tensor<T>&);                                                        \
    template Tensor<T> sum(const Tensor<T>&);                                                         \
    template Tensor<T> mean(const Tensor<T>&);                                                        \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                            \
    template Tensor<T> concat(std::span<const Tensor<T>>, int);                                       \
    template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                   \
    template Tensor<T> repeat_batch(const Tensor<T>&, std::int64_t);                                  \
    template Tensor<T> select_batch(const Tensor<T>&, std::int64_t);                                  \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);        \
    template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,  \
                                   Tensor<T>&, bool, double, double);                                 \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);      \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                \
    template Tensor<T> bilinear_resize(const Tensor<T>&, int, int, bool);                             \
    template Tensor<T> resample(const Tensor<T>&, int, int, std::span<const AxisMap>,                 \
                                std::span<const AxisMap>, Padding);                                   \
    template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                  \
    template void require_finite(const Tensor<T>&, const char*);

ZIAN_INSTANTIATE_OPS(float)
ZIAN_INSTANTIATE_OPS(double)

}  // namespace zian
