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

#include <algorithm>
#include <cstddef>

// Row-major dense products with a fixed reduction order, so results are
// bitwise reproducible for a given build.
namespace zian::kernels {

/// C[MxN] (+)= A[MxK] * B[KxN]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
    if (!accumulate)
        std::fill(C, C + M * N, T(0));
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) {
        T* c0 = C + (i + 0) * N;
        T* c1 = C + (i + 1) * N;
        T* c2 = C + (i + 2) * N;
        T* c3 = C + (i + 3) * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T a0 = A[(i + 0) * K + k];
            const T a1 = A[(i + 1) * K + k];
            const T a2 = A[(i + 2) * K + k];
            const T a3 = A[(i + 3) * K + k];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) {
                const T bj = b[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < M; ++i) {
        T* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T a = A[i * K + k];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j)
                c[j] += a * b[j];
        }
    }
}

/// Dot product with 16 independent lanes so the loop vectorizes without
/// reassociating a single accumulator.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
    constexpr std::size_t L = 16;
    T acc[L] = {};
    std::size_t p = 0;
    for (; p + L <= n; p += L)
        for (std::size_t l = 0; l < L; ++l)
            acc[l] += a[p + l] * b[p + l];
    T tail = T(0);
    for (; p < n; ++p)
        tail += a[p] * b[p];
    T total = T(0);
    for (std::size_t l = 0; l < L; ++l)
        total += acc[l];
    return total + tail;
}

/// C[MxN] (+)= A[MxK] * B[NxK]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            const T v = dot(A + i * K, B + j * K, K);
            C[i * N + j] = accumulate ? C[i * N + j] + v : v;
        }
    }
}

/// C[MxN] (+)= A[KxM]^T * B[KxN]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
    if (!accumulate)
        std::fill(C, C + M * N, T(0));
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) {
        T* c0 = C + (i + 0) * N;
        T* c1 = C + (i + 1) * N;
        T* c2 = C + (i + 2) * N;
        T* c3 = C + (i + 3) * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T* a = A + k * M + i;
            const T a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) {
                const T bj = b[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < M; ++i) {
        T* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T a = A[k * M + i];
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j)
                c[j] += a * b[j];
        }
    }
}

}  // namespace zian::kernels
