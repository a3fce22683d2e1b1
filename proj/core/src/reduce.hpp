#pragma once

#include <cstddef>

namespace fsce::detail {

// Sums with eight interleaved accumulators combined in a fixed order. The
// association depends only on the length, never on pointer alignment, so
// results are identical wherever the buffers live.
template <typename T>
T sum_fixed(const T* a, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l];
  for (; i < n; ++i) acc[i % 8] += a[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

template <typename T>
T dot_fixed(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  for (; i < n; ++i) acc[i % 8] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

// Sum of (a[i] - m)^2.
template <typename T>
T sq_dev_fixed(const T* a, T m, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) {
      const T d = a[i + l] - m;
      acc[l] += d * d;
    }
  for (; i < n; ++i) {
    const T d = a[i] - m;
    acc[i % 8] += d * d;
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

}  // namespace fsce::detail
