#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "fsce/autograd.hpp"
#include "fsce/rng.hpp"

namespace test {

template <typename T = float>
fsce::Tensor<T> random_tensor(fsce::Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  fsce::Rng rng(seed);
  fsce::Tensor<T> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs(const fsce::Tensor<T>& a, const fsce::Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

template <typename T>
bool bitwise_equal(const fsce::Tensor<T>& a, const fsce::Tensor<T>& b) {
  return a.shape() == b.shape() && a.storage() == b.storage();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fsce_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace test
