#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fsce/autograd.hpp"

namespace fsce {

struct GradcheckOptions {
  int trials = 20;        // per primitive
  int block_trials = 3;   // per composite block (CBAM, WTConv, DSAF)
  double h = 1e-5;
  double tol_primitive = 1e-5;
  double tol_block = 1e-4;
  std::uint64_t seed = 1;
};

struct GradcheckResult {
  std::string name;
  int trials = 0;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed() const { return max_rel_error <= tolerance; }
};

// Elementwise error |a - n| / max(|a|, |n|, floor) between the analytic and
// central-difference gradients of sum(R * f(vars)) for a random projection R.
inline constexpr double kGradcheckFloor = 1e-3;

// One trial over `vars`, returning the largest elementwise error.
double gradcheck_once(const std::function<Var<double>(Tape<double>&)>& f, const std::vector<Var<double>>& vars,
                      double h, std::uint64_t projection_seed);

// The full suite: every differentiable primitive (each conv path included),
// the composite blocks and the two losses.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opt = {},
                                           const std::function<void(const GradcheckResult&)>& on_result = {});

}  // namespace fsce
