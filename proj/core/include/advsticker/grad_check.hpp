#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "advsticker/tensor.hpp"

namespace advsticker {

// A scalar-valued functional of an image together with its hand-derived
// gradient route. grad_check compares the route against central finite
// differences; the finite-difference side never touches the adjoint code.
struct ScalarDiffFn {
  std::function<double(const ImageTensor&)> value;
  std::function<std::vector<double>(const ImageTensor&)> gradient;
};

struct GradCheckReport {
  bool ok = false;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  int worst_index = -1;
  double worst_fd = 0.0;
  double worst_adjoint = 0.0;
};

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr int kGradCheckMinCoords = 64;

// Central differences with step 1e-4 on a seeded random subset of at least
// 64 coordinates (all coordinates when the input is smaller). Relative error
// uses max(|fd|, |adjoint|, 1e-6) as denominator so vanishing entries do not
// blow up on finite-difference roundoff.
GradCheckReport grad_check_report(const ScalarDiffFn& fn, const ImageTensor& input,
                                  double tolerance, std::uint64_t seed = 1,
                                  int min_coords = kGradCheckMinCoords);

bool grad_check(const ScalarDiffFn& fn, const ImageTensor& input, double tolerance,
                std::uint64_t seed = 1);

}  // namespace advsticker
