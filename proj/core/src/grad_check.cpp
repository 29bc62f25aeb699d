#include "advsticker/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advsticker/error.hpp"
#include "advsticker/rng.hpp"

namespace advsticker {

GradCheckReport grad_check_report(const ScalarDiffFn& fn, const ImageTensor& input,
                                  double tolerance, std::uint64_t seed, int min_coords) {
  const int n = input.size();
  if (n == 0) throw ShapeError("grad_check: empty input");

  std::vector<int> coords(n);
  std::iota(coords.begin(), coords.end(), 0);
  if (n > min_coords) {
    // partial Fisher-Yates, keep the first min_coords entries
    Rng rng(seed);
    for (int i = 0; i < min_coords; ++i) {
      const int j = i + rng.uniform_int(n - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(min_coords);
  }

  const std::vector<double> analytic = fn.gradient(input);
  if (analytic.size() != static_cast<std::size_t>(n))
    throw ShapeError("grad_check: gradient size mismatch");

  GradCheckReport report;
  report.coords_checked = static_cast<int>(coords.size());
  ImageTensor probe = input;
  for (int idx : coords) {
    const double saved = probe.data[idx];
    probe.data[idx] = saved + kGradCheckStep;
    const double fp = fn.value(probe);
    probe.data[idx] = saved - kGradCheckStep;
    const double fm = fn.value(probe);
    probe.data[idx] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw EvalError("grad_check: non-finite forward value at coordinate " + std::to_string(idx));
    const double fd = (fp - fm) / (2.0 * kGradCheckStep);
    const double an = analytic[idx];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    const double rel = std::abs(fd - an) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = idx;
      report.worst_fd = fd;
      report.worst_adjoint = an;
    }
  }
  report.ok = report.max_rel_err <= tolerance;
  return report;
}

bool grad_check(const ScalarDiffFn& fn, const ImageTensor& input, double tolerance,
                std::uint64_t seed) {
  return grad_check_report(fn, input, tolerance, seed).ok;
}

}  // namespace advsticker
