#pragma once

#include <cmath>

namespace advsticker {

// Saturating activation x / sqrt(1 + x^2): sigmoid-shaped onto (-1, 1),
// smooth everywhere, cheap compared to tanh. Used by the color mapper and
// the toy embedder.
inline double sat_act(double x) { return x / std::sqrt(1.0 + x * x); }

// Derivative (1 + x^2)^(-3/2), recovered from the saved output s via
// 1 - s^2 = 1 / (1 + x^2).
inline double sat_act_grad_from_output(double s) {
  const double t = 1.0 - s * s;
  return t * std::sqrt(t);
}

}  // namespace advsticker
