#pragma once

#include <string>
#include <vector>

#include "advsticker/grad_check.hpp"

namespace advsticker {

struct BatteryCase {
  std::string name;
  GradCheckReport report;
};

// Finite-difference checks for every differentiable stage, from bilinear
// sampling up through the full render + embed + loss chain (with and without
// the color mapper). Each seed re-randomizes inputs and probe coordinates.
// Sizes are small so the whole battery stays fast.
std::vector<BatteryCase> run_gradient_battery(int seeds, double tolerance);

bool battery_passed(const std::vector<BatteryCase>& cases);

}  // namespace advsticker
