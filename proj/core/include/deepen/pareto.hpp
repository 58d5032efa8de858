#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace deepen {

struct RunPoint {
  double flops = 0.0;
  double loss = 0.0;
  std::string name;
};

// Indices of the non-dominated points under (flops <=, loss <=), sorted
// by ascending flops. Ties resolve toward the lower-flops point.
std::vector<std::size_t> pareto_frontier(const std::vector<RunPoint>& points);

}  // namespace deepen
