#include "deepen/pareto.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace deepen {

std::vector<std::size_t> pareto_frontier(const std::vector<RunPoint>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (points[a].flops != points[b].flops)
                       return points[a].flops < points[b].flops;
                     return points[a].loss < points[b].loss;
                   });
  std::vector<std::size_t> frontier;
  double best_loss = std::numeric_limits<double>::infinity();
  double last_flops = -std::numeric_limits<double>::infinity();
  for (std::size_t idx : order) {
    const auto& p = points[idx];
    // equal-flops ties: only the first (lowest loss) survives
    if (p.flops == last_flops) continue;
    if (p.loss < best_loss) {
      frontier.push_back(idx);
      best_loss = p.loss;
      last_flops = p.flops;
    }
  }
  return frontier;
}

}  // namespace deepen
