#include "deepen/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace deepen {

namespace {

// Trailing moving average over up to `window` points ending at i.
std::vector<double> smooth(const std::vector<double>& v, int window) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= static_cast<std::size_t>(window)) acc -= v[i - window];
    const int n = static_cast<int>(std::min<std::size_t>(i + 1, window));
    out[i] = acc / n;
  }
  return out;
}

}  // namespace

MixingReport detect_mixing(const RunLog& progressive, const RunLog& fixed,
                           double epsilon, int window, std::int64_t tau) {
  if (window < 1) throw std::invalid_argument("mixing window must be >= 1");
  MixingReport rep;
  rep.epsilon = epsilon;
  rep.window = window;

  if (tau < 0) {
    tau = 0;
    std::int64_t n0 = -1;
    for (const auto& r : progressive.records) {
      if (n0 < 0) n0 = r.n_params;
      if (r.n_params != n0) {
        tau = r.step;
        break;
      }
    }
  }
  rep.tau = tau;

  // Shared eval grid.
  std::map<std::int64_t, double> fixed_vals;
  for (const auto* r : fixed.eval_points()) fixed_vals[r->step] = r->val_loss;
  std::vector<std::int64_t> steps;
  std::vector<double> prog_v, fixed_v;
  for (const auto* r : progressive.eval_points()) {
    auto it = fixed_vals.find(r->step);
    if (it == fixed_vals.end()) continue;
    steps.push_back(r->step);
    prog_v.push_back(r->val_loss);
    fixed_v.push_back(it->second);
  }
  std::size_t beyond = 0;
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (steps[i] >= tau) ++beyond;
  if (beyond < static_cast<std::size_t>(window))
    throw std::invalid_argument(
        "detect_mixing: insufficient eval overlap beyond tau (" +
        std::to_string(beyond) + " shared evals, window " +
        std::to_string(window) + ")");

  const auto ps = smooth(prog_v, window);
  const auto fs = smooth(fixed_v, window);
  std::vector<bool> close(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i)
    close[i] = std::abs(ps[i] - fs[i]) / std::abs(fs[i]) <= epsilon;

  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < tau) continue;
    if (i + static_cast<std::size_t>(window) > steps.size()) break;
    bool ok = true;
    for (int j = 0; j < window && ok; ++j) ok = close[i + j];
    if (!ok) continue;
    rep.mixed = true;
    rep.mixed_at_step = steps[i];
    rep.t_mix = steps[i] - tau;
    const RunRecord* at_mix = progressive.at_or_before(steps[i]);
    const RunRecord* at_tau = progressive.at_or_before(tau);
    if (at_mix && at_tau) rep.tokens_to_mix = at_mix->tokens - at_tau->tokens;
    break;
  }
  return rep;
}

TimingAdvice plan_expansion_timing(std::int64_t stable_end, std::int64_t t_mix,
                                   std::int64_t warmup_end) {
  if (t_mix < 0) throw std::invalid_argument("plan_expansion_timing: t_mix < 0");
  TimingAdvice advice;
  advice.tau = stable_end - t_mix;
  if (advice.tau < warmup_end) {
    advice.tau = warmup_end;
    advice.clamped = true;
  }
  return advice;
}

}  // namespace deepen
