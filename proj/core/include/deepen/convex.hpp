#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepen/rng.hpp"
#include "deepen/schedule.hpp"

namespace deepen::convex {

// Least-absolute-deviation objective over the split iterate [w, x]:
//   L([w, x]) = (1/m) sum_i |a_i . w + c_i . x - b_i|
// Convex, non-smooth, and exactly G-Lipschitz with
// G = max_i ||(a_i, c_i)||. Freezing x = 0 gives the small problem.
struct Problem {
  int dw = 0, dx = 0;
  std::vector<double> a;  // [m, dw]
  std::vector<double> c;  // [m, dx]
  std::vector<double> b;  // [m]

  int m() const { return static_cast<int>(b.size()); }
  int dim() const { return dw + dx; }
  double lipschitz() const;
  double loss(const std::vector<double>& w, const std::vector<double>& x) const;
  double loss_joint(const std::vector<double>& joint) const;
};

Problem random_problem(int dw, int dx, int m, Rng& rng);

// Instance with a planted decomposable minimizer: b_i = a_i.w* + c_i.x*,
// so W* = [w*, x*] attains loss exactly zero by construction.
struct Planted {
  Problem problem;
  std::vector<double> w_star;
  std::vector<double> x_star;
};
Planted planted_problem(int dw, int dx, int m, Rng& rng);

// (1/m) sum_i sign(r_i) (a_i, c_i) with sign(0) := 0. Always has norm
// at most G.
std::vector<double> subgradient(const Problem& p, const std::vector<double>& joint);

enum class Teleport { KeepZero, RandomInit, OracleX };
std::string teleport_str(Teleport t);
Teleport parse_teleport(std::string_view s);

enum class GradMode { FullSubgradient, Minibatch };

struct RunOptions {
  Teleport teleport = Teleport::RandomInit;
  GradMode mode = GradMode::FullSubgradient;
  int minibatch = 8;
};

// One realized training trajectory. iterates[t] is the joint-space state
// the t-th step acts on (x == 0 exactly before tau); iterates[T] is the
// final point. losses[t] = L_t, etas[t] = eta_{t+1}.
struct TheoryRun {
  ScheduleConfig schedule;
  std::int64_t horizon = 0;
  std::int64_t tau = 0;
  GradMode mode = GradMode::FullSubgradient;
  std::vector<std::vector<double>> iterates;
  std::vector<double> losses;
  std::vector<double> etas;
  std::vector<double> x0;     // teleport-coupling sample shared per trial
  std::vector<double> x_tau;  // value assigned at the expansion step
};

// Projected-then-full subgradient descent: steps before tau update w only
// (the x block is the projection's zero), the expansion step teleports x
// per the rule, and later steps run on the joint problem. tau = 0
// reproduces the fixed-size run from [w0, x0] step for step.
TheoryRun run_training(const Problem& p, const ScheduleConfig& sched,
                       std::int64_t tau, const RunOptions& opt,
                       const std::vector<double>& w0,
                       const std::vector<double>& x0,
                       const std::vector<double>* x_star, Rng& rng);

// Eta-weighted running average of iterates (small iterates embedded as
// [w, 0]).
std::vector<double> weighted_average_iterate(const TheoryRun& run);

struct OracleFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleResult {
  std::vector<double> point;  // dw (restricted) or dw+dx entries
  double loss = 0.0;
};

// Long-horizon subgradient descent with decreasing steps and restarts;
// certified by restart consistency. Throws OracleFailure instead of
// returning a silent approximation.
OracleResult minimizer_oracle(const Problem& p, bool restrict_x_to_zero,
                              Rng& rng, int restarts = 6,
                              std::int64_t iters = 20000);

struct BoundReport {
  double lhs = 0.0;          // L(Wbar)
  double minima_term = 0.0;  // eta-weighted reference-loss mix
  double g2_term = 0.0;      // G^2 sum eta^2 / (2 sum eta)
  double dist_term = 0.0;    // initialization/teleport distances
  double rhs = 0.0;
  double slack = 0.0;        // rhs - lhs
  double thrown_term = 0.0;  // ||W_T - W*||^2 / (2 sum eta), dropped upstream
  bool asserted = true;      // false for minibatch runs (advisory only)
};

// Realized-run bound for progressive training (reference points may be
// any fixed (w*, W*): the inequality telescopes for all of them).
BoundReport bound_progressive(const Problem& p, const TheoryRun& run,
                              const std::vector<double>& w_star,
                              const std::vector<double>& joint_star);

// Fixed-size specialization (requires tau == 0).
BoundReport bound_fixed(const Problem& p, const TheoryRun& run,
                        const std::vector<double>& joint_star);

struct StepCheck {
  bool all_hold = true;
  std::int64_t violations = 0;
  double worst = 0.0;  // most negative per-step slack
};

// Per-step distance inequality along the realized trajectory.
StepCheck check_per_step_inequality(const Problem& p, const TheoryRun& run,
                                    const std::vector<double>& w_star,
                                    const std::vector<double>& joint_star);

struct GapReport {
  double mass = 0.0;        // schedule mass at tau
  double minima_gap = 0.0;  // L(w*) - L(W*)
  double mass_term = 0.0;
  double dist_term = 0.0;  // (||x_tau - x*||^2 - ||x0 - x*||^2) / (2 sum eta)
  double bound = 0.0;
};

// Loss-gap decomposition for a planted decomposable problem; refuses
// instances whose planted point is not an exact joint minimizer.
GapReport gap_bound(const Problem& p, const TheoryRun& prog,
                    const std::vector<double>& w_star,
                    const std::vector<double>& x_star);

// One trial of the theory verifier: planted problem, a progressive run
// and the coupled fixed-size run, all bound terms and slacks.
struct TrialReport {
  std::uint64_t seed = 0;
  std::int64_t tau = 0;
  BoundReport progressive;
  BoundReport fixed;
  StepCheck steps_progressive;
  StepCheck steps_fixed;
  GapReport gap;
  double jensen_slack_prog = 0.0;  // eta-weighted loss mean minus L(Wbar)
  double jensen_slack_fixed = 0.0;
};

struct SuiteOptions {
  int dw = 8, dx = 8, m = 64;
  std::int64_t horizon = 2000;
  std::vector<double> tau_fracs = {0.5};
  ScheduleKind schedule = ScheduleKind::Wsd;
  double peak_lr = 0.05;
  Teleport teleport = Teleport::RandomInit;
  GradMode mode = GradMode::FullSubgradient;
  int trials = 100;
  std::uint64_t seed = 0;
};

std::vector<TrialReport> run_theory_suite(const SuiteOptions& opt);

}  // namespace deepen::convex
