#include "deepen/convex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace deepen::convex {

namespace {

double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double sqdist_head(const std::vector<double>& a, const std::vector<double>& b,
                   int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
    acc += d * d;
  }
  return acc;
}

}  // namespace

double Problem::lipschitz() const {
  double g = 0.0;
  for (int i = 0; i < m(); ++i) {
    const double na = dot(a.data() + static_cast<std::size_t>(i) * dw,
                          a.data() + static_cast<std::size_t>(i) * dw, dw);
    const double nc = dot(c.data() + static_cast<std::size_t>(i) * dx,
                          c.data() + static_cast<std::size_t>(i) * dx, dx);
    g = std::max(g, std::sqrt(na + nc));
  }
  return g;
}

double Problem::loss(const std::vector<double>& w,
                     const std::vector<double>& x) const {
  double acc = 0.0;
  for (int i = 0; i < m(); ++i) {
    double r = dot(a.data() + static_cast<std::size_t>(i) * dw, w.data(), dw) -
               b[static_cast<std::size_t>(i)];
    if (!x.empty())
      r += dot(c.data() + static_cast<std::size_t>(i) * dx, x.data(), dx);
    acc += std::abs(r);
  }
  return acc / m();
}

double Problem::loss_joint(const std::vector<double>& joint) const {
  double acc = 0.0;
  for (int i = 0; i < m(); ++i) {
    const double r =
        dot(a.data() + static_cast<std::size_t>(i) * dw, joint.data(), dw) +
        dot(c.data() + static_cast<std::size_t>(i) * dx, joint.data() + dw, dx) -
        b[static_cast<std::size_t>(i)];
    acc += std::abs(r);
  }
  return acc / m();
}

Problem random_problem(int dw, int dx, int m, Rng& rng) {
  Problem p;
  p.dw = dw;
  p.dx = dx;
  p.a.resize(static_cast<std::size_t>(m) * dw);
  p.c.resize(static_cast<std::size_t>(m) * dx);
  p.b.resize(static_cast<std::size_t>(m));
  for (auto& v : p.a) v = rng.normal();
  for (auto& v : p.c) v = rng.normal();
  for (auto& v : p.b) v = rng.normal();
  return p;
}

Planted planted_problem(int dw, int dx, int m, Rng& rng) {
  Planted out;
  out.problem = random_problem(dw, dx, m, rng);
  out.w_star.resize(static_cast<std::size_t>(dw));
  out.x_star.resize(static_cast<std::size_t>(dx));
  for (auto& v : out.w_star) v = rng.normal();
  for (auto& v : out.x_star) v = rng.normal();
  Problem& p = out.problem;
  for (int i = 0; i < m; ++i)
    p.b[static_cast<std::size_t>(i)] =
        dot(p.a.data() + static_cast<std::size_t>(i) * dw, out.w_star.data(), dw) +
        dot(p.c.data() + static_cast<std::size_t>(i) * dx, out.x_star.data(), dx);
  return out;
}

std::vector<double> subgradient(const Problem& p,
                                const std::vector<double>& joint) {
  std::vector<double> g(static_cast<std::size_t>(p.dim()), 0.0);
  for (int i = 0; i < p.m(); ++i) {
    const double r =
        dot(p.a.data() + static_cast<std::size_t>(i) * p.dw, joint.data(), p.dw) +
        dot(p.c.data() + static_cast<std::size_t>(i) * p.dx, joint.data() + p.dw,
            p.dx) -
        p.b[static_cast<std::size_t>(i)];
    if (r == 0.0) continue;  // sign(0) = 0 keeps minimizers stationary
    const double s = r > 0.0 ? 1.0 : -1.0;
    for (int j = 0; j < p.dw; ++j)
      g[static_cast<std::size_t>(j)] +=
          s * p.a[static_cast<std::size_t>(i) * p.dw + j];
    for (int j = 0; j < p.dx; ++j)
      g[static_cast<std::size_t>(p.dw + j)] +=
          s * p.c[static_cast<std::size_t>(i) * p.dx + j];
  }
  for (auto& v : g) v /= p.m();
  return g;
}

std::string teleport_str(Teleport t) {
  switch (t) {
    case Teleport::KeepZero:
      return "keep_zero";
    case Teleport::RandomInit:
      return "random";
    case Teleport::OracleX:
      return "oracle";
  }
  return "?";
}

Teleport parse_teleport(std::string_view s) {
  if (s == "keep_zero" || s == "zero") return Teleport::KeepZero;
  if (s == "random") return Teleport::RandomInit;
  if (s == "oracle") return Teleport::OracleX;
  throw std::invalid_argument("unknown teleport rule: " + std::string(s));
}

TheoryRun run_training(const Problem& p, const ScheduleConfig& sched,
                       std::int64_t tau, const RunOptions& opt,
                       const std::vector<double>& w0,
                       const std::vector<double>& x0,
                       const std::vector<double>* x_star, Rng& rng) {
  const std::int64_t T = sched.horizon;
  if (tau < 0 || tau > T)
    throw std::invalid_argument("run_training: tau outside [0, T]");
  if (opt.teleport == Teleport::OracleX && x_star == nullptr)
    throw std::invalid_argument("oracle teleport needs x_star");

  TheoryRun run;
  run.schedule = sched;
  run.horizon = T;
  run.tau = tau;
  run.mode = opt.mode;
  run.x0 = x0;
  run.iterates.reserve(static_cast<std::size_t>(T) + 1);
  run.losses.reserve(static_cast<std::size_t>(T));
  run.etas.reserve(static_cast<std::size_t>(T));

  std::vector<double> joint(static_cast<std::size_t>(p.dim()), 0.0);
  std::copy(w0.begin(), w0.end(), joint.begin());

  auto teleport = [&] {
    switch (opt.teleport) {
      case Teleport::KeepZero:
        run.x_tau.assign(static_cast<std::size_t>(p.dx), 0.0);
        break;
      case Teleport::RandomInit: {
        run.x_tau.resize(static_cast<std::size_t>(p.dx));
        for (auto& v : run.x_tau) v = rng.normal();
        break;
      }
      case Teleport::OracleX:
        run.x_tau = *x_star;
        break;
    }
    std::copy(run.x_tau.begin(), run.x_tau.end(), joint.begin() + p.dw);
  };

  // tau = 0: the fixed-size run starts at [w0, x0] (the shared sample).
  if (tau == 0) {
    run.x_tau = x0;
    std::copy(x0.begin(), x0.end(), joint.begin() + p.dw);
  }

  for (std::int64_t t = 0; t < T; ++t) {
    if (t == tau && tau > 0) teleport();
    run.iterates.push_back(joint);
    const double eta = schedule_lr(sched, t);
    run.etas.push_back(eta);
    run.losses.push_back(p.loss_joint(joint));

    std::vector<double> g;
    if (opt.mode == GradMode::FullSubgradient) {
      g = subgradient(p, joint);
    } else {
      // Minibatch of rows; illustrative only, bounds are not asserted.
      Problem mini;
      mini.dw = p.dw;
      mini.dx = p.dx;
      for (int k = 0; k < opt.minibatch; ++k) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(p.m()));
        mini.a.insert(mini.a.end(), p.a.begin() + static_cast<std::ptrdiff_t>(i) * p.dw,
                      p.a.begin() + static_cast<std::ptrdiff_t>(i + 1) * p.dw);
        mini.c.insert(mini.c.end(), p.c.begin() + static_cast<std::ptrdiff_t>(i) * p.dx,
                      p.c.begin() + static_cast<std::ptrdiff_t>(i + 1) * p.dx);
        mini.b.push_back(p.b[i]);
      }
      g = subgradient(mini, joint);
    }
    if (t < tau) {
      // PGD phase: only w moves, x stays projected at zero.
      for (int j = 0; j < p.dw; ++j)
        joint[static_cast<std::size_t>(j)] -= eta * g[static_cast<std::size_t>(j)];
    } else {
      for (int j = 0; j < p.dim(); ++j)
        joint[static_cast<std::size_t>(j)] -= eta * g[static_cast<std::size_t>(j)];
    }
  }
  // tau == T never teleports: the x block stays untrained zero.
  run.iterates.push_back(joint);
  return run;
}

std::vector<double> weighted_average_iterate(const TheoryRun& run) {
  std::vector<double> avg(run.iterates.front().size(), 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < run.etas.size(); ++t) {
    const double eta = run.etas[t];
    total += eta;
    const auto& it = run.iterates[t];
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += eta * it[j];
  }
  for (auto& v : avg) v /= total;
  return avg;
}

namespace {

// Solves the dim x dim system of zero-residual rows `rows` if regular;
// returns false on a (near-)singular subset.
bool solve_active_rows(const Problem& p, bool restrict_x_to_zero,
                       const std::vector<int>& rows, std::vector<double>& out) {
  const int d = static_cast<int>(rows.size());
  std::vector<double> mat(static_cast<std::size_t>(d) * (d + 1));
  for (int r = 0; r < d; ++r) {
    const int i = rows[static_cast<std::size_t>(r)];
    for (int j = 0; j < p.dw; ++j)
      mat[static_cast<std::size_t>(r) * (d + 1) + j] =
          p.a[static_cast<std::size_t>(i) * p.dw + j];
    if (!restrict_x_to_zero)
      for (int j = 0; j < p.dx; ++j)
        mat[static_cast<std::size_t>(r) * (d + 1) + p.dw + j] =
            p.c[static_cast<std::size_t>(i) * p.dx + j];
    mat[static_cast<std::size_t>(r) * (d + 1) + d] =
        p.b[static_cast<std::size_t>(i)];
  }
  for (int col = 0; col < d; ++col) {
    int pivot = -1;
    double mx = 1e-9;
    for (int r = col; r < d; ++r) {
      const double v = std::abs(mat[static_cast<std::size_t>(r) * (d + 1) + col]);
      if (v > mx) {
        mx = v;
        pivot = r;
      }
    }
    if (pivot < 0) return false;
    for (int c2 = 0; c2 <= d; ++c2)
      std::swap(mat[static_cast<std::size_t>(col) * (d + 1) + c2],
                mat[static_cast<std::size_t>(pivot) * (d + 1) + c2]);
    const double diag = mat[static_cast<std::size_t>(col) * (d + 1) + col];
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = mat[static_cast<std::size_t>(r) * (d + 1) + col] / diag;
      for (int c2 = col; c2 <= d; ++c2)
        mat[static_cast<std::size_t>(r) * (d + 1) + c2] -=
            f * mat[static_cast<std::size_t>(col) * (d + 1) + c2];
    }
  }
  out.assign(static_cast<std::size_t>(d), 0.0);
  for (int r = 0; r < d; ++r)
    out[static_cast<std::size_t>(r)] =
        mat[static_cast<std::size_t>(r) * (d + 1) + d] /
        mat[static_cast<std::size_t>(r) * (d + 1) + r];
  return true;
}

}  // namespace

OracleResult minimizer_oracle(const Problem& p, bool restrict_x_to_zero,
                              Rng& rng, int restarts, std::int64_t iters) {
  const int dim = restrict_x_to_zero ? p.dw : p.dim();
  const double g_lip = p.lipschitz();

  auto eval = [&](const std::vector<double>& pt) {
    if (!restrict_x_to_zero) return p.loss_joint(pt);
    static thread_local std::vector<double> empty;
    return p.loss(pt, empty);
  };
  auto grad = [&](const std::vector<double>& pt) {
    std::vector<double> joint(static_cast<std::size_t>(p.dim()), 0.0);
    std::copy(pt.begin(), pt.end(), joint.begin());
    auto g = subgradient(p, joint);
    g.resize(static_cast<std::size_t>(dim));
    return g;
  };

  // Descent lands near a vertex of the piecewise-linear surface; the
  // exact minimizer solves `dim` zero-residual rows. Snapping to the
  // best nearby vertex removes the last O(step) error.
  auto vertex_polish = [&](std::vector<double>& pt, double& best_loss) {
    if (dim > static_cast<int>(p.m())) return;
    std::vector<std::pair<double, int>> resid;
    std::vector<double> joint(static_cast<std::size_t>(p.dim()), 0.0);
    std::copy(pt.begin(), pt.end(), joint.begin());
    for (int i = 0; i < p.m(); ++i) {
      double r = -p.b[static_cast<std::size_t>(i)];
      for (int j = 0; j < p.dw; ++j)
        r += p.a[static_cast<std::size_t>(i) * p.dw + j] *
             joint[static_cast<std::size_t>(j)];
      if (!restrict_x_to_zero)
        for (int j = 0; j < p.dx; ++j)
          r += p.c[static_cast<std::size_t>(i) * p.dx + j] *
               joint[static_cast<std::size_t>(p.dw + j)];
      resid.emplace_back(std::abs(r), i);
    }
    std::sort(resid.begin(), resid.end());
    const int k = std::min<int>(dim + 5, p.m());
    std::vector<int> comb(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) comb[static_cast<std::size_t>(i)] = i;
    std::vector<int> rows(static_cast<std::size_t>(dim));
    std::vector<double> candidate;
    for (;;) {
      for (int i = 0; i < dim; ++i)
        rows[static_cast<std::size_t>(i)] =
            resid[static_cast<std::size_t>(comb[static_cast<std::size_t>(i)])]
                .second;
      if (solve_active_rows(p, restrict_x_to_zero, rows, candidate)) {
        const double l = eval(candidate);
        if (l < best_loss) {
          best_loss = l;
          pt = candidate;
        }
      }
      int pos = dim - 1;
      while (pos >= 0 && comb[static_cast<std::size_t>(pos)] == k - dim + pos)
        --pos;
      if (pos < 0) break;
      ++comb[static_cast<std::size_t>(pos)];
      for (int i = pos + 1; i < dim; ++i)
        comb[static_cast<std::size_t>(i)] =
            comb[static_cast<std::size_t>(i - 1)] + 1;
    }
  };

  std::vector<double> best_pt;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> restart_bests;
  for (int r = 0; r < restarts; ++r) {
    std::vector<double> pt(static_cast<std::size_t>(dim));
    for (auto& v : pt) v = r == 0 ? 0.0 : rng.normal();
    double local_best = eval(pt);
    std::vector<double> local_pt = pt;
    // Polyak steps with an adaptive target: eta = (L - target)/|g|^2,
    // target = best - delta, delta halved after stretches without
    // improvement. The absolute-residual objective is sharp, so this
    // converges geometrically once delta is in range.
    double delta = std::max(local_best, g_lip);
    std::int64_t since_improve = 0;
    for (std::int64_t k = 1; k <= iters; ++k) {
      const double l = eval(pt);
      if (l < local_best - 1e-15) {
        local_best = l;
        local_pt = pt;
        since_improve = 0;
      } else if (++since_improve > 100) {
        delta *= 0.5;
        since_improve = 0;
        pt = local_pt;  // re-center on the incumbent
        if (delta < 1e-16 * std::max(1.0, local_best)) break;
      }
      const auto g = grad(pt);
      double gn2 = 0.0;
      for (double v : g) gn2 += v * v;
      if (gn2 == 0.0) break;  // stationary under the sign(0)=0 selection
      const double target = std::max(local_best - delta, 0.0);
      const double eta = (l - target) / gn2;
      if (eta <= 0.0) {
        delta *= 0.5;
        continue;
      }
      for (int j = 0; j < dim; ++j)
        pt[static_cast<std::size_t>(j)] -= eta * g[static_cast<std::size_t>(j)];
    }
    vertex_polish(local_pt, local_best);
    restart_bests.push_back(local_best);
    if (local_best < best) {
      best = local_best;
      best_pt = local_pt;
    }
  }
  // Certification: the leading restarts must agree on the value; refuse
  // rather than return a silent approximation.
  std::sort(restart_bests.begin(), restart_bests.end());
  const double scale = std::max(1.0, std::abs(best));
  const std::size_t quorum = std::min<std::size_t>(3, restart_bests.size());
  if (restart_bests[quorum - 1] - restart_bests[0] > 1e-5 * scale)
    throw OracleFailure("minimizer oracle restarts disagree by " +
                        std::to_string(restart_bests[quorum - 1] -
                                       restart_bests[0]));
  return {best_pt, best};
}

namespace {

BoundReport bound_terms(const Problem& p, const TheoryRun& run,
                        const std::vector<double>& w_star,
                        const std::vector<double>& joint_star) {
  BoundReport rep;
  const double g_lip = p.lipschitz();
  double sum_eta = 0.0, sum_eta2 = 0.0;
  for (double e : run.etas) {
    sum_eta += e;
    sum_eta2 += e * e;
  }
  const std::int64_t tau = run.tau;
  const double loss_w_star = p.loss(w_star, {});
  const double loss_joint_star = p.loss_joint(joint_star);

  double head = 0.0;
  for (std::int64_t t = 0; t < tau; ++t) head += run.etas[static_cast<std::size_t>(t)];
  rep.minima_term =
      (head * loss_w_star + (sum_eta - head) * loss_joint_star) / sum_eta;
  rep.g2_term = g_lip * g_lip * sum_eta2 / (2.0 * sum_eta);

  const auto& w0 = run.iterates.front();
  const auto& w_tau = run.iterates[static_cast<std::size_t>(tau)];
  const double d_w0 = sqdist_head(w0, w_star, p.dw);
  const double d_w_tau = sqdist_head(w_tau, w_star, p.dw);
  const double d_W_tau = sqdist(w_tau, joint_star);
  rep.dist_term = (d_w0 + d_W_tau - d_w_tau) / (2.0 * sum_eta);

  rep.rhs = rep.minima_term + rep.g2_term + rep.dist_term;
  rep.lhs = p.loss_joint(weighted_average_iterate(run));
  rep.slack = rep.rhs - rep.lhs;
  rep.thrown_term = sqdist(run.iterates.back(), joint_star) / (2.0 * sum_eta);
  rep.asserted = run.mode == GradMode::FullSubgradient;
  return rep;
}

}  // namespace

BoundReport bound_progressive(const Problem& p, const TheoryRun& run,
                              const std::vector<double>& w_star,
                              const std::vector<double>& joint_star) {
  return bound_terms(p, run, w_star, joint_star);
}

BoundReport bound_fixed(const Problem& p, const TheoryRun& run,
                        const std::vector<double>& joint_star) {
  if (run.tau != 0)
    throw std::invalid_argument("bound_fixed: needs a tau = 0 run");
  // With tau = 0 the w* terms cancel; pass the joint minimizer's head.
  std::vector<double> w_head(joint_star.begin(), joint_star.begin() + p.dw);
  return bound_terms(p, run, w_head, joint_star);
}

StepCheck check_per_step_inequality(const Problem& p, const TheoryRun& run,
                                    const std::vector<double>& w_star,
                                    const std::vector<double>& joint_star) {
  StepCheck check;
  const double g_lip = p.lipschitz();
  const double g2 = g_lip * g_lip;
  const double loss_w_star = p.loss(w_star, {});
  const double loss_joint_star = p.loss_joint(joint_star);
  for (std::int64_t t = 0; t < run.horizon; ++t) {
    const auto& cur = run.iterates[static_cast<std::size_t>(t)];
    const auto& nxt = run.iterates[static_cast<std::size_t>(t + 1)];
    const double eta = run.etas[static_cast<std::size_t>(t)];
    const double lt = run.losses[static_cast<std::size_t>(t)];
    double lhs, rhs;
    if (t < run.tau) {
      // Small phase measured in w only against w*. The teleport at tau
      // changes x, never w, so comparing head coordinates stays valid
      // at t = tau - 1.
      lhs = sqdist_head(nxt, w_star, p.dw);
      rhs = sqdist_head(cur, w_star, p.dw) - 2.0 * eta * (lt - loss_w_star) +
            eta * eta * g2;
    } else {
      lhs = sqdist(nxt, joint_star);
      rhs = sqdist(cur, joint_star) - 2.0 * eta * (lt - loss_joint_star) +
            eta * eta * g2;
    }
    const double slack = rhs - lhs;
    if (slack < -1e-12 * std::max(1.0, std::abs(rhs))) {
      check.all_hold = false;
      ++check.violations;
      check.worst = std::min(check.worst, slack);
    }
  }
  return check;
}

GapReport gap_bound(const Problem& p, const TheoryRun& prog,
                    const std::vector<double>& w_star,
                    const std::vector<double>& x_star) {
  GapReport rep;
  double sum_eta = 0.0, head = 0.0;
  for (std::size_t t = 0; t < prog.etas.size(); ++t) {
    sum_eta += prog.etas[t];
    if (static_cast<std::int64_t>(t) < prog.tau) head += prog.etas[t];
  }
  rep.mass = head / sum_eta;
  rep.minima_gap = p.loss(w_star, {});  // minus L(W*), which must be ~0
  rep.mass_term = rep.mass * rep.minima_gap;

  std::vector<double> zeros(static_cast<std::size_t>(p.dx), 0.0);
  const auto& x_tau = prog.x_tau.empty() ? zeros : prog.x_tau;
  double d_tau = 0.0, d_0 = 0.0;
  for (int j = 0; j < p.dx; ++j) {
    const double a = x_tau[static_cast<std::size_t>(j)] - x_star[static_cast<std::size_t>(j)];
    const double b = prog.x0[static_cast<std::size_t>(j)] - x_star[static_cast<std::size_t>(j)];
    d_tau += a * a;
    d_0 += b * b;
  }
  rep.dist_term = (d_tau - d_0) / (2.0 * sum_eta);
  rep.bound = rep.mass_term + rep.dist_term;
  return rep;
}

std::vector<TrialReport> run_theory_suite(const SuiteOptions& opt) {
  std::vector<TrialReport> out;
  Rng root(opt.seed);
  for (int trial = 0; trial < opt.trials; ++trial) {
    Rng rng = root.fork(static_cast<std::uint64_t>(trial) + 1);
    const Planted planted = planted_problem(opt.dw, opt.dx, opt.m, rng);
    const Problem& p = planted.problem;

    // Decomposability guard: the planted point must be an exact joint
    // minimizer of the generated instance.
    std::vector<double> joint_star(static_cast<std::size_t>(p.dim()));
    std::copy(planted.w_star.begin(), planted.w_star.end(), joint_star.begin());
    std::copy(planted.x_star.begin(), planted.x_star.end(),
              joint_star.begin() + p.dw);
    if (p.loss_joint(joint_star) > 1e-12)
      throw OracleFailure("planted instance failed the decomposability check");

    const auto w_small = minimizer_oracle(p, /*restrict_x_to_zero=*/true, rng);

    ScheduleConfig sched;
    sched.kind = opt.schedule;
    sched.peak_lr = opt.peak_lr;
    sched.warmup_frac = 0.02;
    sched.decay_frac = opt.schedule == ScheduleKind::Wsd ? 0.1 : 0.0;
    sched.horizon = opt.horizon;

    std::vector<double> w0(static_cast<std::size_t>(opt.dw));
    std::vector<double> x0(static_cast<std::size_t>(opt.dx));
    for (auto& v : w0) v = rng.normal();
    for (auto& v : x0) v = rng.normal();

    RunOptions ropt;
    ropt.teleport = opt.teleport;
    ropt.mode = opt.mode;

    RunOptions fixed_opt = ropt;
    Rng fixed_rng = rng.fork(0xf17ed);
    const TheoryRun fixed = run_training(p, sched, 0, fixed_opt, w0, x0,
                                         &planted.x_star, fixed_rng);

    for (double frac : opt.tau_fracs) {
      const auto tau = static_cast<std::int64_t>(
          frac * static_cast<double>(opt.horizon));
      TrialReport rep;
      rep.seed = static_cast<std::uint64_t>(trial);
      rep.tau = tau;
      Rng prog_rng = rng.fork(0x9109 + static_cast<std::uint64_t>(tau));
      const TheoryRun prog = tau == 0
                                 ? fixed
                                 : run_training(p, sched, tau, ropt, w0, x0,
                                                &planted.x_star, prog_rng);
      rep.progressive =
          bound_progressive(p, prog, w_small.point, joint_star);
      rep.fixed = bound_fixed(p, fixed, joint_star);
      rep.steps_progressive =
          check_per_step_inequality(p, prog, w_small.point, joint_star);
      rep.steps_fixed =
          check_per_step_inequality(p, fixed, w_small.point, joint_star);
      rep.gap = gap_bound(p, prog, w_small.point, planted.x_star);

      auto jensen = [&](const TheoryRun& run) {
        double sum_eta = 0.0, mix = 0.0;
        for (std::size_t t = 0; t < run.etas.size(); ++t) {
          sum_eta += run.etas[t];
          mix += run.etas[t] * run.losses[t];
        }
        return mix / sum_eta - p.loss_joint(weighted_average_iterate(run));
      };
      rep.jensen_slack_prog = jensen(prog);
      rep.jensen_slack_fixed = jensen(fixed);
      out.push_back(std::move(rep));
    }
  }
  return out;
}

}  // namespace deepen::convex
