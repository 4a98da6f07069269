#include "mobistore/marginal_value.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mobistore {

namespace {

constexpr double kPinned = 1e-12;

double pos(double x) { return x > 0.0 ? x : 0.0; }

// LMP at (t, bus) with prices beyond the horizon taken as zero
double lmp_at(const DispatchSolution& sol, int t, int bus) {
  if (t >= sol.T) return 0.0;
  return sol.lambda(t, bus);
}

} // namespace

BindingPattern pattern_from_schedule(const Eigen::VectorXd& u,
                                     double initial_soc, double capacity,
                                     const Eigen::VectorXd& power_caps,
                                     double tol) {
  const int T = static_cast<int>(u.size());
  if (power_caps.size() != T)
    throw std::invalid_argument("pattern_from_schedule: size mismatch");
  BindingPattern p;
  double soc = initial_soc;
  for (int t = 0; t < T; ++t) {
    soc += u(t);
    const bool energy = soc <= tol || soc >= capacity - tol;
    const bool power =
        std::isfinite(power_caps(t)) && std::abs(u(t)) >= power_caps(t) - tol;
    if (energy && power) p.degenerate = true;
    if (energy)
      p.energy_bound.push_back(t);
    else if (power)
      p.power_bound.push_back(t);
  }
  return p;
}

ArbitrageResult solve_price_arbitrage(const Eigen::VectorXd& prices,
                                      const MobileStorageUnit& unit,
                                      const Eigen::VectorXd& delta_s,
                                      const ArbitrageOptions& opts) {
  const int T = static_cast<int>(prices.size());
  if (delta_s.size() != T)
    throw std::invalid_argument("solve_price_arbitrage: size mismatch");

  Eigen::VectorXd caps(T);
  for (int t = 0; t < T; ++t)
    caps(t) = opts.power_bounds
                  ? unit.power_rating(unit.capacity) * delta_s(t)
                  : std::numeric_limits<double>::infinity();

  // Pin u(t) = 0 where the power window is empty; a pair of opposing
  // inequalities would close the strict interior.
  std::vector<int> pinned;
  for (int t = 0; t < T; ++t)
    if (std::isfinite(caps(t)) && caps(t) <= kPinned) pinned.push_back(t);

  QuadraticProgram lp;
  lp.c = prices;
  lp.Q = Eigen::MatrixXd::Zero(T, T);
  lp.A = Eigen::MatrixXd::Zero(static_cast<int>(pinned.size()), T);
  lp.b = Eigen::VectorXd::Zero(static_cast<int>(pinned.size()));
  for (int r = 0; r < static_cast<int>(pinned.size()); ++r)
    lp.A(r, pinned[r]) = 1.0;

  int rows = 2 * T;
  for (int t = 0; t < T; ++t)
    if (std::isfinite(caps(t)) && caps(t) > kPinned) rows += 2;
  lp.G = Eigen::MatrixXd::Zero(rows, T);
  lp.h = Eigen::VectorXd::Zero(rows);
  int r = 0;
  for (int t = 0; t < T; ++t) { // 0 <= s0 + cumsum(u) <= capacity
    for (int tau = 0; tau <= t; ++tau) lp.G(r, tau) = 1.0;
    lp.h(r) = unit.capacity - unit.initial_soc;
    ++r;
    for (int tau = 0; tau <= t; ++tau) lp.G(r, tau) = -1.0;
    lp.h(r) = unit.initial_soc;
    ++r;
  }
  for (int t = 0; t < T; ++t) {
    if (!std::isfinite(caps(t)) || caps(t) <= kPinned) continue;
    lp.G(r, t) = 1.0;
    lp.h(r) = caps(t);
    ++r;
    lp.G(r, t) = -1.0;
    lp.h(r) = caps(t);
    ++r;
  }

  QpOptions qopts = opts.qp;
  qopts.check_uniqueness = opts.check_uniqueness;
  QpSolution qsol = solve_lp(lp.c, lp.A, lp.b, lp.G, lp.h, qopts);

  ArbitrageResult res;
  res.status = qsol.status;
  if (qsol.status != SolveStatus::optimal) return res;
  res.u = qsol.x;
  res.profit = -qsol.objective;
  res.unique_optimum = qsol.unique_optimum;
  res.pattern = pattern_from_schedule(res.u, unit.initial_soc, unit.capacity,
                                      caps, opts.binding_tol);
  return res;
}

ArbitrageResult solve_price_arbitrage(const DispatchSolution& sol, int unit,
                                      const Fleet& fleet,
                                      const ArbitrageOptions& opts) {
  if (unit < 0 || unit >= sol.K)
    throw std::out_of_range("solve_price_arbitrage: unit index");
  Eigen::VectorXd prices(sol.T);
  for (int t = 0; t < sol.T; ++t)
    prices(t) = sol.lambda(t, sol.trajectories[unit][t]);
  Eigen::VectorXd ds = sol.delta_s[unit];
  ArbitrageOptions o = opts;
  o.power_bounds = opts.power_bounds && !sol.rapid;
  return solve_price_arbitrage(prices, fleet.units[unit], ds, o);
}

MarginalValue mv_rapid(const DispatchSolution& sol, int unit,
                       const MvOptions& opts) {
  if (unit < 0 || unit >= sol.K)
    throw std::out_of_range("mv_rapid: unit index");
  MarginalValue mv;
  const StorageDuals& d = sol.storage_duals[unit];
  mv.from_duals = d.mu.sum();
  mv.per_period = d.mu;

  const std::vector<int>& traj = sol.trajectories[unit];
  double total = 0.0;
  Eigen::VectorXd inc(sol.T);
  for (int t = 0; t < sol.T; ++t) {
    const int next_bus = (t + 1 < sol.T) ? traj[t + 1] : traj[t];
    inc(t) = pos(lmp_at(sol, t + 1, next_bus) - sol.lambda(t, traj[t]));
    total += inc(t);
  }
  mv.from_lmps = total;
  mv.value = mv.from_duals;

  const double tol = opts.cross_check_tol * (1.0 + std::abs(mv.from_duals));
  mv.cross_checked = std::abs(mv.from_duals - mv.from_lmps) <= tol;
  if (!sol.rapid)
    mv.note = "solution has power limits; rapid closed form is not exact";
  else if (!mv.cross_checked)
    mv.note = "dual and LMP routes disagree (degenerate optimum likely)";
  else if ((mv.per_period - inc).lpNorm<Eigen::Infinity>() > tol)
    mv.note = "per-period decomposition differs between routes";
  return mv;
}

MarginalValue mv_general(const DispatchSolution& sol, int unit,
                         const Fleet& fleet, const MvOptions& opts) {
  if (unit < 0 || unit >= sol.K)
    throw std::out_of_range("mv_general: unit index");
  const MobileStorageUnit& ms = fleet.units[unit];
  const StorageDuals& d = sol.storage_duals[unit];
  const double slope = ms.power_slope;

  MarginalValue mv;
  mv.per_period = Eigen::VectorXd::Zero(sol.T);
  for (int t = 0; t < sol.T; ++t)
    mv.per_period(t) =
        d.mu(t) + slope * sol.delta_s[unit](t) * (d.omega(t) + d.phi(t));
  mv.from_duals = mv.per_period.sum();
  mv.value = mv.from_duals;
  mv.from_lmps = std::numeric_limits<double>::quiet_NaN();

  ArbitrageOptions aopts;
  aopts.qp = opts.qp;
  aopts.binding_tol = opts.binding_tol;
  ArbitrageResult arb = solve_price_arbitrage(sol, unit, fleet, aopts);
  if (arb.status != SolveStatus::optimal) {
    mv.note = "price arbitrage along the trajectory did not solve";
    return mv;
  }
  const BindingPattern& pat = arb.pattern;
  if (!pat.covers_last(sol.T)) {
    mv.note = "terminal period is not energy-bound; LMP reconstruction "
              "refused";
    return mv;
  }
  if (pat.degenerate) {
    mv.note = "energy and power limits bind together; LMP reconstruction "
              "refused";
    return mv;
  }
  if (!arb.unique_optimum.value_or(true)) {
    mv.note = "arbitrage optimum is not unique; LMP reconstruction refused";
    return mv;
  }

  const std::vector<int>& traj = sol.trajectories[unit];
  auto price = [&](int t) { return sol.lambda(t, traj[t]); };

  double total = 0.0;
  const std::vector<int>& te = pat.energy_bound;
  for (size_t r = 0; r < te.size(); ++r) {
    const double next =
        (r + 1 < te.size()) ? price(te[r + 1]) : 0.0; // beyond horizon
    total += pos(next - price(te[r]));
  }
  // the interval before the first energy-bound period contributes through
  // its power-bound periods only
  for (int tp : pat.power_bound) {
    const int s = pat.sigma(tp);
    if (s < 0) continue; // cannot happen when the pattern closes the horizon
    total += slope * sol.delta_s[unit](tp) * std::abs(price(s) - price(tp));
  }
  mv.from_lmps = total;

  const double tol = opts.cross_check_tol * (1.0 + std::abs(mv.from_duals));
  mv.cross_checked = std::abs(mv.from_duals - mv.from_lmps) <= tol;
  if (!mv.cross_checked) mv.note = "dual and LMP routes disagree";
  return mv;
}

double mv_wire(const DispatchSolution& sol, int directed_row) {
  return sol.beta.col(directed_row).sum();
}

Eigen::VectorXd mv_wire_per_period(const DispatchSolution& sol,
                                   int directed_row) {
  return sol.beta.col(directed_row);
}

MarginalValue mv_stationary(const DispatchSolution& sol, int bus) {
  if (bus < 0 || bus >= sol.n) throw std::out_of_range("mv_stationary: bus");
  MarginalValue mv;
  mv.per_period = Eigen::VectorXd::Zero(sol.T);
  for (int t = 0; t < sol.T; ++t)
    mv.per_period(t) = pos(lmp_at(sol, t + 1, bus) - sol.lambda(t, bus));
  mv.value = mv.per_period.sum();
  mv.from_duals = mv.value;
  mv.from_lmps = mv.value;
  mv.note = "closed form from LMP increments";
  return mv;
}

MarginalValueReport marginal_value_report(const DispatchSolution& sol,
                                          const Fleet& fleet,
                                          const MvOptions& opts) {
  MarginalValueReport rep;
  rep.T = sol.T;
  rep.n = sol.n;
  rep.K = sol.K;
  rep.units.reserve(sol.K);
  for (int k = 0; k < sol.K; ++k)
    rep.units.push_back(sol.rapid ? mv_rapid(sol, k, opts)
                                  : mv_general(sol, k, fleet, opts));
  rep.stationary_total = Eigen::VectorXd::Zero(sol.n);
  rep.stationary_per_period = Eigen::MatrixXd::Zero(sol.T, sol.n);
  for (int i = 0; i < sol.n; ++i) {
    MarginalValue mv = mv_stationary(sol, i);
    rep.stationary_total(i) = mv.value;
    rep.stationary_per_period.col(i) = mv.per_period;
  }
  const int rows = static_cast<int>(sol.beta.cols());
  rep.wire_total = Eigen::VectorXd::Zero(rows);
  rep.wire_per_period = sol.beta;
  for (int e = 0; e < rows; ++e) rep.wire_total(e) = sol.beta.col(e).sum();
  return rep;
}

RadialCheck radial_decomposition_check(const PowerNetwork& net,
                                       const DispatchSolution& sol,
                                       int from_bus, int to_bus, int t,
                                       double tol) {
  RadialCheck rc;
  const int n = net.num_buses();
  if (from_bus < 0 || from_bus >= n || to_bus < 0 || to_bus >= n ||
      from_bus == to_bus || t < 0 || t >= sol.T)
    throw std::invalid_argument("radial_decomposition_check: bad arguments");

  // shortest-hop path via BFS, neighbors scanned in line order
  std::vector<std::vector<std::pair<int, int>>> adj(n); // (neighbor, line)
  for (int l = 0; l < net.num_lines(); ++l) {
    adj[net.lines[l].from].push_back({net.lines[l].to, l});
    adj[net.lines[l].to].push_back({net.lines[l].from, l});
  }
  std::vector<int> parent(n, -1), parent_line(n, -1);
  std::deque<int> queue{from_bus};
  parent[from_bus] = from_bus;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (auto [w, l] : adj[v])
      if (parent[w] < 0) {
        parent[w] = v;
        parent_line[w] = l;
        queue.push_back(w);
      }
  }
  if (parent[to_bus] < 0)
    throw std::invalid_argument(
        "radial_decomposition_check: buses are not connected");

  std::vector<std::pair<int, int>> path; // (tail, head) hops from -> to
  for (int v = to_bus; v != from_bus; v = parent[v])
    path.push_back({parent[v], v});
  std::reverse(path.begin(), path.end());

  // nodal net injections at period t for the flow-direction hypothesis
  Eigen::VectorXd inj = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) inj(i) = sol.g(t, i) - net.loads(t, i);
  for (int k = 0; k < sol.K; ++k) inj(sol.trajectories[k][t]) -= sol.u(t, k);

  rc.mv_move = pos(lmp_at(sol, t + 1, to_bus) - sol.lambda(t, from_bus));
  rc.mv_destination = pos(lmp_at(sol, t + 1, to_bus) - sol.lambda(t, to_bus));
  rc.wire_sum = 0.0;
  bool flow_ok = true;
  for (auto [tail, head] : path) {
    rc.wire_sum += sol.beta_directed(net, t, tail, head);
    const int row = sol.shift_factors.row_directed(net, tail, head);
    if (sol.shift_factors.H.row(row).dot(inj) < -tol) flow_ok = false;
  }

  const double rhs = rc.wire_sum + rc.mv_destination;
  if (rc.mv_move > rhs + tol)
    rc.relation = 1;
  else if (rc.mv_move < rhs - tol)
    rc.relation = -1;
  else
    rc.relation = 0;

  if (net.num_lines() != n - 1) {
    rc.reason = "network is not radial";
    return rc;
  }
  if (!flow_ok) {
    rc.reason = "flow on the path runs against the move direction";
    return rc;
  }
  if (lmp_at(sol, t + 1, to_bus) < sol.lambda(t, to_bus) - tol) {
    rc.reason = "destination price decreases across the move";
    return rc;
  }
  rc.applicable = true;
  return rc;
}

} // namespace mobistore
