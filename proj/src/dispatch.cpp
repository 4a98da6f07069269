#include "mobistore/dispatch.hpp"

#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mobistore {

namespace {

constexpr double kPinned = 1e-12; // bound below which a row is an equality

struct EqInfo {
  enum class Kind { balance, gen_fix, soc_fix, power_fix };
  Kind kind;
  int t = 0;
  int idx = 0; // bus or unit
};

struct Assembly {
  QuadraticProgram qp;
  std::vector<EqInfo> eq_info;
  std::vector<RowInfo> row_info;
  int T = 0, n = 0, K = 0;

  int gvar(int t, int i) const { return t * n + i; }
  int uvar(int k, int t) const { return T * n + k * T + t; }
};

Assembly assemble(const PowerNetwork& net, const Fleet& fleet,
                  const std::vector<Trajectory>& trajectories,
                  const ShiftFactorMatrix& sf,
                  const std::vector<Eigen::VectorXd>& delta_s,
                  bool with_power_rows) {
  Assembly as;
  const int T = net.num_periods();
  const int n = net.num_buses();
  const int K = static_cast<int>(fleet.units.size());
  const int m2 = static_cast<int>(sf.H.rows());
  as.T = T;
  as.n = n;
  as.K = K;

  const int N = T * n + K * T;
  as.qp.c = Eigen::VectorXd::Zero(N);
  as.qp.Q = Eigen::MatrixXd::Zero(N, N);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) {
      if (net.buses[i].has_generator) {
        as.qp.Q(as.gvar(t, i), as.gvar(t, i)) = 2.0 * net.buses[i].cost_a;
        as.qp.c[as.gvar(t, i)] = net.buses[i].cost_b;
      }
    }

  // equality rows: balance, generator fixes, pinned-SoC and pinned-power rows
  std::vector<Eigen::VectorXd> eq_rows;
  std::vector<double> eq_rhs;
  auto add_eq = [&](const Eigen::VectorXd& row, double rhs, EqInfo info) {
    eq_rows.push_back(row);
    eq_rhs.push_back(rhs);
    as.eq_info.push_back(info);
  };

  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
    for (int i = 0; i < n; ++i) row[as.gvar(t, i)] = -1.0;
    for (int k = 0; k < K; ++k) row[as.uvar(k, t)] = 1.0;
    add_eq(row, -net.loads.row(t).sum(),
           {EqInfo::Kind::balance, t, 0});
  }
  for (int i = 0; i < n; ++i) {
    if (net.buses[i].has_generator) continue;
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
      row[as.gvar(t, i)] = 1.0;
      add_eq(row, 0.0, {EqInfo::Kind::gen_fix, t, i});
    }
  }
  for (int k = 0; k < K; ++k) {
    if (fleet.units[k].capacity > kPinned) continue;
    // zero-capacity unit: cumulative charge pinned to zero so the equality
    // duals carry mu - nu
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
      for (int tau = 0; tau <= t; ++tau) row[as.uvar(k, tau)] = 1.0;
      add_eq(row, 0.0, {EqInfo::Kind::soc_fix, t, k});
    }
  }
  if (with_power_rows) {
    for (int k = 0; k < K; ++k) {
      const auto& unit = fleet.units[k];
      if (unit.capacity <= kPinned) continue;
      for (int t = 0; t < T; ++t) {
        double bound = unit.power_rating() * delta_s[k][t];
        if (bound <= kPinned) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
          row[as.uvar(k, t)] = 1.0;
          add_eq(row, 0.0, {EqInfo::Kind::power_fix, t, k});
        }
      }
    }
  }

  // inequality rows
  std::vector<Eigen::VectorXd> in_rows;
  std::vector<double> in_rhs;
  auto add_in = [&](const Eigen::VectorXd& row, double rhs, RowInfo info) {
    in_rows.push_back(row);
    in_rhs.push_back(rhs);
    as.row_info.push_back(info);
  };

  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd Hd = sf.H * net.loads.row(t).transpose();
    for (int e = 0; e < m2; ++e) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
      for (int i = 0; i < n; ++i) row[as.gvar(t, i)] = sf.H(e, i);
      for (int k = 0; k < K; ++k)
        row[as.uvar(k, t)] = -sf.H(e, trajectories[k][t]);
      add_in(row, sf.limits[e] + Hd[e], {RowInfo::Kind::line, t, e});
    }
  }

  for (int k = 0; k < K; ++k) {
    const auto& unit = fleet.units[k];
    if (unit.capacity <= kPinned) continue;
    // Reachable SoC range per period. A SoC row whose bound is forced by
    // the pinned-power equalities is redundant and would close the strict
    // interior, so it is dropped (its dual is identically zero).
    std::vector<double> lo(T), hi(T);
    double acc = 0.0;
    for (int t = 0; t < T; ++t) {
      if (with_power_rows)
        acc += unit.power_rating() * delta_s[k][t];
      else
        acc = std::numeric_limits<double>::infinity();
      lo[t] = std::max(0.0, unit.initial_soc - acc);
      hi[t] = std::min(unit.capacity, unit.initial_soc + acc);
    }
    for (int t = 0; t < T; ++t) {
      bool forced_full = lo[t] >= unit.capacity - kPinned;
      bool forced_empty = hi[t] <= kPinned;
      if (!forced_full) {
        // SoC upper: sum_{tau<=t} u <= capacity - s0
        Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
        for (int tau = 0; tau <= t; ++tau) row[as.uvar(k, tau)] = 1.0;
        add_in(row, unit.capacity - unit.initial_soc,
               {RowInfo::Kind::soc_upper, t, k});
      }
      if (!forced_empty) {
        // SoC lower: -sum_{tau<=t} u <= s0
        Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
        for (int tau = 0; tau <= t; ++tau) row[as.uvar(k, tau)] = -1.0;
        add_in(row, unit.initial_soc, {RowInfo::Kind::soc_lower, t, k});
      }
    }
    if (with_power_rows) {
      for (int t = 0; t < T; ++t) {
        double bound = unit.power_rating() * delta_s[k][t];
        if (bound <= kPinned) continue; // handled as equality
        Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
        row[as.uvar(k, t)] = 1.0;
        add_in(row, bound, {RowInfo::Kind::power_upper, t, k});
        add_in(-row, bound, {RowInfo::Kind::power_lower, t, k});
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!net.buses[i].has_generator || !net.buses[i].gen_max) continue;
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
      row[as.gvar(t, i)] = 1.0;
      add_in(row, *net.buses[i].gen_max, {RowInfo::Kind::gen_upper, t, i});
    }
  }
  if (net.enforce_gen_lower_bound) {
    for (int i = 0; i < n; ++i) {
      if (!net.buses[i].has_generator) continue;
      for (int t = 0; t < T; ++t) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
        row[as.gvar(t, i)] = -1.0;
        add_in(row, 0.0, {RowInfo::Kind::gen_lower, t, i});
      }
    }
  }

  const int P = static_cast<int>(eq_rows.size());
  const int M = static_cast<int>(in_rows.size());
  as.qp.A = Eigen::MatrixXd::Zero(P, N);
  as.qp.b = Eigen::VectorXd::Zero(P);
  for (int r = 0; r < P; ++r) {
    as.qp.A.row(r) = eq_rows[r];
    as.qp.b[r] = eq_rhs[r];
  }
  as.qp.G = Eigen::MatrixXd::Zero(M, N);
  as.qp.h = Eigen::VectorXd::Zero(M);
  for (int r = 0; r < M; ++r) {
    as.qp.G.row(r) = in_rows[r];
    as.qp.h[r] = in_rhs[r];
  }
  return as;
}

DispatchSolution run_dispatch(const PowerNetwork& net, const Fleet& fleet,
                              const std::vector<Trajectory>& trajectories_in,
                              const DispatchOptions& opts,
                              bool with_power_rows) {
  require_valid(net);
  require_valid(fleet, net.num_buses());
  const int T = net.num_periods();
  const int n = net.num_buses();
  const int K = static_cast<int>(fleet.units.size());

  std::vector<Trajectory> trajectories = trajectories_in;
  if (trajectories.empty()) {
    for (const auto& unit : fleet.units)
      trajectories.push_back(Trajectory(T, unit.initial_bus));
  }
  if (static_cast<int>(trajectories.size()) != K)
    throw std::invalid_argument("dispatch: trajectory count != unit count");
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(trajectories[k].size()) != T)
      throw std::invalid_argument("dispatch: trajectory length != T");
    auto bad = validate_trajectory(fleet.units[k], fleet.transport,
                                   trajectories[k]);
    if (!bad.empty()) {
      std::string msg = "dispatch: unit " + std::to_string(k) +
                        " trajectory invalid:";
      for (auto& b : bad) msg += "\n  " + b;
      throw std::invalid_argument(msg);
    }
  }

  ShiftFactorMatrix sf = build_shift_factors(net);
  std::vector<Eigen::VectorXd> delta_s;
  delta_s.reserve(K);
  for (int k = 0; k < K; ++k)
    delta_s.push_back(travel_split(trajectories[k], fleet.transport));

  Assembly as = assemble(net, fleet, trajectories, sf, delta_s,
                         with_power_rows);
  QpSolution qs = solve_qp(as.qp, opts.qp);

  DispatchSolution sol;
  sol.status = qs.status;
  sol.certified = qs.certified;
  sol.rapid = !with_power_rows;
  sol.T = T;
  sol.n = n;
  sol.K = K;
  sol.objective = qs.objective;
  sol.residuals = qs.residuals;
  sol.shift_factors = sf;
  sol.trajectories = trajectories;
  sol.delta_s = delta_s;
  sol.row_info = as.row_info;

  sol.g = Eigen::MatrixXd::Zero(T, n);
  sol.u = Eigen::MatrixXd::Zero(T, K);
  sol.soc = Eigen::MatrixXd::Zero(T, K);
  sol.gamma = Eigen::VectorXd::Zero(T);
  sol.beta = Eigen::MatrixXd::Zero(T, sf.H.rows());
  sol.storage_duals.assign(K, StorageDuals{});
  for (int k = 0; k < K; ++k) {
    sol.storage_duals[k].mu = Eigen::VectorXd::Zero(T);
    sol.storage_duals[k].nu = Eigen::VectorXd::Zero(T);
    sol.storage_duals[k].omega = Eigen::VectorXd::Zero(T);
    sol.storage_duals[k].phi = Eigen::VectorXd::Zero(T);
  }
  if (qs.x.size() == 0) return sol;

  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) sol.g(t, i) = qs.x[as.gvar(t, i)];
    for (int k = 0; k < K; ++k) sol.u(t, k) = qs.x[as.uvar(k, t)];
  }
  for (int k = 0; k < K; ++k) {
    double s = fleet.units[k].initial_soc;
    for (int t = 0; t < T; ++t) {
      s += sol.u(t, k);
      sol.soc(t, k) = s;
    }
  }

  for (size_t r = 0; r < as.eq_info.size(); ++r) {
    const EqInfo& info = as.eq_info[r];
    double q = qs.y[static_cast<Eigen::Index>(r)];
    switch (info.kind) {
      case EqInfo::Kind::balance:
        sol.gamma[info.t] = q;
        break;
      case EqInfo::Kind::gen_fix:
        break;
      case EqInfo::Kind::soc_fix:
        sol.storage_duals[info.idx].mu[info.t] = std::max(q, 0.0);
        sol.storage_duals[info.idx].nu[info.t] = std::max(-q, 0.0);
        break;
      case EqInfo::Kind::power_fix:
        sol.storage_duals[info.idx].phi[info.t] = std::max(q, 0.0);
        sol.storage_duals[info.idx].omega[info.t] = std::max(-q, 0.0);
        break;
    }
  }
  for (size_t r = 0; r < as.row_info.size(); ++r) {
    const RowInfo& info = as.row_info[r];
    double zr = qs.z[static_cast<Eigen::Index>(r)];
    switch (info.kind) {
      case RowInfo::Kind::line:
        sol.beta(info.t, info.idx) = zr;
        break;
      case RowInfo::Kind::soc_upper:
        sol.storage_duals[info.idx].mu[info.t] = zr;
        break;
      case RowInfo::Kind::soc_lower:
        sol.storage_duals[info.idx].nu[info.t] = zr;
        break;
      case RowInfo::Kind::power_upper:
        sol.storage_duals[info.idx].phi[info.t] = zr;
        break;
      case RowInfo::Kind::power_lower:
        sol.storage_duals[info.idx].omega[info.t] = zr;
        break;
      case RowInfo::Kind::gen_upper:
      case RowInfo::Kind::gen_lower:
        break;
    }
  }

  sol.lambda = Eigen::MatrixXd::Zero(T, n);
  for (int t = 0; t < T; ++t)
    sol.lambda.row(t) =
        Eigen::RowVectorXd::Constant(n, sol.gamma[t]) -
        sol.beta.row(t) * sf.H;

  // binding rows and the LICQ rank test
  sol.row_active.assign(as.row_info.size(), 0);
  Eigen::VectorXd slack = as.qp.h - as.qp.G * qs.x;
  std::vector<int> active;
  for (Eigen::Index r = 0; r < slack.size(); ++r) {
    if (slack[r] <= opts.binding_tol) {
      sol.row_active[static_cast<size_t>(r)] = 1;
      active.push_back(static_cast<int>(r));
    }
  }
  const int P = static_cast<int>(as.qp.A.rows());
  Eigen::MatrixXd J(P + static_cast<int>(active.size()), as.qp.c.size());
  if (P > 0) J.topRows(P) = as.qp.A;
  for (size_t a = 0; a < active.size(); ++a)
    J.row(P + static_cast<int>(a)) = as.qp.G.row(active[a]);
  if (J.rows() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    qr.setThreshold(1e-8);
    sol.degenerate = qr.rank() < J.rows();
  }
  return sol;
}

} // namespace

double DispatchSolution::beta_directed(const PowerNetwork& net, int t,
                                       int from_idx, int to_idx) const {
  int row = shift_factors.row_directed(net, from_idx, to_idx);
  if (row < 0)
    throw std::invalid_argument("beta_directed: no line between those buses");
  return beta(t, row);
}

DispatchSolution solve_mped_s(const PowerNetwork& net, const Fleet& fleet,
                              const std::vector<Trajectory>& trajectories,
                              const DispatchOptions& opts) {
  return run_dispatch(net, fleet, trajectories, opts, true);
}

DispatchSolution solve_rapid_mped_s(const PowerNetwork& net,
                                    const Fleet& fleet,
                                    const std::vector<Trajectory>& trajectories,
                                    const DispatchOptions& opts) {
  return run_dispatch(net, fleet, trajectories, opts, false);
}

Eigen::MatrixXd lmps(const DispatchSolution& sol) { return sol.lambda; }

} // namespace mobistore
