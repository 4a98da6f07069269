#pragma once

#include "mobistore/dispatch.hpp"
#include "mobistore/network.hpp"
#include "mobistore/qp.hpp"
#include "mobistore/storage.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mobistore {

// Partition of the periods where a storage constraint binds: energy_bound
// periods have SoC at 0 or capacity, power_bound periods have |u| at the
// power limit. Periods where nothing binds appear in neither set.
struct BindingPattern {
  std::vector<int> energy_bound; // ascending, 0-based
  std::vector<int> power_bound;  // ascending, 0-based
  // true when a period had both constraint families within tolerance; the
  // period is then classified as energy-bound
  bool degenerate = false;

  bool covers_last(int T) const {
    return !energy_bound.empty() && energy_bound.back() == T - 1;
  }
  // first energy-bound period strictly after tp; -1 when there is none
  int sigma(int tp) const {
    for (int te : energy_bound)
      if (te > tp) return te;
    return -1;
  }
  bool operator==(const BindingPattern& o) const {
    return energy_bound == o.energy_bound && power_bound == o.power_bound;
  }
};

BindingPattern pattern_from_schedule(const Eigen::VectorXd& u,
                                     double initial_soc, double capacity,
                                     const Eigen::VectorXd& power_caps,
                                     double tol);

struct ArbitrageOptions {
  QpOptions qp;
  double binding_tol = 1e-6;
  bool power_bounds = true;      // drop for arbitrarily fast storage
  bool check_uniqueness = true;
};

// Price arbitrage along a fixed trajectory:
//   max -sum_t prices[t] * u[t]
//   s.t. 0 <= s0 + cumsum(u) <= capacity, |u[t]| <= power_caps[t]
struct ArbitrageResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd u;
  double profit = 0.0; // -sum prices.u at the optimum
  std::optional<bool> unique_optimum;
  BindingPattern pattern;
};

ArbitrageResult solve_price_arbitrage(const Eigen::VectorXd& prices,
                                      const MobileStorageUnit& unit,
                                      const Eigen::VectorXd& delta_s,
                                      const ArbitrageOptions& opts = {});

// prices read off the dispatch LMPs along the unit's trajectory
ArbitrageResult solve_price_arbitrage(const DispatchSolution& sol, int unit,
                                      const Fleet& fleet,
                                      const ArbitrageOptions& opts = {});

struct MvOptions {
  double cross_check_tol = 1e-5;
  double binding_tol = 1e-6;
  QpOptions qp;
};

// A marginal value with its two computation routes: from the dispatch duals
// and from the LMP closed form. from_lmps is NaN when the reconstruction was
// refused (pattern does not close the horizon, or duals degenerate).
struct MarginalValue {
  double value = 0.0;     // dual route, the authoritative number
  double from_duals = 0.0;
  double from_lmps = 0.0;
  Eigen::VectorXd per_period;
  bool cross_checked = false; // both routes available and within tolerance
  std::string note;
};

// Capacity value of an arbitrarily fast mobile unit: 1'mu, equal to the sum
// of positive LMP increments along the trajectory (prices beyond the horizon
// are zero).
MarginalValue mv_rapid(const DispatchSolution& sol, int unit,
                       const MvOptions& opts = {});

// Capacity value of a power-limited unit: 1'mu plus the power-rating slope
// times delta_s-weighted (omega + phi). The LMP route classifies periods by
// the arbitrage binding pattern.
MarginalValue mv_general(const DispatchSolution& sol, int unit,
                         const Fleet& fleet, const MvOptions& opts = {});

// Wire capacity value: per-period beta and its horizon total.
double mv_wire(const DispatchSolution& sol, int directed_row);
Eigen::VectorXd mv_wire_per_period(const DispatchSolution& sol,
                                   int directed_row);

// Stationary storage value at a bus from LMP increments.
MarginalValue mv_stationary(const DispatchSolution& sol, int bus);

struct MarginalValueReport {
  int T = 0, n = 0, K = 0;
  std::vector<MarginalValue> units;
  Eigen::VectorXd stationary_total;    // per bus
  Eigen::MatrixXd stationary_per_period; // T x n
  Eigen::VectorXd wire_total;          // per directed row
  Eigen::MatrixXd wire_per_period;     // T x 2m
};

MarginalValueReport marginal_value_report(const DispatchSolution& sol,
                                          const Fleet& fleet,
                                          const MvOptions& opts = {});

// Lemma-style decomposition check for one hypothetical move from -> to at
// period t (0-based) on a radial network: per-period unit value vs wire
// values along the path plus the stationary value at the destination.
struct RadialCheck {
  bool applicable = false;
  std::string reason;
  double mv_move = 0.0;
  double wire_sum = 0.0;
  double mv_destination = 0.0;
  // -1: mv_move < wire_sum + mv_destination, 0: equal within tol, +1: greater
  int relation = 0;
};

RadialCheck radial_decomposition_check(const PowerNetwork& net,
                                       const DispatchSolution& sol,
                                       int from_bus, int to_bus, int t,
                                       double tol = 1e-5);

} // namespace mobistore
