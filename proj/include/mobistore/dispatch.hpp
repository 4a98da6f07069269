#pragma once

#include "mobistore/network.hpp"
#include "mobistore/qp.hpp"
#include "mobistore/storage.hpp"

#include <Eigen/Dense>

#include <vector>

namespace mobistore {

struct DispatchOptions {
  QpOptions qp;
  double binding_tol = 1e-6; // activity tolerance for binding detection
};

// Inequality row bookkeeping, in assembly order: for each period the 2m
// directed line rows, then per unit the SoC upper rows (mu), SoC lower rows
// (nu), power upper rows (phi), power lower rows (omega), then configured
// generator bounds.
struct RowInfo {
  enum class Kind {
    line,        // idx = directed row index (2l forward, 2l+1 reverse)
    soc_upper,   // idx = unit
    soc_lower,   // idx = unit
    power_upper, // idx = unit
    power_lower, // idx = unit
    gen_upper,   // idx = bus
    gen_lower,   // idx = bus
  };
  Kind kind;
  int t = 0; // 0-based period
  int idx = 0;
};

struct StorageDuals {
  Eigen::VectorXd mu;    // SoC upper bound, per period
  Eigen::VectorXd nu;    // SoC lower bound
  Eigen::VectorXd omega; // discharge power bound
  Eigen::VectorXd phi;   // charge power bound
};

struct DispatchSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  bool certified = false;
  // true when the binding-constraint Jacobian is rank deficient; duals are
  // then not unique and downstream marginal values are unreliable
  bool degenerate = false;
  bool rapid = false;

  int T = 0, n = 0, K = 0;
  Eigen::MatrixXd g;      // T x n generation
  Eigen::MatrixXd u;      // T x K storage schedules (charge positive)
  Eigen::MatrixXd soc;    // T x K state of charge after each period
  Eigen::VectorXd gamma;  // T, system balance duals
  Eigen::MatrixXd beta;   // T x 2m, directed line duals
  std::vector<StorageDuals> storage_duals;
  Eigen::MatrixXd lambda; // T x n locational marginal prices
  double objective = 0.0;
  KktResiduals residuals;

  ShiftFactorMatrix shift_factors;
  std::vector<Trajectory> trajectories;
  std::vector<Eigen::VectorXd> delta_s; // per-unit operating splits

  std::vector<RowInfo> row_info;   // per inequality row
  std::vector<char> row_active;    // per inequality row

  // dual on the directed line constraint from -> to at period t
  double beta_directed(const PowerNetwork& net, int t, int from_idx,
                       int to_idx) const;
};

// Multi-period economic dispatch with storage: quadratic generation costs,
// per-period energy balance, directed line limits through shift factors,
// SoC limits, and power limits scaled by the per-period operating time.
// Fleet trajectories default to each unit sitting at its initial bus.
DispatchSolution solve_mped_s(const PowerNetwork& net, const Fleet& fleet,
                              const std::vector<Trajectory>& trajectories,
                              const DispatchOptions& opts = {});

// Variant without storage power bounds (arbitrarily fast storage).
DispatchSolution solve_rapid_mped_s(const PowerNetwork& net,
                                    const Fleet& fleet,
                                    const std::vector<Trajectory>& trajectories,
                                    const DispatchOptions& opts = {});

// LMPs reconstructed from the duals: lambda(t) = gamma(t)*1 - H' beta(t).
Eigen::MatrixXd lmps(const DispatchSolution& sol);

} // namespace mobistore
