#pragma once

#include "mobistore/marginal_value.hpp"
#include "mobistore/qp.hpp"
#include "mobistore/storage.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace mobistore {

// Layered DAG over (period, bus[, SoC level]) tuples. Edges only connect
// consecutive layers and all stored weights are finite; infeasible moves are
// simply absent. Node ids within a layer are ordered by (soc, bus) so the
// lexicographic tie-break is the scan order.
struct TimeExpandedGraph {
  struct Node {
    int layer = 0;
    int bus = -1; // -1 for the dummy sink
    int soc = -1; // grid index, -1 when SoC is not part of the state
  };
  struct Edge {
    int from = 0, to = 0;
    double weight = 0.0;
  };
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> layers; // node ids, (soc, bus) ascending
  int source = -1;
  int sink = -1;
};

struct PathSolution {
  bool feasible = false;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<int> nodes; // node ids, source to sink
};

// Shortest path by one relaxation pass per layer; ties broken toward the
// lexicographically smallest node sequence.
PathSolution shortest_path_layered(const TimeExpandedGraph& g);
// Reference solver for cross-checks: plain Bellman-Ford on the edge list.
PathSolution shortest_path_bellman_ford(const TimeExpandedGraph& g);

enum class RelocationAlgorithm { rapid, exact, approx, brute_force };
enum class BruteEvaluator {
  arbitrage,     // continuous arbitrage with power limits along each path
  rapid_formula, // capacity times positive price increments along each path
};

struct RelocationOptions {
  double binding_tol = 1e-6;
  int max_exact_periods = 16;        // guard on the 2^T pattern sweep
  long long max_brute_paths = 1000000; // guard on exhaustive enumeration
  QpOptions qp;
};

struct RelocationResult {
  RelocationAlgorithm algorithm = RelocationAlgorithm::rapid;
  std::vector<int> trajectory; // bus during period t+1
  Eigen::VectorXd schedule;    // charge u(t), MWh; empty when not produced
  double objective = 0.0;      // gross arbitrage profit minus travel cost
  double gross = 0.0;
  double travel_cost = 0.0;
  // worst-case optimality gap of the SoC discretization; NaN for exact modes
  double error_bound = std::numeric_limits<double>::quiet_NaN();
  BindingPattern pattern; // exact: the admissible pattern that won
  std::vector<std::string> warnings;
};

// Graph builders, exposed so tests can cross-check the dedicated solvers
// against the generic path machinery.
TimeExpandedGraph build_rapid_relocation_graph(const MobileStorageUnit& unit,
                                               const Eigen::MatrixXd& lambda,
                                               const TransportModel& transport);
TimeExpandedGraph build_approx_relocation_graph(const MobileStorageUnit& unit,
                                                const Eigen::MatrixXd& lambda,
                                                const TransportModel& transport,
                                                double soc_step);

// Best trajectory for an arbitrarily fast unit starting empty at its initial
// bus: layered shortest path with edge value = capacity times the positive
// price increment minus the travel cost of the hop.
RelocationResult relocate_rapid(const MobileStorageUnit& unit,
                                const Eigen::MatrixXd& lambda,
                                const TransportModel& transport,
                                const RelocationOptions& opts = {});

// Cheapest way to cross the power-bound periods strictly between two
// energy-bound periods te_from < te_to - 1, from bus i (occupied at te_from)
// to bus j (occupied at te_to). Returns the cost and the intermediate buses
// for periods te_from+1 .. te_to-1.
std::pair<double, std::vector<int>> solve_sp_p(int i, int j, int te_from,
                                               int te_to,
                                               const Eigen::MatrixXd& lambda,
                                               const MobileStorageUnit& unit,
                                               const TransportModel& transport);

// Best trajectory consistent with a fixed binding pattern: shortest path
// over the energy-bound layers, with power-bound stretches priced by
// solve_sp_p. The pattern must contain the final period. The returned
// objective is the path value; no schedule is produced.
RelocationResult solve_sp_e(const BindingPattern& pattern,
                            const Eigen::MatrixXd& lambda,
                            const MobileStorageUnit& unit,
                            const TransportModel& transport,
                            const RelocationOptions& opts = {});

// Pattern enumeration: prices every subset of periods as the energy-bound
// set (trailing power-bound runs settle against a zero post-horizon price),
// keeps candidates whose re-derived arbitrage pattern matches the assumed
// one, and returns the one with the best realized arbitrage value net of
// travel. Throws when no pattern is admissible, or when some enumerated
// trajectory provably beats every admissible one; both mean the optimum is
// degenerate and relocate_approx should be used.
RelocationResult relocate_exact(const MobileStorageUnit& unit,
                                const Eigen::MatrixXd& lambda,
                                const TransportModel& transport,
                                const RelocationOptions& opts = {});

// SoC-discretized longest path: states (bus, SoC multiple of h), edges obey
// the energy and power limits with the charging window shortened by the
// travel time of the chosen hop. soc_step is shrunk to the nearest divisor
// of the capacity; the initial SoC is floored to the grid. error_bound
// carries the discretization gap guarantee computed from the price field.
RelocationResult relocate_approx(const MobileStorageUnit& unit,
                                 const Eigen::MatrixXd& lambda,
                                 const TransportModel& transport,
                                 double soc_step,
                                 const RelocationOptions& opts = {});

// Exhaustive oracle: enumerates every admissible trajectory (first bus
// pinned), values each path with the chosen evaluator, and keeps the best;
// ties resolve to the lexicographically smallest trajectory within 1e-9.
RelocationResult brute_force_relocation(const MobileStorageUnit& unit,
                                        const Eigen::MatrixXd& lambda,
                                        const TransportModel& transport,
                                        BruteEvaluator evaluator,
                                        const RelocationOptions& opts = {});

} // namespace mobistore
