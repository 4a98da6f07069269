#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace mobistore {

// Storage unit with an affine power rating u_bar(s_bar) in the energy
// capacity. A stationary unit is the special case |admissible| == 1.
struct MobileStorageUnit {
  double capacity = 0.0;        // s_bar, MWh
  double power_slope = 0.0;     // MW per MWh of capacity
  double power_intercept = 0.0; // MW
  std::vector<int> admissible;  // bus indices the unit may occupy
  int initial_bus = 0;
  double initial_soc = 0.0;     // MWh, 0 <= initial_soc <= capacity

  double power_rating(double cap) const {
    return power_slope * cap + power_intercept;
  }
  double power_rating() const { return power_rating(capacity); }
  bool is_stationary() const { return admissible.size() == 1; }
};

// Travel times between buses in hours. An infinite entry marks a pair that
// cannot be traversed within one period; finite entries must lie in
// [0, period].
struct TransportModel {
  Eigen::MatrixXd travel_time;
  double period = 1.0; // Delta, hours
  double kappa = 0.0;  // relocation cost, $ per hour of travel

  int num_buses() const { return static_cast<int>(travel_time.rows()); }
  bool reachable(int i, int j) const {
    return std::isfinite(travel_time(i, j)) &&
           travel_time(i, j) <= period + 1e-12;
  }
};

// Bus index per period, length T; trajectory[t] is the unit's location
// while operating in period t+1. The move to trajectory[t+1] happens at the
// end of period t+1 and there is no move after the horizon.
using Trajectory = std::vector<int>;

struct Fleet {
  std::vector<MobileStorageUnit> units;
  TransportModel transport;
};

std::vector<std::string> validate_unit(const MobileStorageUnit& unit,
                                       int num_buses);
std::vector<std::string> validate_transport(const TransportModel& transport);
std::vector<std::string> validate_trajectory(const MobileStorageUnit& unit,
                                             const TransportModel& transport,
                                             const Trajectory& traj);
void require_valid(const Fleet& fleet, int num_buses);

// Location snapshot matrices E(t), one n x K one-hot column per unit.
std::vector<Eigen::MatrixXd> snapshot_matrices(
    const std::vector<Trajectory>& trajectories, int num_buses);

// Operating time per period: Delta^S(t) = period - travel_time(i(t), i(t+1)),
// with no move charged after the final period. Throws on unreachable hops.
Eigen::VectorXd travel_split(const Trajectory& traj,
                             const TransportModel& transport);

// Total relocation cost J^R = kappa * sum of hop travel times.
double relocation_cost(const Trajectory& traj,
                       const TransportModel& transport);

} // namespace mobistore
