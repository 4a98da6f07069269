#include "mobistore/storage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mobistore {

std::vector<std::string> validate_unit(const MobileStorageUnit& unit,
                                       int num_buses) {
  std::vector<std::string> out;
  if (unit.capacity < 0.0) out.push_back("unit: negative capacity");
  if (unit.power_rating() < 0.0)
    out.push_back("unit: negative power rating at nominal capacity");
  if (unit.admissible.empty()) out.push_back("unit: empty admissible set");
  for (int b : unit.admissible)
    if (b < 0 || b >= num_buses)
      out.push_back("unit: admissible bus index " + std::to_string(b) +
                    " out of range");
  // downstream tie-breaks scan the set in order, so it must be sorted
  for (size_t i = 1; i < unit.admissible.size(); ++i)
    if (unit.admissible[i] <= unit.admissible[i - 1]) {
      out.push_back("unit: admissible set must be strictly ascending");
      break;
    }
  if (std::find(unit.admissible.begin(), unit.admissible.end(),
                unit.initial_bus) == unit.admissible.end())
    out.push_back("unit: initial bus not in admissible set");
  if (unit.initial_soc < 0.0 || unit.initial_soc > unit.capacity + 1e-12)
    out.push_back("unit: initial SoC outside [0, capacity]");
  return out;
}

std::vector<std::string> validate_transport(const TransportModel& transport) {
  std::vector<std::string> out;
  const auto& D = transport.travel_time;
  if (D.rows() != D.cols()) {
    out.push_back("transport: travel time matrix not square");
    return out;
  }
  if (transport.period <= 0.0) out.push_back("transport: period must be positive");
  if (transport.kappa < 0.0) out.push_back("transport: negative kappa");
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    if (std::isfinite(D(i, i)) && D(i, i) != 0.0)
      out.push_back("transport: nonzero self travel time at bus " +
                    std::to_string(i));
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
      double d = D(i, j);
      if (std::isnan(d)) {
        out.push_back("transport: NaN travel time");
      } else if (std::isfinite(d)) {
        if (d < 0.0)
          out.push_back("transport: negative travel time at (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
        else if (d > transport.period + 1e-12)
          out.push_back("transport: travel time exceeds period at (" +
                        std::to_string(i) + "," + std::to_string(j) +
                        "); mark the pair unreachable instead");
      }
    }
  }
  return out;
}

std::vector<std::string> validate_trajectory(const MobileStorageUnit& unit,
                                             const TransportModel& transport,
                                             const Trajectory& traj) {
  std::vector<std::string> out;
  if (traj.empty()) {
    out.push_back("trajectory: empty");
    return out;
  }
  if (traj.front() != unit.initial_bus)
    out.push_back("trajectory: does not start at the unit's initial bus");
  for (size_t t = 0; t < traj.size(); ++t) {
    if (std::find(unit.admissible.begin(), unit.admissible.end(), traj[t]) ==
        unit.admissible.end())
      out.push_back("trajectory: period " + std::to_string(t + 1) +
                    " visits inadmissible bus " + std::to_string(traj[t]));
    if (traj[t] < 0 || traj[t] >= transport.num_buses()) {
      out.push_back("trajectory: bus index out of range");
      return out;
    }
  }
  for (size_t t = 0; t + 1 < traj.size(); ++t) {
    if (!transport.reachable(traj[t], traj[t + 1]))
      out.push_back("trajectory: hop " + std::to_string(t + 1) + " (" +
                    std::to_string(traj[t]) + " -> " +
                    std::to_string(traj[t + 1]) +
                    ") is not reachable within one period");
  }
  return out;
}

void require_valid(const Fleet& fleet, int num_buses) {
  std::vector<std::string> all = validate_transport(fleet.transport);
  if (fleet.transport.travel_time.rows() != num_buses)
    all.push_back("transport: matrix size does not match bus count");
  for (size_t k = 0; k < fleet.units.size(); ++k) {
    for (auto& msg : validate_unit(fleet.units[k], num_buses))
      all.push_back("unit " + std::to_string(k) + ": " + msg);
  }
  if (all.empty()) return;
  std::string msg = "invalid fleet:";
  for (const auto& p : all) msg += "\n  " + p;
  throw std::invalid_argument(msg);
}

std::vector<Eigen::MatrixXd> snapshot_matrices(
    const std::vector<Trajectory>& trajectories, int num_buses) {
  const int K = static_cast<int>(trajectories.size());
  size_t T = 0;
  for (const auto& traj : trajectories) T = std::max(T, traj.size());
  std::vector<Eigen::MatrixXd> E(T, Eigen::MatrixXd::Zero(num_buses, K));
  for (int k = 0; k < K; ++k) {
    if (trajectories[k].size() != T)
      throw std::invalid_argument("snapshot_matrices: ragged trajectories");
    for (size_t t = 0; t < T; ++t) E[t](trajectories[k][t], k) = 1.0;
  }
  return E;
}

Eigen::VectorXd travel_split(const Trajectory& traj,
                             const TransportModel& transport) {
  const size_t T = traj.size();
  Eigen::VectorXd split(T);
  for (size_t t = 0; t < T; ++t) {
    int next = t + 1 < T ? traj[t + 1] : traj[t];
    if (!transport.reachable(traj[t], next))
      throw std::invalid_argument(
          "travel_split: hop " + std::to_string(t + 1) +
          " is not reachable within one period");
    split[t] = transport.period - transport.travel_time(traj[t], next);
  }
  return split;
}

double relocation_cost(const Trajectory& traj,
                       const TransportModel& transport) {
  double hours = 0.0;
  for (size_t t = 0; t + 1 < traj.size(); ++t) {
    if (!transport.reachable(traj[t], traj[t + 1]))
      throw std::invalid_argument(
          "relocation_cost: hop " + std::to_string(t + 1) +
          " is not reachable within one period");
    hours += transport.travel_time(traj[t], traj[t + 1]);
  }
  return transport.kappa * hours;
}

} // namespace mobistore
