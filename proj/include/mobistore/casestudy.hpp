#pragma once

// Workflow for running mobile-storage arbitrage against hourly locational
// price data: ingest LMP and node-geography CSVs, derive travel matrices
// from great-circle distances, run the SoC-grid relocation planner for a
// vehicle, and aggregate the result into a per-node report.

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mobistore/relocation.hpp"
#include "mobistore/storage.hpp"

namespace mobistore {

// hourly price field over named nodes; rows are consecutive hours
struct LmpDataset {
  std::vector<std::string> nodes;      // ids, column order
  Eigen::VectorXd lat, lon;            // degrees
  std::vector<std::string> timestamps; // ISO-8601, hourly, ascending
  Eigen::MatrixXd lmp;                 // timestamps x nodes, $/MWh
  std::string timezone = "local";     // "UTC" when stamps carry Z

  int node_index(const std::string& id) const;
};

struct VehicleProfile {
  double battery_kwh = 50.0;
  double power_kw = 11.0;
  double speed_mph = 50.0;
  double cost_cents_per_mile = 4.0;
  double initial_soc_fraction = 0.0;
  std::string initial_node;
};

// one stay at a node (a Table-style report row)
struct DwellInterval {
  std::string node;
  int first_hour = 0, last_hour = 0; // inclusive, hours of the day
  double soc_change_mwh = 0.0;
  double arbitrage_value_usd = 0.0;
  double travel_cost_usd = 0.0; // cost of the move ending this stay
};

// movement trace row, one per hour
struct MoveEvent {
  std::string timestamp;
  std::string node;
  double soc_mwh = 0.0;    // end-of-hour state of charge
  double charge_mwh = 0.0; // energy bought (+) or sold (-) this hour
  double travel_h = 0.0;   // time spent moving during this hour
};

struct SpreadRow {
  double lo = 0, q1 = 0, median = 0, q3 = 0, hi = 0;
};

struct CaseStudyReport {
  std::string date;
  std::vector<DwellInterval> table;
  std::vector<MoveEvent> trace;
  std::vector<SpreadRow> spread; // one row per hour
  double gross_usd = 0.0;
  double travel_usd = 0.0;
  double net_usd = 0.0;
  double error_bound_usd = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> trajectory; // node index per hour
  Eigen::VectorXd schedule_mwh;
  std::vector<std::string> warnings;
};

double haversine_miles(double lat1, double lon1, double lat2, double lon2);

// strict CSV loaders; throws std::invalid_argument with a specific message
// on gaps, duplicates, unknown nodes, or malformed rows
LmpDataset ingest_lmps(const std::string& lmp_csv_path,
                       const std::string& nodes_csv_path);

// (travel time in hours, per-move cost in $); pairs farther than one period
// of driving get +inf travel time so no move edge is ever generated for
// them
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> travel_matrices(
    const LmpDataset& data, const VehicleProfile& vehicle);

TransportModel transport_for(const LmpDataset& data,
                             const VehicleProfile& vehicle);

// vehicle mapped to grid units (kWh -> MWh, kW -> MW, charger-limited
// rating); allow_moves=false restricts the unit to its start node
MobileStorageUnit unit_for(const LmpDataset& data,
                           const VehicleProfile& vehicle, bool allow_moves);

// per-hour quartiles of the price field across nodes (linear interpolation)
std::vector<SpreadRow> lmp_spread(const LmpDataset& data,
                                  const std::string& date);

CaseStudyReport run_case_study(const LmpDataset& data,
                               const VehicleProfile& vehicle,
                               const std::string& date, double soc_step_mwh,
                               bool allow_moves = true);

} // namespace mobistore
