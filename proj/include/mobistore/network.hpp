#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mobistore {

struct Bus {
  int id = 0;
  bool has_generator = false;
  double cost_a = 0.0; // quadratic coefficient, $/MWh^2
  double cost_b = 0.0; // linear coefficient, $/MWh
  std::optional<double> gen_max;
};

// Line endpoints are 0-based bus indices; positive flow runs from -> to.
struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;
  double limit = 0.0; // thermal limit, same in both directions
};

struct PowerNetwork {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  Eigen::MatrixXd loads; // T x n, energy per period (MWh; equals MW at 1h)
  int slack = 0;         // 0-based bus index
  bool enforce_gen_lower_bound = false; // adds g >= 0 rows when set

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_lines() const { return static_cast<int>(lines.size()); }
  int num_periods() const { return static_cast<int>(loads.rows()); }
  int bus_index_by_id(int id) const; // -1 when unknown
};

// Empty result means the network is well formed.
std::vector<std::string> validate(const PowerNetwork& net);

// throws std::invalid_argument listing all violations
void require_valid(const PowerNetwork& net);

// Directed shift factors from slack-bus reduction of the DC susceptance
// matrix. Rows are interleaved per line: row 2l is the forward direction
// (from -> to) of line l, row 2l+1 its reverse, so H has 2m rows and the
// slack column is identically zero.
struct ShiftFactorMatrix {
  Eigen::MatrixXd H;
  Eigen::VectorXd limits;
  int num_lines = 0;

  int row_forward(int line) const { return 2 * line; }
  int row_reverse(int line) const { return 2 * line + 1; }
  // row for the directed pair (from_idx -> to_idx); -1 when no such line
  int row_directed(const PowerNetwork& net, int from_idx, int to_idx) const;
};

ShiftFactorMatrix build_shift_factors(const PowerNetwork& net);

} // namespace mobistore
