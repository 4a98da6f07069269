#pragma once

// File formats: strict JSON documents for networks, fleets, and
// trajectories (unknown keys rejected, cross-references are 0-based bus
// indices) and a wide CSV for price matrices. All writers are atomic
// (temp file + rename) and deterministic.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mobistore/network.hpp"
#include "mobistore/storage.hpp"

namespace mobistore::io {

// shortest decimal form that round-trips the exact double
std::string format_double(double v);

std::string read_text(const std::string& path);
void write_text_atomic(const std::string& path, const std::string& content);

PowerNetwork load_network(const std::string& path);
void save_network(const PowerNetwork& net, const std::string& path);

Fleet load_fleet(const std::string& path);
void save_fleet(const Fleet& fleet, const std::string& path);

std::vector<Trajectory> load_trajectories(const std::string& path);
void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::string& path);

// header `period,bus0,bus1,...`; one row per period
Eigen::MatrixXd load_price_csv(const std::string& path);
void save_price_csv(const Eigen::MatrixXd& prices, const std::string& path);

} // namespace mobistore::io
