#pragma once

// Built-in instances and seeded random generators shared by the tests and
// the CLI fixture emitter. All randomness flows through an explicit seed;
// the same seed always reproduces the same instance.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mobistore/casestudy.hpp"
#include "mobistore/network.hpp"
#include "mobistore/storage.hpp"

namespace mobistore::fixtures {

struct DispatchInstance {
  PowerNetwork network;
  Fleet fleet;
  std::vector<Trajectory> trajectories;
  bool rapid = false; // solve without storage power bounds
};

// 2-bus, 2-period congested instance where the move value decomposes
// exactly into the wire dual plus the destination price increment
DispatchInstance example1();

// 3-bus loop, quadratic unit costs, one stationary and one mobile unit;
// the mobile unit's value exceeds the wire + stationary decomposition
DispatchInstance example2();

// example2 with the first-period load split across two buses, flipping the
// decomposition comparison the other way
DispatchInstance example3();

// connected network with 2..4 buses, 2..5 periods, every bus a generator,
// and one or two storage units on random trajectories
DispatchInstance random_dispatch_instance(std::uint64_t seed);

Eigen::MatrixXd random_prices(std::uint64_t seed, int periods, int buses,
                              double lo = -50.0, double hi = 50.0);

// symmetric travel times in [0.05, 0.6] h with some unreachable pairs,
// period 1 h, positive relocation cost rate
TransportModel random_transport(std::uint64_t seed, int buses);

// unit with capacity-proportional power rating, all buses admissible,
// random start, empty initial charge
MobileStorageUnit random_relocation_unit(std::uint64_t seed, int buses);

// 3-node, 24-hour price fixture for the case-study workflow: one cheap
// morning node, one evening-spike node one move away, and a decoy node too
// far to reach in an hour. Writes <dir>/nodes_3node.csv and
// <dir>/lmp_3node.csv.
void write_case_study_fixture(const std::string& dir);

// profile matching the shipped 3-node fixture (50 kWh / 11 kW, 50 mph,
// 4 cents/mile, empty start at ALPHA)
VehicleProfile case_study_vehicle();

inline constexpr const char* kCaseStudyDate = "2021-05-24";

} // namespace mobistore::fixtures
