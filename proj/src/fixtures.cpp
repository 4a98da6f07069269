#include "mobistore/fixtures.hpp"

#include <random>
#include <sstream>

#include "mobistore/io.hpp"

namespace mobistore::fixtures {

namespace {

TransportModel instant_transport(int n) {
  TransportModel tm;
  tm.travel_time = Eigen::MatrixXd::Zero(n, n);
  tm.period = 1.0;
  tm.kappa = 0.0;
  return tm;
}

Bus generator_bus(int id, double a, double b) {
  Bus bus;
  bus.id = id;
  bus.has_generator = true;
  bus.cost_a = a;
  bus.cost_b = b;
  return bus;
}

} // namespace

DispatchInstance example1() {
  DispatchInstance inst;
  inst.rapid = true;
  inst.network.buses = {generator_bus(0, 1.0, 0.0), generator_bus(1, 5.0, 0.0)};
  inst.network.lines = {{0, 1, 1.0, 0.5}};
  inst.network.loads = Eigen::MatrixXd::Zero(2, 2);
  inst.network.loads(0, 1) = 2.0;
  inst.network.loads(1, 1) = 4.0;
  inst.network.slack = 0;

  MobileStorageUnit unit;
  unit.capacity = 0.1;
  unit.power_slope = 1.0;
  unit.admissible = {0, 1};
  unit.initial_bus = 0;
  inst.fleet.units = {unit};
  inst.fleet.transport = instant_transport(2);
  inst.trajectories = {{0, 1}};
  return inst;
}

DispatchInstance example2() {
  DispatchInstance inst;
  inst.rapid = true;
  inst.network.buses = {generator_bus(0, 1.0, 0.0), generator_bus(1, 1.0, 0.0),
                        generator_bus(2, 1.0, 0.0)};
  inst.network.lines = {
      {0, 1, 0.5, 0.5}, {0, 2, 0.5, 0.5}, {1, 2, 0.5, 0.5}};
  inst.network.loads = Eigen::MatrixXd::Zero(2, 3);
  inst.network.loads(0, 0) = 5.0;
  inst.network.loads(1, 0) = 10.0;
  inst.network.slack = 0;

  MobileStorageUnit stationary;
  stationary.capacity = 0.5;
  stationary.power_slope = 1.0;
  stationary.admissible = {0};
  stationary.initial_bus = 0;
  MobileStorageUnit mobile;
  mobile.capacity = 0.5;
  mobile.power_slope = 1.0;
  mobile.admissible = {0, 1, 2};
  mobile.initial_bus = 2;
  inst.fleet.units = {stationary, mobile};
  inst.fleet.transport = instant_transport(3);
  inst.trajectories = {{0, 0}, {2, 0}};
  return inst;
}

DispatchInstance example3() {
  DispatchInstance inst = example2();
  inst.network.loads.setZero();
  inst.network.loads(0, 0) = 5.0;
  inst.network.loads(0, 1) = 5.0;
  inst.network.loads(1, 0) = 10.0;
  return inst;
}

DispatchInstance random_dispatch_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  DispatchInstance inst;
  const int n = pick(2, 4);
  const int T = pick(2, 5);
  for (int i = 0; i < n; ++i)
    inst.network.buses.push_back(
        generator_bus(i, uniform(0.5, 3.0), uniform(0.0, 2.0)));
  // random spanning tree keeps the network connected; an extra chord makes
  // a loop half the time
  for (int i = 1; i < n; ++i)
    inst.network.lines.push_back(
        {pick(0, i - 1), i, uniform(0.5, 2.0), uniform(0.5, 3.0)});
  if (n >= 3 && pick(0, 1) == 1) {
    int a = pick(0, n - 1), b = pick(0, n - 1);
    while (b == a) b = pick(0, n - 1);
    bool dup = false;
    for (const auto& l : inst.network.lines)
      if ((l.from == a && l.to == b) || (l.from == b && l.to == a)) dup = true;
    if (!dup)
      inst.network.lines.push_back(
          {std::min(a, b), std::max(a, b), uniform(0.5, 2.0),
           uniform(0.5, 3.0)});
  }
  inst.network.loads.resize(T, n);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i) inst.network.loads(t, i) = uniform(0.0, 4.0);
  inst.network.slack = 0;

  const int K = pick(1, 2);
  for (int k = 0; k < K; ++k) {
    MobileStorageUnit unit;
    unit.capacity = uniform(0.1, 1.0);
    unit.power_slope = uniform(0.1, 0.5);
    unit.power_intercept = pick(0, 1) == 1 ? uniform(0.0, 0.2) : 0.0;
    for (int i = 0; i < n; ++i) unit.admissible.push_back(i);
    unit.initial_bus = pick(0, n - 1);
    inst.fleet.units.push_back(unit);

    Trajectory traj(T);
    traj[0] = unit.initial_bus;
    for (int t = 1; t < T; ++t) traj[t] = pick(0, n - 1);
    inst.trajectories.push_back(traj);
  }
  inst.fleet.transport = instant_transport(n);
  return inst;
}

Eigen::MatrixXd random_prices(std::uint64_t seed, int periods, int buses,
                              double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::MatrixXd prices(periods, buses);
  for (int t = 0; t < periods; ++t)
    for (int i = 0; i < buses; ++i) prices(t, i) = dist(rng);
  return prices;
}

TransportModel random_transport(std::uint64_t seed, int buses) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> time_dist(0.05, 0.6);
  std::uniform_real_distribution<double> kappa_dist(0.1, 2.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  TransportModel tm;
  tm.period = 1.0;
  tm.kappa = kappa_dist(rng);
  tm.travel_time = Eigen::MatrixXd::Zero(buses, buses);
  for (int i = 0; i < buses; ++i)
    for (int j = i + 1; j < buses; ++j) {
      double d = time_dist(rng);
      if (coin(rng) < 0.15) d = std::numeric_limits<double>::infinity();
      tm.travel_time(i, j) = d;
      tm.travel_time(j, i) = d;
    }
  return tm;
}

MobileStorageUnit random_relocation_unit(std::uint64_t seed, int buses) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  MobileStorageUnit unit;
  unit.capacity = uniform(0.2, 1.0);
  unit.power_slope = uniform(0.3, 1.2);
  unit.power_intercept = 0.0;
  for (int i = 0; i < buses; ++i) unit.admissible.push_back(i);
  unit.initial_bus =
      std::uniform_int_distribution<int>(0, buses - 1)(rng);
  unit.initial_soc = 0.0;
  return unit;
}

void write_case_study_fixture(const std::string& dir) {
  std::ostringstream nodes;
  nodes << "node,lat,lon\n";
  nodes << "ALPHA,39.0,-76.8\n";
  nodes << "BRAVO,39.1,-76.8\n";
  nodes << "CHARLIE,40.0,-76.8\n";
  io::write_text_atomic(dir + "/nodes_3node.csv", nodes.str());

  // ALPHA is cheap before dawn, BRAVO spikes in the evening one short hop
  // away, CHARLIE is expensive but more than an hour's drive from both
  std::ostringstream lmp;
  lmp << "timestamp,node,lmp_usd_per_mwh\n";
  for (int t = 0; t < 24; ++t) {
    const double alpha = t < 5 ? 10.0 + t : 60.0 + t;
    double bravo;
    if (t < 17) {
      bravo = 60.0 + t;
    } else if (t < 22) {
      const double spike[] = {200.0, 210.0, 205.0, 195.0, 190.0};
      bravo = spike[t - 17];
    } else {
      bravo = t == 22 ? 80.0 : 79.0;
    }
    const double charlie = 90.0 + 0.25 * t; // exact binary fractions
    std::ostringstream stamp;
    stamp << kCaseStudyDate << "T" << (t < 10 ? "0" : "") << t << ":00:00";
    lmp << stamp.str() << ",ALPHA," << io::format_double(alpha) << "\n";
    lmp << stamp.str() << ",BRAVO," << io::format_double(bravo) << "\n";
    lmp << stamp.str() << ",CHARLIE," << io::format_double(charlie) << "\n";
  }
  io::write_text_atomic(dir + "/lmp_3node.csv", lmp.str());
}

VehicleProfile case_study_vehicle() {
  VehicleProfile v;
  v.battery_kwh = 50.0;
  v.power_kw = 11.0;
  v.speed_mph = 50.0;
  v.cost_cents_per_mile = 4.0;
  v.initial_soc_fraction = 0.0;
  v.initial_node = "ALPHA";
  return v;
}

} // namespace mobistore::fixtures
