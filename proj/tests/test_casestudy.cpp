#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "mobistore/casestudy.hpp"
#include "mobistore/fixtures.hpp"
#include "mobistore/io.hpp"

using namespace mobistore;

namespace {

const std::string kFixtureDir = MOBISTORE_FIXTURE_DIR;

std::string temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "mobistore_cs_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

LmpDataset shipped_dataset() {
  return ingest_lmps(kFixtureDir + "/lmp_3node.csv",
                     kFixtureDir + "/nodes_3node.csv");
}

// in-memory dataset over two nodes one move apart (same longitude)
LmpDataset two_node_dataset(const Eigen::MatrixXd& lmp) {
  LmpDataset d;
  d.nodes = {"A", "B"};
  d.lat.resize(2);
  d.lat << 39.0, 39.1;
  d.lon.resize(2);
  d.lon << -76.8, -76.8;
  d.timestamps.resize(lmp.rows());
  for (int t = 0; t < lmp.rows(); ++t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "2021-05-24T%02d:00:00", t);
    d.timestamps[t] = buf;
  }
  d.lmp = lmp;
  return d;
}

} // namespace

TEST_CASE("great-circle distances") {
  CHECK(haversine_miles(39.0, -76.8, 39.0, -76.8) ==
        doctest::Approx(0.0).scale(1.0));
  // same-longitude pair: distance is exactly R * dlat
  CHECK(haversine_miles(39.0, -76.8, 39.1, -76.8) ==
        doctest::Approx(6.909409442795152).epsilon(1e-10));
  CHECK(haversine_miles(39.1, -76.8, 39.0, -76.8) ==
        doctest::Approx(haversine_miles(39.0, -76.8, 39.1, -76.8))
            .epsilon(1e-12));
}

TEST_CASE("shipped price fixture loads strictly") {
  auto data = shipped_dataset();
  REQUIRE(data.nodes == std::vector<std::string>{"ALPHA", "BRAVO", "CHARLIE"});
  REQUIRE(data.lmp.rows() == 24);
  REQUIRE(data.lmp.cols() == 3);
  CHECK(data.timezone == "local");
  CHECK(data.timestamps.front() == "2021-05-24T00:00:00");
  CHECK(data.timestamps.back() == "2021-05-24T23:00:00");
  // spot checks against the documented price curves
  CHECK(data.lmp(0, 0) == doctest::Approx(10.0));
  CHECK(data.lmp(4, 0) == doctest::Approx(14.0));
  CHECK(data.lmp(5, 0) == doctest::Approx(65.0));
  CHECK(data.lmp(16, 1) == doctest::Approx(76.0));
  CHECK(data.lmp(18, 1) == doctest::Approx(210.0));
  CHECK(data.lmp(23, 1) == doctest::Approx(79.0));
  CHECK(data.lmp(23, 2) == doctest::Approx(95.75));
  CHECK(data.node_index("BRAVO") == 1);
  CHECK(data.node_index("DELTA") == -1);
}

TEST_CASE("fixture generator reproduces the shipped files byte for byte") {
  auto dir = temp_dir();
  fixtures::write_case_study_fixture(dir);
  CHECK(io::read_text(dir + "/nodes_3node.csv") ==
        io::read_text(kFixtureDir + "/nodes_3node.csv"));
  CHECK(io::read_text(dir + "/lmp_3node.csv") ==
        io::read_text(kFixtureDir + "/lmp_3node.csv"));
}

TEST_CASE("ingestion rejects malformed inputs") {
  auto dir = temp_dir();
  auto write = [&](const std::string& name, const std::string& body) {
    io::write_text_atomic(dir + "/" + name, body);
    return dir + "/" + name;
  };
  const std::string nodes_ok =
      "node,lat,lon\nA,39.0,-76.8\nB,39.1,-76.8\n";

  SUBCASE("bad node header") {
    auto nodes = write("n1.csv", "name,lat,lon\nA,39.0,-76.8\n");
    auto lmp = write("l1.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n");
    CHECK_THROWS_AS(ingest_lmps(lmp, nodes), std::invalid_argument);
  }
  SUBCASE("single node is not enough") {
    auto nodes = write("n2.csv", "node,lat,lon\nA,39.0,-76.8\n");
    auto lmp = write("l2.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n");
    CHECK_THROWS_AS(ingest_lmps(lmp, nodes), std::invalid_argument);
  }
  SUBCASE("missing hour for one node") {
    auto nodes = write("n3.csv", nodes_ok);
    auto lmp = write("l3.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n"
                     "2021-05-24T00:00,B,11\n"
                     "2021-05-24T01:00,A,12\n");
    CHECK_THROWS_WITH_AS(ingest_lmps(lmp, nodes),
                         doctest::Contains("missing hours"),
                         std::invalid_argument);
  }
  SUBCASE("gap in the hour sequence") {
    auto nodes = write("n4.csv", nodes_ok);
    auto lmp = write("l4.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n"
                     "2021-05-24T00:00,B,11\n"
                     "2021-05-24T02:00,A,12\n"
                     "2021-05-24T02:00,B,13\n");
    CHECK_THROWS_AS(ingest_lmps(lmp, nodes), std::invalid_argument);
  }
  SUBCASE("duplicate cell") {
    auto nodes = write("n5.csv", nodes_ok);
    auto lmp = write("l5.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n"
                     "2021-05-24T00:00,A,12\n"
                     "2021-05-24T00:00,B,11\n");
    CHECK_THROWS_WITH_AS(ingest_lmps(lmp, nodes),
                         doctest::Contains("duplicate"),
                         std::invalid_argument);
  }
  SUBCASE("unknown node in the price file") {
    auto nodes = write("n6.csv", nodes_ok);
    auto lmp = write("l6.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n"
                     "2021-05-24T00:00,Z,11\n");
    CHECK_THROWS_WITH_AS(ingest_lmps(lmp, nodes),
                         doctest::Contains("unknown node"),
                         std::invalid_argument);
  }
  SUBCASE("sub-hourly stamps are rejected") {
    auto nodes = write("n7.csv", nodes_ok);
    auto lmp = write("l7.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:30,A,10\n");
    CHECK_THROWS_AS(ingest_lmps(lmp, nodes), std::invalid_argument);
  }
  SUBCASE("mixed UTC and local stamps are rejected") {
    auto nodes = write("n8.csv", nodes_ok);
    auto lmp = write("l8.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n"
                     "2021-05-24T00:00Z,B,11\n");
    CHECK_THROWS_WITH_AS(ingest_lmps(lmp, nodes), doctest::Contains("mixed"),
                         std::invalid_argument);
  }
  SUBCASE("coordinates out of range") {
    auto nodes = write("n9.csv", "node,lat,lon\nA,95.0,-76.8\nB,39.1,-76.8\n");
    auto lmp = write("l9.csv",
                     "timestamp,node,lmp_usd_per_mwh\n"
                     "2021-05-24T00:00,A,10\n"
                     "2021-05-24T00:00,B,11\n");
    CHECK_THROWS_AS(ingest_lmps(lmp, nodes), std::invalid_argument);
  }
}

TEST_CASE("travel matrices follow the vehicle parameters") {
  auto data = shipped_dataset();
  auto vehicle = fixtures::case_study_vehicle();
  auto [D, cost] = travel_matrices(data, vehicle);
  CHECK(D(0, 0) == 0.0);
  CHECK(D(0, 1) == doctest::Approx(6.909409442795152 / 50.0).epsilon(1e-12));
  CHECK(cost(0, 1) ==
        doctest::Approx(6.909409442795152 * 0.04).epsilon(1e-12));
  // the far node is outside one hour of driving in both directions
  CHECK(std::isinf(D(0, 2)));
  CHECK(std::isinf(D(2, 1)));

  // kappa is calibrated so time priced at kappa reproduces the dollar cost
  auto tm = transport_for(data, vehicle);
  CHECK(tm.kappa == doctest::Approx(2.0));
  CHECK(tm.kappa * tm.travel_time(0, 1) == cost(0, 1)); // exact in doubles
  CHECK(tm.kappa * tm.travel_time(1, 0) == cost(1, 0));

  VehicleProfile pricier = vehicle;
  pricier.cost_cents_per_mile = 16.0;
  auto [D2, cost2] = travel_matrices(data, pricier);
  CHECK(D2(0, 1) == D(0, 1)); // time is unchanged
  CHECK(cost2(0, 1) == doctest::Approx(4.0 * cost(0, 1)).epsilon(1e-12));
}

TEST_CASE("exactly one hour of driving stays reachable") {
  LmpDataset d;
  d.nodes = {"A", "B"};
  d.lat.resize(2);
  d.lon.resize(2);
  const double pi = 3.14159265358979323846;
  d.lat << 10.0, 10.0 + (50.0 / 3958.8) * (180.0 / pi);
  d.lon << 5.0, 5.0;
  VehicleProfile v;
  v.speed_mph = 50.0;
  v.cost_cents_per_mile = 4.0;
  auto [D, cost] = travel_matrices(d, v);
  CHECK(D(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(D(0, 1)));
  CHECK(cost(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
  v.cost_cents_per_mile = 16.0;
  CHECK(travel_matrices(d, v).second(0, 1) ==
        doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("vehicle to unit mapping") {
  auto data = shipped_dataset();
  auto vehicle = fixtures::case_study_vehicle();
  auto unit = unit_for(data, vehicle, true);
  CHECK(unit.capacity == doctest::Approx(0.05));
  CHECK(unit.power_intercept == doctest::Approx(0.011));
  CHECK(unit.power_slope == 0.0);
  CHECK(unit.admissible == std::vector<int>{0, 1, 2});
  CHECK(unit.initial_bus == 0);
  CHECK(unit.initial_soc == 0.0);

  auto pinned = unit_for(data, vehicle, false);
  CHECK(pinned.admissible == std::vector<int>{0});

  VehicleProfile bad = vehicle;
  bad.initial_soc_fraction = 1.5;
  CHECK_THROWS_AS(unit_for(data, bad, true), std::invalid_argument);
  bad = vehicle;
  bad.initial_node = "NOWHERE";
  CHECK_THROWS_AS(unit_for(data, bad, true), std::invalid_argument);
}

TEST_CASE("price spread quartiles") {
  auto data = shipped_dataset();
  auto spread = lmp_spread(data, fixtures::kCaseStudyDate);
  REQUIRE(spread.size() == 24);
  // hour 0 prices are (10, 60, 90)
  CHECK(spread[0].lo == doctest::Approx(10.0));
  CHECK(spread[0].q1 == doctest::Approx(35.0));
  CHECK(spread[0].median == doctest::Approx(60.0));
  CHECK(spread[0].q3 == doctest::Approx(75.0));
  CHECK(spread[0].hi == doctest::Approx(90.0));
  for (const auto& row : spread) {
    CHECK(row.lo <= row.q1);
    CHECK(row.q1 <= row.median);
    CHECK(row.median <= row.q3);
    CHECK(row.q3 <= row.hi);
  }
}

TEST_CASE("flat prices earn nothing and stay put") {
  auto data = two_node_dataset(Eigen::MatrixXd::Constant(24, 2, 50.0));
  VehicleProfile v = fixtures::case_study_vehicle();
  v.initial_node = "A";
  auto rep = run_case_study(data, v, "2021-05-24", 0.05 / 64.0);
  CHECK(rep.gross_usd == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  CHECK(rep.travel_usd == doctest::Approx(0.0).scale(1.0));
  CHECK(rep.net_usd == rep.gross_usd - rep.travel_usd); // identity is exact
  REQUIRE(rep.table.size() == 1);
  CHECK(rep.table[0].node == "A");
  CHECK(rep.table[0].first_hour == 0);
  CHECK(rep.table[0].last_hour == 23);
  for (int t = 0; t < 24; ++t)
    CHECK(std::abs(rep.schedule_mwh(t)) < 1e-9);
}

TEST_CASE("single price spike pulls the vehicle across") {
  Eigen::MatrixXd lmp = Eigen::MatrixXd::Zero(24, 2);
  lmp(18, 1) = 100.0;
  auto data = two_node_dataset(lmp);
  VehicleProfile v = fixtures::case_study_vehicle();
  v.initial_node = "A";
  const double h = 0.05 / 64.0;
  auto rep = run_case_study(data, v, "2021-05-24", h);

  // one hour of discharge, floored to the SoC grid
  const double sellable = std::floor(0.011 / h) * h;
  auto cost = travel_matrices(data, v).second;
  CHECK(rep.gross_usd == doctest::Approx(100.0 * sellable).epsilon(1e-9));
  CHECK(rep.travel_usd == doctest::Approx(cost(0, 1)).epsilon(1e-12));
  CHECK(rep.net_usd ==
        doctest::Approx(100.0 * sellable - cost(0, 1)).epsilon(1e-9));
  CHECK(rep.trajectory[18] == 1);
  CHECK(rep.schedule_mwh(18) == doctest::Approx(-sellable).epsilon(1e-9));
  // the report stays internally consistent
  double table_gross = 0.0, table_travel = 0.0;
  for (const auto& iv : rep.table) {
    table_gross += iv.arbitrage_value_usd;
    table_travel += iv.travel_cost_usd;
  }
  CHECK(rep.gross_usd == table_gross);
  CHECK(rep.travel_usd == table_travel);
  CHECK(rep.net_usd == rep.gross_usd - rep.travel_usd);
}

TEST_CASE("full case study on the shipped fixture") {
  auto data = shipped_dataset();
  auto vehicle = fixtures::case_study_vehicle();
  auto rep = run_case_study(data, vehicle, fixtures::kCaseStudyDate,
                            0.05 / 64.0);
  REQUIRE(rep.trace.size() == 24);
  REQUIRE(rep.trajectory.size() == 24);
  REQUIRE(rep.schedule_mwh.size() == 24);

  // starts at the cheap node, sells the evening spike at the second node,
  // and never visits the unreachable third node
  CHECK(rep.trajectory.front() == 0);
  for (int t : rep.trajectory) CHECK(t != 2);
  bool at_bravo_in_spike = false;
  for (int t = 17; t <= 21; ++t)
    if (rep.trajectory[t] == 1) at_bravo_in_spike = true;
  CHECK(at_bravo_in_spike);

  CHECK(rep.net_usd == rep.gross_usd - rep.travel_usd);
  CHECK(rep.net_usd > 8.0);
  CHECK(std::isfinite(rep.error_bound_usd));

  // SoC trace stays within the battery and ends where the schedule says
  double soc = 0.0;
  for (int t = 0; t < 24; ++t) {
    soc += rep.schedule_mwh(t);
    CHECK(rep.trace[t].soc_mwh == doctest::Approx(soc).epsilon(1e-9));
    CHECK(soc >= -1e-9);
    CHECK(soc <= 0.05 + 1e-9);
  }

  // table rows tile the day
  int covered = 0;
  for (const auto& iv : rep.table) {
    CHECK(iv.first_hour <= iv.last_hour);
    covered += iv.last_hour - iv.first_hour + 1;
  }
  CHECK(covered == 24);

  // disabling moves can only lose money
  auto pinned = run_case_study(data, vehicle, fixtures::kCaseStudyDate,
                               0.05 / 64.0, false);
  CHECK(pinned.travel_usd == doctest::Approx(0.0).scale(1.0));
  CHECK(pinned.net_usd < rep.net_usd);
  for (int t : pinned.trajectory) CHECK(t == 0);
}

TEST_CASE("dates must exist with all 24 hours") {
  auto data = shipped_dataset();
  auto vehicle = fixtures::case_study_vehicle();
  CHECK_THROWS_AS(
      run_case_study(data, vehicle, "2021-05-25", 0.05 / 64.0),
      std::invalid_argument);
  CHECK_THROWS_AS(lmp_spread(data, "1999-01-01"), std::invalid_argument);
}
