#include "doctest.h"

#include "mobistore/dispatch.hpp"
#include "mobistore/fixtures.hpp"
#include "oracles.hpp"

using namespace mobistore;

namespace {

// per-period energy balance: total generation covers load plus net charging
void check_balance(const PowerNetwork& net, const DispatchSolution& sol) {
  for (int t = 0; t < sol.T; ++t) {
    double gen = sol.g.row(t).sum();
    double load = net.loads.row(t).sum();
    double charge = sol.K > 0 ? sol.u.row(t).sum() : 0.0;
    CHECK(gen - load - charge == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
  }
}

void check_limits(const PowerNetwork& net, const Fleet& fleet,
                  const DispatchSolution& sol) {
  auto E = snapshot_matrices(sol.trajectories, net.num_buses());
  for (int t = 0; t < sol.T; ++t) {
    Eigen::VectorXd inj =
        sol.g.row(t).transpose() - net.loads.row(t).transpose();
    if (sol.K > 0) inj -= E[t] * sol.u.row(t).transpose();
    Eigen::VectorXd flows = sol.shift_factors.H * inj;
    for (int r = 0; r < flows.size(); ++r)
      CHECK(flows(r) <= sol.shift_factors.limits(r) + 1e-6);
  }
  for (int k = 0; k < sol.K; ++k) {
    const auto& unit = fleet.units[k];
    for (int t = 0; t < sol.T; ++t) {
      CHECK(sol.soc(t, k) >= -1e-7);
      CHECK(sol.soc(t, k) <= unit.capacity + 1e-7);
      if (!sol.rapid) {
        double cap = unit.power_rating() * sol.delta_s[k](t);
        CHECK(std::abs(sol.u(t, k)) <= cap + 1e-7);
      }
    }
  }
}

} // namespace

TEST_CASE("two-bus congested instance") {
  auto inst = fixtures::example1();
  auto sol = solve_rapid_mped_s(inst.network, inst.fleet, inst.trajectories);
  REQUIRE(sol.status == SolveStatus::optimal);
  REQUIRE(sol.certified);

  CHECK(sol.lambda(0, 0) == doctest::Approx(1.2).epsilon(1e-5));
  CHECK(sol.lambda(0, 1) == doctest::Approx(15.0).epsilon(1e-5));
  CHECK(sol.lambda(1, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sol.lambda(1, 1) == doctest::Approx(34.0).epsilon(1e-5));
  // congested line dual equals the price split across the one wire
  CHECK(sol.beta_directed(inst.network, 0, 0, 1) ==
        doctest::Approx(13.8).epsilon(1e-5));
  // the unit buys its full capacity cheap and sells it at the far bus
  CHECK(sol.u(0, 0) == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(sol.u(1, 0) == doctest::Approx(-0.1).epsilon(1e-5));
  check_balance(inst.network, sol);
  check_limits(inst.network, inst.fleet, sol);
}

TEST_CASE("three-bus loop with stationary and mobile units") {
  auto inst = fixtures::example2();
  auto sol = solve_rapid_mped_s(inst.network, inst.fleet, inst.trajectories);
  REQUIRE(sol.status == SolveStatus::optimal);
  REQUIRE(sol.certified);
  REQUIRE(sol.T == 2);
  REQUIRE(sol.n == 3);
  REQUIRE(sol.K == 2);

  Eigen::MatrixXd expect_lambda(2, 3);
  expect_lambda << 9, 1, 2, 16, 1, 1;
  Eigen::MatrixXd expect_g(2, 3);
  expect_g << 4.5, 0.5, 1.0, 8.0, 0.5, 0.5;
  CHECK((sol.lambda - expect_lambda).lpNorm<Eigen::Infinity>() < 1e-5);
  CHECK((sol.g - expect_g).lpNorm<Eigen::Infinity>() < 1e-5);

  // both import lines into bus 0 congest in both periods
  CHECK(sol.beta_directed(inst.network, 0, 1, 0) ==
        doctest::Approx(9.0).epsilon(1e-4));
  CHECK(sol.beta_directed(inst.network, 0, 2, 0) ==
        doctest::Approx(6.0).epsilon(1e-4));
  CHECK(sol.beta_directed(inst.network, 1, 1, 0) ==
        doctest::Approx(15.0).epsilon(1e-4));
  CHECK(sol.beta_directed(inst.network, 1, 2, 0) ==
        doctest::Approx(15.0).epsilon(1e-4));

  // both units cycle their full capacity
  for (int k = 0; k < 2; ++k) {
    CHECK(sol.u(0, k) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(sol.u(1, k) == doctest::Approx(-0.5).epsilon(1e-5));
    CHECK(sol.soc(0, k) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(sol.soc(1, k) == doctest::Approx(0.0).scale(1.0).epsilon(1e-5));
  }
  check_balance(inst.network, sol);
  check_limits(inst.network, inst.fleet, sol);

  // lambda accessor matches the stored matrix
  CHECK((lmps(sol) - sol.lambda).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("split first-period load moves the congestion pattern") {
  auto inst = fixtures::example3();
  auto sol = solve_rapid_mped_s(inst.network, inst.fleet, inst.trajectories);
  REQUIRE(sol.status == SolveStatus::optimal);
  REQUIRE(sol.certified);

  Eigen::MatrixXd expect_lambda(2, 3);
  expect_lambda << 10, 9, 3, 16, 1, 1;
  CHECK((sol.lambda - expect_lambda).lpNorm<Eigen::Infinity>() < 1e-5);
  CHECK(sol.beta_directed(inst.network, 0, 2, 0) ==
        doctest::Approx(8.0).epsilon(1e-4));
  CHECK(sol.beta_directed(inst.network, 0, 2, 1) ==
        doctest::Approx(5.0).epsilon(1e-4));
  check_balance(inst.network, sol);
}

TEST_CASE("single bus marginal price equals marginal cost") {
  PowerNetwork net;
  Bus b;
  b.id = 0;
  b.has_generator = true;
  b.cost_a = 1.0;
  net.buses = {b};
  net.loads = Eigen::MatrixXd::Constant(1, 1, 3.0);
  Fleet fleet; // empty fleet is fine
  fleet.transport.travel_time = Eigen::MatrixXd::Zero(1, 1);
  auto sol = solve_mped_s(net, fleet, {});
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.g(0, 0) == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(sol.lambda(0, 0) == doctest::Approx(6.0).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("random instances satisfy the model constraints") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto inst = fixtures::random_dispatch_instance(seed);
    auto sol = inst.rapid
                   ? solve_rapid_mped_s(inst.network, inst.fleet,
                                        inst.trajectories)
                   : solve_mped_s(inst.network, inst.fleet, inst.trajectories);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.certified);
    check_balance(inst.network, sol);
    check_limits(inst.network, inst.fleet, sol);
    // reported objective matches the quadratic cost of the generation
    double cost = 0.0;
    for (int t = 0; t < sol.T; ++t)
      for (int i = 0; i < sol.n; ++i) {
        const Bus& bus = inst.network.buses[i];
        if (bus.has_generator)
          cost += bus.cost_a * sol.g(t, i) * sol.g(t, i) +
                  bus.cost_b * sol.g(t, i);
      }
    CHECK(sol.objective == doctest::Approx(cost).epsilon(1e-6));
  }
}

TEST_CASE("extra storage capacity never increases system cost") {
  for (std::uint64_t seed = 21; seed <= 28; ++seed) {
    auto inst = fixtures::random_dispatch_instance(seed);
    if (inst.fleet.units.empty()) continue;
    auto base = oracles::solve_with_capacity(
        inst.network, inst.fleet, inst.trajectories,
        inst.fleet.units[0].capacity, inst.rapid);
    auto grown = oracles::solve_with_capacity(
        inst.network, inst.fleet, inst.trajectories,
        2.0 * inst.fleet.units[0].capacity, inst.rapid);
    REQUIRE(base.status == SolveStatus::optimal);
    REQUIRE(grown.status == SolveStatus::optimal);
    CHECK(grown.objective <= base.objective + 1e-7);
  }
}

TEST_CASE("ample power rating makes the variants agree") {
  auto inst = fixtures::example2();
  // rating far above anything a 0.5 MWh unit can cycle in an hour
  for (auto& u : inst.fleet.units) {
    u.power_slope = 0.0;
    u.power_intercept = 100.0;
  }
  auto fast = solve_rapid_mped_s(inst.network, inst.fleet, inst.trajectories);
  auto full = solve_mped_s(inst.network, inst.fleet, inst.trajectories);
  REQUIRE(fast.status == SolveStatus::optimal);
  REQUIRE(full.status == SolveStatus::optimal);
  CHECK(fast.objective == doctest::Approx(full.objective).epsilon(1e-7));
  CHECK((fast.u - full.u).lpNorm<Eigen::Infinity>() < 1e-5);
  CHECK((fast.lambda - full.lambda).lpNorm<Eigen::Infinity>() < 1e-4);
  CHECK_FALSE(fast.rapid == full.rapid);
}

TEST_CASE("parallel identical congested lines flag degeneracy") {
  PowerNetwork net;
  net.buses.resize(2);
  net.buses[0].id = 0;
  net.buses[0].has_generator = true;
  net.buses[0].cost_a = 1.0;
  net.buses[1].id = 1;
  net.buses[1].has_generator = true;
  net.buses[1].cost_a = 50.0;
  net.lines = {{0, 1, 1.0, 0.25}, {0, 1, 1.0, 0.25}};
  net.loads = Eigen::MatrixXd::Zero(1, 2);
  net.loads(0, 1) = 2.0;
  Fleet fleet;
  fleet.transport.travel_time = Eigen::MatrixXd::Zero(2, 2);
  auto sol = solve_mped_s(net, fleet, {});
  REQUIRE(sol.status == SolveStatus::optimal);
  // both line rows bind with identical coefficients: the dual split is not
  // unique and the solution must say so
  CHECK(sol.degenerate);
}

TEST_CASE("binding rows are reported with their kinds") {
  auto inst = fixtures::example2();
  auto sol = solve_rapid_mped_s(inst.network, inst.fleet, inst.trajectories);
  REQUIRE(sol.status == SolveStatus::optimal);
  REQUIRE(sol.row_info.size() == sol.row_active.size());
  int active_lines = 0, active_soc = 0;
  for (size_t r = 0; r < sol.row_info.size(); ++r) {
    if (!sol.row_active[r]) continue;
    if (sol.row_info[r].kind == RowInfo::Kind::line) ++active_lines;
    if (sol.row_info[r].kind == RowInfo::Kind::soc_upper ||
        sol.row_info[r].kind == RowInfo::Kind::soc_lower)
      ++active_soc;
  }
  // two import lines congested in each of two periods
  CHECK(active_lines == 4);
  // each unit hits the SoC cap after charging and empties at the horizon
  CHECK(active_soc == 4);
}

TEST_CASE("trajectory default keeps units at their initial bus") {
  auto inst = fixtures::example2();
  auto sol = solve_rapid_mped_s(inst.network, inst.fleet, {});
  REQUIRE(sol.status == SolveStatus::optimal);
  REQUIRE(sol.trajectories.size() == 2);
  CHECK(sol.trajectories[1] ==
        Trajectory{inst.fleet.units[1].initial_bus,
                   inst.fleet.units[1].initial_bus});
}

TEST_CASE("infeasible dispatch is classified") {
  // two buses joined by a tiny line, all load remote from the only generator
  PowerNetwork net;
  net.buses.resize(2);
  net.buses[0].id = 0;
  net.buses[0].has_generator = true;
  net.buses[0].cost_a = 1.0;
  net.buses[1].id = 1;
  net.lines = {{0, 1, 1.0, 0.5}};
  net.loads = Eigen::MatrixXd::Zero(1, 2);
  net.loads(0, 1) = 3.0; // needs 3 MW through a 0.5 MW line
  Fleet fleet;
  fleet.transport.travel_time = Eigen::MatrixXd::Zero(2, 2);
  auto sol = solve_mped_s(net, fleet, {});
  CHECK(sol.status == SolveStatus::infeasible);
}
