// mobistore command line: dispatch, marginal values, arbitrage, relocation,
// and the case-study workflow over the documented file formats. Exit codes:
// 0 success, 1 validation or usage error, 2 solver failure.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mobistore/casestudy.hpp"
#include "mobistore/dispatch.hpp"
#include "mobistore/fixtures.hpp"
#include "mobistore/io.hpp"
#include "mobistore/marginal_value.hpp"
#include "mobistore/parallel.hpp"
#include "mobistore/relocation.hpp"

namespace {

using mobistore::io::write_text_atomic;
using ordered_json = nlohmann::ordered_json;

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

ordered_json mat_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

ordered_json pattern_json(const mobistore::BindingPattern& p) {
  ordered_json j;
  j["energy_bound"] = p.energy_bound;
  j["power_bound"] = p.power_bound;
  j["degenerate"] = p.degenerate;
  return j;
}

struct CommonArgs {
  std::string network, fleet, trajectories, lmps, nodes;
  std::string out = ".";
  double tol_kkt = 1e-9;
  double tol_binding = 1e-6;
};

mobistore::DispatchOptions dispatch_options(const CommonArgs& args) {
  mobistore::DispatchOptions opts;
  opts.qp.tol = args.tol_kkt;
  opts.binding_tol = args.tol_binding;
  return opts;
}

std::vector<mobistore::Trajectory> trajectories_or_default(
    const CommonArgs& args, const mobistore::Fleet& fleet, int periods) {
  if (!args.trajectories.empty())
    return mobistore::io::load_trajectories(args.trajectories);
  std::vector<mobistore::Trajectory> trajs;
  for (const auto& unit : fleet.units)
    trajs.emplace_back(periods, unit.initial_bus);
  return trajs;
}

int run_validate(const CommonArgs& args) {
  std::vector<std::string> errors;
  int periods = -1, buses = -1;
  if (!args.network.empty()) {
    mobistore::PowerNetwork net = mobistore::io::load_network(args.network);
    auto e = mobistore::validate(net);
    errors.insert(errors.end(), e.begin(), e.end());
    periods = net.num_periods();
    buses = net.num_buses();
  }
  if (!args.fleet.empty()) {
    mobistore::Fleet fleet = mobistore::io::load_fleet(args.fleet);
    const int n = buses >= 0 ? buses : fleet.transport.num_buses();
    for (const auto& unit : fleet.units) {
      auto e = mobistore::validate_unit(unit, n);
      errors.insert(errors.end(), e.begin(), e.end());
    }
    auto e = mobistore::validate_transport(fleet.transport);
    errors.insert(errors.end(), e.begin(), e.end());
    if (!args.trajectories.empty()) {
      auto trajs = mobistore::io::load_trajectories(args.trajectories);
      if (trajs.size() != fleet.units.size())
        errors.push_back("trajectory count does not match unit count");
      for (size_t k = 0; k < trajs.size() && k < fleet.units.size(); ++k) {
        if (periods >= 0 && static_cast<int>(trajs[k].size()) != periods)
          errors.push_back("trajectory length does not match the horizon");
        auto te = mobistore::validate_trajectory(fleet.units[k],
                                                 fleet.transport, trajs[k]);
        errors.insert(errors.end(), te.begin(), te.end());
      }
    }
  }
  if (errors.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& e : errors) std::cerr << "error: " << e << "\n";
  return 1;
}

int run_dispatch(const CommonArgs& args, bool rapid) {
  mobistore::PowerNetwork net = mobistore::io::load_network(args.network);
  mobistore::Fleet fleet = mobistore::io::load_fleet(args.fleet);
  auto trajs = trajectories_or_default(args, fleet, net.num_periods());

  mobistore::DispatchSolution sol =
      rapid ? solve_rapid_mped_s(net, fleet, trajs, dispatch_options(args))
            : solve_mped_s(net, fleet, trajs, dispatch_options(args));
  if (sol.status != mobistore::SolveStatus::optimal) {
    std::cerr << "dispatch failed: " << mobistore::to_string(sol.status)
              << "\n";
    return 2;
  }

  std::filesystem::create_directories(args.out);
  mobistore::io::save_price_csv(sol.lambda, args.out + "/lmps.csv");
  ordered_json doc;
  doc["schema_version"] = 1;
  doc["status"] = mobistore::to_string(sol.status);
  doc["certified"] = sol.certified;
  doc["degenerate"] = sol.degenerate;
  doc["rapid"] = sol.rapid;
  doc["objective"] = sol.objective;
  doc["generation_mwh"] = mat_json(sol.g);
  doc["storage_mwh"] = mat_json(sol.u);
  doc["soc_mwh"] = mat_json(sol.soc);
  doc["balance_duals"] = vec_json(sol.gamma);
  doc["line_duals"] = mat_json(sol.beta);
  doc["lmps"] = mat_json(sol.lambda);
  ordered_json res;
  res["stationarity"] = sol.residuals.stationarity;
  res["primal"] = sol.residuals.primal;
  res["complementarity"] = sol.residuals.complementarity;
  res["dual_sign"] = sol.residuals.dual_sign;
  doc["kkt_residuals"] = res;
  write_text_atomic(args.out + "/dispatch.json", doc.dump(2) + "\n");
  std::cout << "objective " << sol.objective << ", outputs in " << args.out
            << "\n";
  return 0;
}

int run_mv(const CommonArgs& args, bool rapid) {
  mobistore::PowerNetwork net = mobistore::io::load_network(args.network);
  mobistore::Fleet fleet = mobistore::io::load_fleet(args.fleet);
  auto trajs = trajectories_or_default(args, fleet, net.num_periods());

  mobistore::DispatchSolution sol =
      rapid ? solve_rapid_mped_s(net, fleet, trajs, dispatch_options(args))
            : solve_mped_s(net, fleet, trajs, dispatch_options(args));
  if (sol.status != mobistore::SolveStatus::optimal) {
    std::cerr << "dispatch failed: " << mobistore::to_string(sol.status)
              << "\n";
    return 2;
  }
  mobistore::MvOptions mv_opts;
  mv_opts.binding_tol = args.tol_binding;
  mv_opts.qp.tol = args.tol_kkt;
  mobistore::MarginalValueReport report =
      mobistore::marginal_value_report(sol, fleet, mv_opts);

  ordered_json doc;
  doc["schema_version"] = 1;
  doc["units"] = ordered_json::array();
  for (size_t k = 0; k < report.units.size(); ++k) {
    const auto& mv = report.units[k];
    ordered_json j;
    j["unit"] = k;
    j["value"] = mv.value;
    j["from_duals"] = mv.from_duals;
    if (std::isnan(mv.from_lmps))
      j["from_lmps"] = nullptr;
    else
      j["from_lmps"] = mv.from_lmps;
    j["cross_checked"] = mv.cross_checked;
    if (!mv.note.empty()) j["note"] = mv.note;
    j["per_period"] = vec_json(mv.per_period);
    doc["units"].push_back(j);
  }
  doc["stationary_total"] = vec_json(report.stationary_total);
  doc["stationary_per_period"] = mat_json(report.stationary_per_period);
  doc["wire_total"] = vec_json(report.wire_total);
  doc["wire_per_period"] = mat_json(report.wire_per_period);
  std::filesystem::create_directories(args.out);
  write_text_atomic(args.out + "/mv.json", doc.dump(2) + "\n");
  std::cout << "marginal values written to " << args.out << "/mv.json\n";
  return 0;
}

int run_arbitrage(const CommonArgs& args) {
  Eigen::MatrixXd prices = mobistore::io::load_price_csv(args.lmps);
  mobistore::Fleet fleet = mobistore::io::load_fleet(args.fleet);
  auto trajs = trajectories_or_default(args, fleet,
                                       static_cast<int>(prices.rows()));
  if (trajs.size() != fleet.units.size())
    throw std::invalid_argument("trajectory count does not match unit count");

  ordered_json doc;
  doc["schema_version"] = 1;
  doc["units"] = ordered_json::array();
  for (size_t k = 0; k < fleet.units.size(); ++k) {
    const auto& unit = fleet.units[k];
    const auto& traj = trajs[k];
    Eigen::VectorXd node_prices(prices.rows());
    for (Eigen::Index t = 0; t < prices.rows(); ++t)
      node_prices(t) = prices(t, traj[t]);
    mobistore::ArbitrageOptions opts;
    opts.qp.tol = args.tol_kkt;
    opts.binding_tol = args.tol_binding;
    mobistore::ArbitrageResult arb = mobistore::solve_price_arbitrage(
        node_prices, unit, mobistore::travel_split(traj, fleet.transport),
        opts);
    if (arb.status != mobistore::SolveStatus::optimal) {
      std::cerr << "arbitrage failed for unit " << k << ": "
                << mobistore::to_string(arb.status) << "\n";
      return 2;
    }
    ordered_json j;
    j["unit"] = k;
    j["profit_usd"] = arb.profit;
    j["schedule_mwh"] = vec_json(arb.u);
    if (arb.unique_optimum) j["unique_optimum"] = *arb.unique_optimum;
    j["pattern"] = pattern_json(arb.pattern);
    doc["units"].push_back(j);
  }
  std::filesystem::create_directories(args.out);
  write_text_atomic(args.out + "/arbitrage.json", doc.dump(2) + "\n");
  std::cout << "arbitrage written to " << args.out << "/arbitrage.json\n";
  return 0;
}

int run_relocate(const CommonArgs& args, const std::string& algo,
                 double soc_step) {
  Eigen::MatrixXd prices = mobistore::io::load_price_csv(args.lmps);
  mobistore::Fleet fleet = mobistore::io::load_fleet(args.fleet);
  if (fleet.units.empty()) throw std::invalid_argument("fleet has no units");

  // units decouple, so plan them independently (and in parallel)
  std::vector<mobistore::RelocationResult> results(fleet.units.size());
  std::vector<std::string> failures(fleet.units.size());
  std::vector<int> failure_code(fleet.units.size(), 0);
  mobistore::parallel_for(fleet.units.size(), [&](size_t k) {
    const auto& unit = fleet.units[k];
    try {
      if (algo == "rapid") {
        results[k] = mobistore::relocate_rapid(unit, prices, fleet.transport);
      } else if (algo == "exact") {
        try {
          results[k] =
              mobistore::relocate_exact(unit, prices, fleet.transport);
        } catch (const std::runtime_error& e) {
          // degenerate pattern: fall back to the SoC-grid planner
          double h = soc_step > 0 ? soc_step : unit.capacity / 64.0;
          results[k] =
              mobistore::relocate_approx(unit, prices, fleet.transport, h);
          results[k].warnings.insert(results[k].warnings.begin(),
                                     std::string("exact search failed (") +
                                         e.what() +
                                         "); fell back to approx");
        }
      } else if (algo == "approx") {
        if (!(soc_step > 0))
          throw std::invalid_argument("--soc-step required for approx");
        results[k] = mobistore::relocate_approx(unit, prices,
                                                fleet.transport, soc_step);
      } else if (algo == "brute") {
        results[k] = mobistore::brute_force_relocation(
            unit, prices, fleet.transport,
            mobistore::BruteEvaluator::arbitrage);
      } else {
        throw std::invalid_argument("unknown --algo " + algo);
      }
    } catch (const std::invalid_argument& e) {
      failures[k] = e.what();
      failure_code[k] = 1;
    } catch (const std::exception& e) {
      failures[k] = e.what();
      failure_code[k] = 2;
    }
  });

  ordered_json doc;
  doc["schema_version"] = 1;
  doc["algorithm"] = algo;
  doc["units"] = ordered_json::array();
  for (size_t k = 0; k < results.size(); ++k) {
    if (!failures[k].empty()) {
      std::cerr << "relocation failed for unit " << k << ": " << failures[k]
                << "\n";
      return failure_code[k];
    }
    const auto& res = results[k];
    ordered_json j;
    j["unit"] = k;
    j["trajectory"] = res.trajectory;
    j["schedule_mwh"] = vec_json(res.schedule);
    j["objective_usd"] = res.objective;
    j["gross_usd"] = res.gross;
    j["travel_cost_usd"] = res.travel_cost;
    if (!std::isnan(res.error_bound)) j["error_bound_usd"] = res.error_bound;
    if (!res.pattern.energy_bound.empty() ||
        !res.pattern.power_bound.empty())
      j["pattern"] = pattern_json(res.pattern);
    j["warnings"] = res.warnings;
    doc["units"].push_back(j);
  }
  std::filesystem::create_directories(args.out);
  write_text_atomic(args.out + "/relocation.json", doc.dump(2) + "\n");
  std::cout << "relocation written to " << args.out << "/relocation.json\n";
  return 0;
}

int run_casestudy(const CommonArgs& args, const std::string& date,
                  double soc_step, const mobistore::VehicleProfile& vehicle,
                  bool no_moves) {
  mobistore::LmpDataset data = mobistore::ingest_lmps(args.lmps, args.nodes);
  mobistore::CaseStudyReport rep = mobistore::run_case_study(
      data, vehicle, date, soc_step, !no_moves);

  ordered_json doc;
  doc["schema_version"] = 1;
  doc["date"] = rep.date;
  doc["gross_usd"] = rep.gross_usd;
  doc["travel_usd"] = rep.travel_usd;
  doc["net_usd"] = rep.net_usd;
  if (!std::isnan(rep.error_bound_usd))
    doc["error_bound_usd"] = rep.error_bound_usd;
  doc["warnings"] = rep.warnings;
  ordered_json table = ordered_json::array();
  for (const auto& iv : rep.table) {
    ordered_json j;
    j["node"] = iv.node;
    j["first_hour"] = iv.first_hour;
    j["last_hour"] = iv.last_hour;
    j["soc_change_mwh"] = iv.soc_change_mwh;
    j["arbitrage_value_usd"] = iv.arbitrage_value_usd;
    j["travel_cost_usd"] = iv.travel_cost_usd;
    table.push_back(j);
  }
  doc["table"] = table;
  ordered_json spread = ordered_json::array();
  for (const auto& row : rep.spread) {
    ordered_json j;
    j["lo"] = row.lo;
    j["q1"] = row.q1;
    j["median"] = row.median;
    j["q3"] = row.q3;
    j["hi"] = row.hi;
    spread.push_back(j);
  }
  doc["lmp_spread"] = spread;

  std::filesystem::create_directories(args.out);
  write_text_atomic(args.out + "/report.json", doc.dump(2) + "\n");

  std::ostringstream tcsv;
  tcsv << "node,first_hour,last_hour,soc_change_mwh,arbitrage_value_usd,"
          "travel_cost_usd\n";
  for (const auto& iv : rep.table)
    tcsv << iv.node << "," << iv.first_hour << "," << iv.last_hour << ","
         << mobistore::io::format_double(iv.soc_change_mwh) << ","
         << mobistore::io::format_double(iv.arbitrage_value_usd) << ","
         << mobistore::io::format_double(iv.travel_cost_usd) << "\n";
  write_text_atomic(args.out + "/table.csv", tcsv.str());

  std::ostringstream mcsv;
  mcsv << "timestamp,node,soc_mwh,charge_mwh,travel_h\n";
  for (const auto& ev : rep.trace)
    mcsv << ev.timestamp << "," << ev.node << ","
         << mobistore::io::format_double(ev.soc_mwh) << ","
         << mobistore::io::format_double(ev.charge_mwh) << ","
         << mobistore::io::format_double(ev.travel_h) << "\n";
  write_text_atomic(args.out + "/trace.csv", mcsv.str());

  std::cout << "net profit " << rep.net_usd << " USD, outputs in "
            << args.out << "\n";
  return 0;
}

int run_fixture(const std::string& kind, std::uint64_t seed,
                const std::string& out) {
  std::filesystem::create_directories(out);
  auto emit_instance = [&](const mobistore::fixtures::DispatchInstance& inst) {
    mobistore::io::save_network(inst.network, out + "/network.json");
    mobistore::io::save_fleet(inst.fleet, out + "/fleet.json");
    mobistore::io::save_trajectories(inst.trajectories,
                                     out + "/trajectories.json");
  };
  if (kind == "example1") {
    emit_instance(mobistore::fixtures::example1());
  } else if (kind == "example2") {
    emit_instance(mobistore::fixtures::example2());
  } else if (kind == "example3") {
    emit_instance(mobistore::fixtures::example3());
  } else if (kind == "random-dispatch") {
    emit_instance(mobistore::fixtures::random_dispatch_instance(seed));
  } else if (kind == "random-prices") {
    const int n = 3, T = 6;
    mobistore::io::save_price_csv(
        mobistore::fixtures::random_prices(seed, T, n),
        out + "/prices.csv");
    mobistore::Fleet fleet;
    fleet.units = {mobistore::fixtures::random_relocation_unit(seed + 1, n)};
    fleet.transport = mobistore::fixtures::random_transport(seed + 2, n);
    mobistore::io::save_fleet(fleet, out + "/fleet.json");
  } else {
    throw std::invalid_argument("unknown fixture kind " + kind);
  }
  std::cout << "fixture " << kind << " written to " << out << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"mobile energy storage dispatch and relocation toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  bool rapid = false, no_moves = false;
  std::string algo = "approx", date = mobistore::fixtures::kCaseStudyDate;
  double soc_step = 0.0;
  std::uint64_t seed = 0;
  std::string kind;
  mobistore::VehicleProfile vehicle = mobistore::fixtures::case_study_vehicle();

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--tol-kkt", args.tol_kkt, "interior point tolerance");
    cmd->add_option("--tol-binding", args.tol_binding,
                    "binding detection tolerance");
  };

  CLI::App* validate = app.add_subcommand("validate", "check input files");
  validate->add_option("--network", args.network, "network JSON");
  validate->add_option("--fleet", args.fleet, "fleet JSON");
  validate->add_option("--trajectories", args.trajectories,
                       "trajectories JSON");

  CLI::App* dispatch =
      app.add_subcommand("dispatch", "multi-period economic dispatch");
  dispatch->add_option("--network", args.network)->required();
  dispatch->add_option("--fleet", args.fleet)->required();
  dispatch->add_option("--trajectories", args.trajectories);
  dispatch->add_flag("--rapid", rapid, "drop storage power bounds");
  add_common(dispatch);

  CLI::App* mv =
      app.add_subcommand("mv", "marginal values of storage and wires");
  mv->add_option("--network", args.network)->required();
  mv->add_option("--fleet", args.fleet)->required();
  mv->add_option("--trajectories", args.trajectories);
  mv->add_flag("--rapid", rapid, "drop storage power bounds");
  add_common(mv);

  CLI::App* arbitrage =
      app.add_subcommand("arbitrage", "price arbitrage along trajectories");
  arbitrage->add_option("--lmps", args.lmps, "price matrix CSV")->required();
  arbitrage->add_option("--fleet", args.fleet)->required();
  arbitrage->add_option("--trajectories", args.trajectories);
  add_common(arbitrage);

  CLI::App* relocate =
      app.add_subcommand("relocate", "plan trajectories against prices");
  relocate->add_option("--lmps", args.lmps, "price matrix CSV")->required();
  relocate->add_option("--fleet", args.fleet)->required();
  relocate->add_option("--algo", algo, "rapid|exact|approx|brute");
  relocate->add_option("--soc-step", soc_step, "SoC grid step (MWh)");
  add_common(relocate);

  CLI::App* casestudy =
      app.add_subcommand("casestudy", "daily arbitrage report from LMP data");
  casestudy->add_option("--lmps", args.lmps, "long-format LMP CSV")
      ->required();
  casestudy->add_option("--nodes", args.nodes, "node metadata CSV")
      ->required();
  casestudy->add_option("--date", date, "YYYY-MM-DD");
  casestudy->add_option("--soc-step", soc_step, "SoC grid step (MWh)");
  casestudy->add_option("--battery-kwh", vehicle.battery_kwh);
  casestudy->add_option("--power-kw", vehicle.power_kw);
  casestudy->add_option("--speed-mph", vehicle.speed_mph);
  casestudy->add_option("--cost-cents-mile", vehicle.cost_cents_per_mile);
  casestudy->add_option("--start-node", vehicle.initial_node);
  casestudy->add_option("--soc-fraction", vehicle.initial_soc_fraction);
  casestudy->add_flag("--no-moves", no_moves, "pin the vehicle to its start");
  add_common(casestudy);

  CLI::App* fixture =
      app.add_subcommand("fixture", "emit built-in or seeded instances");
  fixture->add_option("--kind", kind,
                      "example1|example2|example3|random-dispatch|"
                      "random-prices")
      ->required();
  fixture->add_option("--seed", seed, "generator seed");
  fixture->add_option("--out", args.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(validate)) return run_validate(args);
    if (app.got_subcommand(dispatch)) return run_dispatch(args, rapid);
    if (app.got_subcommand(mv)) return run_mv(args, rapid);
    if (app.got_subcommand(arbitrage)) return run_arbitrage(args);
    if (app.got_subcommand(relocate))
      return run_relocate(args, algo, soc_step);
    if (app.got_subcommand(casestudy))
      return run_casestudy(args, date,
                           soc_step > 0 ? soc_step
                                        : vehicle.battery_kwh / 64000.0,
                           vehicle, no_moves);
    if (app.got_subcommand(fixture)) return run_fixture(kind, seed, args.out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
