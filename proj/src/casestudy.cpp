#include "mobistore/casestudy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mobistore {

namespace {

constexpr double kEarthRadiusMiles = 3958.8;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v))
      throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad numeric value for " + what + ": '" + s +
                             "'");
  }
}

// days since 1970-01-01 for a civil date (proleptic Gregorian)
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Stamp {
  std::int64_t epoch_hours = 0;
  std::string canonical; // YYYY-MM-DDTHH:00:00
  bool utc = false;
};

// strict hourly ISO-8601: YYYY-MM-DDTHH:MM[:SS][Z], minutes and seconds 0
Stamp parse_stamp(const std::string& raw) {
  std::string s = raw;
  Stamp st;
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) {
    st.utc = true;
    s.pop_back();
  }
  auto fail = [&]() -> Stamp {
    throw std::invalid_argument("bad timestamp '" + raw +
                             "' (expected YYYY-MM-DDTHH:MM[:SS][Z])");
  };
  if (s.size() != 16 && s.size() != 19) return fail();
  for (size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (i == 4 || i == 7) {
      if (c != '-') return fail();
    } else if (i == 10) {
      if (c != 'T' && c != ' ') return fail();
    } else if (i == 13 || i == 16) {
      if (c != ':') return fail();
    } else if (c < '0' || c > '9') {
      return fail();
    }
  }
  const int y = std::stoi(s.substr(0, 4));
  const int mo = std::stoi(s.substr(5, 2));
  const int d = std::stoi(s.substr(8, 2));
  const int h = std::stoi(s.substr(11, 2));
  const int mi = std::stoi(s.substr(14, 2));
  const int sec = s.size() == 19 ? std::stoi(s.substr(17, 2)) : 0;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23) return fail();
  if (mi != 0 || sec != 0)
    throw std::invalid_argument("timestamp '" + raw +
                             "' is not on the hour");
  st.epoch_hours = days_from_civil(y, mo, d) * 24 + h;
  std::ostringstream os;
  os << s.substr(0, 13) << ":00:00";
  st.canonical = os.str();
  return st;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// rows of the requested date, in hour order; throws unless all 24 present
std::pair<int, int> date_rows(const LmpDataset& data,
                              const std::string& date) {
  int first = -1;
  for (int r = 0; r < static_cast<int>(data.timestamps.size()); ++r)
    if (data.timestamps[r].compare(0, 10, date) == 0) {
      first = r;
      break;
    }
  if (first < 0)
    throw std::invalid_argument("date " + date + " is not in the dataset");
  int count = 0;
  for (int r = first; r < static_cast<int>(data.timestamps.size()) &&
                      data.timestamps[r].compare(0, 10, date) == 0;
       ++r)
    ++count;
  if (count != 24)
    throw std::invalid_argument("date " + date + " has " +
                             std::to_string(count) +
                             " hours in the dataset, expected 24");
  return {first, count};
}

SpreadRow quartiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const int n = static_cast<int>(v.size());
  auto at = [&](double p) {
    const double pos = p * (n - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, n - 1);
    const double f = pos - lo;
    return v[lo] + f * (v[hi] - v[lo]);
  };
  SpreadRow row;
  row.lo = v.front();
  row.q1 = at(0.25);
  row.median = at(0.5);
  row.q3 = at(0.75);
  row.hi = v.back();
  return row;
}

} // namespace

int LmpDataset::node_index(const std::string& id) const {
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    if (nodes[i] == id) return i;
  return -1;
}

double haversine_miles(double lat1, double lon1, double lat2, double lon2) {
  const double rad = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusMiles *
         std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

LmpDataset ingest_lmps(const std::string& lmp_csv_path,
                       const std::string& nodes_csv_path) {
  LmpDataset data;

  // node metadata
  std::vector<std::string> nlines = read_lines(nodes_csv_path);
  if (nlines.empty() || split_csv(nlines[0]) !=
                            std::vector<std::string>{"node", "lat", "lon"})
    throw std::invalid_argument(nodes_csv_path +
                             ": expected header 'node,lat,lon'");
  std::map<std::string, int> index;
  std::vector<double> lat, lon;
  for (size_t r = 1; r < nlines.size(); ++r) {
    auto f = split_csv(nlines[r]);
    if (f.size() != 3)
      throw std::invalid_argument(nodes_csv_path + ": bad row '" + nlines[r] +
                               "'");
    if (index.count(f[0]))
      throw std::invalid_argument(nodes_csv_path + ": duplicate node " + f[0]);
    const double la = parse_double(f[1], "lat");
    const double lo = parse_double(f[2], "lon");
    if (la < -90.0 || la > 90.0 || lo < -180.0 || lo > 180.0)
      throw std::invalid_argument(nodes_csv_path + ": coordinates for " + f[0] +
                               " out of range");
    index[f[0]] = static_cast<int>(data.nodes.size());
    data.nodes.push_back(f[0]);
    lat.push_back(la);
    lon.push_back(lo);
  }
  const int n = static_cast<int>(data.nodes.size());
  if (n < 2)
    throw std::invalid_argument(nodes_csv_path +
                             ": need at least two nodes");
  data.lat = Eigen::Map<Eigen::VectorXd>(lat.data(), n);
  data.lon = Eigen::Map<Eigen::VectorXd>(lon.data(), n);

  // price rows
  std::vector<std::string> plines = read_lines(lmp_csv_path);
  if (plines.empty() ||
      split_csv(plines[0]) !=
          std::vector<std::string>{"timestamp", "node", "lmp_usd_per_mwh"})
    throw std::invalid_argument(
        lmp_csv_path + ": expected header 'timestamp,node,lmp_usd_per_mwh'");
  std::map<std::int64_t, std::string> canon; // epoch hour -> label
  std::map<std::pair<std::int64_t, int>, double> cells;
  bool any_utc = false, any_local = false;
  for (size_t r = 1; r < plines.size(); ++r) {
    auto f = split_csv(plines[r]);
    if (f.size() != 3)
      throw std::invalid_argument(lmp_csv_path + ": bad row '" + plines[r] +
                               "'");
    Stamp st = parse_stamp(f[0]);
    (st.utc ? any_utc : any_local) = true;
    auto it = index.find(f[1]);
    if (it == index.end())
      throw std::invalid_argument(lmp_csv_path + ": unknown node " + f[1]);
    const double v = parse_double(f[2], "lmp");
    auto key = std::make_pair(st.epoch_hours, it->second);
    if (cells.count(key))
      throw std::invalid_argument(lmp_csv_path + ": duplicate row for " + f[0] +
                               " node " + f[1]);
    cells[key] = v;
    canon[st.epoch_hours] = st.canonical;
  }
  if (canon.empty()) throw std::invalid_argument(lmp_csv_path + ": no rows");
  if (any_utc && any_local)
    throw std::invalid_argument(lmp_csv_path +
                             ": mixed UTC and local timestamps");
  data.timezone = any_utc ? "UTC" : "local";

  // completeness over the covered range: every hour, every node
  const std::int64_t h0 = canon.begin()->first;
  const std::int64_t h1 = canon.rbegin()->first;
  std::vector<std::string> missing;
  for (std::int64_t h = h0; h <= h1; ++h) {
    auto it = canon.find(h);
    for (int j = 0; j < n; ++j)
      if (!cells.count({h, j})) {
        std::string label;
        if (it != canon.end()) {
          label = it->second + " node " + data.nodes[j];
        } else {
          label = "hour " + std::to_string(h - h0) + " after " +
                  canon.begin()->second;
        }
        missing.push_back(label);
        if (it == canon.end()) break; // whole hour absent, report once
      }
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << lmp_csv_path << ": missing hours:";
    for (const auto& m : missing) msg << " [" << m << "]";
    throw std::invalid_argument(msg.str());
  }

  const int T = static_cast<int>(h1 - h0 + 1);
  data.timestamps.resize(T);
  data.lmp.resize(T, n);
  for (std::int64_t h = h0; h <= h1; ++h) {
    const int r = static_cast<int>(h - h0);
    data.timestamps[r] = canon.at(h);
    for (int j = 0; j < n; ++j) data.lmp(r, j) = cells.at({h, j});
  }
  return data;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> travel_matrices(
    const LmpDataset& data, const VehicleProfile& vehicle) {
  const int n = static_cast<int>(data.nodes.size());
  if (!(vehicle.speed_mph > 0.0))
    throw std::invalid_argument("vehicle speed must be positive");
  Eigen::MatrixXd D(n, n), cost(n, n);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double miles = haversine_miles(data.lat(i), data.lon(i),
                                           data.lat(j), data.lon(j));
      double hours = miles / vehicle.speed_mph;
      double dollars = miles * vehicle.cost_cents_per_mile / 100.0;
      if (i == j) hours = dollars = 0.0;
      if (hours > 1.0 + 1e-12) {
        // not reachable within one hourly period; excluded from move edges
        hours = inf;
        dollars = inf;
      }
      D(i, j) = hours;
      cost(i, j) = dollars;
    }
  return {D, cost};
}

TransportModel transport_for(const LmpDataset& data,
                             const VehicleProfile& vehicle) {
  TransportModel tm;
  tm.travel_time = travel_matrices(data, vehicle).first;
  tm.period = 1.0;
  // chosen so kappa * travel_time(i,j) equals the per-move dollar cost
  tm.kappa = vehicle.speed_mph * vehicle.cost_cents_per_mile / 100.0;
  return tm;
}

MobileStorageUnit unit_for(const LmpDataset& data,
                           const VehicleProfile& vehicle, bool allow_moves) {
  if (!(vehicle.battery_kwh > 0.0) || !(vehicle.power_kw > 0.0))
    throw std::invalid_argument("vehicle capacity and power must be positive");
  if (vehicle.initial_soc_fraction < 0.0 ||
      vehicle.initial_soc_fraction > 1.0)
    throw std::invalid_argument("initial SoC fraction must lie in [0, 1]");
  const int start = data.node_index(vehicle.initial_node);
  if (start < 0)
    throw std::invalid_argument("unknown initial node " + vehicle.initial_node);
  MobileStorageUnit unit;
  unit.capacity = vehicle.battery_kwh / 1000.0; // kWh -> MWh
  unit.power_slope = 0.0;                       // charger-limited rating
  unit.power_intercept = vehicle.power_kw / 1000.0; // kW -> MW
  unit.initial_bus = start;
  unit.initial_soc = vehicle.initial_soc_fraction * unit.capacity;
  if (allow_moves) {
    unit.admissible.resize(data.nodes.size());
    for (int i = 0; i < static_cast<int>(data.nodes.size()); ++i)
      unit.admissible[i] = i;
  } else {
    unit.admissible = {start};
  }
  return unit;
}

std::vector<SpreadRow> lmp_spread(const LmpDataset& data,
                                  const std::string& date) {
  auto [first, count] = date_rows(data, date);
  std::vector<SpreadRow> rows(count);
  for (int t = 0; t < count; ++t) {
    std::vector<double> v(data.lmp.cols());
    for (int j = 0; j < data.lmp.cols(); ++j) v[j] = data.lmp(first + t, j);
    rows[t] = quartiles(std::move(v));
  }
  return rows;
}

CaseStudyReport run_case_study(const LmpDataset& data,
                               const VehicleProfile& vehicle,
                               const std::string& date, double soc_step_mwh,
                               bool allow_moves) {
  auto [first, count] = date_rows(data, date);
  Eigen::MatrixXd lambda = data.lmp.middleRows(first, count);

  MobileStorageUnit unit = unit_for(data, vehicle, allow_moves);
  TransportModel transport = transport_for(data, vehicle);

  RelocationResult plan =
      relocate_approx(unit, lambda, transport, soc_step_mwh);

  CaseStudyReport rep;
  rep.date = date;
  rep.warnings = plan.warnings;
  rep.trajectory = plan.trajectory;
  rep.schedule_mwh = plan.schedule;
  rep.error_bound_usd = plan.error_bound;
  rep.spread = lmp_spread(data, date);

  const Eigen::MatrixXd cost = travel_matrices(data, vehicle).second;
  // reproduce the planner's floor-to-grid start for the SoC trace
  double soc;
  {
    const int z = std::max(
        1, static_cast<int>(std::ceil(unit.capacity / soc_step_mwh - 1e-9)));
    const double h = unit.capacity / z;
    soc = std::min(static_cast<double>(z),
                   std::max(0.0, std::floor(unit.initial_soc / h + 1e-9))) *
          h;
  }

  for (int t = 0; t < count; ++t) {
    MoveEvent ev;
    ev.timestamp = data.timestamps[first + t];
    ev.node = data.nodes[plan.trajectory[t]];
    ev.charge_mwh = plan.schedule(t);
    soc += plan.schedule(t);
    ev.soc_mwh = soc;
    ev.travel_h = t + 1 < count && plan.trajectory[t + 1] != plan.trajectory[t]
                      ? transport.travel_time(plan.trajectory[t],
                                              plan.trajectory[t + 1])
                      : 0.0;
    rep.trace.push_back(ev);
  }

  // group the stay intervals and attribute each departing move to the
  // interval it ends
  int t = 0;
  while (t < count) {
    DwellInterval iv;
    iv.node = data.nodes[plan.trajectory[t]];
    iv.first_hour = t;
    int u = t;
    while (u + 1 < count && plan.trajectory[u + 1] == plan.trajectory[t]) ++u;
    iv.last_hour = u;
    for (int k = t; k <= u; ++k) {
      iv.soc_change_mwh += plan.schedule(k);
      iv.arbitrage_value_usd -=
          lambda(k, plan.trajectory[k]) * plan.schedule(k);
    }
    if (u + 1 < count)
      iv.travel_cost_usd = cost(plan.trajectory[u], plan.trajectory[u + 1]);
    rep.table.push_back(iv);
    t = u + 1;
  }

  for (const auto& iv : rep.table) {
    rep.gross_usd += iv.arbitrage_value_usd;
    rep.travel_usd += iv.travel_cost_usd;
  }
  rep.net_usd = rep.gross_usd - rep.travel_usd;
  return rep;
}

} // namespace mobistore
