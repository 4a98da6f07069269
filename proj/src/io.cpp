#include "mobistore/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mobistore::io {

using ordered_json = nlohmann::ordered_json;

namespace {

void reject_unknown_keys(const ordered_json& obj,
                         const std::vector<std::string>& allowed,
                         const std::string& what) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + what);
  }
}

const ordered_json& require(const ordered_json& obj, const std::string& key,
                            const std::string& what) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw std::invalid_argument("missing key '" + key + "' in " + what);
  return *it;
}

void require_schema(const ordered_json& doc, const std::string& what) {
  const auto& v = require(doc, "schema_version", what);
  if (!v.is_number_integer() || v.get<int>() != 1)
    throw std::invalid_argument(what + ": unsupported schema_version");
}

ordered_json parse_file(const std::string& path) {
  std::string text = read_text(path);
  try {
    return ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

Eigen::MatrixXd matrix_from_json(const ordered_json& arr,
                                 const std::string& what,
                                 bool null_is_inf = false) {
  if (!arr.is_array())
    throw std::invalid_argument(what + " must be an array of rows");
  const int rows = static_cast<int>(arr.size());
  int cols = -1;
  for (const auto& row : arr) {
    if (!row.is_array())
      throw std::invalid_argument(what + " rows must be arrays");
    if (cols < 0)
      cols = static_cast<int>(row.size());
    else if (cols != static_cast<int>(row.size()))
      throw std::invalid_argument(what + " rows have inconsistent lengths");
  }
  Eigen::MatrixXd m(rows, std::max(cols, 0));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto& cell = arr[r][c];
      if (cell.is_null()) {
        if (!null_is_inf)
          throw std::invalid_argument(what + " has a null entry");
        m(r, c) = std::numeric_limits<double>::infinity();
      } else if (cell.is_number()) {
        m(r, c) = cell.get<double>();
      } else {
        throw std::invalid_argument(what + " has a non-numeric entry");
      }
    }
  return m;
}

ordered_json matrix_to_json(const Eigen::MatrixXd& m,
                            bool inf_as_null = false) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (inf_as_null && !std::isfinite(m(r, c)))
        row.push_back(nullptr);
      else
        row.push_back(m(r, c));
    }
    rows.push_back(row);
  }
  return rows;
}

} // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write " + tmp);
    out << content;
    if (!out) throw std::invalid_argument("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

PowerNetwork load_network(const std::string& path) {
  ordered_json doc = parse_file(path);
  require_schema(doc, path);
  reject_unknown_keys(doc, {"schema_version", "buses", "lines", "loads",
                            "slack"},
                      path);
  PowerNetwork net;
  const auto& buses = require(doc, "buses", path);
  if (!buses.is_array())
    throw std::invalid_argument(path + ": buses must be an array");
  for (const auto& j : buses) {
    reject_unknown_keys(j, {"id", "cost_a", "cost_b", "gen_max"},
                        path + " bus");
    Bus bus;
    bus.id = require(j, "id", path + " bus").get<int>();
    if (j.contains("cost_a") || j.contains("cost_b")) {
      bus.has_generator = true;
      bus.cost_a = require(j, "cost_a", path + " bus").get<double>();
      bus.cost_b = require(j, "cost_b", path + " bus").get<double>();
    }
    if (j.contains("gen_max")) bus.gen_max = j["gen_max"].get<double>();
    net.buses.push_back(bus);
  }
  const auto& lines = require(doc, "lines", path);
  if (!lines.is_array())
    throw std::invalid_argument(path + ": lines must be an array");
  for (const auto& j : lines) {
    reject_unknown_keys(j, {"from", "to", "susceptance", "limit"},
                        path + " line");
    Line line;
    line.from = require(j, "from", path + " line").get<int>();
    line.to = require(j, "to", path + " line").get<int>();
    line.susceptance = require(j, "susceptance", path + " line").get<double>();
    line.limit = require(j, "limit", path + " line").get<double>();
    net.lines.push_back(line);
  }
  net.loads = matrix_from_json(require(doc, "loads", path), path + " loads");
  net.slack = require(doc, "slack", path).get<int>();
  return net;
}

void save_network(const PowerNetwork& net, const std::string& path) {
  ordered_json doc;
  doc["schema_version"] = 1;
  doc["buses"] = ordered_json::array();
  for (const auto& bus : net.buses) {
    ordered_json j;
    j["id"] = bus.id;
    if (bus.has_generator) {
      j["cost_a"] = bus.cost_a;
      j["cost_b"] = bus.cost_b;
    }
    if (bus.gen_max) j["gen_max"] = *bus.gen_max;
    doc["buses"].push_back(j);
  }
  doc["lines"] = ordered_json::array();
  for (const auto& line : net.lines) {
    ordered_json j;
    j["from"] = line.from;
    j["to"] = line.to;
    j["susceptance"] = line.susceptance;
    j["limit"] = line.limit;
    doc["lines"].push_back(j);
  }
  doc["loads"] = matrix_to_json(net.loads);
  doc["slack"] = net.slack;
  write_text_atomic(path, doc.dump(2) + "\n");
}

Fleet load_fleet(const std::string& path) {
  ordered_json doc = parse_file(path);
  require_schema(doc, path);
  reject_unknown_keys(doc, {"schema_version", "units", "transport"}, path);
  Fleet fleet;
  const auto& units = require(doc, "units", path);
  if (!units.is_array())
    throw std::invalid_argument(path + ": units must be an array");
  for (const auto& j : units) {
    reject_unknown_keys(j,
                        {"capacity_mwh", "power_slope_mw_per_mwh",
                         "power_intercept_mw", "admissible_buses",
                         "initial_bus", "initial_soc_mwh"},
                        path + " unit");
    MobileStorageUnit u;
    u.capacity = require(j, "capacity_mwh", path + " unit").get<double>();
    u.power_slope =
        require(j, "power_slope_mw_per_mwh", path + " unit").get<double>();
    u.power_intercept =
        require(j, "power_intercept_mw", path + " unit").get<double>();
    for (const auto& b :
         require(j, "admissible_buses", path + " unit"))
      u.admissible.push_back(b.get<int>());
    u.initial_bus = require(j, "initial_bus", path + " unit").get<int>();
    u.initial_soc =
        require(j, "initial_soc_mwh", path + " unit").get<double>();
    fleet.units.push_back(std::move(u));
  }
  const auto& tr = require(doc, "transport", path);
  reject_unknown_keys(tr, {"travel_time_h", "period_h", "kappa_usd_per_h"},
                      path + " transport");
  fleet.transport.travel_time = matrix_from_json(
      require(tr, "travel_time_h", path), path + " travel_time_h",
      /*null_is_inf=*/true);
  fleet.transport.period = require(tr, "period_h", path).get<double>();
  fleet.transport.kappa = require(tr, "kappa_usd_per_h", path).get<double>();
  return fleet;
}

void save_fleet(const Fleet& fleet, const std::string& path) {
  ordered_json doc;
  doc["schema_version"] = 1;
  doc["units"] = ordered_json::array();
  for (const auto& u : fleet.units) {
    ordered_json j;
    j["capacity_mwh"] = u.capacity;
    j["power_slope_mw_per_mwh"] = u.power_slope;
    j["power_intercept_mw"] = u.power_intercept;
    j["admissible_buses"] = u.admissible;
    j["initial_bus"] = u.initial_bus;
    j["initial_soc_mwh"] = u.initial_soc;
    doc["units"].push_back(j);
  }
  ordered_json tr;
  tr["travel_time_h"] = matrix_to_json(fleet.transport.travel_time,
                                       /*inf_as_null=*/true);
  tr["period_h"] = fleet.transport.period;
  tr["kappa_usd_per_h"] = fleet.transport.kappa;
  doc["transport"] = tr;
  write_text_atomic(path, doc.dump(2) + "\n");
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  ordered_json doc = parse_file(path);
  require_schema(doc, path);
  reject_unknown_keys(doc, {"schema_version", "trajectories"}, path);
  std::vector<Trajectory> out;
  const auto& arr = require(doc, "trajectories", path);
  if (!arr.is_array())
    throw std::invalid_argument(path + ": trajectories must be an array");
  for (const auto& row : arr) {
    Trajectory traj;
    for (const auto& b : row) traj.push_back(b.get<int>());
    out.push_back(std::move(traj));
  }
  return out;
}

void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::string& path) {
  ordered_json doc;
  doc["schema_version"] = 1;
  doc["trajectories"] = trajectories;
  write_text_atomic(path, doc.dump(2) + "\n");
}

Eigen::MatrixXd load_price_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("period,", 0) != 0)
    throw std::invalid_argument(path + ": expected header 'period,bus0,...'");
  int cols = 0;
  for (char ch : line)
    if (ch == ',') ++cols;
  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    int c = -1;
    while (std::getline(ss, field, ',')) {
      try {
        size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        if (c >= 0) values.push_back(v);
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ": bad value '" + field + "'");
      }
      ++c;
    }
    if (c != cols)
      throw std::invalid_argument(path + ": row with wrong column count");
    ++rows;
  }
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = values[r * cols + c];
  return m;
}

void save_price_csv(const Eigen::MatrixXd& prices, const std::string& path) {
  std::ostringstream out;
  out << "period";
  for (Eigen::Index c = 0; c < prices.cols(); ++c) out << ",bus" << c;
  out << "\n";
  for (Eigen::Index r = 0; r < prices.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < prices.cols(); ++c)
      out << "," << format_double(prices(r, c));
    out << "\n";
  }
  write_text_atomic(path, out.str());
}

} // namespace mobistore::io
