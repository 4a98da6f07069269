#include "mobistore/network.hpp"

#include <Eigen/Cholesky>

#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mobistore {

int PowerNetwork::bus_index_by_id(int id) const {
  for (size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> validate(const PowerNetwork& net) {
  std::vector<std::string> out;
  const int n = net.num_buses();
  if (n == 0) {
    out.push_back("network has no buses");
    return out;
  }

  std::set<int> ids;
  for (const auto& bus : net.buses) {
    if (!ids.insert(bus.id).second)
      out.push_back("duplicate bus id " + std::to_string(bus.id));
    if (bus.has_generator && bus.cost_a <= 0.0)
      out.push_back("bus " + std::to_string(bus.id) +
                    ": generator requires cost_a > 0");
    if (bus.gen_max && *bus.gen_max < 0.0)
      out.push_back("bus " + std::to_string(bus.id) + ": negative gen_max");
  }

  for (size_t l = 0; l < net.lines.size(); ++l) {
    const Line& ln = net.lines[l];
    std::string tag = "line " + std::to_string(l);
    if (ln.from < 0 || ln.from >= n || ln.to < 0 || ln.to >= n)
      out.push_back(tag + ": endpoint out of range");
    else if (ln.from == ln.to)
      out.push_back(tag + ": self loop");
    if (ln.susceptance <= 0.0)
      out.push_back(tag + ": susceptance must be positive");
    if (ln.limit <= 0.0)
      out.push_back(tag + ": limit must be positive");
  }

  if (net.loads.size() == 0)
    out.push_back("load matrix is empty");
  else if (net.loads.cols() != n)
    out.push_back("load matrix has " + std::to_string(net.loads.cols()) +
                  " columns for " + std::to_string(n) + " buses");

  if (net.slack < 0 || net.slack >= n)
    out.push_back("slack bus index out of range");

  // connectivity sweep; report the stranded component by bus ids
  if (n > 0) {
    std::vector<int> comp(n, -1);
    int ncomp = 0;
    for (int start = 0; start < n; ++start) {
      if (comp[start] >= 0) continue;
      std::queue<int> q;
      q.push(start);
      comp[start] = ncomp;
      while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (const Line& ln : net.lines) {
          if (ln.from < 0 || ln.from >= n || ln.to < 0 || ln.to >= n) continue;
          int v = -1;
          if (ln.from == u) v = ln.to;
          if (ln.to == u) v = ln.from;
          if (v >= 0 && comp[v] < 0) {
            comp[v] = ncomp;
            q.push(v);
          }
        }
      }
      ++ncomp;
    }
    if (ncomp > 1) {
      std::ostringstream os;
      os << "network is disconnected (" << ncomp << " components):";
      for (int c = 0; c < ncomp; ++c) {
        os << " {";
        bool first = true;
        for (int i = 0; i < n; ++i) {
          if (comp[i] != c) continue;
          if (!first) os << ",";
          os << net.buses[i].id;
          first = false;
        }
        os << "}";
      }
      out.push_back(os.str());
    }
  }
  return out;
}

void require_valid(const PowerNetwork& net) {
  auto problems = validate(net);
  if (problems.empty()) return;
  std::string msg = "invalid network:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw std::invalid_argument(msg);
}

int ShiftFactorMatrix::row_directed(const PowerNetwork& net, int from_idx,
                                    int to_idx) const {
  for (int l = 0; l < num_lines; ++l) {
    if (net.lines[l].from == from_idx && net.lines[l].to == to_idx)
      return row_forward(l);
    if (net.lines[l].from == to_idx && net.lines[l].to == from_idx)
      return row_reverse(l);
  }
  return -1;
}

ShiftFactorMatrix build_shift_factors(const PowerNetwork& net) {
  require_valid(net);
  const int n = net.num_buses();
  const int m = net.num_lines();

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (const Line& ln : net.lines) {
    B(ln.from, ln.from) += ln.susceptance;
    B(ln.to, ln.to) += ln.susceptance;
    B(ln.from, ln.to) -= ln.susceptance;
    B(ln.to, ln.from) -= ln.susceptance;
  }

  // reduced susceptance matrix with the slack row/column removed
  std::vector<int> keep;
  keep.reserve(n - 1);
  for (int i = 0; i < n; ++i)
    if (i != net.slack) keep.push_back(i);
  Eigen::MatrixXd Bred(n - 1, n - 1);
  for (int r = 0; r < n - 1; ++r)
    for (int c = 0; c < n - 1; ++c) Bred(r, c) = B(keep[r], keep[c]);

  Eigen::MatrixXd Binv_padded = Eigen::MatrixXd::Zero(n, n);
  if (n > 1) {
    Eigen::LLT<Eigen::MatrixXd> llt(Bred);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("shift factors: reduced matrix not SPD");
    Eigen::MatrixXd Binv = llt.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));
    for (int r = 0; r < n - 1; ++r)
      for (int c = 0; c < n - 1; ++c) Binv_padded(keep[r], keep[c]) = Binv(r, c);
  }

  Eigen::MatrixXd Bf = Eigen::MatrixXd::Zero(m, n);
  for (int l = 0; l < m; ++l) {
    Bf(l, net.lines[l].from) = net.lines[l].susceptance;
    Bf(l, net.lines[l].to) = -net.lines[l].susceptance;
  }
  Eigen::MatrixXd Hfwd = Bf * Binv_padded;

  ShiftFactorMatrix sf;
  sf.num_lines = m;
  sf.H = Eigen::MatrixXd(2 * m, n);
  sf.limits = Eigen::VectorXd(2 * m);
  for (int l = 0; l < m; ++l) {
    sf.H.row(2 * l) = Hfwd.row(l);
    sf.H.row(2 * l + 1) = -Hfwd.row(l);
    sf.limits[2 * l] = net.lines[l].limit;
    sf.limits[2 * l + 1] = net.lines[l].limit;
  }
  return sf;
}

} // namespace mobistore
