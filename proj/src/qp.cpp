#include "mobistore/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>

namespace mobistore {

namespace {

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() > 0 ? v.lpNorm<Eigen::Infinity>() : 0.0;
}

// largest alpha in (0, 1] with v + alpha*dv >= (1 - eta)*v, v > 0
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

struct NewtonDirection {
  Eigen::VectorXd dx, dy, dz, ds;
};

// Factorized reduced KKT system for one interior point iteration.
// Eliminates (dz, ds) through the complementarity rows, leaving
//   [Q + G'WG + dI   A'] [dx]   [r1]
//   [A              -dI] [dy] = [r2]
// solved by Schur complement on the SPD leading block.
class KktSolver {
public:
  KktSolver(const QuadraticProgram& qp, const Eigen::VectorXd& s,
            const Eigen::VectorXd& z, double delta)
      : qp_(qp), s_(s), z_(z), delta_(delta) {
    const Eigen::Index n = qp.num_vars();
    w_ = z.array() / s.array(); // inequality row weights
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    if (qp.Q.size() > 0) K = qp.Q;
    if (qp.num_ineq() > 0)
      K.noalias() += qp.G.transpose() * w_.asDiagonal() * qp.G;
    K.diagonal().array() += delta;
    kllt_.compute(K);
    ok_ = kllt_.info() == Eigen::Success;
    if (ok_ && qp.num_eq() > 0) {
      Eigen::MatrixXd KinvAt = kllt_.solve(qp.A.transpose());
      Eigen::MatrixXd M = qp.A * KinvAt;
      M.diagonal().array() += delta;
      mllt_.compute(M);
      ok_ = mllt_.info() == Eigen::Success;
    }
  }

  bool ok() const { return ok_; }

  // Solves the Newton system for residuals
  //   Q dx + A'dy + G'dz = -rd
  //   A dx               = -rp
  //   G dx + ds          = -rg
  //   Z ds + S dz        = -rc
  NewtonDirection solve(const Eigen::VectorXd& rd, const Eigen::VectorXd& rp,
                        const Eigen::VectorXd& rg,
                        const Eigen::VectorXd& rc) const {
    NewtonDirection d = solve_once(rd, rp, rg, rc);
    // one step of iterative refinement against the unregularized system
    Eigen::VectorXd rd2 = rd, rp2 = rp, rg2 = rg, rc2 = rc;
    rd2.noalias() += (qp_.Q.size() > 0 ? (qp_.Q * d.dx).eval()
                                       : Eigen::VectorXd::Zero(d.dx.size()));
    if (qp_.num_eq() > 0) {
      rd2.noalias() += qp_.A.transpose() * d.dy;
      rp2.noalias() += qp_.A * d.dx;
    }
    if (qp_.num_ineq() > 0) {
      rd2.noalias() += qp_.G.transpose() * d.dz;
      rg2.noalias() += qp_.G * d.dx + d.ds;
      rc2 += z_.cwiseProduct(d.ds) + s_.cwiseProduct(d.dz);
    }
    NewtonDirection corr = solve_once(rd2, rp2, rg2, rc2);
    d.dx += corr.dx;
    d.dy += corr.dy;
    d.dz += corr.dz;
    d.ds += corr.ds;
    return d;
  }

private:
  NewtonDirection solve_once(const Eigen::VectorXd& rd,
                             const Eigen::VectorXd& rp,
                             const Eigen::VectorXd& rg,
                             const Eigen::VectorXd& rc) const {
    NewtonDirection d;
    Eigen::VectorXd r1 = -rd;
    if (qp_.num_ineq() > 0)
      r1.noalias() -=
          qp_.G.transpose() * ((z_.cwiseProduct(rg) - rc).cwiseQuotient(s_));
    if (qp_.num_eq() > 0) {
      Eigen::VectorXd Kr1 = kllt_.solve(r1);
      d.dy = mllt_.solve(qp_.A * Kr1 + rp);
      d.dx = kllt_.solve(r1 - qp_.A.transpose() * d.dy);
    } else {
      d.dy.resize(0);
      d.dx = kllt_.solve(r1);
    }
    if (qp_.num_ineq() > 0) {
      d.ds = -rg - qp_.G * d.dx;
      d.dz = -(rc + z_.cwiseProduct(d.ds)).cwiseQuotient(s_);
    } else {
      d.ds.resize(0);
      d.dz.resize(0);
    }
    return d;
  }

  const QuadraticProgram& qp_;
  Eigen::VectorXd s_, z_, w_;
  double delta_;
  Eigen::LLT<Eigen::MatrixXd> kllt_;
  Eigen::LLT<Eigen::MatrixXd> mllt_;
  bool ok_ = false;
};

double objective_value(const QuadraticProgram& qp, const Eigen::VectorXd& x) {
  double v = qp.c.dot(x);
  if (qp.Q.size() > 0) v += 0.5 * x.dot(qp.Q * x);
  return v;
}

// Pure equality-constrained problem: a single regularized KKT solve.
QpSolution solve_equality_only(const QuadraticProgram& qp,
                               const QpOptions& opts) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();
  QpSolution sol;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + p, n + p);
  if (qp.Q.size() > 0) K.topLeftCorner(n, n) = qp.Q;
  K.topLeftCorner(n, n).diagonal().array() += opts.regularization;
  if (p > 0) {
    K.topRightCorner(n, p) = qp.A.transpose();
    K.bottomLeftCorner(p, n) = qp.A;
    K.bottomRightCorner(p, p).diagonal().array() -= opts.regularization;
  }
  Eigen::VectorXd rhs(n + p);
  rhs.head(n) = -qp.c;
  if (p > 0) rhs.tail(p) = qp.b;
  Eigen::VectorXd xy = K.fullPivLu().solve(rhs);
  sol.x = xy.head(n);
  sol.y = xy.tail(p);
  sol.z.resize(0);
  sol.iterations = 1;
  sol.residuals = compute_kkt_residuals(qp, sol.x, sol.y, sol.z);
  sol.objective = objective_value(qp, sol.x);
  double scale_d = 1.0 + inf_norm(qp.c);
  double scale_p = 1.0 + inf_norm(qp.b);
  if (sol.residuals.stationarity <= 1e-8 * scale_d &&
      sol.residuals.primal <= 1e-8 * scale_p) {
    sol.status = SolveStatus::optimal;
  } else {
    sol.status = SolveStatus::numerical_failure;
  }
  return sol;
}

QpSolution run_interior_point(const QuadraticProgram& qp,
                              const QpOptions& opts) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index m = qp.num_ineq();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd s(m), z(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s[i] = std::max(1.0, qp.h[i]);
    z[i] = 1.0;
  }

  QpSolution sol;
  sol.status = SolveStatus::max_iterations;

  const double scale_d = 1.0 + inf_norm(qp.c);
  const double scale_p = 1.0 + std::max(inf_norm(qp.b), inf_norm(qp.h));
  double best_merit = std::numeric_limits<double>::infinity();
  int stall = 0;
  int lifts_left = 2;

  // Re-inflates collapsed complementarity pairs to the given product scale.
  // Once s_i z_i falls far below the unresolved KKT residuals the Newton
  // system pins the small multipliers (dz ~ -(z/s) ds), so feasibility can
  // no longer be repaired; lifting restores room to move.
  auto lift = [&](double target) {
    for (Eigen::Index i = 0; i < m; ++i) {
      z[i] = std::max(z[i], target / std::max(s[i], 1.0));
      s[i] = std::max(s[i], target / std::max(z[i], 1.0));
    }
    --lifts_left;
    best_merit = std::numeric_limits<double>::infinity();
    stall = 0;
  };

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    Eigen::VectorXd rd = qp.c;
    if (qp.Q.size() > 0) rd.noalias() += qp.Q * x;
    if (p > 0) rd.noalias() += qp.A.transpose() * y;
    if (m > 0) rd.noalias() += qp.G.transpose() * z;
    Eigen::VectorXd rp = p > 0 ? (qp.A * x - qp.b).eval() : Eigen::VectorXd();
    Eigen::VectorXd rg = (qp.G * x + s - qp.h);
    double mu = s.dot(z) / static_cast<double>(m);
    double max_comp = (s.array() * z.array()).maxCoeff();

    sol.iterations = iter;
    double rdn = inf_norm(rd), rpn = inf_norm(rp), rgn = inf_norm(rg);
    if (rdn <= opts.tol * scale_d && rpn <= opts.tol * scale_p &&
        rgn <= opts.tol * scale_p && max_comp <= 50.0 * opts.tol) {
      sol.status = SolveStatus::optimal;
      break;
    }

    double res_rel = std::max(rdn / scale_d, std::max(rpn, rgn) / scale_p);
    if (lifts_left > 0 && res_rel > opts.tol && max_comp <= 1e-3 * res_rel) {
      lift(res_rel);
      continue;
    }

    double merit = rdn / scale_d + (rpn + rgn) / scale_p + mu;
    if (merit < best_merit * 0.999) {
      best_merit = merit;
      stall = 0;
    } else if (++stall > 12) {
      sol.message = "progress stalled";
      break;
    }
    if (x.lpNorm<Eigen::Infinity>() > 1e13) {
      sol.message = "iterates diverged";
      break;
    }

    double delta = opts.regularization;
    std::unique_ptr<KktSolver> kkt;
    for (int attempt = 0; attempt < 4; ++attempt) {
      kkt = std::make_unique<KktSolver>(qp, s, z, delta);
      if (kkt->ok()) break;
      delta *= 1e4;
    }
    if (!kkt->ok()) {
      if (lifts_left > 0) {
        lift(std::max(res_rel, 50.0 * opts.tol));
        continue;
      }
      sol.status = SolveStatus::numerical_failure;
      sol.message = "KKT factorization failed";
      break;
    }

    // predictor
    Eigen::VectorXd rc = s.cwiseProduct(z);
    NewtonDirection aff = kkt->solve(rd, rp, rg, rc);
    double ap = max_step(s, aff.ds);
    double ad = max_step(z, aff.dz);
    double mu_aff = (s + ap * aff.ds).dot(z + ad * aff.dz) /
                    static_cast<double>(m);
    double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    // corrector
    Eigen::VectorXd rc_corr =
        rc + aff.ds.cwiseProduct(aff.dz) -
        Eigen::VectorXd::Constant(m, sigma * mu);
    NewtonDirection dir = kkt->solve(rd, rp, rg, rc_corr);

    double eta = std::min(0.9999, std::max(0.99, 1.0 - mu));
    double alpha_p = std::min(1.0, eta * max_step(s, dir.ds));
    double alpha_d = std::min(1.0, eta * max_step(z, dir.dz));
    x += alpha_p * dir.dx;
    s += alpha_p * dir.ds;
    if (p > 0) y += alpha_d * dir.dy;
    z += alpha_d * dir.dz;
  }

  sol.x = x;
  sol.y = y;
  sol.z = z;
  sol.objective = objective_value(qp, x);
  sol.residuals = compute_kkt_residuals(qp, x, y, z);
  return sol;
}

// Elastic feasibility problem:
//   min 1't+ + 1't- + 1'w  s.t.  Ax + t+ - t- = b, Gx - w <= h, t,w >= 0
// Optimal value > 0 certifies infeasibility; its duals give the certificate.
QpSolution solve_phase1(const QuadraticProgram& qp, const QpOptions& opts) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index m = qp.num_ineq();
  const Eigen::Index nv = n + 2 * p + m;

  QuadraticProgram ph;
  ph.c = Eigen::VectorXd::Zero(nv);
  ph.c.segment(n, 2 * p).setOnes();
  ph.c.tail(m).setOnes();
  ph.A = Eigen::MatrixXd::Zero(p, nv);
  if (p > 0) {
    ph.A.leftCols(n) = qp.A;
    ph.A.block(0, n, p, p) = Eigen::MatrixXd::Identity(p, p);
    ph.A.block(0, n + p, p, p) = -Eigen::MatrixXd::Identity(p, p);
  }
  ph.b = qp.b;
  ph.G = Eigen::MatrixXd::Zero(m + 2 * p + m, nv);
  ph.h = Eigen::VectorXd::Zero(m + 2 * p + m);
  if (m > 0) {
    ph.G.topLeftCorner(m, n) = qp.G;
    ph.G.block(0, n + 2 * p, m, m) = -Eigen::MatrixXd::Identity(m, m);
    ph.h.head(m) = qp.h;
  }
  ph.G.block(m, n, 2 * p + m, 2 * p + m) =
      -Eigen::MatrixXd::Identity(2 * p + m, 2 * p + m);

  QpOptions ph_opts = opts;
  ph_opts.classify_failures = false;
  ph_opts.check_uniqueness = false;
  return run_interior_point(ph, ph_opts);
}

// Recession problem: a feasible direction of unbounded descent exists iff
//   min c'd  s.t.  A d = 0, Q d = 0, G d <= 0, -1 <= d <= 1
// has a negative optimum.
QpSolution solve_recession(const QuadraticProgram& qp, const QpOptions& opts) {
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index p = qp.num_eq();
  const Eigen::Index m = qp.num_ineq();

  QuadraticProgram rc;
  rc.c = qp.c;
  Eigen::Index extra = qp.is_lp() ? 0 : n;
  rc.A = Eigen::MatrixXd::Zero(p + extra, n);
  if (p > 0) rc.A.topRows(p) = qp.A;
  if (extra > 0) rc.A.bottomRows(n) = qp.Q;
  rc.b = Eigen::VectorXd::Zero(p + extra);
  rc.G = Eigen::MatrixXd::Zero(m + 2 * n, n);
  if (m > 0) rc.G.topRows(m) = qp.G;
  rc.G.block(m, 0, n, n) = Eigen::MatrixXd::Identity(n, n);
  rc.G.block(m + n, 0, n, n) = -Eigen::MatrixXd::Identity(n, n);
  rc.h = Eigen::VectorXd::Zero(m + 2 * n);
  rc.h.segment(m, 2 * n).setOnes();

  QpOptions rc_opts = opts;
  rc_opts.classify_failures = false;
  rc_opts.check_uniqueness = false;
  return run_interior_point(rc, rc_opts);
}

void classify_failure(const QuadraticProgram& qp, const QpOptions& opts,
                      QpSolution& sol) {
  const double feas_scale = 1.0 + std::max(inf_norm(qp.b), inf_norm(qp.h));
  QpSolution ph = solve_phase1(qp, opts);
  if (ph.status == SolveStatus::optimal &&
      ph.objective > 1e-7 * feas_scale) {
    sol.status = SolveStatus::infeasible;
    FarkasCertificate cert;
    cert.y = ph.y;
    cert.z = ph.z.head(qp.num_ineq());
    Eigen::VectorXd combo = Eigen::VectorXd::Zero(qp.num_vars());
    if (qp.num_eq() > 0) combo += qp.A.transpose() * cert.y;
    if (qp.num_ineq() > 0) combo += qp.G.transpose() * cert.z;
    cert.residual = inf_norm(combo);
    cert.gap = -(qp.b.dot(cert.y) + qp.h.dot(cert.z));
    sol.infeasibility = cert;
    sol.message = "primal infeasible (elastic violation " +
                  std::to_string(ph.objective) + ")";
    return;
  }
  QpSolution rec = solve_recession(qp, opts);
  if (rec.status == SolveStatus::optimal && rec.objective < -1e-8) {
    sol.status = SolveStatus::unbounded;
    sol.ray = rec.x;
    sol.message = "objective unbounded below along reported ray";
    return;
  }
  if (sol.status == SolveStatus::optimal) return;
  sol.status = SolveStatus::max_iterations;
  if (sol.message.empty()) sol.message = "did not converge";
}

void check_uniqueness(const QuadraticProgram& qp, const QpOptions& opts,
                      QpSolution& sol) {
  // deterministic perturbation direction
  std::mt19937_64 rng(0x6d6f626973746f72ULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd pert(qp.num_vars());
  for (Eigen::Index i = 0; i < pert.size(); ++i) pert[i] = unif(rng);

  QpOptions sub = opts;
  sub.check_uniqueness = false;
  sub.classify_failures = false;
  // near a tie the two tilted optima sit a whole face apart but only
  // ~perturbation deeper in objective, so probes solved no tighter than the
  // tilt both stop at the face's center and mask the tie
  sub.tol = std::min(opts.tol, 1e-12);
  QuadraticProgram plus = qp, minus = qp;
  plus.c += opts.perturbation * pert;
  minus.c -= opts.perturbation * pert;
  QpSolution sp = run_interior_point(plus, sub);
  QpSolution sm = run_interior_point(minus, sub);
  const double moved = inf_norm(sp.x - sm.x);
  if (sp.status == SolveStatus::optimal && sm.status == SolveStatus::optimal) {
    sol.unique_optimum = moved <= opts.move_tol;
    return;
  }
  // tied problems are exactly where the tight solves stall, but a stalled
  // probe still certifies the tie when both iterates are feasible, match the
  // certified optimal value, and sit far apart; declaring uniqueness, by
  // contrast, needs converged probes
  auto witness = [&](const QpSolution& s) {
    double viol = 0.0;
    if (qp.num_eq() > 0) viol = inf_norm(qp.A * s.x - qp.b);
    if (qp.num_ineq() > 0)
      viol = std::max(viol, (qp.G * s.x - qp.h).maxCoeff());
    const double feas_scale = 1.0 + std::max(inf_norm(qp.b), inf_norm(qp.h));
    double val = qp.c.dot(s.x);
    if (!qp.is_lp()) val += 0.5 * s.x.dot(qp.Q * s.x);
    return viol <= 1e-7 * feas_scale &&
           val <= sol.objective + 1e-6 * (1.0 + std::abs(sol.objective));
  };
  if (moved > opts.move_tol && witness(sp) && witness(sm)) {
    sol.unique_optimum = false;
    return;
  }
  sol.message += "; uniqueness probe did not converge";
}

} // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

void QuadraticProgram::validate() const {
  const Eigen::Index n = c.size();
  if (n == 0) throw std::invalid_argument("qp: empty variable vector");
  if (Q.size() > 0) {
    if (Q.rows() != n || Q.cols() != n)
      throw std::invalid_argument("qp: Q dimension mismatch");
    double qmax = Q.cwiseAbs().maxCoeff();
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() >
        1e-10 * std::max(1.0, qmax))
      throw std::invalid_argument("qp: Q is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q,
                                                      Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    if (lo < -1e-9 * std::max(1.0, qmax))
      throw std::invalid_argument("qp: Q is not positive semidefinite");
  }
  if (A.rows() != b.size())
    throw std::invalid_argument("qp: A/b row mismatch");
  if (A.rows() > 0 && A.cols() != n)
    throw std::invalid_argument("qp: A column mismatch");
  if (G.rows() != h.size())
    throw std::invalid_argument("qp: G/h row mismatch");
  if (G.rows() > 0 && G.cols() != n)
    throw std::invalid_argument("qp: G column mismatch");
}

KktResiduals compute_kkt_residuals(const QuadraticProgram& qp,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& z) {
  KktResiduals r;
  Eigen::VectorXd rd = qp.c;
  if (qp.Q.size() > 0) rd.noalias() += qp.Q * x;
  if (qp.num_eq() > 0) rd.noalias() += qp.A.transpose() * y;
  if (qp.num_ineq() > 0) rd.noalias() += qp.G.transpose() * z;
  r.stationarity = inf_norm(rd);
  double pe = qp.num_eq() > 0 ? inf_norm(qp.A * x - qp.b) : 0.0;
  double pi = 0.0, comp = 0.0, sign = 0.0;
  if (qp.num_ineq() > 0) {
    Eigen::VectorXd slack = qp.h - qp.G * x;
    pi = std::max(0.0, (-slack).maxCoeff());
    comp = (z.array() * slack.array()).abs().maxCoeff();
    sign = std::max(0.0, (-z).maxCoeff());
  }
  r.primal = std::max(pe, pi);
  r.complementarity = comp;
  r.dual_sign = sign;
  return r;
}

QpSolution solve_qp(const QuadraticProgram& qp, const QpOptions& opts) {
  qp.validate();
  QpSolution sol;
  if (qp.num_ineq() == 0) {
    sol = solve_equality_only(qp, opts);
    if (sol.status != SolveStatus::optimal && opts.classify_failures)
      classify_failure(qp, opts, sol);
  } else {
    sol = run_interior_point(qp, opts);
    if (sol.status != SolveStatus::optimal && opts.classify_failures)
      classify_failure(qp, opts, sol);
  }
  sol.certified =
      sol.status == SolveStatus::optimal &&
      sol.residuals.stationarity <=
          kCertStationarity * (1.0 + inf_norm(qp.c)) &&
      sol.residuals.primal <= kCertPrimal &&
      sol.residuals.complementarity <= kCertComplementarity &&
      sol.residuals.dual_sign <= kCertDualSign;
  if (opts.check_uniqueness && qp.is_lp() &&
      sol.status == SolveStatus::optimal) {
    check_uniqueness(qp, opts, sol);
  }
  return sol;
}

QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                    const Eigen::VectorXd& b, const Eigen::MatrixXd& G,
                    const Eigen::VectorXd& h, const QpOptions& opts) {
  QuadraticProgram lp;
  lp.c = c;
  lp.A = A;
  lp.b = b;
  lp.G = G;
  lp.h = h;
  return solve_qp(lp, opts);
}

} // namespace mobistore
