#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace mobistore {

// Convex quadratic program
//   min 0.5 x'Qx + c'x   s.t.  A x = b,  G x <= h
// Q must be symmetric positive semidefinite; Q of size 0 means a pure LP.
struct QuadraticProgram {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;

  Eigen::Index num_vars() const { return c.size(); }
  Eigen::Index num_eq() const { return b.size(); }
  Eigen::Index num_ineq() const { return h.size(); }
  bool is_lp() const { return Q.size() == 0 || Q.isZero(0.0); }

  // throws std::invalid_argument on dimension mismatch, asymmetric or
  // indefinite Q (symmetry tol 1e-10, eigenvalue floor -1e-9)
  void validate() const;
};

enum class SolveStatus {
  optimal,
  infeasible,
  unbounded,
  max_iterations,
  numerical_failure,
};

const char* to_string(SolveStatus s);

struct KktResiduals {
  double stationarity = 0.0;    // ||Qx + c + A'y + G'z||_inf
  double primal = 0.0;          // max(||Ax - b||_inf, max_i (Gx - h)_i+)
  double complementarity = 0.0; // max_i |z_i (h - Gx)_i|
  double dual_sign = 0.0;       // max_i (-z_i)+, must stay <= 1e-8
};

// Farkas-type certificate of primal infeasibility:
//   A'y + G'z = 0, z >= 0, b'y + h'z < 0
struct FarkasCertificate {
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  double gap = 0.0;      // -(b'y + h'z), positive
  double residual = 0.0; // ||A'y + G'z||_inf
};

struct QpSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd x;
  Eigen::VectorXd y; // equality duals
  Eigen::VectorXd z; // inequality duals, z >= 0
  double objective = 0.0;
  int iterations = 0;
  KktResiduals residuals;
  // true iff status == optimal and the residuals meet the certification
  // contract below
  bool certified = false;
  // set only when QpOptions::check_uniqueness was requested on an LP
  std::optional<bool> unique_optimum;
  std::optional<FarkasCertificate> infeasibility;
  // recession direction for unbounded problems
  std::optional<Eigen::VectorXd> ray;
  std::string message;
};

struct QpOptions {
  double tol = 1e-9;             // interior point convergence target
  int max_iterations = 100;
  double regularization = 1e-10; // static diagonal KKT shift
  bool check_uniqueness = false; // LP only; ignored for true QPs
  double perturbation = 1e-7;    // objective perturbation magnitude
  double move_tol = 1e-5;        // inf-norm motion that flags non-uniqueness
  // classify non-converged runs via phase-1 / recession subproblems
  bool classify_failures = true;
};

// Certification contract: a solution is certified when
//   stationarity    <= kCertStationarity * (1 + ||c||_inf)
//   primal          <= kCertPrimal
//   complementarity <= kCertComplementarity
//   min_i z_i       >= -kCertDualSign
inline constexpr double kCertStationarity = 1e-7;
inline constexpr double kCertPrimal = 1e-7;
inline constexpr double kCertComplementarity = 1e-7;
inline constexpr double kCertDualSign = 1e-8;

// Mehrotra predictor-corrector primal-dual interior point method.
QpSolution solve_qp(const QuadraticProgram& qp, const QpOptions& opts = {});

// LP convenience wrapper (Q = 0); uniqueness detection honored here.
QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                    const Eigen::VectorXd& b, const Eigen::MatrixXd& G,
                    const Eigen::VectorXd& h, const QpOptions& opts = {});

KktResiduals compute_kkt_residuals(const QuadraticProgram& qp,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& z);

} // namespace mobistore
