#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "gridnewton/grid.hpp"
#include "gridnewton/kernels.hpp"

namespace gridnewton {

// Layout of the flat state vector x = [v | theta | Pg | Qg], all per-unit,
// angles in radians.
struct StateIndex {
  int n_bus = 0;
  int n_gen = 0;

  int iv(int b) const { return b; }
  int ith(int b) const { return n_bus + b; }
  int ipg(int g) const { return 2 * n_bus + g; }
  int iqg(int g) const { return 2 * n_bus + n_gen + g; }
  int n() const { return 2 * n_bus + 2 * n_gen; }
};

// Multipliers and slacks for the perturbed KKT system.
struct DualState {
  Eigen::VectorXd lambda;  // equality multipliers, length 2*n_bus
  Eigen::VectorXd mu;      // inequality multipliers, length n_ineq, >= 0
  Eigen::VectorXd s;       // slacks, length n_ineq, > 0
};

// AC optimal power flow in polar form for one load scenario.
//
// Equalities  g(x) = 0 : active and reactive power balance at every bus
//                        (injection - generation + load), length 2*n_bus.
// Inequalities h(x) <= 0, ordered as
//   [v_min - v | v - v_max | Pg_min - Pg | Pg - Pg_max | Qg_min - Qg | Qg - Qg_max]
// so n_ineq = 2*n_bus + 4*n_gen.
//
// The slack bus angle is pinned to zero: reduced unknowns z drop that one
// entry (n_z = n - 1) and every full-space quantity can be mapped down with
// reduce()/expand().
class AcopfProblem {
 public:
  explicit AcopfProblem(const Network& net);
  AcopfProblem(const Network& net, const Scenario& sc);

  void set_scenario(const Scenario& sc);

  const Network& network() const { return net_; }
  const StateIndex& index() const { return idx_; }
  int n() const { return idx_.n(); }
  int n_z() const { return idx_.n() - 1; }
  int m_eq() const { return 2 * idx_.n_bus; }
  int n_ineq() const { return 2 * idx_.n_bus + 4 * idx_.n_gen; }
  int slack_theta_index() const { return slack_theta_; }

  // Flat start clipped into the variable boxes: v = 1, theta = 0, Pg = Qg = 1.
  Eigen::VectorXd flat_start() const;

  // Generation cost in $/h (quadratic polynomial per generator).
  double cost(const Eigen::VectorXd& x) const;
  Eigen::VectorXd cost_gradient(const Eigen::VectorXd& x) const;
  const Eigen::VectorXd& cost_hessian_diag() const { return cost_hess_; }

  // Net complex power injected at each bus by the network, per-unit.
  void injections(const Eigen::VectorXd& x, Eigen::VectorXd& p,
                  Eigen::VectorXd& q,
                  kernels::Exec mode = kernels::Exec::Serial) const;

  Eigen::VectorXd equality(const Eigen::VectorXd& x,
                           kernels::Exec mode = kernels::Exec::Serial) const;
  Eigen::SparseMatrix<double> equality_jacobian(const Eigen::VectorXd& x) const;

  Eigen::VectorXd inequality(const Eigen::VectorXd& x) const;
  const Eigen::SparseMatrix<double>& inequality_jacobian() const {
    return jac_ineq_;
  }

  // Hessian of f(x) + lambda' g(x) with respect to x (full space, symmetric).
  Eigen::SparseMatrix<double> lagrangian_hessian(
      const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const;

  // Drop / reinsert the slack bus angle entry.
  Eigen::VectorXd reduce(const Eigen::VectorXd& full) const;
  Eigen::VectorXd expand(const Eigen::VectorXd& red) const;
  const Eigen::SparseMatrix<double>& reduction() const { return sel_; }

  // Residual of the perturbed KKT system at (x, duals), stacked as
  // [stationarity (n_z) | equality (m) | inequality + s (P) | s.*mu - mu_bar (P)].
  Eigen::VectorXd kkt_residual(const Eigen::VectorXd& x, const DualState& d,
                               double mu_bar,
                               kernels::Exec mode = kernels::Exec::Serial) const;

  // Jacobian of kkt_residual with respect to [z | lambda | mu | s];
  // unsymmetric, size (n_z + m + 2P) squared.
  Eigen::SparseMatrix<double> kkt_jacobian(const Eigen::VectorXd& x,
                                           const DualState& d) const;

  // Infinity norm of the unperturbed (mu_bar = 0) KKT residual.
  double kkt_inf_norm(const Eigen::VectorXd& x, const DualState& d) const;

  // Variable boxes used to clamp iterates: voltage and generator limits are
  // the physical ones, free angles get +-1e30 and the slack angle is [0, 0].
  const Eigen::VectorXd& clamp_lo() const { return clamp_lo_; }
  const Eigen::VectorXd& clamp_hi() const { return clamp_hi_; }

  const std::vector<double>& load_p_pu() const { return pd_bus_; }
  const std::vector<double>& load_q_pu() const { return qd_bus_; }

 private:
  void build_structure();

  Network net_;
  StateIndex idx_;
  int slack_theta_ = -1;

  // Bus admittance matrix in CSR form, split into real and imaginary parts.
  std::vector<int> y_row_ptr_, y_col_idx_;
  std::vector<double> y_g_, y_b_;
  std::vector<double> g_diag_, b_diag_;

  std::vector<std::vector<int>> gens_at_bus_;
  std::vector<double> pd_bus_, qd_bus_;  // per-unit loads, full bus vector

  Eigen::VectorXd cost_hess_;  // constant diagonal, nonzero only on Pg
  Eigen::VectorXd box_lo_, box_hi_;      // bounds entering h(x)
  Eigen::VectorXd clamp_lo_, clamp_hi_;  // bounds used for clamping states
  Eigen::SparseMatrix<double> jac_ineq_;
  Eigen::SparseMatrix<double> sel_;  // n x n_z selection dropping slack angle
};

}  // namespace gridnewton
