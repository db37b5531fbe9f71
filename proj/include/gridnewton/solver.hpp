#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridnewton/acopf.hpp"

namespace gridnewton {

// Linear algebra broke down (singular or hopelessly ill-conditioned KKT
// system even after regularization).
class numerical_failure : public std::runtime_error {
 public:
  numerical_failure(const std::string& what, double condition)
      : std::runtime_error(what + " (condition estimate " +
                           std::to_string(condition) + ")"),
        condition_estimate(condition) {}
  double condition_estimate;
};

struct SolverOptions {
  double tol = 1e-9;        // convergence tolerance
  int max_iter = 200;       // total Newton steps across all barrier stages
  double mu0 = 0.1;         // initial barrier weight
  double mu_shrink = 0.2;   // barrier reduction factor per stage
  double alpha_max = 1.0;   // largest admissible step length
  double ftb = 0.9995;      // fraction-to-boundary factor for s and mu
  int max_backtracks = 10;  // halvings tried when a full step fails to help
  kernels::Exec exec = kernels::Exec::Serial;
  bool record_states = true;  // keep the primal iterate sequence
};

// Per-solve iterate history. states holds x^0 .. x^K; the per-step vectors
// have one entry per Newton step (length K).
struct IterationTrace {
  std::vector<Eigen::VectorXd> states;
  std::vector<double> step_norms;  // ||x^{k+1} - x^k||_2 over the full state
  std::vector<double> kkt_norms;   // unperturbed KKT inf-norm at x^1..x^K
  std::vector<double> mu_values;   // barrier weight used for each step
  std::vector<double> alphas;      // accepted step length
  std::vector<double> wall_ms;     // wall time spent on each step
  double initial_kkt = 0.0;        // unperturbed KKT inf-norm at x^0

  int n_steps() const { return static_cast<int>(step_norms.size()); }
};

struct SolveResult {
  Eigen::VectorXd x;
  DualState duals;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  double kkt_norm = 0.0;         // unperturbed KKT inf-norm at the final point
  double final_step_norm = 0.0;
  IterationTrace trace;
};

struct StepResult {
  double alpha = 0.0;
  double step_norm = 0.0;      // applied primal step, Euclidean over full x
  double residual_norm = 0.0;  // perturbed residual 2-norm after the step
  double regularization = 0.0; // primal regularization the step settled on
};

// Slacks and multipliers matching a primal point: s = max(-h(x), 0.1),
// mu = mu_bar / s, lambda = 0.
DualState init_duals(const AcopfProblem& prob, const Eigen::VectorXd& x,
                     double mu_bar);

// One damped Newton step on the perturbed KKT residual at fixed mu_bar,
// updating (x, d) in place. Direction comes from the condensed symmetric
// system solved by LDLT with inertia-correcting regularization; step length
// by fraction-to-boundary plus residual backtracking.
StepResult newton_step(const AcopfProblem& prob, Eigen::VectorXd& x,
                       DualState& d, double mu_bar, const SolverOptions& opt);

// Full interior-point solve from the flat start (or a caller-supplied warm
// start), marching the barrier weight down geometrically. A warm start
// reuses the primal point and the equality multipliers; slacks and
// inequality multipliers are re-centered on the first barrier stage, since
// near-boundary pairs from a finished solve wreck the early stages.
SolveResult solve_acopf(const AcopfProblem& prob, const SolverOptions& opt = {});
SolveResult solve_acopf(const AcopfProblem& prob, const Eigen::VectorXd& x0,
                        const DualState& d0, const SolverOptions& opt);

// Shared stopping predicate: consecutive states closer than tol in Euclidean
// norm (inclusive).
bool check_convergence(const Eigen::VectorXd& prev, const Eigen::VectorXd& next,
                       double tol);

// One JSON object per line: the starting state, then one record per step.
void write_trace_jsonl(const IterationTrace& trace, const std::string& path);

}  // namespace gridnewton
