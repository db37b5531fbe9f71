#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gridnewton/mlp.hpp"
#include "gridnewton/solver.hpp"

namespace gridnewton {

double mean_abs_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Mean absolute percentage error that skips (and counts) reference values of
// exactly zero.
struct MapeAccumulator {
  double sum = 0.0;
  int count = 0;
  int excluded_zero = 0;

  void add(double predicted, double reference);
  double value_pct() const;  // NaN when nothing was accumulated
};

struct EvalOptions {
  int scenarios = 100;
  std::uint64_t seed = 1000;
  double range = 0.4;
  double ref_tol = 1e-9;
  double nn_tol = 1e-4;
  int nn_max_iter = 5000;
  int ref_max_iter = 200;
  kernels::Exec exec = kernels::Exec::Serial;
};

struct EvalRow {
  int scenario = 0;
  bool ref_converged = false;
  bool nn_converged = false;
  double ref_cost = 0.0, nn_cost = 0.0;
  double ape_cost_pct = 0.0;      // valid when ref converged and cost nonzero
  bool ape_valid = false;
  double mae_v = 0.0;             // pu, vs the reference solution
  double mae_pg_mw = 0.0;         // MW, vs the reference solution
  double mean_mismatch = 0.0;     // mean |power balance residual| at NN point
  double max_box_violation = 0.0; // beyond the clamp boxes; must be exactly 0
  int ref_iterations = 0;
  int nn_iterations = 0;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  int n_scenarios = 0;
  int ref_converged = 0;
  int nn_converged = 0;      // among scenarios whose reference solve converged
  double mape_cost_pct = 0.0;
  int mape_excluded = 0;
  double mean_mae_v = 0.0;
  double mean_mae_pg_mw = 0.0;
  double mean_mismatch = 0.0;
  double max_box_violation = 0.0;
  double nn_convergence_rate = 0.0;  // nn_converged / ref_converged
};

// Held-out comparison of the learned iterator against the reference solver
// on freshly perturbed scenarios. Accuracy statistics average over scenarios
// whose reference solve converged.
EvalSummary evaluate(const Network& net, const MlpParams& model,
                     const EvalOptions& opt);

// Deterministic per-scenario metric table; no wall-clock columns, so repeated
// runs produce identical bytes.
void write_metrics_csv(const EvalSummary& s, const std::string& path);
void write_report(const EvalSummary& s, const std::string& path);

struct BenchOptions {
  int scenarios = 10;
  std::uint64_t seed = 2000;
  double range = 0.4;
  double ref_tol = 1e-6;
  int ref_max_iter = 200;
  double nn_tol = 1e-4;
  int nn_max_iter = 500;
  int warmup = 1;  // unmeasured leading solves
  kernels::Exec exec = kernels::Exec::Serial;
};

struct BenchRow {
  int scenario = 0;
  double ref_ms = 0.0;
  int ref_iterations = 0;
  double nn_ms = 0.0;
  int nn_applications = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  double ref_mean_ms = 0.0, ref_median_ms = 0.0, ref_max_ms = 0.0,
         ref_var_ms2 = 0.0;
  double nn_mean_ms = 0.0, nn_median_ms = 0.0, nn_max_ms = 0.0,
         nn_var_ms2 = 0.0;
  long ref_iterations_total = 0;
  long nn_applications_total = 0;
  double ref_ms_per_iteration = 0.0;
  double nn_ms_per_application = 0.0;
  double speedup_total = 0.0;
  double speedup_per_iteration = 0.0;
};

// Wall-clock comparison: full reference solves vs fixed-point runs of the
// learned iterator on the same scenarios.
BenchResult benchmark(const Network& net, const MlpParams& model,
                      const BenchOptions& opt);
void write_timing_csv(const BenchResult& b, const std::string& path);

struct CurveData {
  std::vector<double> ref_step_norms;
  std::vector<double> ref_kkt_norms;
  std::vector<double> nn_step_norms;
};

// Iteration-progress curves of both solvers on one scenario.
CurveData iteration_curves(const Network& net, const MlpParams& model,
                           const Scenario& sc, double ref_tol, double nn_tol,
                           int nn_max_iter);
// Writes curves.csv and a log-scale curves.svg into dir; throws
// std::invalid_argument when there is nothing to plot.
void write_curves(const CurveData& c, const std::string& dir);

struct TrackOptions {
  int ticks = 30;
  double period_s = 1.0;
  double ref_extra_delay_s = 0.0;  // injected on top of measured solve time
  double nn_extra_delay_s = 0.0;
  std::uint64_t seed = 3000;
  double range = 0.15;
  double ref_tol = 1e-9;
  int ref_max_iter = 200;
  double nn_tol = 1e-4;
  int nn_max_iter = 5000;
  kernels::Exec exec = kernels::Exec::Serial;
};

struct TickRecord {
  int tick = 0;
  int ref_published_tick = -1;  // -1: nothing published yet
  int nn_published_tick = -1;
  bool ref_stale = true;  // published setpoint older than the current tick
  bool nn_stale = true;
  double ref_cost = 0.0;  // cost of the published setpoint
  double nn_cost = 0.0;
  double true_cost = 0.0;  // offline reference optimum for this tick's loads
  double ref_solve_ms = 0.0;  // measured compute, excluding injected delay
  double nn_solve_ms = 0.0;
};

struct TrackResult {
  std::vector<TickRecord> ticks;
  double ref_stale_fraction = 0.0;
  double nn_stale_fraction = 0.0;
};

// Real-time tracking on a simulated clock: loads move every tick, each
// backend solves whenever it is idle (optionally slowed by an injected
// delay), and the published setpoint is sampled at the end of each tick
// window. No actual sleeping happens; only measured solve times and the
// injected delays advance the simulated timeline.
TrackResult tracking_sim(const Network& net, const MlpParams& model,
                         const TrackOptions& opt);
void write_tracking_csv(const TrackResult& t, const std::string& path);

}  // namespace gridnewton
