#include "gridnewton/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "gridnewton/acopf.hpp"
#include "gridnewton/svgplot.hpp"

namespace gridnewton {

namespace {

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<long>(v.size()));
}

double now_ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

double box_violation(const AcopfProblem& prob, const Eigen::VectorXd& x) {
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    worst = std::max(worst, prob.clamp_lo()[i] - x[i]);
    worst = std::max(worst, x[i] - prob.clamp_hi()[i]);
  }
  return std::max(worst, 0.0);
}

void stats_ms(std::vector<double> v, double& mean, double& median, double& mx,
              double& var) {
  if (v.empty()) {
    mean = median = mx = var = 0.0;
    return;
  }
  mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  std::sort(v.begin(), v.end());
  median = v.size() % 2 ? v[v.size() / 2]
                        : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  mx = v.back();
  var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= v.size();
}

char* fmt_g(char* buf, std::size_t n, double v) {
  std::snprintf(buf, n, "%.17g", v);
  return buf;
}

}  // namespace

double mean_abs_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() == 0)
    throw std::invalid_argument("mean_abs_error needs equal nonzero sizes");
  return (a - b).cwiseAbs().mean();
}

void MapeAccumulator::add(double predicted, double reference) {
  if (reference == 0.0) {
    ++excluded_zero;
    return;
  }
  sum += std::abs(predicted - reference) / std::abs(reference);
  ++count;
}

double MapeAccumulator::value_pct() const {
  return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : 100.0 * sum / count;
}

EvalSummary evaluate(const Network& net, const MlpParams& model,
                     const EvalOptions& opt) {
  EvalSummary s;
  s.n_scenarios = opt.scenarios;
  MapeAccumulator mape;
  const int nb = net.n_bus();
  const int ng = net.n_gen();

  for (int i = 0; i < opt.scenarios; ++i) {
    EvalRow row;
    row.scenario = i;
    Scenario sc = perturb_loads(net, scenario_seed(opt.seed, i), opt.range);
    AcopfProblem prob(net, sc);

    SolverOptions sopt;
    sopt.tol = opt.ref_tol;
    sopt.max_iter = opt.ref_max_iter;
    sopt.record_states = false;
    sopt.exec = opt.exec;
    SolveResult ref;
    bool ref_failed = false;
    try {
      ref = solve_acopf(prob, sopt);
    } catch (const numerical_failure&) {
      ref_failed = true;
    }
    row.ref_converged = !ref_failed && ref.converged;
    row.ref_iterations = ref_failed ? 0 : ref.iterations;
    if (row.ref_converged) row.ref_cost = ref.objective;

    FixedPointOptions fopt;
    fopt.tol = opt.nn_tol;
    fopt.max_iter = opt.nn_max_iter;
    fopt.exec = opt.exec;
    FixedPointResult nn = fixed_point_solve(
        model, prob.flat_start(), to_vec(load_vector_pu(net, sc)), fopt);
    row.nn_converged = nn.converged;
    row.nn_iterations = nn.iterations;
    row.nn_cost = prob.cost(nn.x);
    row.mean_mismatch = prob.equality(nn.x, opt.exec).cwiseAbs().mean();
    row.max_box_violation = box_violation(prob, nn.x);

    if (row.ref_converged) {
      ++s.ref_converged;
      if (row.nn_converged) ++s.nn_converged;
      row.mae_v = mean_abs_error(nn.x.head(nb), ref.x.head(nb));
      row.mae_pg_mw = mean_abs_error(nn.x.segment(2 * nb, ng),
                                     ref.x.segment(2 * nb, ng)) *
                      net.base_mva;
      mape.add(row.nn_cost, row.ref_cost);
      if (row.ref_cost != 0.0) {
        row.ape_cost_pct =
            100.0 * std::abs(row.nn_cost - row.ref_cost) / std::abs(row.ref_cost);
        row.ape_valid = true;
      }
    }
    s.rows.push_back(row);
  }

  s.mape_cost_pct = mape.value_pct();
  s.mape_excluded = mape.excluded_zero;
  double sum_v = 0, sum_p = 0, sum_m = 0;
  for (const auto& r : s.rows) {
    s.max_box_violation = std::max(s.max_box_violation, r.max_box_violation);
    sum_m += r.mean_mismatch;
    if (r.ref_converged) {
      sum_v += r.mae_v;
      sum_p += r.mae_pg_mw;
    }
  }
  s.mean_mismatch = s.rows.empty() ? 0.0 : sum_m / s.rows.size();
  if (s.ref_converged > 0) {
    s.mean_mae_v = sum_v / s.ref_converged;
    s.mean_mae_pg_mw = sum_p / s.ref_converged;
    s.nn_convergence_rate =
        static_cast<double>(s.nn_converged) / s.ref_converged;
  }
  return s;
}

void write_metrics_csv(const EvalSummary& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "scenario,ref_converged,nn_converged,ref_cost,nn_cost,ape_cost_pct,"
         "mae_v_pu,mae_pg_mw,mean_mismatch_pu,max_box_violation,"
         "ref_iterations,nn_iterations\n";
  char b[40];
  for (const auto& r : s.rows) {
    out << r.scenario << "," << (r.ref_converged ? 1 : 0) << ","
        << (r.nn_converged ? 1 : 0) << ",";
    out << (r.ref_converged ? fmt_g(b, sizeof b, r.ref_cost) : "") << ",";
    out << fmt_g(b, sizeof b, r.nn_cost) << ",";
    out << (r.ape_valid ? fmt_g(b, sizeof b, r.ape_cost_pct) : "") << ",";
    out << (r.ref_converged ? fmt_g(b, sizeof b, r.mae_v) : "") << ",";
    out << (r.ref_converged ? fmt_g(b, sizeof b, r.mae_pg_mw) : "") << ",";
    out << fmt_g(b, sizeof b, r.mean_mismatch) << ",";
    out << fmt_g(b, sizeof b, r.max_box_violation) << ",";
    out << r.ref_iterations << "," << r.nn_iterations << "\n";
  }
}

void write_report(const EvalSummary& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  char b[40];
  out << "scenarios evaluated:        " << s.n_scenarios << "\n";
  out << "reference converged:        " << s.ref_converged << "\n";
  out << "learned iterator converged: " << s.nn_converged << " ("
      << fmt_g(b, sizeof b, 100.0 * s.nn_convergence_rate) << "%)\n";
  out << "cost MAPE:                  " << fmt_g(b, sizeof b, s.mape_cost_pct)
      << "% (" << s.mape_excluded << " zero-cost references excluded)\n";
  out << "voltage MAE:                " << fmt_g(b, sizeof b, s.mean_mae_v)
      << " pu\n";
  out << "dispatch MAE:               " << fmt_g(b, sizeof b, s.mean_mae_pg_mw)
      << " MW\n";
  out << "mean power-balance residual:" << fmt_g(b, sizeof b, s.mean_mismatch)
      << " pu\n";
  out << "max box violation:          "
      << fmt_g(b, sizeof b, s.max_box_violation) << "\n";
}

BenchResult benchmark(const Network& net, const MlpParams& model,
                      const BenchOptions& opt) {
  BenchResult b;
  std::vector<double> ref_ms, nn_ms;

  for (int i = -opt.warmup; i < opt.scenarios; ++i) {
    // Warmup indices reuse scenario 0 and are discarded.
    const int idx = i < 0 ? 0 : i;
    Scenario sc = perturb_loads(net, scenario_seed(opt.seed, idx), opt.range);
    AcopfProblem prob(net, sc);

    SolverOptions sopt;
    sopt.tol = opt.ref_tol;
    sopt.max_iter = opt.ref_max_iter;
    sopt.record_states = false;
    sopt.exec = opt.exec;
    auto t0 = std::chrono::steady_clock::now();
    SolveResult ref = solve_acopf(prob, sopt);
    const double rms = now_ms_since(t0);

    FixedPointOptions fopt;
    fopt.tol = opt.nn_tol;
    fopt.max_iter = opt.nn_max_iter;
    fopt.exec = opt.exec;
    Eigen::VectorXd loads = to_vec(load_vector_pu(net, sc));
    t0 = std::chrono::steady_clock::now();
    FixedPointResult nn = fixed_point_solve(model, prob.flat_start(), loads, fopt);
    const double nms = now_ms_since(t0);

    if (i < 0) continue;
    BenchRow row;
    row.scenario = idx;
    row.ref_ms = rms;
    row.ref_iterations = ref.iterations;
    row.nn_ms = nms;
    row.nn_applications = nn.applications;
    b.rows.push_back(row);
    ref_ms.push_back(rms);
    nn_ms.push_back(nms);
    b.ref_iterations_total += ref.iterations;
    b.nn_applications_total += nn.applications;
  }

  stats_ms(ref_ms, b.ref_mean_ms, b.ref_median_ms, b.ref_max_ms, b.ref_var_ms2);
  stats_ms(nn_ms, b.nn_mean_ms, b.nn_median_ms, b.nn_max_ms, b.nn_var_ms2);
  const double ref_total = std::accumulate(ref_ms.begin(), ref_ms.end(), 0.0);
  const double nn_total = std::accumulate(nn_ms.begin(), nn_ms.end(), 0.0);
  if (b.ref_iterations_total > 0)
    b.ref_ms_per_iteration = ref_total / b.ref_iterations_total;
  if (b.nn_applications_total > 0)
    b.nn_ms_per_application = nn_total / b.nn_applications_total;
  if (nn_total > 0.0) b.speedup_total = ref_total / nn_total;
  if (b.nn_ms_per_application > 0.0)
    b.speedup_per_iteration = b.ref_ms_per_iteration / b.nn_ms_per_application;
  return b;
}

void write_timing_csv(const BenchResult& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "scenario,ref_ms,ref_iterations,nn_ms,nn_applications\n";
  char buf[40];
  for (const auto& r : b.rows) {
    out << r.scenario << "," << fmt_g(buf, sizeof buf, r.ref_ms) << ","
        << r.ref_iterations << "," << fmt_g(buf, sizeof buf, r.nn_ms) << ","
        << r.nn_applications << "\n";
  }
}

CurveData iteration_curves(const Network& net, const MlpParams& model,
                           const Scenario& sc, double ref_tol, double nn_tol,
                           int nn_max_iter) {
  CurveData c;
  AcopfProblem prob(net, sc);
  SolverOptions sopt;
  sopt.tol = ref_tol;
  SolveResult ref = solve_acopf(prob, sopt);
  c.ref_step_norms = ref.trace.step_norms;
  c.ref_kkt_norms = ref.trace.kkt_norms;

  FixedPointOptions fopt;
  fopt.tol = nn_tol;
  fopt.max_iter = nn_max_iter;
  FixedPointResult nn = fixed_point_solve(
      model, prob.flat_start(), to_vec(load_vector_pu(net, sc)), fopt);
  c.nn_step_norms = nn.step_norms;
  return c;
}

void write_curves(const CurveData& c, const std::string& dir) {
  if (c.ref_step_norms.empty() && c.nn_step_norms.empty())
    throw std::invalid_argument("no iterations to plot");
  std::filesystem::create_directories(dir);
  const auto csv = std::filesystem::path(dir) / "curves.csv";
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "k,ref_step_norm,ref_kkt,nn_step_norm\n";
  const std::size_t rows =
      std::max(c.ref_step_norms.size(), c.nn_step_norms.size());
  char b[40];
  for (std::size_t k = 0; k < rows; ++k) {
    out << (k + 1) << ",";
    if (k < c.ref_step_norms.size())
      out << fmt_g(b, sizeof b, c.ref_step_norms[k]);
    out << ",";
    if (k < c.ref_kkt_norms.size()) out << fmt_g(b, sizeof b, c.ref_kkt_norms[k]);
    out << ",";
    if (k < c.nn_step_norms.size())
      out << fmt_g(b, sizeof b, c.nn_step_norms[k]);
    out << "\n";
  }
  write_line_chart_svg(
      (std::filesystem::path(dir) / "curves.svg").string(),
      "Iteration progress (log scale)",
      {{"reference step norm", c.ref_step_norms},
       {"reference KKT residual", c.ref_kkt_norms},
       {"learned step norm", c.nn_step_norms}},
      true);
}

TrackResult tracking_sim(const Network& net, const MlpParams& model,
                         const TrackOptions& opt) {
  TrackResult tr;

  struct Backend {
    double busy_until = 0.0;
    bool has_pending = false;
    int pending_tick = -1;
    Eigen::VectorXd pending_x;
    int published_tick = -1;
    Eigen::VectorXd published_x;
    double last_ms = 0.0;

    void publish_if_done(double now) {
      if (has_pending && busy_until <= now) {
        published_tick = pending_tick;
        published_x = pending_x;
        has_pending = false;
      }
    }
  };

  Backend ref_be, nn_be;
  AcopfProblem prob(net);
  const Eigen::VectorXd x_flat = prob.flat_start();

  int ref_stale = 0, nn_stale = 0;
  for (int t = 0; t < opt.ticks; ++t) {
    const double wstart = t * opt.period_s;
    const double wend = (t + 1) * opt.period_s;
    Scenario sc = perturb_loads(net, scenario_seed(opt.seed, t), opt.range);
    prob.set_scenario(sc);

    TickRecord rec;
    rec.tick = t;
    ref_be.publish_if_done(wstart);
    nn_be.publish_if_done(wstart);

    // Reference backend: start a solve if idle, warm-started from the last
    // published setpoint.
    if (ref_be.busy_until <= wstart) {
      SolverOptions sopt;
      sopt.tol = opt.ref_tol;
      sopt.max_iter = opt.ref_max_iter;
      sopt.record_states = false;
      sopt.exec = opt.exec;
      const Eigen::VectorXd x0 =
          ref_be.published_tick >= 0 ? ref_be.published_x : x_flat;
      auto t0 = std::chrono::steady_clock::now();
      SolveResult res;
      bool ok = true;
      try {
        res = solve_acopf(prob, x0, init_duals(prob, x0, sopt.mu0), sopt);
      } catch (const numerical_failure&) {
        ok = false;
      }
      ref_be.last_ms = now_ms_since(t0);
      if (ok) {
        ref_be.has_pending = true;
        ref_be.pending_tick = t;
        ref_be.pending_x = res.x;
      }
      ref_be.busy_until =
          wstart + ref_be.last_ms / 1000.0 + opt.ref_extra_delay_s;
    }
    rec.ref_solve_ms = ref_be.last_ms;

    // Learned backend, same protocol.
    if (nn_be.busy_until <= wstart) {
      FixedPointOptions fopt;
      fopt.tol = opt.nn_tol;
      fopt.max_iter = opt.nn_max_iter;
      fopt.exec = opt.exec;
      const Eigen::VectorXd x0 =
          nn_be.published_tick >= 0 ? nn_be.published_x : x_flat;
      Eigen::VectorXd loads = to_vec(load_vector_pu(net, sc));
      auto t0 = std::chrono::steady_clock::now();
      FixedPointResult res = fixed_point_solve(model, x0, loads, fopt);
      nn_be.last_ms = now_ms_since(t0);
      nn_be.has_pending = true;
      nn_be.pending_tick = t;
      nn_be.pending_x = res.x;
      nn_be.busy_until =
          wstart + nn_be.last_ms / 1000.0 + opt.nn_extra_delay_s;
    }
    rec.nn_solve_ms = nn_be.last_ms;

    // A solve finishing inside this window publishes before it closes.
    ref_be.publish_if_done(wend);
    nn_be.publish_if_done(wend);

    rec.ref_published_tick = ref_be.published_tick;
    rec.nn_published_tick = nn_be.published_tick;
    rec.ref_stale = ref_be.published_tick < t;
    rec.nn_stale = nn_be.published_tick < t;
    if (ref_be.published_tick >= 0) rec.ref_cost = prob.cost(ref_be.published_x);
    if (nn_be.published_tick >= 0) rec.nn_cost = prob.cost(nn_be.published_x);

    // Offline optimum for this tick's loads, outside the timeline.
    {
      SolverOptions sopt;
      sopt.tol = opt.ref_tol;
      sopt.max_iter = opt.ref_max_iter;
      sopt.record_states = false;
      sopt.exec = opt.exec;
      try {
        SolveResult truth = solve_acopf(prob, sopt);
        rec.true_cost = truth.objective;
      } catch (const numerical_failure&) {
        rec.true_cost = std::numeric_limits<double>::quiet_NaN();
      }
    }

    if (rec.ref_stale) ++ref_stale;
    if (rec.nn_stale) ++nn_stale;
    tr.ticks.push_back(rec);
  }

  tr.ref_stale_fraction =
      opt.ticks > 0 ? static_cast<double>(ref_stale) / opt.ticks : 0.0;
  tr.nn_stale_fraction =
      opt.ticks > 0 ? static_cast<double>(nn_stale) / opt.ticks : 0.0;
  return tr;
}

void write_tracking_csv(const TrackResult& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "tick,ref_published_tick,ref_stale,ref_cost,nn_published_tick,"
         "nn_stale,nn_cost,true_cost,ref_solve_ms,nn_solve_ms\n";
  char b[40];
  for (const auto& r : t.ticks) {
    out << r.tick << "," << r.ref_published_tick << "," << (r.ref_stale ? 1 : 0)
        << "," << fmt_g(b, sizeof b, r.ref_cost) << "," << r.nn_published_tick
        << "," << (r.nn_stale ? 1 : 0) << "," << fmt_g(b, sizeof b, r.nn_cost)
        << "," << fmt_g(b, sizeof b, r.true_cost) << ","
        << fmt_g(b, sizeof b, r.ref_solve_ms) << ","
        << fmt_g(b, sizeof b, r.nn_solve_ms) << "\n";
  }
}

}  // namespace gridnewton
