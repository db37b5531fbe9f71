#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gridnewton/acopf.hpp"
#include "gridnewton/dataset.hpp"
#include "gridnewton/eval.hpp"
#include "gridnewton/grid.hpp"
#include "gridnewton/mlp.hpp"
#include "gridnewton/solver.hpp"

namespace gn = gridnewton;
namespace fs = std::filesystem;

namespace {

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<long>(v.size()));
}

void print_state(const gn::Network& net, const Eigen::VectorXd& x) {
  const auto& idx = gn::StateIndex{net.n_bus(), net.n_gen()};
  std::printf("%-6s %-10s %-10s\n", "bus", "v_pu", "theta_rad");
  for (int b = 0; b < net.n_bus(); ++b)
    std::printf("%-6d %-10.6f %-10.6f\n", net.buses[b].ext_id, x[idx.iv(b)],
                x[idx.ith(b)]);
  std::printf("%-6s %-10s %-10s\n", "gen", "Pg_MW", "Qg_MVAr");
  for (int g = 0; g < net.n_gen(); ++g)
    std::printf("%-6d %-10.4f %-10.4f\n",
                net.buses[net.generators[g].bus].ext_id,
                x[idx.ipg(g)] * net.base_mva, x[idx.iqg(g)] * net.base_mva);
}

void write_solution_csv(const gn::Network& net, const Eigen::VectorXd& x,
                        const std::string& path) {
  const auto idx = gn::StateIndex{net.n_bus(), net.n_gen()};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "kind,id,value1,value2\n";
  char buf[96];
  for (int b = 0; b < net.n_bus(); ++b) {
    std::snprintf(buf, sizeof buf, "bus,%d,%.17g,%.17g\n", net.buses[b].ext_id,
                  x[idx.iv(b)], x[idx.ith(b)]);
    out << buf;
  }
  for (int g = 0; g < net.n_gen(); ++g) {
    std::snprintf(buf, sizeof buf, "gen,%d,%.17g,%.17g\n",
                  net.buses[net.generators[g].bus].ext_id,
                  x[idx.ipg(g)] * net.base_mva, x[idx.iqg(g)] * net.base_mva);
    out << buf;
  }
}

gn::Scenario scenario_from_flags(const gn::Network& net,
                                 const std::string& scenario_file,
                                 std::uint64_t scenario_seed_flag,
                                 double range) {
  if (!scenario_file.empty()) return gn::read_scenario_csv(net, scenario_file);
  if (scenario_seed_flag != 0)
    return gn::perturb_loads(net, scenario_seed_flag, range);
  return gn::base_scenario(net);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gridnewton: reference interior-point AC-OPF solver plus a learned "
      "Newton-step iterator"};
  app.require_subcommand(1);

  int threads = 0;
  bool use_omp = false;
  app.add_option("--threads", threads, "OpenMP thread count for kernels");
  app.add_flag("--omp", use_omp,
               "run kernels on their OpenMP path (results are identical)");

  auto exec_mode = [&]() {
    return use_omp ? gn::kernels::Exec::OpenMP : gn::kernels::Exec::Serial;
  };

  // ---- info ----
  auto* c_info = app.add_subcommand("info", "describe a case file");
  std::string info_case;
  c_info->add_option("--case", info_case, "case file")->required();

  // ---- scenarios ----
  auto* c_scen =
      app.add_subcommand("scenarios", "write perturbed load scenarios");
  std::string scen_case, scen_out;
  int scen_count = 10;
  std::uint64_t scen_seed = 1;
  double scen_range = 0.4;
  c_scen->add_option("--case", scen_case)->required();
  c_scen->add_option("--scenarios", scen_count);
  c_scen->add_option("--seed", scen_seed);
  c_scen->add_option("--range", scen_range);
  c_scen->add_option("--out", scen_out, "output directory")->required();

  // ---- generate ----
  auto* c_gen = app.add_subcommand(
      "generate", "solve perturbed scenarios and harvest iterate pairs");
  std::string gen_case, gen_out;
  gn::GenerateOptions gopt;
  c_gen->add_option("--case", gen_case)->required();
  c_gen->add_option("--scenarios", gopt.scenarios);
  c_gen->add_option("--seed", gopt.seed);
  c_gen->add_option("--range", gopt.range);
  c_gen->add_option("--tol", gopt.tol);
  c_gen->add_option("--max-iter", gopt.max_iter);
  c_gen->add_option("--out", gen_out, "output directory")->required();

  // ---- export ----
  auto* c_exp = app.add_subcommand("export", "dump a pair store as CSV");
  std::string exp_data, exp_out;
  int exp_limit = -1;
  c_exp->add_option("--data", exp_data, "dataset directory")->required();
  c_exp->add_option("--out", exp_out, "CSV path")->required();
  c_exp->add_option("--limit", exp_limit, "max rows (-1: all)");

  // ---- train ----
  auto* c_train = app.add_subcommand("train", "fit the learned iterator");
  std::string train_data, train_case, train_out = "model.gnw";
  gn::TrainOptions topt;
  int train_hidden = 0;
  double project_margin = 0.0;
  c_train->add_option("--data", train_data, "dataset directory")->required();
  c_train->add_option("--case", train_case)->required();
  c_train->add_option("--epochs", topt.epochs);
  c_train->add_option("--seed", topt.seed);
  c_train->add_option("--batch", topt.batch);
  c_train->add_option("--lr", topt.lr);
  c_train->add_option("--hidden", train_hidden,
                      "hidden width (0: ceil(sqrt(n_in*n_out)))");
  c_train->add_option("--project-contraction", project_margin,
                      "clip weights so the contraction bound is <= MARGIN");
  c_train->add_option("--out", train_out, "model file");

  // ---- solve (learned iterator) ----
  auto* c_solve =
      app.add_subcommand("solve", "run the learned iterator to a fixed point");
  std::string solve_model, solve_case, solve_scenario, solve_out;
  std::uint64_t solve_seed = 0;
  double solve_range = 0.4, solve_tol = 1e-4;
  int solve_max_iter = 5000;
  bool solve_quiet = false;
  c_solve->add_option("--model", solve_model)->required();
  c_solve->add_option("--case", solve_case)->required();
  c_solve->add_option("--scenario", solve_scenario, "scenario CSV");
  c_solve->add_option("--scenario-seed", solve_seed,
                      "perturb base loads with this seed instead");
  c_solve->add_option("--range", solve_range);
  c_solve->add_option("--tol", solve_tol);
  c_solve->add_option("--max-iter", solve_max_iter);
  c_solve->add_option("--out", solve_out, "solution CSV");
  c_solve->add_flag("--quiet", solve_quiet);

  // ---- solve-ref ----
  auto* c_ref = app.add_subcommand("solve-ref", "run the reference solver");
  std::string ref_case, ref_scenario, ref_out, ref_trace;
  std::uint64_t ref_seed = 0;
  double ref_range = 0.4, ref_tol = 1e-9;
  int ref_max_iter = 200;
  bool ref_quiet = false;
  c_ref->add_option("--case", ref_case)->required();
  c_ref->add_option("--scenario", ref_scenario, "scenario CSV");
  c_ref->add_option("--scenario-seed", ref_seed);
  c_ref->add_option("--range", ref_range);
  c_ref->add_option("--tol", ref_tol);
  c_ref->add_option("--max-iter", ref_max_iter);
  c_ref->add_option("--out", ref_out, "solution CSV");
  c_ref->add_option("--trace", ref_trace, "iterate trace JSONL");
  c_ref->add_flag("--quiet", ref_quiet);

  // ---- eval ----
  auto* c_eval = app.add_subcommand(
      "eval", "compare the learned iterator against the reference");
  std::string eval_model, eval_case, eval_out;
  gn::EvalOptions eopt;
  bool eval_assert = false;
  double assert_mape = 5.0, assert_mae_v = 0.02, assert_conv = 0.90;
  c_eval->add_option("--model", eval_model)->required();
  c_eval->add_option("--case", eval_case)->required();
  c_eval->add_option("--scenarios", eopt.scenarios);
  c_eval->add_option("--seed", eopt.seed);
  c_eval->add_option("--range", eopt.range);
  c_eval->add_option("--ref-tol", eopt.ref_tol);
  c_eval->add_option("--tol", eopt.nn_tol);
  c_eval->add_option("--max-iter", eopt.nn_max_iter);
  c_eval->add_option("--out", eval_out, "output directory")->required();
  c_eval->add_flag("--assert", eval_assert,
                   "exit nonzero unless accuracy thresholds hold");
  c_eval->add_option("--assert-mape", assert_mape);
  c_eval->add_option("--assert-mae-v", assert_mae_v);
  c_eval->add_option("--assert-convergence", assert_conv);

  // ---- bench ----
  auto* c_bench = app.add_subcommand("bench", "wall-clock comparison");
  std::string bench_model, bench_case, bench_out;
  gn::BenchOptions bopt;
  c_bench->add_option("--model", bench_model)->required();
  c_bench->add_option("--case", bench_case)->required();
  c_bench->add_option("--scenarios", bopt.scenarios);
  c_bench->add_option("--seed", bopt.seed);
  c_bench->add_option("--range", bopt.range);
  c_bench->add_option("--ref-tol", bopt.ref_tol);
  c_bench->add_option("--tol", bopt.nn_tol);
  c_bench->add_option("--warmup", bopt.warmup);
  c_bench->add_option("--out", bench_out, "output directory")->required();

  // ---- curves ----
  auto* c_curves =
      app.add_subcommand("curves", "iteration-progress curves for one scenario");
  std::string curves_model, curves_case, curves_scenario, curves_out;
  std::uint64_t curves_seed = 0;
  double curves_range = 0.4, curves_ref_tol = 1e-9, curves_nn_tol = 1e-4;
  int curves_max_iter = 5000;
  c_curves->add_option("--model", curves_model)->required();
  c_curves->add_option("--case", curves_case)->required();
  c_curves->add_option("--scenario", curves_scenario);
  c_curves->add_option("--scenario-seed", curves_seed);
  c_curves->add_option("--range", curves_range);
  c_curves->add_option("--ref-tol", curves_ref_tol);
  c_curves->add_option("--tol", curves_nn_tol);
  c_curves->add_option("--max-iter", curves_max_iter);
  c_curves->add_option("--out", curves_out, "output directory")->required();

  // ---- track ----
  auto* c_track = app.add_subcommand(
      "track", "real-time tracking comparison on a simulated clock");
  std::string track_model, track_case, track_out;
  gn::TrackOptions tropt;
  c_track->add_option("--model", track_model)->required();
  c_track->add_option("--case", track_case)->required();
  c_track->add_option("--ticks", tropt.ticks);
  c_track->add_option("--period", tropt.period_s, "tick period in seconds");
  c_track->add_option("--ref-delay", tropt.ref_extra_delay_s,
                      "injected reference-solver delay per solve, seconds");
  c_track->add_option("--nn-delay", tropt.nn_extra_delay_s);
  c_track->add_option("--seed", tropt.seed);
  c_track->add_option("--range", tropt.range);
  c_track->add_option("--ref-tol", tropt.ref_tol);
  c_track->add_option("--tol", tropt.nn_tol);
  c_track->add_option("--out", track_out, "output directory")->required();

  // ---- synth ----
  auto* c_synth =
      app.add_subcommand("synth", "write a synthetic meshed test case");
  int synth_buses = 300;
  std::string synth_out;
  c_synth->add_option("--buses", synth_buses);
  c_synth->add_option("--out", synth_out, "case file path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0) gn::kernels::set_threads(threads);

    if (*c_info) {
      gn::Network net = gn::load_case(info_case);
      std::printf("buses:        %d\n", net.n_bus());
      std::printf("branches:     %d (%d in service)\n",
                  static_cast<int>(net.branches.size()), net.n_branch_on());
      std::printf("generators:   %d\n", net.n_gen());
      std::printf("load buses:   %d\n", net.n_load());
      double pd = 0;
      for (const auto& b : net.buses) pd += b.pd;
      std::printf("total load:   %.2f MW\n", pd);
      std::printf("total Pmax:   %.2f MW\n", net.total_pmax());
      std::printf("state dim:    %d\n", net.state_dim());
      std::printf("base MVA:     %.1f\n", net.base_mva);
      std::printf("slack bus:    %d\n", net.buses[net.slack_bus()].ext_id);
      std::printf("case hash:    %s\n", net.case_hash.c_str());
    } else if (*c_scen) {
      gn::Network net = gn::load_case(scen_case);
      gn::write_scenario_batch(net, scen_count, scen_seed, scen_range,
                               scen_out);
      std::printf("wrote %d scenarios to %s\n", scen_count, scen_out.c_str());
    } else if (*c_gen) {
      gn::Network net = gn::load_case(gen_case);
      gopt.exec = exec_mode();
      gn::Dataset ds;
      gn::GenerateSummary sum = gn::generate_dataset(net, gopt, ds);
      gn::write_dataset(ds, gopt, sum, gen_out);
      gn::write_scenario_batch(net, gopt.scenarios, gopt.seed, gopt.range,
                               (fs::path(gen_out) / "scenarios").string());
      std::printf("scenarios: %d requested, %d converged, %d failed\n",
                  sum.requested, sum.converged, sum.failed);
      std::printf("pairs:     %d (state dim %d, load features %d)\n",
                  sum.n_pairs, ds.n, ds.n_loads);
      std::printf("wrote %s\n", (fs::path(gen_out) / "pairs.bin").c_str());
      if (sum.converged == 0) return 1;
    } else if (*c_exp) {
      gn::Dataset ds = gn::read_dataset(exp_data);
      gn::write_pairs_csv(ds, exp_out, exp_limit);
      std::printf("wrote %s\n", exp_out.c_str());
    } else if (*c_train) {
      gn::Network net = gn::load_case(train_case);
      gn::Dataset ds = gn::read_dataset(train_data);
      if (!ds.case_hash.empty() && ds.case_hash != net.case_hash)
        std::fprintf(stderr,
                     "warning: dataset was generated from a different case\n");
      gn::AcopfProblem prob(net);
      gn::NormStats norm = gn::compute_norm_stats(ds);
      topt.exec = exec_mode();
      gn::MlpParams model = gn::init_network(
          ds.n + ds.n_loads, ds.n, train_hidden, topt.seed, norm,
          prob.clamp_lo(), prob.clamp_hi(), net.case_hash);
      std::printf("network: %d-%d-%d, %d training pairs\n", model.n_in,
                  model.n_hidden, model.n_out, ds.n_pairs());
      gn::TrainReport rep = gn::train(model, ds, topt);
      std::printf("epochs run: %d, final loss %.6e%s\n", rep.epochs_run,
                  rep.final_loss,
                  rep.restored_checkpoint ? " (rolled back to last finite)"
                                          : "");
      if (project_margin > 0.0) {
        gn::ContractionInfo ci = gn::project_contraction(model, project_margin);
        std::printf("contraction bound after projection: c = %.6g "
                    "(c* = %.3e, N_n = %d)\n",
                    ci.c, ci.c_star, ci.n_n);
      } else {
        gn::ContractionInfo ci = gn::contraction_modulus(model);
        std::printf("contraction bound: c = %.6g (not enforced)\n", ci.c);
      }
      gn::save_model(model, train_out);
      std::printf("wrote %s\n", train_out.c_str());
    } else if (*c_solve) {
      gn::Network net = gn::load_case(solve_case);
      gn::MlpParams model = gn::load_model(solve_model);
      if (!model.case_hash.empty() && model.case_hash != net.case_hash)
        std::fprintf(stderr,
                     "warning: model was trained on a different case\n");
      gn::Scenario sc =
          scenario_from_flags(net, solve_scenario, solve_seed, solve_range);
      gn::AcopfProblem prob(net, sc);
      gn::FixedPointOptions fopt;
      fopt.tol = solve_tol;
      fopt.max_iter = solve_max_iter;
      fopt.exec = exec_mode();
      gn::FixedPointResult res = gn::fixed_point_solve(
          model, prob.flat_start(), to_vec(gn::load_vector_pu(net, sc)), fopt);
      std::printf("%s in %d iterations (%d applications)\n",
                  res.converged ? "converged" : "did not converge",
                  res.iterations, res.applications);
      std::printf("dispatch cost: %.4f $/h\n", prob.cost(res.x));
      std::printf("mean power-balance residual: %.3e pu\n",
                  prob.equality(res.x).cwiseAbs().mean());
      if (!solve_quiet) print_state(net, res.x);
      if (!solve_out.empty()) write_solution_csv(net, res.x, solve_out);
      if (!res.converged) return 1;
    } else if (*c_ref) {
      gn::Network net = gn::load_case(ref_case);
      gn::Scenario sc =
          scenario_from_flags(net, ref_scenario, ref_seed, ref_range);
      gn::AcopfProblem prob(net, sc);
      gn::SolverOptions sopt;
      sopt.tol = ref_tol;
      sopt.max_iter = ref_max_iter;
      sopt.exec = exec_mode();
      gn::SolveResult res = gn::solve_acopf(prob, sopt);
      std::printf("%s in %d iterations\n",
                  res.converged ? "converged" : "did not converge",
                  res.iterations);
      std::printf("objective: %.4f $/h\n", res.objective);
      std::printf("KKT residual (inf-norm): %.3e\n", res.kkt_norm);
      if (!ref_quiet) print_state(net, res.x);
      if (!ref_out.empty()) write_solution_csv(net, res.x, ref_out);
      if (!ref_trace.empty()) gn::write_trace_jsonl(res.trace, ref_trace);
      if (!res.converged) return 1;
    } else if (*c_eval) {
      gn::Network net = gn::load_case(eval_case);
      gn::MlpParams model = gn::load_model(eval_model);
      eopt.exec = exec_mode();
      gn::EvalSummary s = gn::evaluate(net, model, eopt);
      fs::create_directories(eval_out);
      gn::write_metrics_csv(s, (fs::path(eval_out) / "metrics.csv").string());
      gn::write_report(s, (fs::path(eval_out) / "report.txt").string());
      std::printf(
          "ref converged %d/%d, learned converged %d (%.1f%%)\n",
          s.ref_converged, s.n_scenarios, s.nn_converged,
          100.0 * s.nn_convergence_rate);
      std::printf("cost MAPE %.4f%%, MAE_v %.6f pu, MAE_Pg %.4f MW\n",
                  s.mape_cost_pct, s.mean_mae_v, s.mean_mae_pg_mw);
      std::printf("mean mismatch %.3e pu, max box violation %.3e\n",
                  s.mean_mismatch, s.max_box_violation);
      std::printf("wrote %s\n",
                  (fs::path(eval_out) / "metrics.csv").c_str());
      if (eval_assert) {
        const bool ok = s.mape_cost_pct <= assert_mape &&
                        s.mean_mae_v <= assert_mae_v &&
                        s.nn_convergence_rate >= assert_conv &&
                        s.max_box_violation == 0.0;
        if (!ok) {
          std::fprintf(stderr, "accuracy assertion failed\n");
          return 2;
        }
      }
    } else if (*c_bench) {
      gn::Network net = gn::load_case(bench_case);
      gn::MlpParams model = gn::load_model(bench_model);
      bopt.exec = exec_mode();
      gn::BenchResult b = gn::benchmark(net, model, bopt);
      fs::create_directories(bench_out);
      gn::write_timing_csv(b, (fs::path(bench_out) / "timing.csv").string());
      std::printf("reference: mean %.3f ms, median %.3f ms, max %.3f ms "
                  "(%ld iterations, %.4f ms/iteration)\n",
                  b.ref_mean_ms, b.ref_median_ms, b.ref_max_ms,
                  b.ref_iterations_total, b.ref_ms_per_iteration);
      std::printf("learned:   mean %.3f ms, median %.3f ms, max %.3f ms "
                  "(%ld applications, %.4f ms/application)\n",
                  b.nn_mean_ms, b.nn_median_ms, b.nn_max_ms,
                  b.nn_applications_total, b.nn_ms_per_application);
      std::printf("speedup: %.2fx total, %.2fx per iteration\n",
                  b.speedup_total, b.speedup_per_iteration);
      std::printf("wrote %s\n", (fs::path(bench_out) / "timing.csv").c_str());
    } else if (*c_curves) {
      gn::Network net = gn::load_case(curves_case);
      gn::MlpParams model = gn::load_model(curves_model);
      gn::Scenario sc =
          scenario_from_flags(net, curves_scenario, curves_seed, curves_range);
      gn::CurveData c = gn::iteration_curves(net, model, sc, curves_ref_tol,
                                             curves_nn_tol, curves_max_iter);
      gn::write_curves(c, curves_out);
      std::printf("wrote %s and curves.svg\n",
                  (fs::path(curves_out) / "curves.csv").c_str());
    } else if (*c_track) {
      gn::Network net = gn::load_case(track_case);
      gn::MlpParams model = gn::load_model(track_model);
      tropt.exec = exec_mode();
      gn::TrackResult t = gn::tracking_sim(net, model, tropt);
      fs::create_directories(track_out);
      gn::write_tracking_csv(t,
                             (fs::path(track_out) / "tracking.csv").string());
      std::printf("reference stale: %.1f%% of ticks\n",
                  100.0 * t.ref_stale_fraction);
      std::printf("learned stale:   %.1f%% of ticks\n",
                  100.0 * t.nn_stale_fraction);
      std::printf("wrote %s\n",
                  (fs::path(track_out) / "tracking.csv").c_str());
    } else if (*c_synth) {
      std::string text = gn::make_synthetic_case(synth_buses);
      std::ofstream out(synth_out, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + synth_out);
      out << text;
      std::printf("wrote %s\n", synth_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
