#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "gridnewton/solver.hpp"
#include "support/testutil.hpp"

using namespace gridnewton;
using testutil::data_path;

TEST_CASE("two-bus optimum matches an external optimizer") {
  // Optimum computed with an unrelated SQP implementation:
  // objective 241.222985..., v = [1.1, 1.082960], Pg = 40.1527 MW,
  // Qg = 14.1445 MVAr.
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  SolverOptions opt;
  SolveResult res = solve_acopf(prob, opt);
  REQUIRE(res.converged);
  CHECK(res.objective == doctest::Approx(241.222985315630).epsilon(1e-6));
  CHECK(res.kkt_norm <= 1e-6);
  const auto& idx = prob.index();
  CHECK(res.x[idx.iv(0)] == doctest::Approx(1.1).epsilon(1e-5));
  CHECK(res.x[idx.iv(1)] == doctest::Approx(1.08296032).epsilon(1e-4));
  CHECK(res.x[idx.ith(1)] == doctest::Approx(-0.03242295).epsilon(1e-3));
  CHECK(res.x[idx.ipg(0)] * net.base_mva ==
        doctest::Approx(40.15272738).epsilon(1e-4));
  CHECK(res.x[idx.iqg(0)] * net.base_mva ==
        doctest::Approx(14.14447073).epsilon(1e-3));
}

TEST_CASE("30-bus optimum matches an external optimizer") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  SolveResult res = solve_acopf(prob, SolverOptions{});
  REQUIRE(res.converged);
  CHECK(res.objective == doctest::Approx(573.99608620).epsilon(1e-5));
  CHECK(res.kkt_norm <= 1e-6);
  // solution respects every box
  CHECK((res.x.array() >= prob.clamp_lo().array() - 1e-8).all());
  CHECK((res.x.array() <= prob.clamp_hi().array() + 1e-8).all());
}

TEST_CASE("trace bookkeeping is consistent") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  SolveResult res = solve_acopf(prob, SolverOptions{});
  const IterationTrace& tr = res.trace;
  REQUIRE(res.converged);
  CHECK(res.iterations == tr.n_steps());
  CHECK(static_cast<int>(tr.states.size()) == tr.n_steps() + 1);
  CHECK(tr.kkt_norms.size() == tr.step_norms.size());
  CHECK(tr.mu_values.size() == tr.step_norms.size());
  CHECK(tr.alphas.size() == tr.step_norms.size());
  CHECK(tr.states.front() == prob.flat_start());
  CHECK(tr.states.back() == res.x);
  CHECK(tr.kkt_norms.back() == res.kkt_norm);
  CHECK(res.final_step_norm == tr.step_norms.back());
  for (std::size_t k = 0; k + 1 < tr.mu_values.size(); ++k)
    CHECK(tr.mu_values[k + 1] <= tr.mu_values[k]);
  for (double a : tr.alphas) {
    CHECK(a > 0.0);
    CHECK(a <= 1.0);
  }
  for (std::size_t k = 0; k < tr.step_norms.size(); ++k) {
    CHECK((tr.states[k + 1] - tr.states[k]).norm() ==
          doctest::Approx(tr.step_norms[k]).epsilon(1e-12));
  }
}

TEST_CASE("loose-tolerance iterates are a bitwise prefix of tight ones") {
  // The barrier schedule does not depend on the tolerance, so stopping
  // earlier must not change any state that was already computed.
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  SolverOptions loose, tight;
  loose.tol = 1e-4;
  tight.tol = 1e-9;
  SolveResult a = solve_acopf(prob, loose);
  SolveResult b = solve_acopf(prob, tight);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(a.iterations < b.iterations);
  REQUIRE(a.trace.states.size() <= b.trace.states.size());
  for (std::size_t k = 0; k < a.trace.states.size(); ++k)
    CHECK(a.trace.states[k] == b.trace.states[k]);
  for (std::size_t k = 0; k < a.trace.step_norms.size(); ++k)
    CHECK(a.trace.step_norms[k] == b.trace.step_norms[k]);
}

TEST_CASE("initial duals follow the slack rule") {
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  Eigen::VectorXd x = prob.flat_start();
  DualState d = init_duals(prob, x, 0.1);
  Eigen::VectorXd h = prob.inequality(x);
  REQUIRE(d.s.size() == h.size());
  for (int i = 0; i < h.size(); ++i) {
    CHECK(d.s[i] == std::max(-h[i], 0.1));
    CHECK(d.mu[i] == 0.1 / d.s[i]);
  }
  CHECK(d.lambda.isZero(0.0));
}

TEST_CASE("iteration budget is honored") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  SolverOptions opt;
  opt.max_iter = 3;
  SolveResult res = solve_acopf(prob, opt);
  CHECK(!res.converged);
  CHECK(res.iterations <= 3);
}

TEST_CASE("warm start from the solution converges quickly") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  SolveResult cold = solve_acopf(prob, SolverOptions{});
  REQUIRE(cold.converged);
  SolveResult warm = solve_acopf(prob, cold.x, cold.duals, SolverOptions{});
  CHECK(warm.converged);
  CHECK(warm.iterations < cold.iterations);
  CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-9));
}

TEST_CASE("recording states does not change the arithmetic") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  SolverOptions on, off;
  off.record_states = false;
  SolveResult a = solve_acopf(prob, on);
  SolveResult b = solve_acopf(prob, off);
  CHECK(b.trace.states.empty());
  CHECK(a.x == b.x);
  CHECK(a.iterations == b.iterations);
  CHECK(a.trace.step_norms == b.trace.step_norms);
}

TEST_CASE("condensed direction solves the full unsymmetric system") {
  // One damped step from the flat start, recovered as
  // (x_after - x_before) / alpha, must match the direction obtained by
  // factoring the complete residual Jacobian with sparse LU. The block
  // elimination keeps a constant -1e-10 on the equality diagonal plus
  // whatever primal bump the inertia check settled on, so the same terms are
  // mirrored into the full matrix before comparing.
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  const double mu_bar = 0.1;
  Eigen::VectorXd x = prob.flat_start();
  DualState d = init_duals(prob, x, mu_bar);
  Eigen::VectorXd x0 = x;
  DualState d0 = d;

  SolverOptions opt;
  StepResult st = newton_step(prob, x, d, mu_bar, opt);
  REQUIRE(st.alpha > 0.0);

  const int nz = prob.n_z(), m = prob.m_eq(), P = prob.n_ineq();
  Eigen::VectorXd r = prob.kkt_residual(x0, d0, mu_bar);
  Eigen::SparseMatrix<double> J = prob.kkt_jacobian(x0, d0);
  for (int i = 0; i < nz; ++i) J.coeffRef(i, i) += st.regularization;
  for (int i = 0; i < m; ++i) J.coeffRef(nz + i, nz + i) -= 1e-10;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(J);
  REQUIRE(lu.info() == Eigen::Success);
  Eigen::VectorXd delta = lu.solve(-r);

  double dscale = std::max(1.0, delta.cwiseAbs().maxCoeff());
  Eigen::VectorXd dx_full = (x - x0) / st.alpha;
  Eigen::VectorXd dx_want = prob.expand(delta.head(nz));
  CHECK((dx_full - dx_want).cwiseAbs().maxCoeff() / dscale < 1e-5);
  Eigen::VectorXd dl = (d.lambda - d0.lambda) / st.alpha;
  CHECK((dl - delta.segment(nz, m)).cwiseAbs().maxCoeff() / dscale < 1e-5);
  Eigen::VectorXd dmu = (d.mu - d0.mu) / st.alpha;
  CHECK((dmu - delta.segment(nz + m, P)).cwiseAbs().maxCoeff() / dscale <
        1e-5);
  Eigen::VectorXd ds = (d.s - d0.s) / st.alpha;
  CHECK((ds - delta.tail(P)).cwiseAbs().maxCoeff() / dscale < 1e-5);
}

TEST_CASE("non-finite state raises a numerical failure") {
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  Eigen::VectorXd x = prob.flat_start();
  x[0] = std::numeric_limits<double>::quiet_NaN();
  DualState d = init_duals(prob, prob.flat_start(), 0.1);
  SolverOptions opt;
  CHECK_THROWS_AS(newton_step(prob, x, d, 0.1, opt), numerical_failure);
}

TEST_CASE("convergence predicate is inclusive Euclidean") {
  Eigen::VectorXd a(2), b(2);
  a << 0.0, 0.0;
  b << 3e-5, 4e-5;  // distance exactly 5e-5
  CHECK(check_convergence(a, b, 5e-5));
  CHECK(!check_convergence(a, b, 4.9999e-5));
  CHECK(check_convergence(a, a, 0.0));
}

TEST_CASE("trace serializes to one JSON object per line") {
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  SolveResult res = solve_acopf(prob, SolverOptions{});
  REQUIRE(res.converged);
  std::string dir = testutil::scratch_dir("solver_trace");
  write_trace_jsonl(res.trace, dir + "/trace.jsonl");

  std::ifstream in(dir + "/trace.jsonl");
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.at("k") == count);
    CHECK(j.at("x").size() == static_cast<std::size_t>(prob.n()));
    if (count == 0) {
      CHECK(!j.contains("step_norm"));
    } else {
      CHECK(j.at("step_norm").get<double>() ==
            res.trace.step_norms[count - 1]);
      CHECK(j.at("mu").get<double>() == res.trace.mu_values[count - 1]);
      CHECK(j.contains("alpha"));
    }
    ++count;
  }
  CHECK(count == res.trace.n_steps() + 1);
}

TEST_CASE("perturbed scenarios solve across a wide load range") {
  Network net = load_case(data_path("case30.m"));
  int converged = 0;
  for (int i = 0; i < 5; ++i) {
    Scenario sc = perturb_loads(net, scenario_seed(77, i), 0.4);
    AcopfProblem prob(net, sc);
    try {
      SolveResult res = solve_acopf(prob, SolverOptions{});
      if (res.converged) {
        ++converged;
        CHECK(res.kkt_norm <= 1e-6);
      }
    } catch (const numerical_failure&) {
    }
  }
  CHECK(converged >= 4);
}
