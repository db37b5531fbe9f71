#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>

#include "gridnewton/acopf.hpp"
#include "support/testutil.hpp"

using namespace gridnewton;
using testutil::data_path;

namespace {

std::uint64_t rngstate = 1234;
double unif_pm(double scale) {
  rngstate += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = rngstate;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return ((z >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale;
}

// Interior point with every variable strictly inside its box and modest
// angles; keeps finite differences well conditioned.
Eigen::VectorXd random_interior_state(const AcopfProblem& prob) {
  const auto& idx = prob.index();
  const auto& lo = prob.clamp_lo();
  const auto& hi = prob.clamp_hi();
  Eigen::VectorXd x(prob.n());
  for (int b = 0; b < idx.n_bus; ++b) {
    x[idx.iv(b)] = 0.5 * (lo[idx.iv(b)] + hi[idx.iv(b)]) +
                   0.3 * (hi[idx.iv(b)] - lo[idx.iv(b)]) * unif_pm(0.5);
    x[idx.ith(b)] = unif_pm(0.25);
  }
  x[prob.slack_theta_index()] = 0.0;
  for (int g = 0; g < idx.n_gen; ++g) {
    int ip = idx.ipg(g), iq = idx.iqg(g);
    x[ip] = 0.5 * (lo[ip] + hi[ip]) + 0.3 * (hi[ip] - lo[ip]) * unif_pm(0.5);
    x[iq] = 0.5 * (lo[iq] + hi[iq]) + 0.3 * (hi[iq] - lo[iq]) * unif_pm(0.5);
  }
  return x;
}

Eigen::MatrixXd fd_jacobian(const AcopfProblem& prob, const Eigen::VectorXd& x,
                            int rows,
                            const std::function<Eigen::VectorXd(
                                const Eigen::VectorXd&)>& f) {
  Eigen::MatrixXd J(rows, x.size());
  for (int j = 0; j < x.size(); ++j) {
    double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (f(xp) - f(xm)) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("problem dimensions") {
  Network n30 = load_case(data_path("case30.m"));
  AcopfProblem p30(n30);
  CHECK(p30.n() == 72);
  CHECK(p30.n_z() == 71);
  CHECK(p30.m_eq() == 60);
  CHECK(p30.n_ineq() == 84);

  Network n2 = load_case(data_path("case2.m"));
  AcopfProblem p2(n2);
  CHECK(p2.n() == 6);
  CHECK(p2.n_z() == 5);
  CHECK(p2.m_eq() == 4);
  CHECK(p2.n_ineq() == 8);
  CHECK(p2.slack_theta_index() == 2);  // theta block starts at n_bus
}

TEST_CASE("flat start sits inside every box") {
  for (const char* name : {"case2.m", "case30.m"}) {
    Network net = load_case(data_path(name));
    AcopfProblem prob(net);
    Eigen::VectorXd x = prob.flat_start();
    CHECK((x.array() >= prob.clamp_lo().array() - 1e-15).all());
    CHECK((x.array() <= prob.clamp_hi().array() + 1e-15).all());
    CHECK(x[prob.slack_theta_index()] == 0.0);
  }
  // case2: v box [0.9, 1.1] keeps v at 1; Qg box [-0.8, 0.8] clips 1 to 0.8
  Network n2 = load_case(data_path("case2.m"));
  AcopfProblem p2(n2);
  Eigen::VectorXd x = p2.flat_start();
  CHECK(x[0] == 1.0);
  CHECK(x[p2.index().ipg(0)] == 1.0);
  CHECK(x[p2.index().iqg(0)] == 0.8);
}

TEST_CASE("generation cost and its derivatives") {
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  Eigen::VectorXd x = prob.flat_start();
  x[prob.index().ipg(0)] = 0.5;  // 50 MW at cost 0.05 p^2 + 4 p
  CHECK(prob.cost(x) == doctest::Approx(325.0).epsilon(1e-14));

  // gradient: d/dPg_pu = (2 c2 P_mw + c1) * base = (2*0.05*50 + 4) * 100
  Eigen::VectorXd gr = prob.cost_gradient(x);
  CHECK(gr[prob.index().ipg(0)] == doctest::Approx(900.0).epsilon(1e-14));
  CHECK(gr.head(2 * net.n_bus()).norm() == 0.0);

  // constant Hessian diagonal: 2 c2 base^2 on the Pg entry only
  const Eigen::VectorXd& hd = prob.cost_hessian_diag();
  CHECK(hd[prob.index().ipg(0)] == doctest::Approx(1000.0));
  CHECK(hd[prob.index().iqg(0)] == 0.0);
  CHECK(hd[0] == 0.0);
}

TEST_CASE("equality residual matches an independent evaluation") {
  // v = [1.02, 0.97], theta = [0, -0.05], Pg = 0.5, Qg = 0.1 (pu).
  // Residual computed separately with dense complex arithmetic.
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  Eigen::VectorXd x(6);
  x << 1.02, 0.97, 0.0, -0.05, 0.5, 0.1;
  Eigen::VectorXd g = prob.equality(x);
  REQUIRE(g.size() == 4);
  CHECK(g[0] == doctest::Approx(0.041317220920110587).epsilon(1e-13));
  CHECK(g[1] == doctest::Approx(-0.1363934736622483).epsilon(1e-13));
  CHECK(g[2] == doctest::Approx(0.35782920156019371).epsilon(1e-13));
  CHECK(g[3] == doctest::Approx(-0.27840472898157131).epsilon(1e-13));
}

TEST_CASE("serial and OpenMP equality evaluations agree bitwise") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  for (int t = 0; t < 5; ++t) {
    Eigen::VectorXd x = random_interior_state(prob);
    Eigen::VectorXd a = prob.equality(x, kernels::Exec::Serial);
    Eigen::VectorXd b = prob.equality(x, kernels::Exec::OpenMP);
    CHECK(a == b);
  }
}

TEST_CASE("equality Jacobian agrees with finite differences") {
  for (const char* name : {"case2.m", "case30.m"}) {
    Network net = load_case(data_path(name));
    AcopfProblem prob(net);
    for (int t = 0; t < 3; ++t) {
      Eigen::VectorXd x = random_interior_state(prob);
      Eigen::MatrixXd J = Eigen::MatrixXd(prob.equality_jacobian(x));
      Eigen::MatrixXd Jfd = fd_jacobian(
          prob, x, prob.m_eq(),
          [&](const Eigen::VectorXd& y) { return prob.equality(y); });
      double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
      CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale < 1e-6);
    }
  }
}

TEST_CASE("inequality ordering and constant Jacobian") {
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  const int nb = 2;
  Eigen::VectorXd x(6);
  x << 0.89, 1.15, 0.0, 0.1, -0.2, 0.9;
  Eigen::VectorXd h = prob.inequality(x);
  REQUIRE(h.size() == 8);
  // block 1: v_min - v
  CHECK(h[0] == doctest::Approx(0.9 - 0.89));
  CHECK(h[1] == doctest::Approx(0.9 - 1.15));
  // block 2: v - v_max
  CHECK(h[nb + 0] == doctest::Approx(0.89 - 1.1));
  CHECK(h[nb + 1] == doctest::Approx(1.15 - 1.1));
  // blocks 3/4: Pg bounds [0, 1.2]
  CHECK(h[2 * nb + 0] == doctest::Approx(0.2));
  CHECK(h[2 * nb + 1] == doctest::Approx(-0.2 - 1.2));
  // blocks 5/6: Qg bounds [-0.8, 0.8]
  CHECK(h[2 * nb + 2] == doctest::Approx(-0.8 - 0.9));
  CHECK(h[2 * nb + 3] == doctest::Approx(0.9 - 0.8));

  Eigen::MatrixXd Jh = Eigen::MatrixXd(prob.inequality_jacobian());
  Eigen::MatrixXd Jfd = fd_jacobian(
      prob, x, prob.n_ineq(),
      [&](const Eigen::VectorXd& y) { return prob.inequality(y); });
  CHECK((Jh - Jfd).cwiseAbs().maxCoeff() < 1e-9);
  // every row is a single +-1
  for (int i = 0; i < Jh.rows(); ++i) {
    CHECK(Jh.row(i).cwiseAbs().sum() == 1.0);
  }
}

TEST_CASE("weighted Hessian agrees with differentiated gradients") {
  for (const char* name : {"case2.m", "case30.m"}) {
    Network net = load_case(data_path(name));
    AcopfProblem prob(net);
    Eigen::VectorXd lambda(prob.m_eq());
    for (int i = 0; i < lambda.size(); ++i) lambda[i] = unif_pm(1.0);
    for (int t = 0; t < 2; ++t) {
      Eigen::VectorXd x = random_interior_state(prob);
      Eigen::MatrixXd H = Eigen::MatrixXd(prob.lagrangian_hessian(x, lambda));
      CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-10);
      auto grad = [&](const Eigen::VectorXd& y) {
        return Eigen::VectorXd(prob.cost_gradient(y) +
                               prob.equality_jacobian(y).transpose() * lambda);
      };
      Eigen::MatrixXd Hfd = fd_jacobian(prob, x, prob.n(), grad);
      double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
      CHECK((H - Hfd).cwiseAbs().maxCoeff() / scale < 1e-5);
    }
  }
}

TEST_CASE("reduce and expand are mutually inverse") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  Eigen::VectorXd x = random_interior_state(prob);
  Eigen::VectorXd z = prob.reduce(x);
  REQUIRE(z.size() == prob.n_z());
  CHECK(prob.expand(z) == x);  // slack angle was already zero
  Eigen::VectorXd z2(prob.n_z());
  for (int i = 0; i < z2.size(); ++i) z2[i] = unif_pm(1.0);
  CHECK(prob.reduce(prob.expand(z2)) == z2);
  CHECK(prob.expand(z2)[prob.slack_theta_index()] == 0.0);
}

TEST_CASE("stacked KKT residual assembles from its pieces") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  const int P = prob.n_ineq();
  Eigen::VectorXd x = random_interior_state(prob);
  DualState d;
  d.lambda = Eigen::VectorXd::Zero(prob.m_eq());
  for (int i = 0; i < d.lambda.size(); ++i) d.lambda[i] = unif_pm(2.0);
  d.s = Eigen::VectorXd::Constant(P, 0.3);
  d.mu = Eigen::VectorXd::Constant(P, 0.5);
  for (int i = 0; i < P; ++i) {
    d.s[i] += 0.2 * std::abs(unif_pm(1.0));
    d.mu[i] += 0.2 * std::abs(unif_pm(1.0));
  }
  const double mu_bar = 0.01;
  Eigen::VectorXd r = prob.kkt_residual(x, d, mu_bar);
  REQUIRE(r.size() == prob.n_z() + prob.m_eq() + 2 * P);

  Eigen::VectorXd station =
      prob.reduce(prob.cost_gradient(x) +
                  prob.equality_jacobian(x).transpose() * d.lambda +
                  prob.inequality_jacobian().transpose() * d.mu);
  CHECK((r.head(prob.n_z()) - station).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((r.segment(prob.n_z(), prob.m_eq()) - prob.equality(x))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
  Eigen::VectorXd hs = prob.inequality(x) + d.s;
  CHECK((r.segment(prob.n_z() + prob.m_eq(), P) - hs).cwiseAbs().maxCoeff() <
        1e-14);
  Eigen::VectorXd comp =
      (d.s.array() * d.mu.array() - mu_bar).matrix();
  CHECK((r.tail(P) - comp).cwiseAbs().maxCoeff() < 1e-14);

  // mu_bar = 0 residual vs reported infinity norm
  Eigen::VectorXd r0 = prob.kkt_residual(x, d, 0.0);
  CHECK(prob.kkt_inf_norm(x, d) ==
        doctest::Approx(r0.lpNorm<Eigen::Infinity>()).epsilon(1e-14));
}

TEST_CASE("KKT Jacobian agrees with finite differences") {
  Network net = load_case(data_path("case2.m"));
  AcopfProblem prob(net);
  const int P = prob.n_ineq();
  const int dim = prob.n_z() + prob.m_eq() + 2 * P;
  Eigen::VectorXd x = random_interior_state(prob);
  DualState d;
  d.lambda = Eigen::VectorXd::Zero(prob.m_eq());
  for (int i = 0; i < d.lambda.size(); ++i) d.lambda[i] = unif_pm(1.0);
  d.s = Eigen::VectorXd::Constant(P, 0.4);
  d.mu = Eigen::VectorXd::Constant(P, 0.7);
  const double mu_bar = 0.05;

  Eigen::MatrixXd J = Eigen::MatrixXd(prob.kkt_jacobian(x, d));
  REQUIRE(J.rows() == dim);
  REQUIRE(J.cols() == dim);

  auto eval = [&](const Eigen::VectorXd& u) {
    Eigen::VectorXd z = u.head(prob.n_z());
    DualState dd;
    dd.lambda = u.segment(prob.n_z(), prob.m_eq());
    dd.mu = u.segment(prob.n_z() + prob.m_eq(), P);
    dd.s = u.tail(P);
    return prob.kkt_residual(prob.expand(z), dd, mu_bar);
  };
  Eigen::VectorXd u(dim);
  u << prob.reduce(x), d.lambda, d.mu, d.s;
  Eigen::MatrixXd Jfd(dim, dim);
  for (int j = 0; j < dim; ++j) {
    double h = 1e-6 * std::max(1.0, std::abs(u[j]));
    Eigen::VectorXd up = u, um = u;
    up[j] += h;
    um[j] -= h;
    Jfd.col(j) = (eval(up) - eval(um)) / (2 * h);
  }
  double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
  CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale < 1e-7);
}

TEST_CASE("clamp boxes pin the slack angle and free the rest") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  const auto& lo = prob.clamp_lo();
  const auto& hi = prob.clamp_hi();
  const auto& idx = prob.index();
  CHECK(lo[prob.slack_theta_index()] == 0.0);
  CHECK(hi[prob.slack_theta_index()] == 0.0);
  for (int b = 0; b < idx.n_bus; ++b) {
    CHECK(lo[idx.iv(b)] == net.buses[b].v_min);
    CHECK(hi[idx.iv(b)] == net.buses[b].v_max);
    if (idx.ith(b) != prob.slack_theta_index()) {
      CHECK(lo[idx.ith(b)] <= -1e29);
      CHECK(hi[idx.ith(b)] >= 1e29);
    }
  }
  for (int g = 0; g < idx.n_gen; ++g) {
    CHECK(lo[idx.ipg(g)] ==
          doctest::Approx(net.generators[g].p_min / net.base_mva));
    CHECK(hi[idx.iqg(g)] ==
          doctest::Approx(net.generators[g].q_max / net.base_mva));
  }
}

TEST_CASE("scenario swap changes only the load terms") {
  Network net = load_case(data_path("case30.m"));
  AcopfProblem prob(net);
  Eigen::VectorXd x = prob.flat_start();
  Eigen::VectorXd g_base = prob.equality(x);
  Scenario sc = perturb_loads(net, 5, 0.3);
  prob.set_scenario(sc);
  Eigen::VectorXd g_pert = prob.equality(x);
  CHECK(g_base != g_pert);
  // difference equals the load delta in per-unit at the load buses
  Scenario base = base_scenario(net);
  Eigen::VectorXd want = g_base;
  for (int i = 0; i < net.n_load(); ++i) {
    int b = net.load_buses[i];
    want[b] += (sc.pd[i] - base.pd[i]) / net.base_mva;
    want[net.n_bus() + b] += (sc.qd[i] - base.qd[i]) / net.base_mva;
  }
  CHECK((g_pert - want).cwiseAbs().maxCoeff() < 1e-14);
}
