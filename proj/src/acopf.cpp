#include "gridnewton/acopf.hpp"

#include <cmath>
#include <limits>

namespace gridnewton {

namespace {
constexpr double kFree = 1e30;
}

AcopfProblem::AcopfProblem(const Network& net) : net_(net) {
  idx_.n_bus = net_.n_bus();
  idx_.n_gen = net_.n_gen();
  slack_theta_ = idx_.ith(net_.slack_bus());
  build_structure();
  set_scenario(base_scenario(net_));
}

AcopfProblem::AcopfProblem(const Network& net, const Scenario& sc)
    : AcopfProblem(net) {
  set_scenario(sc);
}

void AcopfProblem::build_structure() {
  const int nb = idx_.n_bus;
  const int ng = idx_.n_gen;
  const int n = idx_.n();
  const double base = net_.base_mva;

  // Admittance in CSR with G/B split so the injection kernel can walk it.
  Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor> y =
      build_admittance(net_);
  y.makeCompressed();
  y_row_ptr_.assign(y.outerIndexPtr(), y.outerIndexPtr() + nb + 1);
  y_col_idx_.assign(y.innerIndexPtr(), y.innerIndexPtr() + y.nonZeros());
  y_g_.resize(y.nonZeros());
  y_b_.resize(y.nonZeros());
  for (int k = 0; k < y.nonZeros(); ++k) {
    y_g_[k] = y.valuePtr()[k].real();
    y_b_[k] = y.valuePtr()[k].imag();
  }
  g_diag_.assign(nb, 0.0);
  b_diag_.assign(nb, 0.0);
  for (int i = 0; i < nb; ++i)
    for (int k = y_row_ptr_[i]; k < y_row_ptr_[i + 1]; ++k)
      if (y_col_idx_[k] == i) {
        g_diag_[i] = y_g_[k];
        b_diag_[i] = y_b_[k];
      }

  gens_at_bus_.assign(nb, {});
  for (int g = 0; g < ng; ++g)
    gens_at_bus_[net_.generators[g].bus].push_back(g);

  cost_hess_ = Eigen::VectorXd::Zero(n);
  for (int g = 0; g < ng; ++g)
    cost_hess_[idx_.ipg(g)] = 2.0 * net_.generators[g].c2 * base * base;

  box_lo_ = Eigen::VectorXd::Constant(n, -kFree);
  box_hi_ = Eigen::VectorXd::Constant(n, kFree);
  for (int b = 0; b < nb; ++b) {
    box_lo_[idx_.iv(b)] = net_.buses[b].v_min;
    box_hi_[idx_.iv(b)] = net_.buses[b].v_max;
  }
  for (int g = 0; g < ng; ++g) {
    const auto& gen = net_.generators[g];
    box_lo_[idx_.ipg(g)] = gen.p_min / base;
    box_hi_[idx_.ipg(g)] = gen.p_max / base;
    box_lo_[idx_.iqg(g)] = gen.q_min / base;
    box_hi_[idx_.iqg(g)] = gen.q_max / base;
  }
  clamp_lo_ = box_lo_;
  clamp_hi_ = box_hi_;
  clamp_lo_[slack_theta_] = 0.0;
  clamp_hi_[slack_theta_] = 0.0;

  // h(x) <= 0 stacked as lower then upper violations per variable block.
  std::vector<Eigen::Triplet<double>> trip;
  const int P = n_ineq();
  int row = 0;
  auto bound_rows = [&](int count, auto var_index) {
    for (int i = 0; i < count; ++i)
      trip.emplace_back(row + i, var_index(i), -1.0);
    row += count;
    for (int i = 0; i < count; ++i)
      trip.emplace_back(row + i, var_index(i), 1.0);
    row += count;
  };
  bound_rows(nb, [&](int b) { return idx_.iv(b); });
  bound_rows(ng, [&](int g) { return idx_.ipg(g); });
  bound_rows(ng, [&](int g) { return idx_.iqg(g); });
  jac_ineq_.resize(P, n);
  jac_ineq_.setFromTriplets(trip.begin(), trip.end());
  jac_ineq_.makeCompressed();

  std::vector<Eigen::Triplet<double>> sel;
  int col = 0;
  for (int i = 0; i < n; ++i)
    if (i != slack_theta_) sel.emplace_back(i, col++, 1.0);
  sel_.resize(n, n - 1);
  sel_.setFromTriplets(sel.begin(), sel.end());
  sel_.makeCompressed();
}

void AcopfProblem::set_scenario(const Scenario& sc) {
  const std::size_t nl = net_.load_buses.size();
  if (sc.pd.size() != nl || sc.qd.size() != nl)
    throw std::invalid_argument("scenario does not match network load buses");
  pd_bus_.assign(idx_.n_bus, 0.0);
  qd_bus_.assign(idx_.n_bus, 0.0);
  for (std::size_t i = 0; i < nl; ++i) {
    pd_bus_[net_.load_buses[i]] = sc.pd[i] / net_.base_mva;
    qd_bus_[net_.load_buses[i]] = sc.qd[i] / net_.base_mva;
  }
}

Eigen::VectorXd AcopfProblem::flat_start() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(idx_.n());
  for (int b = 0; b < idx_.n_bus; ++b)
    x[idx_.iv(b)] = std::clamp(1.0, box_lo_[idx_.iv(b)], box_hi_[idx_.iv(b)]);
  for (int g = 0; g < idx_.n_gen; ++g) {
    x[idx_.ipg(g)] =
        std::clamp(1.0, box_lo_[idx_.ipg(g)], box_hi_[idx_.ipg(g)]);
    x[idx_.iqg(g)] =
        std::clamp(1.0, box_lo_[idx_.iqg(g)], box_hi_[idx_.iqg(g)]);
  }
  return x;
}

double AcopfProblem::cost(const Eigen::VectorXd& x) const {
  const double base = net_.base_mva;
  double f = 0.0;
  for (int g = 0; g < idx_.n_gen; ++g) {
    const auto& gen = net_.generators[g];
    const double p = base * x[idx_.ipg(g)];
    f += (gen.c2 * p + gen.c1) * p + gen.c0;
  }
  return f;
}

Eigen::VectorXd AcopfProblem::cost_gradient(const Eigen::VectorXd& x) const {
  const double base = net_.base_mva;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(idx_.n());
  for (int g = 0; g < idx_.n_gen; ++g) {
    const auto& gen = net_.generators[g];
    grad[idx_.ipg(g)] = 2.0 * gen.c2 * base * base * x[idx_.ipg(g)] +
                        gen.c1 * base;
  }
  return grad;
}

void AcopfProblem::injections(const Eigen::VectorXd& x, Eigen::VectorXd& p,
                              Eigen::VectorXd& q, kernels::Exec mode) const {
  const int nb = idx_.n_bus;
  p.resize(nb);
  q.resize(nb);
  kernels::bus_injections(y_row_ptr_, y_col_idx_, y_g_, y_b_,
                          {x.data(), static_cast<std::size_t>(nb)},
                          {x.data() + nb, static_cast<std::size_t>(nb)},
                          {p.data(), static_cast<std::size_t>(nb)},
                          {q.data(), static_cast<std::size_t>(nb)}, mode);
}

Eigen::VectorXd AcopfProblem::equality(const Eigen::VectorXd& x,
                                       kernels::Exec mode) const {
  const int nb = idx_.n_bus;
  Eigen::VectorXd p, q, g(2 * nb);
  injections(x, p, q, mode);
  for (int b = 0; b < nb; ++b) {
    double pg = 0.0, qg = 0.0;
    for (int gi : gens_at_bus_[b]) {
      pg += x[idx_.ipg(gi)];
      qg += x[idx_.iqg(gi)];
    }
    g[b] = p[b] - pg + pd_bus_[b];
    g[nb + b] = q[b] - qg + qd_bus_[b];
  }
  return g;
}

Eigen::SparseMatrix<double> AcopfProblem::equality_jacobian(
    const Eigen::VectorXd& x) const {
  const int nb = idx_.n_bus;
  Eigen::VectorXd pinj, qinj;
  injections(x, pinj, qinj);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(4 * y_col_idx_.size() + 2 * idx_.n_gen);
  for (int i = 0; i < nb; ++i) {
    const double vi = x[idx_.iv(i)];
    for (int kk = y_row_ptr_[i]; kk < y_row_ptr_[i + 1]; ++kk) {
      const int k = y_col_idx_[kk];
      if (k == i) {
        trip.emplace_back(i, idx_.iv(i), pinj[i] / vi + g_diag_[i] * vi);
        trip.emplace_back(i, idx_.ith(i), -qinj[i] - b_diag_[i] * vi * vi);
        trip.emplace_back(nb + i, idx_.iv(i), qinj[i] / vi - b_diag_[i] * vi);
        trip.emplace_back(nb + i, idx_.ith(i), pinj[i] - g_diag_[i] * vi * vi);
      } else {
        const double vk = x[idx_.iv(k)];
        const double th = x[idx_.ith(i)] - x[idx_.ith(k)];
        const double ct = std::cos(th), st = std::sin(th);
        const double t = y_g_[kk] * ct + y_b_[kk] * st;
        const double u = y_g_[kk] * st - y_b_[kk] * ct;
        trip.emplace_back(i, idx_.iv(k), vi * t);
        trip.emplace_back(i, idx_.ith(k), vi * vk * u);
        trip.emplace_back(nb + i, idx_.iv(k), vi * u);
        trip.emplace_back(nb + i, idx_.ith(k), -vi * vk * t);
      }
    }
  }
  for (int g = 0; g < idx_.n_gen; ++g) {
    const int b = net_.generators[g].bus;
    trip.emplace_back(b, idx_.ipg(g), -1.0);
    trip.emplace_back(nb + b, idx_.iqg(g), -1.0);
  }
  Eigen::SparseMatrix<double> jac(2 * nb, idx_.n());
  jac.setFromTriplets(trip.begin(), trip.end());
  return jac;
}

Eigen::VectorXd AcopfProblem::inequality(const Eigen::VectorXd& x) const {
  const int nb = idx_.n_bus;
  const int ng = idx_.n_gen;
  Eigen::VectorXd h(n_ineq());
  int row = 0;
  for (int b = 0; b < nb; ++b) {
    h[row + b] = box_lo_[idx_.iv(b)] - x[idx_.iv(b)];
    h[row + nb + b] = x[idx_.iv(b)] - box_hi_[idx_.iv(b)];
  }
  row += 2 * nb;
  for (int g = 0; g < ng; ++g) {
    h[row + g] = box_lo_[idx_.ipg(g)] - x[idx_.ipg(g)];
    h[row + ng + g] = x[idx_.ipg(g)] - box_hi_[idx_.ipg(g)];
  }
  row += 2 * ng;
  for (int g = 0; g < ng; ++g) {
    h[row + g] = box_lo_[idx_.iqg(g)] - x[idx_.iqg(g)];
    h[row + ng + g] = x[idx_.iqg(g)] - box_hi_[idx_.iqg(g)];
  }
  return h;
}

Eigen::SparseMatrix<double> AcopfProblem::lagrangian_hessian(
    const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const {
  const int nb = idx_.n_bus;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(12 * y_col_idx_.size() + idx_.n_gen);

  auto push = [&](int a, int b, double v) {
    trip.emplace_back(a, b, v);
    if (a != b) trip.emplace_back(b, a, v);
  };

  for (int i = 0; i < nb; ++i) {
    const double wp = lambda[i];
    const double wq = lambda[nb + i];
    const double vi = x[idx_.iv(i)];
    for (int kk = y_row_ptr_[i]; kk < y_row_ptr_[i + 1]; ++kk) {
      const int k = y_col_idx_[kk];
      if (k == i) {
        // Self terms v_i^2*G_ii and -v_i^2*B_ii.
        push(idx_.iv(i), idx_.iv(i),
             2.0 * (wp * g_diag_[i] - wq * b_diag_[i]));
        continue;
      }
      const double vk = x[idx_.iv(k)];
      const double th = x[idx_.ith(i)] - x[idx_.ith(k)];
      const double ct = std::cos(th), st = std::sin(th);
      const double t = y_g_[kk] * ct + y_b_[kk] * st;
      const double u = y_g_[kk] * st - y_b_[kk] * ct;
      const double p = vi * vk * t;
      const double q = vi * vk * u;

      push(idx_.iv(i), idx_.iv(k), wp * t + wq * u);
      push(idx_.iv(i), idx_.ith(i), -wp * vk * u + wq * vk * t);
      push(idx_.iv(i), idx_.ith(k), wp * vk * u - wq * vk * t);
      push(idx_.iv(k), idx_.ith(i), -wp * vi * u + wq * vi * t);
      push(idx_.iv(k), idx_.ith(k), wp * vi * u - wq * vi * t);
      push(idx_.ith(i), idx_.ith(i), -wp * p - wq * q);
      push(idx_.ith(k), idx_.ith(k), -wp * p - wq * q);
      push(idx_.ith(i), idx_.ith(k), wp * p + wq * q);
    }
  }
  for (int g = 0; g < idx_.n_gen; ++g)
    if (cost_hess_[idx_.ipg(g)] != 0.0)
      trip.emplace_back(idx_.ipg(g), idx_.ipg(g), cost_hess_[idx_.ipg(g)]);

  Eigen::SparseMatrix<double> hess(idx_.n(), idx_.n());
  hess.setFromTriplets(trip.begin(), trip.end());
  return hess;
}

Eigen::VectorXd AcopfProblem::reduce(const Eigen::VectorXd& full) const {
  Eigen::VectorXd z(n_z());
  int c = 0;
  for (int i = 0; i < idx_.n(); ++i)
    if (i != slack_theta_) z[c++] = full[i];
  return z;
}

Eigen::VectorXd AcopfProblem::expand(const Eigen::VectorXd& red) const {
  Eigen::VectorXd x(idx_.n());
  int c = 0;
  for (int i = 0; i < idx_.n(); ++i)
    x[i] = i == slack_theta_ ? 0.0 : red[c++];
  return x;
}

Eigen::VectorXd AcopfProblem::kkt_residual(const Eigen::VectorXd& x,
                                           const DualState& d, double mu_bar,
                                           kernels::Exec mode) const {
  const int nz = n_z();
  const int m = m_eq();
  const int P = n_ineq();
  Eigen::VectorXd r(nz + m + 2 * P);

  Eigen::VectorXd stat = cost_gradient(x);
  stat += equality_jacobian(x).transpose() * d.lambda;
  stat += jac_ineq_.transpose() * d.mu;
  r.segment(0, nz) = reduce(stat);
  r.segment(nz, m) = equality(x, mode);
  r.segment(nz + m, P) = inequality(x) + d.s;
  r.segment(nz + m + P, P) =
      d.s.cwiseProduct(d.mu) - Eigen::VectorXd::Constant(P, mu_bar);
  return r;
}

Eigen::SparseMatrix<double> AcopfProblem::kkt_jacobian(
    const Eigen::VectorXd& x, const DualState& d) const {
  const int nz = n_z();
  const int m = m_eq();
  const int P = n_ineq();
  const int dim = nz + m + 2 * P;

  Eigen::SparseMatrix<double> hz =
      sel_.transpose() * lagrangian_hessian(x, d.lambda) * sel_;
  Eigen::SparseMatrix<double> jg = equality_jacobian(x) * sel_;
  Eigen::SparseMatrix<double> jh = jac_ineq_ * sel_;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(hz.nonZeros() + 2 * jg.nonZeros() + 2 * jh.nonZeros() + 3 * P);
  auto add_block = [&](const Eigen::SparseMatrix<double>& mtx, int ro, int co,
                       bool transposed) {
    for (int outer = 0; outer < mtx.outerSize(); ++outer)
      for (Eigen::SparseMatrix<double>::InnerIterator it(mtx, outer); it;
           ++it) {
        if (transposed)
          trip.emplace_back(ro + it.col(), co + it.row(), it.value());
        else
          trip.emplace_back(ro + it.row(), co + it.col(), it.value());
      }
  };
  add_block(hz, 0, 0, false);
  add_block(jg, 0, nz, true);
  add_block(jh, 0, nz + m, true);
  add_block(jg, nz, 0, false);
  add_block(jh, nz + m, 0, false);
  for (int j = 0; j < P; ++j) {
    trip.emplace_back(nz + m + j, nz + m + P + j, 1.0);          // d r_i / d s
    trip.emplace_back(nz + m + P + j, nz + m + j, d.s[j]);       // d r_c / d mu
    trip.emplace_back(nz + m + P + j, nz + m + P + j, d.mu[j]);  // d r_c / d s
  }
  Eigen::SparseMatrix<double> jac(dim, dim);
  jac.setFromTriplets(trip.begin(), trip.end());
  return jac;
}

double AcopfProblem::kkt_inf_norm(const Eigen::VectorXd& x,
                                  const DualState& d) const {
  return kkt_residual(x, d, 0.0).lpNorm<Eigen::Infinity>();
}

}  // namespace gridnewton
