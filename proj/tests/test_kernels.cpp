#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "gridnewton/kernels.hpp"

using namespace gridnewton::kernels;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

namespace {

std::uint64_t mixstate = 42;
double next_unif() {
  mixstate += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = mixstate;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return (z >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

RowMat random_mat(int r, int c) {
  RowMat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = next_unif();
  return m;
}

}  // namespace

TEST_CASE("gemm_nt matches a dense reference") {
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {3, 5, 7}, {16, 9, 33}}) {
    RowMat a = random_mat(m, k), b = random_mat(n, k), c(m, n);
    gemm_nt(a.data(), b.data(), c.data(), m, n, k, Exec::Serial);
    Eigen::MatrixXd want = Eigen::MatrixXd(a) * Eigen::MatrixXd(b).transpose();
    CHECK((Eigen::MatrixXd(c) - want).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("gemm_nn matches a dense reference") {
  for (auto [m, n, k] : {std::tuple{1, 4, 2}, {6, 6, 6}, {11, 3, 20}}) {
    RowMat a = random_mat(m, k), b = random_mat(k, n), c(m, n);
    gemm_nn(a.data(), b.data(), c.data(), m, n, k, Exec::Serial);
    Eigen::MatrixXd want = Eigen::MatrixXd(a) * Eigen::MatrixXd(b);
    CHECK((Eigen::MatrixXd(c) - want).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("gemm_tn matches a dense reference") {
  for (auto [m, n, k] : {std::tuple{2, 2, 2}, {5, 8, 13}}) {
    RowMat a = random_mat(k, m), b = random_mat(k, n), c(m, n);
    gemm_tn(a.data(), b.data(), c.data(), m, n, k, Exec::Serial);
    Eigen::MatrixXd want =
        Eigen::MatrixXd(a).transpose() * Eigen::MatrixXd(b);
    CHECK((Eigen::MatrixXd(c) - want).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("colsum and add_row_broadcast hand values") {
  // A = [[1 2 3], [4 5 6]]
  std::vector<double> a = {1, 2, 3, 4, 5, 6};
  std::vector<double> out(3);
  colsum(a.data(), out.data(), 2, 3, Exec::Serial);
  CHECK(out[0] == 5.0);
  CHECK(out[1] == 7.0);
  CHECK(out[2] == 9.0);

  std::vector<double> r = {10, 20, 30};
  add_row_broadcast(a.data(), r.data(), 2, 3, Exec::Serial);
  CHECK(a == std::vector<double>{11, 22, 33, 14, 25, 36});
}

TEST_CASE("elementwise activations") {
  std::vector<double> t = {-1.0, 0.0, 0.5};
  tanh_inplace(t.data(), t.size(), Exec::Serial);
  CHECK(t[0] == doctest::Approx(std::tanh(-1.0)).epsilon(1e-15));
  CHECK(t[1] == 0.0);
  CHECK(t[2] == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));

  std::vector<double> u = {-2.0, 0.0, 3.5};
  relu_inplace(u.data(), u.size(), Exec::Serial);
  CHECK(u == std::vector<double>{0.0, 0.0, 3.5});
}

TEST_CASE("bus injections on a lossless two-bus line") {
  // Y = j*[-10 10; 10 -10] (pure reactance 0.1), v = [1, 1],
  // theta = [0, -0.1]. Independently computed flows.
  std::vector<int> row_ptr = {0, 2, 4}, col_idx = {0, 1, 0, 1};
  std::vector<double> g = {0, 0, 0, 0}, b = {-10, 10, 10, -10};
  std::vector<double> v = {1.0, 1.0}, theta = {0.0, -0.1};
  std::vector<double> p(2), q(2);
  bus_injections(row_ptr, col_idx, g, b, v, theta, p, q, Exec::Serial);
  CHECK(p[0] == doctest::Approx(0.9983341664682815).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(-0.9983341664682814).epsilon(1e-14));
  CHECK(q[0] == doctest::Approx(0.04995834721974113).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.04995834721974355).epsilon(1e-12));
}

TEST_CASE("bus injections match a dense complex evaluation") {
  // Random sparse-ish admittance over 12 buses with some off-diagonals.
  const int nb = 12;
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(nb, nb);
  for (int i = 0; i < nb; ++i) {
    Y(i, i) = std::complex<double>(next_unif() + 3.0, next_unif() - 8.0);
    int j = (i * 5 + 3) % nb;
    if (j != i) {
      std::complex<double> y(next_unif(), next_unif() + 2.0);
      Y(i, j) = -y;
      Y(j, i) = -y;
    }
  }
  std::vector<int> row_ptr{0}, col_idx;
  std::vector<double> gs, bs;
  for (int i = 0; i < nb; ++i) {
    for (int j = 0; j < nb; ++j)
      if (Y(i, j) != std::complex<double>(0, 0)) {
        col_idx.push_back(j);
        gs.push_back(Y(i, j).real());
        bs.push_back(Y(i, j).imag());
      }
    row_ptr.push_back(static_cast<int>(col_idx.size()));
  }
  std::vector<double> v(nb), th(nb);
  for (int i = 0; i < nb; ++i) {
    v[i] = 1.0 + 0.05 * next_unif();
    th[i] = 0.3 * next_unif();
  }
  std::vector<double> p(nb), q(nb);
  bus_injections(row_ptr, col_idx, gs, bs, v, th, p, q, Exec::Serial);

  Eigen::VectorXcd V(nb);
  for (int i = 0; i < nb; ++i) V[i] = std::polar(v[i], th[i]);
  Eigen::VectorXcd S = V.array() * (Y * V).conjugate().array();
  for (int i = 0; i < nb; ++i) {
    CHECK(p[i] == doctest::Approx(S[i].real()).epsilon(1e-12));
    CHECK(q[i] == doctest::Approx(S[i].imag()).epsilon(1e-12));
  }
}

TEST_CASE("serial and OpenMP paths agree bitwise") {
  set_threads(4);
  const int m = 37, n = 29, k = 51;
  RowMat a = random_mat(m, k), bt = random_mat(n, k), bn = random_mat(k, n);

  RowMat c1(m, n), c2(m, n);
  gemm_nt(a.data(), bt.data(), c1.data(), m, n, k, Exec::Serial);
  gemm_nt(a.data(), bt.data(), c2.data(), m, n, k, Exec::OpenMP);
  CHECK(c1 == c2);

  gemm_nn(a.data(), bn.data(), c1.data(), m, n, k, Exec::Serial);
  gemm_nn(a.data(), bn.data(), c2.data(), m, n, k, Exec::OpenMP);
  CHECK(c1 == c2);

  RowMat at = random_mat(k, m);
  gemm_tn(at.data(), bn.data(), c1.data(), m, n, k, Exec::Serial);
  gemm_tn(at.data(), bn.data(), c2.data(), m, n, k, Exec::OpenMP);
  CHECK(c1 == c2);

  RowMat big = random_mat(23, 40);
  std::vector<double> s1(40), s2(40);
  colsum(big.data(), s1.data(), 23, 40, Exec::Serial);
  colsum(big.data(), s2.data(), 23, 40, Exec::OpenMP);
  CHECK(s1 == s2);

  RowMat b1 = big, b2 = big;
  std::vector<double> row(40);
  for (auto& x : row) x = next_unif();
  add_row_broadcast(b1.data(), row.data(), 23, 40, Exec::Serial);
  add_row_broadcast(b2.data(), row.data(), 23, 40, Exec::OpenMP);
  CHECK(b1 == b2);

  std::vector<double> t1(997), t2;
  for (auto& x : t1) x = 3.0 * next_unif();
  t2 = t1;
  tanh_inplace(t1.data(), t1.size(), Exec::Serial);
  tanh_inplace(t2.data(), t2.size(), Exec::OpenMP);
  CHECK(t1 == t2);

  t2 = t1;
  relu_inplace(t1.data(), t1.size(), Exec::Serial);
  relu_inplace(t2.data(), t2.size(), Exec::OpenMP);
  CHECK(t1 == t2);
  set_threads(0);
}

TEST_CASE("thread count queries") {
  CHECK(hardware_threads() >= 1);
  set_threads(2);
  set_threads(0);  // back to runtime default; must not throw
}
