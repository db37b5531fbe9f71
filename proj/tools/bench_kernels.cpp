// Compares the serial and OpenMP paths of every kernel: wall time and a
// bitwise equality check between the two results.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <vector>

#include "gridnewton/acopf.hpp"
#include "gridnewton/grid.hpp"
#include "gridnewton/kernels.hpp"

namespace k = gridnewton::kernels;

namespace {

std::vector<double> random_buf(std::size_t n, std::mt19937_64& eng) {
  std::vector<double> v(n);
  for (auto& x : v)
    x = 2.0 * (static_cast<double>(eng() >> 11) * 0x1.0p-53) - 1.0;
  return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

int failures = 0;

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-18s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx   %s\n",
              name, serial_ms, omp_ms, omp_ms > 0 ? serial_ms / omp_ms : 0.0,
              identical ? "bitwise-identical" : "MISMATCH");
  if (!identical) ++failures;
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strncmp(argv[i], "--threads=", 10) == 0)
      threads = std::atoi(argv[i] + 10);
  if (threads > 0) k::set_threads(threads);
  std::printf("threads available: %d\n\n", k::hardware_threads());

  std::mt19937_64 eng(42);
  const std::size_t m = 512, n = 512, kk = 512;
  const int reps = 3;

  auto a = random_buf(m * kk, eng);
  auto bt = random_buf(n * kk, eng);
  auto bn = random_buf(kk * n, eng);
  std::vector<double> c1(m * n), c2(m * n);

  {
    double ts = time_ms(
        [&] { k::gemm_nt(a.data(), bt.data(), c1.data(), m, n, kk,
                         k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::gemm_nt(a.data(), bt.data(), c2.data(), m, n, kk,
                         k::Exec::OpenMP); }, reps);
    report("gemm_nt", ts, tp, bitwise_equal(c1, c2));
  }
  {
    double ts = time_ms(
        [&] { k::gemm_nn(a.data(), bn.data(), c1.data(), m, n, kk,
                         k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::gemm_nn(a.data(), bn.data(), c2.data(), m, n, kk,
                         k::Exec::OpenMP); }, reps);
    report("gemm_nn", ts, tp, bitwise_equal(c1, c2));
  }
  {
    auto at = random_buf(kk * m, eng);
    double ts = time_ms(
        [&] { k::gemm_tn(at.data(), bn.data(), c1.data(), m, n, kk,
                         k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::gemm_tn(at.data(), bn.data(), c2.data(), m, n, kk,
                         k::Exec::OpenMP); }, reps);
    report("gemm_tn", ts, tp, bitwise_equal(c1, c2));
  }
  {
    std::vector<double> s1(n), s2(n);
    double ts = time_ms(
        [&] { k::colsum(a.data(), s1.data(), m, kk, k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::colsum(a.data(), s2.data(), m, kk, k::Exec::OpenMP); }, reps);
    report("colsum", ts, tp, bitwise_equal(s1, s2));
  }
  {
    auto r = random_buf(kk, eng);
    auto x1 = a;
    auto x2 = a;
    double ts = time_ms(
        [&] { k::add_row_broadcast(x1.data(), r.data(), m, kk,
                                   k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::add_row_broadcast(x2.data(), r.data(), m, kk,
                                   k::Exec::OpenMP); }, reps);
    report("add_row_broadcast", ts, tp, bitwise_equal(x1, x2));
  }
  {
    auto x1 = a;
    auto x2 = a;
    double ts = time_ms(
        [&] { k::tanh_inplace(x1.data(), x1.size(), k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::tanh_inplace(x2.data(), x2.size(), k::Exec::OpenMP); }, reps);
    report("tanh_inplace", ts, tp, bitwise_equal(x1, x2));
  }
  {
    auto x1 = a;
    auto x2 = a;
    double ts = time_ms(
        [&] { k::relu_inplace(x1.data(), x1.size(), k::Exec::Serial); }, reps);
    double tp = time_ms(
        [&] { k::relu_inplace(x2.data(), x2.size(), k::Exec::OpenMP); }, reps);
    report("relu_inplace", ts, tp, bitwise_equal(x1, x2));
  }
  {
    // Sparse injection kernel on a synthetic meshed network.
    gridnewton::Network net =
        gridnewton::parse_case(gridnewton::make_synthetic_case(1000));
    gridnewton::AcopfProblem prob(net);
    Eigen::VectorXd x = prob.flat_start();
    for (int b = 0; b < net.n_bus(); ++b)
      x[net.n_bus() + b] = 0.02 * std::sin(0.3 * b);
    Eigen::VectorXd p1, q1, p2, q2;
    double ts = time_ms(
        [&] { prob.injections(x, p1, q1, k::Exec::Serial); }, 20);
    double tp = time_ms(
        [&] { prob.injections(x, p2, q2, k::Exec::OpenMP); }, 20);
    const bool same = p1 == p2 && q1 == q2;
    report("bus_injections", ts, tp, same);
  }

  std::printf("\n%s\n", failures == 0 ? "all kernels agree bitwise"
                                      : "kernel mismatch detected");
  return failures == 0 ? 0 : 1;
}
