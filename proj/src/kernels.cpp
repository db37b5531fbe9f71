#include "gridnewton/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridnewton::kernels {

int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace {

inline double dot(const double* x, const double* y, std::size_t k) {
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += x[i] * y[i];
  return acc;
}

}  // namespace

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec mode) {
  const std::ptrdiff_t mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < mm; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = dot(ai, b + j * k, k);
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec mode) {
  // Row i of C depends only on row i of A; accumulate along k in a fixed
  // order so both paths agree bitwise.
  const std::ptrdiff_t mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < mm; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = ai[l];
      const double* bl = b + l * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k, Exec mode) {
  // C(i, j) = sum_l A(l, i) * B(l, j); rows of C are independent.
  const std::ptrdiff_t mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < mm; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double ali = a[l * m + static_cast<std::size_t>(i)];
      const double* bl = b + l * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += ali * bl[j];
    }
  }
}

void colsum(const double* a, double* out, std::size_t m, std::size_t n,
            Exec mode) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t j = 0; j < nn; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      acc += a[i * n + static_cast<std::size_t>(j)];
    out[j] = acc;
  }
}

void add_row_broadcast(double* a, const double* r, std::size_t m,
                       std::size_t n, Exec mode) {
  const std::ptrdiff_t mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < mm; ++i) {
    double* ai = a + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) ai[j] += r[j];
  }
}

void tanh_inplace(double* a, std::size_t len, Exec mode) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(len);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < nn; ++i) a[i] = std::tanh(a[i]);
}

void relu_inplace(double* a, std::size_t len, Exec mode) {
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(len);
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < nn; ++i) a[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void bus_injections(std::span<const int> row_ptr, std::span<const int> col_idx,
                    std::span<const double> g, std::span<const double> b,
                    std::span<const double> v, std::span<const double> theta,
                    std::span<double> p_out, std::span<double> q_out,
                    Exec mode) {
  const std::ptrdiff_t nb = static_cast<std::ptrdiff_t>(v.size());
#pragma omp parallel for schedule(static) if (mode == Exec::OpenMP)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const double vi = v[i];
    const double ti = theta[i];
    double p = 0.0, q = 0.0;
    for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
      const int k = col_idx[e];
      const double t = ti - theta[k];
      const double ct = std::cos(t), st = std::sin(t);
      const double w = vi * v[k];
      p += w * (g[e] * ct + b[e] * st);
      q += w * (g[e] * st - b[e] * ct);
    }
    p_out[i] = p;
    q_out[i] = q;
  }
}

}  // namespace gridnewton::kernels
