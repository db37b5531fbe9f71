#pragma once

#include <cstddef>
#include <span>

namespace gridnewton::kernels {

/// Execution mode for the data-parallel kernels. Every kernel has a serial
/// reference path and an OpenMP path that partitions independent output
/// elements across threads. The per-element reduction order is identical in
/// both paths, so results are bit-identical regardless of mode or thread
/// count.
enum class Exec { Serial, OpenMP };

/// Number of threads the OpenMP paths will use (1 if built without OpenMP).
int hardware_threads();

/// Sets the OpenMP thread count for subsequent kernel calls. n <= 0 resets
/// to the runtime default.
void set_threads(int n);

// Dense matrix kernels, row-major storage.
// gemm_nt:  C(m x n) = A(m x k) * B(n x k)^T
// gemm_nn:  C(m x n) = A(m x k) * B(k x n)
// gemm_tn:  C(m x n) = A(k x m)^T * B(k x n)
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k, Exec mode);
void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k, Exec mode);
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k, Exec mode);

/// out(j) = sum_i A(i, j) for A(m x n) row-major.
void colsum(const double* a, double* out, std::size_t m, std::size_t n,
            Exec mode);

/// Adds row vector r (length n) to every row of A(m x n).
void add_row_broadcast(double* a, const double* r, std::size_t m,
                       std::size_t n, Exec mode);

/// Elementwise tanh / ReLU over a buffer.
void tanh_inplace(double* a, std::size_t len, Exec mode);
void relu_inplace(double* a, std::size_t len, Exec mode);

/// Sparse bus-injection kernel shared by the power-flow evaluations.
/// The admittance matrix is given in CSR form (row_ptr, col_idx, g, b).
/// For each bus i:
///   p(i) = v_i * sum_k v_k * (g_ik cos t_ik + b_ik sin t_ik)
///   q(i) = v_i * sum_k v_k * (g_ik sin t_ik - b_ik cos t_ik)
/// with t_ik = theta_i - theta_k. Buses are independent, so the OpenMP path
/// splits rows across threads.
void bus_injections(std::span<const int> row_ptr, std::span<const int> col_idx,
                    std::span<const double> g, std::span<const double> b,
                    std::span<const double> v, std::span<const double> theta,
                    std::span<double> p_out, std::span<double> q_out,
                    Exec mode);

}  // namespace gridnewton::kernels
