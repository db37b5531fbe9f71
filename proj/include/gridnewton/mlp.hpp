#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gridnewton/dataset.hpp"
#include "gridnewton/kernels.hpp"

namespace gridnewton {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

// Learned iterator: three layers applied to u = [state | loads],
//   a = relu(normalize(u))
//   h = tanh(W1 a + b1)
//   y = clamp(denormalize(W2 h + b2))
// The output is clamped into the physical variable boxes, so an iterate can
// never leave them. Output features share the normalization of the first
// n_out input features, so state and next state live in one normalized space.
struct MlpParams {
  int n_in = 0, n_hidden = 0, n_out = 0;
  RowMat w1;           // n_hidden x n_in
  Eigen::VectorXd b1;  // n_hidden
  RowMat w2;           // n_out x n_hidden
  Eigen::VectorXd b2;  // n_out
  NormStats norm;
  Eigen::VectorXd clamp_lo, clamp_hi;  // physical-space output bounds
  std::string case_hash;
};

// Hidden width default: ceil(sqrt(n_in * n_out)).
int heuristic_hidden(int n_in, int n_out);

// Glorot-uniform weights from a seeded generator; zero biases. Pass
// n_hidden = 0 to use the heuristic width.
MlpParams init_network(int n_in, int n_out, int n_hidden, std::uint64_t seed,
                       const NormStats& norm, const Eigen::VectorXd& clamp_lo,
                       const Eigen::VectorXd& clamp_hi,
                       const std::string& case_hash);

Eigen::VectorXd mlp_apply(const MlpParams& p, const Eigen::VectorXd& input);

// One row per sample; bit-identical across execution modes.
RowMat mlp_apply_batch(const MlpParams& p, const RowMat& inputs,
                       kernels::Exec mode = kernels::Exec::Serial);

struct TrainOptions {
  int epochs = 100;
  int batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // Adam
  std::uint64_t seed = 1;
  kernels::Exec exec = kernels::Exec::Serial;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean squared error, normalized space
  bool restored_checkpoint = false;
  double final_loss = 0.0;
  int epochs_run = 0;
};

// Adam on the mean squared error between the (normalized, clamped) prediction
// and the normalized next state. Deterministic for a fixed seed: per-epoch
// shuffles come from a counter-based generator and batches are walked in
// order. A non-finite epoch rolls the parameters back to the last finite
// snapshot and stops early.
TrainReport train(MlpParams& p, const Dataset& ds, const TrainOptions& opt);

// Contraction bound c = N_n * c_star * f'_max with N_n = n_in + n_hidden +
// n_out and f'_max = 1 (relu, tanh and clamp all have unit slope). c_star is
// the largest magnitude among the effective weights, i.e. the weights with
// the normalization folded in, so the bound speaks about the physical-space
// map.
struct ContractionInfo {
  double c_star = 0.0;
  int n_n = 0;
  double c = 0.0;
};

ContractionInfo contraction_modulus(const MlpParams& p);

// Clips effective weight magnitudes to margin / N_n so that the bound drops
// to c <= margin. Biases are untouched. Returns the modulus after clipping.
ContractionInfo project_contraction(MlpParams& p, double margin);

struct FixedPointOptions {
  double tol = 1e-4;
  int max_iter = 5000;  // forward applications allowed
  bool record_states = false;
  kernels::Exec exec = kernels::Exec::Serial;
};

struct FixedPointResult {
  Eigen::VectorXd x;
  int iterations = 0;    // accepted moves before the stopping test fired
  int applications = 0;  // forward evaluations performed
  bool converged = false;
  std::vector<double> step_norms;
  std::vector<Eigen::VectorXd> states;  // x^0.. when record_states is set
};

// Iterates x <- F([x | loads]) until consecutive states agree within tol
// (Euclidean, inclusive). A map that lands exactly on its fixed point after
// one move therefore reports one iteration and two applications.
FixedPointResult fixed_point_solve(const MlpParams& p,
                                   const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& loads,
                                   const FixedPointOptions& opt = {});

// JSON model file with base64-packed little-endian doubles.
void save_model(const MlpParams& p, const std::string& path);
MlpParams load_model(const std::string& path);

}  // namespace gridnewton
