#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gridnewton/grid.hpp"
#include "gridnewton/solver.hpp"

namespace gridnewton {

// Training pairs harvested from solver iterate sequences. Row r holds one
// consecutive pair (x^k, x^{k+1}) of some solve plus the per-unit load vector
// of its scenario; inputs to the learned iterator are [x | loads].
struct Dataset {
  int n = 0;        // state dimension
  int n_loads = 0;  // load feature dimension (2 * number of load buses)
  std::string case_hash;
  std::vector<std::uint32_t> scenario_id;  // per pair
  std::vector<std::uint32_t> step_index;   // k within the source trajectory
  Eigen::MatrixXd x;       // n_pairs x n
  Eigen::MatrixXd x_next;  // n_pairs x n
  Eigen::MatrixXd loads;   // n_pairs x n_loads

  int n_pairs() const { return static_cast<int>(x.rows()); }
};

struct GenerateOptions {
  int scenarios = 100;
  std::uint64_t seed = 1;
  double range = 0.4;       // relative load perturbation
  double tol = 1e-9;        // reference solver tolerance
  int max_iter = 200;
  kernels::Exec exec = kernels::Exec::Serial;
};

struct GenerateSummary {
  int requested = 0;
  int converged = 0;
  int failed = 0;  // diverged or hit a numerical failure
  int n_pairs = 0;
};

// Solves one perturbed scenario per index (seed derived from the batch seed)
// and harvests iterate pairs from every converged solve. Scenario fan-out
// may run on threads; the assembled dataset is identical either way.
GenerateSummary generate_dataset(const Network& net, const GenerateOptions& opt,
                                 Dataset& out);

// Binary pair store (pairs.bin) plus a manifest describing its provenance.
// Both are deterministic for fixed inputs.
void write_dataset(const Dataset& ds, const GenerateOptions& opt,
                   const GenerateSummary& sum, const std::string& dir);
Dataset read_dataset(const std::string& dir);

void write_pairs_csv(const Dataset& ds, const std::string& path,
                     int limit = -1);

// Deterministic split keeping all pairs of a scenario on the same side.
std::pair<Dataset, Dataset> split_by_scenario(const Dataset& ds,
                                              double train_fraction,
                                              std::uint64_t seed);

// Per-feature z-score statistics. Output features reuse the statistics of the
// state part of the input so both live in one normalized space; standard
// deviations are floored at 1e-6.
struct NormStats {
  Eigen::VectorXd in_mean, in_std;   // length n + n_loads
  Eigen::VectorXd out_mean, out_std; // length n
};

NormStats compute_norm_stats(const Dataset& ds);

}  // namespace gridnewton
