#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace gridnewton {

/// Thrown when a case file cannot be parsed; message names the line.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a parsed case violates a structural requirement
/// (no slack bus, disconnected graph, bad bounds, ...).
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BusType { Slack, PV, PQ };

struct Bus {
  int id = 0;          // dense internal index, 0..n_bus-1
  int ext_id = 0;      // bus number as written in the case file
  BusType type = BusType::PQ;
  double gs = 0.0;     // shunt conductance, MW at v = 1 pu
  double bs = 0.0;     // shunt susceptance, MVAr at v = 1 pu
  double v_min = 0.9;
  double v_max = 1.1;
  double pd = 0.0;     // base real demand, MW
  double qd = 0.0;     // base reactive demand, MVAr
};

struct Branch {
  int from = 0;        // internal bus index
  int to = 0;
  double r = 0.0;      // series resistance, pu
  double x = 0.0;      // series reactance, pu
  double b = 0.0;      // total line charging susceptance, pu
  double tap = 1.0;    // off-nominal turns ratio
  double shift = 0.0;  // phase shift, radians
  bool status = true;
};

struct Generator {
  int bus = 0;         // internal bus index
  double p_min = 0.0, p_max = 0.0;  // MW
  double q_min = 0.0, q_max = 0.0;  // MVAr
  double c2 = 0.0, c1 = 0.0, c0 = 0.0;  // $/MW^2 h, $/MWh, $/h
  bool status = true;
};

/// Immutable grid description. Buses are internally renumbered to dense
/// 0-based ids; out-of-service generators are dropped at parse time while
/// out-of-service branches are kept with status = false and skipped by the
/// admittance build. Safe to share across threads once constructed.
struct Network {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;  // in-service only
  std::vector<int> load_buses;        // internal ids with pd != 0 or qd != 0
  std::string case_hash;              // FNV-1a of the source text, hex

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_gen() const { return static_cast<int>(generators.size()); }
  int n_load() const { return static_cast<int>(load_buses.size()); }
  int n_branch_on() const;
  int slack_bus() const;              // internal index of the slack bus
  /// Dimension of the state vector [v, theta, pg, qg].
  int state_dim() const { return 2 * n_bus() + 2 * n_gen(); }
  double total_pmax() const;          // MW, in-service generators
};

/// One perturbed load profile. Demand vectors follow load_buses order and
/// stay in MW / MVAr; conversion to per-unit happens at evaluation time.
struct Scenario {
  std::vector<double> pd;  // MW, one entry per load bus
  std::vector<double> qd;  // MVAr
  std::uint64_t seed = 0;
  enum class Feasible { Unknown, Yes, No };
  Feasible feasible = Feasible::Unknown;
};

/// Parses the documented subset of the MATPOWER case format: the mpc.baseMVA
/// scalar and mpc.bus / mpc.gen / mpc.branch / mpc.gencost matrices from
/// plain text. Only polynomial costs of degree <= 2 are accepted.
Network parse_case(const std::string& text);

/// Reads a case file from disk and parses it.
Network load_case(const std::string& path);

/// Bus admittance matrix with the standard tap / shift / charging handling
/// plus bus shunts. Throws validation_error for a zero-impedance in-service
/// branch.
Eigen::SparseMatrix<std::complex<double>> build_admittance(const Network& net);

/// Base-load scenario (no perturbation).
Scenario base_scenario(const Network& net);

/// Each load entry drawn independently and uniformly from
/// [base*(1-range), base*(1+range)], deterministic in (seed).
/// Requires 0 <= range < 1.
Scenario perturb_loads(const Network& net, std::uint64_t seed, double range);

/// Per-unit demand vector [pd_pu..., qd_pu...] of length 2*n_load, the load
/// block fed to the learned iterator.
std::vector<double> load_vector_pu(const Network& net, const Scenario& sc);

/// Scenario CSV (header bus_id,Pd_MW,Qd_MVAr; bus ids are the case file's
/// external numbers, one row per load bus).
void write_scenario_csv(const Network& net, const Scenario& sc,
                        const std::string& path);
Scenario read_scenario_csv(const Network& net, const std::string& path);

/// Writes a batch of perturbed scenarios (scenario_NNNN.csv) plus a manifest
/// JSON {seed, range, base_case_hash} into dir.
void write_scenario_batch(const Network& net, int count, std::uint64_t seed,
                          double range, const std::string& dir);

/// Deterministic per-scenario seed derivation used by batch generation.
std::uint64_t scenario_seed(std::uint64_t batch_seed, int index);

/// FNV-1a 64-bit content hash, lowercase hex.
std::string content_hash(const std::string& text);

/// Synthetic meshed test network of a given size, emitted in the same case
/// format parse_case accepts. Deterministic in its arguments. Used for
/// large-network timing runs where no standard case ships with the repo.
std::string make_synthetic_case(int n_bus);

}  // namespace gridnewton
