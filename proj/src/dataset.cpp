#include "gridnewton/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gridnewton/acopf.hpp"

namespace gridnewton {

namespace {

constexpr char kMagic[9] = "GNWPAIRS";
constexpr std::uint32_t kVersion = 1;

struct ScenarioHarvest {
  bool converged = false;
  bool failed = false;
  std::vector<Eigen::VectorXd> states;
  std::vector<double> load_features;
};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
}

}  // namespace

GenerateSummary generate_dataset(const Network& net, const GenerateOptions& opt,
                                 Dataset& out) {
  const int n = net.state_dim();
  const int nl = 2 * net.n_load();

  std::vector<ScenarioHarvest> slots(opt.scenarios);

  // Each scenario solve is independent; fan out and collect into fixed slots
  // so the result does not depend on scheduling.
#pragma omp parallel for schedule(dynamic) if (opt.exec == kernels::Exec::OpenMP)
  for (int i = 0; i < opt.scenarios; ++i) {
    ScenarioHarvest& slot = slots[i];
    try {
      Scenario sc = perturb_loads(net, scenario_seed(opt.seed, i), opt.range);
      AcopfProblem prob(net, sc);
      SolverOptions sopt;
      sopt.tol = opt.tol;
      sopt.max_iter = opt.max_iter;
      SolveResult res = solve_acopf(prob, sopt);
      if (res.converged) {
        slot.converged = true;
        slot.states = std::move(res.trace.states);
        slot.load_features = load_vector_pu(net, sc);
      } else {
        slot.failed = true;
      }
    } catch (const numerical_failure&) {
      slot.failed = true;
    }
  }

  GenerateSummary sum;
  sum.requested = opt.scenarios;
  std::size_t total = 0;
  for (const auto& s : slots) {
    if (s.converged) {
      ++sum.converged;
      total += s.states.size() - 1;
    } else {
      ++sum.failed;
    }
  }
  sum.n_pairs = static_cast<int>(total);

  out.n = n;
  out.n_loads = nl;
  out.case_hash = net.case_hash;
  out.scenario_id.clear();
  out.step_index.clear();
  out.scenario_id.reserve(total);
  out.step_index.reserve(total);
  out.x.resize(total, n);
  out.x_next.resize(total, n);
  out.loads.resize(total, nl);

  std::size_t row = 0;
  for (int i = 0; i < opt.scenarios; ++i) {
    const auto& s = slots[i];
    if (!s.converged) continue;
    for (std::size_t k = 0; k + 1 < s.states.size(); ++k) {
      out.scenario_id.push_back(static_cast<std::uint32_t>(i));
      out.step_index.push_back(static_cast<std::uint32_t>(k));
      out.x.row(row) = s.states[k].transpose();
      out.x_next.row(row) = s.states[k + 1].transpose();
      for (int j = 0; j < nl; ++j) out.loads(row, j) = s.load_features[j];
      ++row;
    }
  }
  return sum;
}

void write_dataset(const Dataset& ds, const GenerateOptions& opt,
                   const GenerateSummary& sum, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto bin = std::filesystem::path(dir) / "pairs.bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin.string());

  out.write(kMagic, 8);
  put(out, kVersion);
  const std::uint64_t np = static_cast<std::uint64_t>(ds.n_pairs());
  put(out, np);
  put(out, static_cast<std::uint32_t>(ds.n));
  put(out, static_cast<std::uint32_t>(ds.n_loads));
  for (std::uint64_t r = 0; r < np; ++r) {
    put(out, ds.scenario_id[r]);
    put(out, ds.step_index[r]);
  }
  std::vector<double> rowbuf(2 * ds.n + ds.n_loads);
  for (std::uint64_t r = 0; r < np; ++r) {
    for (int j = 0; j < ds.n; ++j) rowbuf[j] = ds.x(r, j);
    for (int j = 0; j < ds.n; ++j) rowbuf[ds.n + j] = ds.x_next(r, j);
    for (int j = 0; j < ds.n_loads; ++j)
      rowbuf[2 * ds.n + j] = ds.loads(r, j);
    out.write(reinterpret_cast<const char*>(rowbuf.data()),
              static_cast<std::streamsize>(rowbuf.size() * sizeof(double)));
  }
  out.close();

  nlohmann::ordered_json manifest{{"format", "gnw-dataset"},
                                  {"version", kVersion},
                                  {"case_hash", ds.case_hash},
                                  {"n", ds.n},
                                  {"n_loads", ds.n_loads},
                                  {"n_pairs", ds.n_pairs()},
                                  {"scenarios_requested", sum.requested},
                                  {"scenarios_converged", sum.converged},
                                  {"scenarios_failed", sum.failed},
                                  {"seed", opt.seed},
                                  {"range", opt.range},
                                  {"tol", opt.tol},
                                  {"max_iter", opt.max_iter}};
  std::ofstream mf(std::filesystem::path(dir) / "manifest.json",
                   std::ios::binary);
  mf << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
  const auto bin = std::filesystem::path(dir) / "pairs.bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + bin.string());

  char magic[9] = {};
  in.read(magic, 8);
  if (std::strncmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(bin.string() + ": not a pair store");
  std::uint32_t version = 0;
  get(in, version);
  if (version != kVersion)
    throw std::runtime_error(bin.string() + ": unsupported version " +
                             std::to_string(version));
  std::uint64_t np = 0;
  std::uint32_t n = 0, nl = 0;
  get(in, np);
  get(in, n);
  get(in, nl);

  Dataset ds;
  ds.n = static_cast<int>(n);
  ds.n_loads = static_cast<int>(nl);
  ds.scenario_id.resize(np);
  ds.step_index.resize(np);
  for (std::uint64_t r = 0; r < np; ++r) {
    get(in, ds.scenario_id[r]);
    get(in, ds.step_index[r]);
  }
  ds.x.resize(np, ds.n);
  ds.x_next.resize(np, ds.n);
  ds.loads.resize(np, ds.n_loads);
  std::vector<double> rowbuf(2 * ds.n + ds.n_loads);
  for (std::uint64_t r = 0; r < np; ++r) {
    in.read(reinterpret_cast<char*>(rowbuf.data()),
            static_cast<std::streamsize>(rowbuf.size() * sizeof(double)));
    for (int j = 0; j < ds.n; ++j) ds.x(r, j) = rowbuf[j];
    for (int j = 0; j < ds.n; ++j) ds.x_next(r, j) = rowbuf[ds.n + j];
    for (int j = 0; j < ds.n_loads; ++j) ds.loads(r, j) = rowbuf[2 * ds.n + j];
  }
  if (!in) throw std::runtime_error(bin.string() + ": truncated pair store");

  const auto mf = std::filesystem::path(dir) / "manifest.json";
  std::ifstream mfin(mf);
  if (!mfin)
    throw std::runtime_error("cannot open " + mf.string() +
                             " (pair stores travel with their manifest)");
  nlohmann::json manifest = nlohmann::json::parse(mfin);
  ds.case_hash = manifest.value("case_hash", "");
  if (manifest.value("n_pairs", -1) != ds.n_pairs())
    throw std::runtime_error(mf.string() + ": pair count mismatch");
  return ds;
}

void write_pairs_csv(const Dataset& ds, const std::string& path, int limit) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "scenario,step";
  for (int j = 0; j < ds.n; ++j) out << ",x" << j;
  for (int j = 0; j < ds.n; ++j) out << ",x_next" << j;
  for (int j = 0; j < ds.n_loads; ++j) out << ",load" << j;
  out << "\n";
  const int rows =
      limit < 0 ? ds.n_pairs() : std::min(limit, ds.n_pairs());
  char buf[32];
  for (int r = 0; r < rows; ++r) {
    out << ds.scenario_id[r] << "," << ds.step_index[r];
    auto emit = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    };
    for (int j = 0; j < ds.n; ++j) emit(ds.x(r, j));
    for (int j = 0; j < ds.n; ++j) emit(ds.x_next(r, j));
    for (int j = 0; j < ds.n_loads; ++j) emit(ds.loads(r, j));
    out << "\n";
  }
}

std::pair<Dataset, Dataset> split_by_scenario(const Dataset& ds,
                                              double train_fraction,
                                              std::uint64_t seed) {
  std::vector<std::uint32_t> ids(ds.scenario_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  // Seeded Fisher-Yates with a fixed generator so the split is reproducible.
  std::uint64_t state = seed;
  auto next_u64 = [&state]() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[next_u64() % i]);

  const std::size_t n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(ids.size())));
  std::vector<char> in_train_by_id;
  if (!ids.empty()) {
    const std::uint32_t max_id =
        *std::max_element(ids.begin(), ids.end());
    in_train_by_id.assign(max_id + 1, 0);
    for (std::size_t i = 0; i < n_train && i < ids.size(); ++i)
      in_train_by_id[ids[i]] = 1;
  }

  auto take = [&](bool train) {
    Dataset part;
    part.n = ds.n;
    part.n_loads = ds.n_loads;
    part.case_hash = ds.case_hash;
    std::vector<int> rows;
    for (int r = 0; r < ds.n_pairs(); ++r)
      if (static_cast<bool>(in_train_by_id[ds.scenario_id[r]]) == train)
        rows.push_back(r);
    part.x.resize(rows.size(), ds.n);
    part.x_next.resize(rows.size(), ds.n);
    part.loads.resize(rows.size(), ds.n_loads);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      part.scenario_id.push_back(ds.scenario_id[rows[i]]);
      part.step_index.push_back(ds.step_index[rows[i]]);
      part.x.row(i) = ds.x.row(rows[i]);
      part.x_next.row(i) = ds.x_next.row(rows[i]);
      part.loads.row(i) = ds.loads.row(rows[i]);
    }
    return part;
  };
  return {take(true), take(false)};
}

NormStats compute_norm_stats(const Dataset& ds) {
  if (ds.n_pairs() == 0)
    throw std::invalid_argument("cannot compute statistics of an empty dataset");
  const int ni = ds.n + ds.n_loads;
  NormStats st;
  st.in_mean.resize(ni);
  st.in_std.resize(ni);

  const double np = static_cast<double>(ds.n_pairs());
  for (int j = 0; j < ds.n; ++j) {
    st.in_mean[j] = ds.x.col(j).mean();
    st.in_std[j] = std::sqrt(
        (ds.x.col(j).array() - st.in_mean[j]).square().sum() / np);
  }
  for (int j = 0; j < ds.n_loads; ++j) {
    st.in_mean[ds.n + j] = ds.loads.col(j).mean();
    st.in_std[ds.n + j] = std::sqrt(
        (ds.loads.col(j).array() - st.in_mean[ds.n + j]).square().sum() / np);
  }
  for (int j = 0; j < ni; ++j) st.in_std[j] = std::max(st.in_std[j], 1e-6);

  st.out_mean = st.in_mean.head(ds.n);
  st.out_std = st.in_std.head(ds.n);
  return st;
}

}  // namespace gridnewton
