#include "gridnewton/grid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace gridnewton {

namespace {

struct RawTable {
  std::vector<std::vector<double>> rows;
  std::vector<int> line_no;
};

[[noreturn]] void fail_parse(int line, const std::string& what) {
  throw parse_error("line " + std::to_string(line) + ": " + what);
}

// Pulls "mpc.<name> = [ rows ];" tables and "mpc.baseMVA = <num>;" out of
// MATLAB-style case text. Comments start with '%'.
class CaseText {
 public:
  explicit CaseText(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int no = 0;
    std::string table;  // name of the table currently being read
    while (std::getline(in, line)) {
      ++no;
      if (auto pos = line.find('%'); pos != std::string::npos)
        line.erase(pos);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;

      if (table.empty()) {
        if (trimmed.rfind("mpc.", 0) != 0) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos) continue;
        std::string name = trim(trimmed.substr(4, eq - 4));
        std::string rhs = trim(trimmed.substr(eq + 1));
        if (rhs.rfind('[', 0) == 0) {
          table = name;
          rhs = trim(rhs.substr(1));
          if (!rhs.empty()) consume_row(name, rhs, no);
        } else {
          scalars_[name] = std::make_pair(rhs, no);
        }
      } else {
        if (auto close = trimmed.find(']'); close != std::string::npos) {
          std::string head = trim(trimmed.substr(0, close));
          if (!head.empty()) consume_row(table, head, no);
          table.clear();
        } else {
          consume_row(table, trimmed, no);
        }
      }
    }
    if (!table.empty())
      throw parse_error("unterminated matrix mpc." + table);
  }

  const RawTable* table(const std::string& name) const {
    auto it = tables_.find(name);
    return it == tables_.end() ? nullptr : &it->second;
  }

  double scalar(const std::string& name, double fallback) const {
    auto it = scalars_.find(name);
    if (it == scalars_.end()) return fallback;
    const auto& [rhs, line] = it->second;
    char* end = nullptr;
    double v = std::strtod(rhs.c_str(), &end);
    if (end == rhs.c_str()) fail_parse(line, "expected number for " + name);
    return v;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  void consume_row(const std::string& name, const std::string& row, int no) {
    std::vector<double> vals;
    const char* p = row.c_str();
    while (*p) {
      while (*p == ' ' || *p == '\t' || *p == ',' || *p == ';') ++p;
      if (!*p) break;
      char* end = nullptr;
      double v = std::strtod(p, &end);
      if (end == p)
        fail_parse(no, "malformed entry in mpc." + name + " near '" +
                           std::string(p).substr(0, 12) + "'");
      vals.push_back(v);
      p = end;
    }
    if (!vals.empty()) {
      tables_[name].rows.push_back(std::move(vals));
      tables_[name].line_no.push_back(no);
    }
  }

  std::map<std::string, RawTable> tables_;
  std::map<std::string, std::pair<std::string, int>> scalars_;
};

void check_connected(const Network& net) {
  const int nb = net.n_bus();
  std::vector<std::vector<int>> adj(nb);
  for (const auto& br : net.branches) {
    if (!br.status) continue;
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::vector<char> seen(nb, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int w : adj[u])
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
  }
  if (count != nb)
    throw validation_error(
        "in-service branch graph is disconnected (" +
        std::to_string(nb - count) + " unreachable buses)");
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// 53-bit uniform in [0, 1); fixed algorithm so draws are identical across
// platforms and standard libraries.
double uniform01(std::uint64_t& state) {
  state = splitmix64(state);
  return static_cast<double>(state >> 11) * 0x1.0p-53;
}

}  // namespace

int Network::n_branch_on() const {
  int c = 0;
  for (const auto& b : branches) c += b.status ? 1 : 0;
  return c;
}

int Network::slack_bus() const {
  for (const auto& b : buses)
    if (b.type == BusType::Slack) return b.id;
  throw validation_error("network has no slack bus");
}

double Network::total_pmax() const {
  double s = 0.0;
  for (const auto& g : generators) s += g.p_max;
  return s;
}

Network parse_case(const std::string& text) {
  CaseText ct(text);
  Network net;
  net.case_hash = content_hash(text);
  net.base_mva = ct.scalar("baseMVA", 100.0);
  if (!(net.base_mva > 0))
    throw validation_error("baseMVA must be positive");

  const RawTable* bus = ct.table("bus");
  const RawTable* gen = ct.table("gen");
  const RawTable* branch = ct.table("branch");
  const RawTable* gencost = ct.table("gencost");
  if (!bus || bus->rows.empty()) throw parse_error("missing mpc.bus table");
  if (!gen || gen->rows.empty()) throw parse_error("missing mpc.gen table");
  if (!branch || branch->rows.empty())
    throw parse_error("missing mpc.branch table");
  if (!gencost || gencost->rows.empty())
    throw parse_error("missing mpc.gencost table");

  std::map<int, int> ext2int;
  int slack_count = 0;
  for (std::size_t i = 0; i < bus->rows.size(); ++i) {
    const auto& r = bus->rows[i];
    const int line = bus->line_no[i];
    if (r.size() < 13) fail_parse(line, "bus row needs 13 columns");
    Bus b;
    b.id = static_cast<int>(i);
    b.ext_id = static_cast<int>(r[0]);
    const int type = static_cast<int>(r[1]);
    switch (type) {
      case 1: b.type = BusType::PQ; break;
      case 2: b.type = BusType::PV; break;
      case 3: b.type = BusType::Slack; ++slack_count; break;
      default:
        fail_parse(line, "unsupported bus type " + std::to_string(type));
    }
    b.pd = r[2];
    b.qd = r[3];
    b.gs = r[4];
    b.bs = r[5];
    b.v_max = r[11];
    b.v_min = r[12];
    if (!(b.v_min < b.v_max))
      throw validation_error("bus " + std::to_string(b.ext_id) +
                             ": v_min must be below v_max");
    if (!ext2int.emplace(b.ext_id, b.id).second)
      fail_parse(line, "duplicate bus id " + std::to_string(b.ext_id));
    net.buses.push_back(b);
  }
  if (slack_count != 1)
    throw validation_error("expected exactly one slack bus, found " +
                           std::to_string(slack_count));

  auto bus_ref = [&](double ext, int line) {
    auto it = ext2int.find(static_cast<int>(ext));
    if (it == ext2int.end())
      fail_parse(line, "reference to unknown bus " +
                           std::to_string(static_cast<int>(ext)));
    return it->second;
  };

  if (gencost->rows.size() != gen->rows.size())
    throw parse_error("mpc.gencost must have one row per generator (" +
                      std::to_string(gencost->rows.size()) + " vs " +
                      std::to_string(gen->rows.size()) + ")");

  for (std::size_t i = 0; i < gen->rows.size(); ++i) {
    const auto& r = gen->rows[i];
    const int line = gen->line_no[i];
    if (r.size() < 10) fail_parse(line, "gen row needs at least 10 columns");
    Generator g;
    g.bus = bus_ref(r[0], line);
    g.q_max = r[3];
    g.q_min = r[4];
    g.status = r[7] > 0;
    g.p_max = r[8];
    g.p_min = r[9];
    if (g.p_min > g.p_max || g.q_min > g.q_max)
      throw validation_error("generator at bus " +
                             std::to_string(static_cast<int>(r[0])) +
                             ": bounds out of order");

    const auto& c = gencost->rows[i];
    const int cline = gencost->line_no[i];
    if (c.size() < 4) fail_parse(cline, "gencost row needs at least 4 columns");
    const int model = static_cast<int>(c[0]);
    const int ncost = static_cast<int>(c[3]);
    if (model != 2)
      fail_parse(cline,
                 "piecewise-linear cost (model 1) not supported; only "
                 "polynomial model 2");
    if (ncost < 1 || ncost > 3)
      fail_parse(cline, "polynomial cost degree must be at most 2");
    if (c.size() < static_cast<std::size_t>(4 + ncost))
      fail_parse(cline, "gencost row shorter than its NCOST");
    // Coefficients are listed highest degree first.
    double cc[3] = {0.0, 0.0, 0.0};  // c2, c1, c0
    for (int k = 0; k < ncost; ++k) cc[3 - ncost + k] = c[4 + k];
    g.c2 = cc[0];
    g.c1 = cc[1];
    g.c0 = cc[2];
    if (!std::isfinite(g.c2) || !std::isfinite(g.c1) || !std::isfinite(g.c0))
      fail_parse(cline, "non-finite cost coefficient");

    if (g.status) net.generators.push_back(g);
  }
  if (net.generators.empty())
    throw validation_error("no in-service generators");

  for (std::size_t i = 0; i < branch->rows.size(); ++i) {
    const auto& r = branch->rows[i];
    const int line = branch->line_no[i];
    if (r.size() < 11) fail_parse(line, "branch row needs at least 11 columns");
    Branch br;
    br.from = bus_ref(r[0], line);
    br.to = bus_ref(r[1], line);
    if (br.from == br.to)
      fail_parse(line, "branch endpoints must differ");
    br.r = r[2];
    br.x = r[3];
    br.b = r[4];
    br.tap = r[8] == 0.0 ? 1.0 : r[8];
    br.shift = r[9] * std::numbers::pi / 180.0;
    br.status = r[10] > 0;
    net.branches.push_back(br);
  }

  for (const auto& b : net.buses)
    if (b.pd != 0.0 || b.qd != 0.0) net.load_buses.push_back(b.id);

  check_connected(net);
  return net;
}

Network load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open case file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

Eigen::SparseMatrix<std::complex<double>> build_admittance(const Network& net) {
  using cd = std::complex<double>;
  const int nb = net.n_bus();
  std::vector<Eigen::Triplet<cd>> trip;
  trip.reserve(4 * net.branches.size() + nb);

  for (const auto& br : net.branches) {
    if (!br.status) continue;
    const double z2 = br.r * br.r + br.x * br.x;
    if (z2 == 0.0)
      throw validation_error("zero-impedance in-service branch " +
                             std::to_string(net.buses[br.from].ext_id) + "-" +
                             std::to_string(net.buses[br.to].ext_id));
    const cd ys = 1.0 / cd(br.r, br.x);
    const cd ysh(0.0, br.b / 2.0);
    const cd tap = std::polar(br.tap, br.shift);
    const cd ytt = ys + ysh;
    const cd yff = ytt / (br.tap * br.tap);
    const cd yft = -ys / std::conj(tap);
    const cd ytf = -ys / tap;
    trip.emplace_back(br.from, br.from, yff);
    trip.emplace_back(br.from, br.to, yft);
    trip.emplace_back(br.to, br.from, ytf);
    trip.emplace_back(br.to, br.to, ytt);
  }
  for (const auto& b : net.buses)
    trip.emplace_back(b.id, b.id, cd(b.gs, b.bs) / net.base_mva);

  Eigen::SparseMatrix<cd> y(nb, nb);
  y.setFromTriplets(trip.begin(), trip.end());
  return y;
}

Scenario base_scenario(const Network& net) {
  Scenario sc;
  sc.pd.reserve(net.load_buses.size());
  sc.qd.reserve(net.load_buses.size());
  for (int b : net.load_buses) {
    sc.pd.push_back(net.buses[b].pd);
    sc.qd.push_back(net.buses[b].qd);
  }
  return sc;
}

Scenario perturb_loads(const Network& net, std::uint64_t seed, double range) {
  if (!(range >= 0.0 && range < 1.0))
    throw std::invalid_argument("perturbation range must be in [0, 1)");
  Scenario sc = base_scenario(net);
  sc.seed = seed;
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < sc.pd.size(); ++i) {
    sc.pd[i] *= 1.0 + range * (2.0 * uniform01(state) - 1.0);
    sc.qd[i] *= 1.0 + range * (2.0 * uniform01(state) - 1.0);
  }
  return sc;
}

std::vector<double> load_vector_pu(const Network& net, const Scenario& sc) {
  const std::size_t nl = net.load_buses.size();
  if (sc.pd.size() != nl || sc.qd.size() != nl)
    throw std::invalid_argument("scenario does not match network load buses");
  std::vector<double> out(2 * nl);
  for (std::size_t i = 0; i < nl; ++i) {
    out[i] = sc.pd[i] / net.base_mva;
    out[nl + i] = sc.qd[i] / net.base_mva;
  }
  return out;
}

void write_scenario_csv(const Network& net, const Scenario& sc,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "bus_id,Pd_MW,Qd_MVAr\n";
  char buf[96];
  for (std::size_t i = 0; i < net.load_buses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n",
                  net.buses[net.load_buses[i]].ext_id, sc.pd[i], sc.qd[i]);
    out << buf;
  }
}

Scenario read_scenario_csv(const Network& net, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::map<int, std::pair<double, double>> by_ext;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty scenario file");
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    int ext = 0;
    double pd = 0, qd = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &ext, &pd, &qd) != 3)
      throw std::runtime_error(path + ":" + std::to_string(no) +
                               ": expected bus_id,Pd_MW,Qd_MVAr");
    by_ext[ext] = {pd, qd};
  }
  Scenario sc;
  for (int b : net.load_buses) {
    auto it = by_ext.find(net.buses[b].ext_id);
    if (it == by_ext.end())
      throw std::runtime_error(path + ": missing load bus " +
                               std::to_string(net.buses[b].ext_id));
    sc.pd.push_back(it->second.first);
    sc.qd.push_back(it->second.second);
  }
  if (by_ext.size() != net.load_buses.size())
    throw std::runtime_error(path + ": has rows for non-load buses");
  return sc;
}

void write_scenario_batch(const Network& net, int count, std::uint64_t seed,
                          double range, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    Scenario sc = perturb_loads(net, scenario_seed(seed, i), range);
    char name[64];
    std::snprintf(name, sizeof name, "scenario_%04d.csv", i);
    write_scenario_csv(net, sc, (std::filesystem::path(dir) / name).string());
  }
  nlohmann::ordered_json manifest{
      {"seed", seed}, {"range", range}, {"base_case_hash", net.case_hash},
      {"count", count}};
  std::ofstream out(std::filesystem::path(dir) / "scenarios_manifest.json");
  out << manifest.dump(2) << "\n";
}

std::uint64_t scenario_seed(std::uint64_t batch_seed, int index) {
  return splitmix64(batch_seed ^
                    (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index + 1)));
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string make_synthetic_case(int n_bus) {
  if (n_bus < 4) throw std::invalid_argument("synthetic case needs >= 4 buses");
  std::ostringstream out;
  out << "function mpc = synth" << n_bus << "\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = 100;\n";

  auto is_gen_bus = [](int b) { return (b - 1) % 5 == 0; };
  int n_gen = 0;
  double total_load = 0.0;
  std::vector<double> pd(n_bus + 1, 0.0), qd(n_bus + 1, 0.0);
  for (int b = 1; b <= n_bus; ++b) {
    if (is_gen_bus(b)) {
      ++n_gen;
    } else {
      pd[b] = 6.0 + 4.0 * std::sin(0.7 * b);
      qd[b] = 0.35 * pd[b];
      total_load += pd[b];
    }
  }
  const double pmax = std::ceil(1.6 * total_load / n_gen);

  out << "mpc.bus = [\n";
  char row[256];
  for (int b = 1; b <= n_bus; ++b) {
    const int type = b == 1 ? 3 : (is_gen_bus(b) ? 2 : 1);
    std::snprintf(row, sizeof row,
                  "\t%d\t%d\t%.6g\t%.6g\t0\t0\t1\t1\t0\t135\t1\t1.06\t0.94;\n",
                  b, type, pd[b], qd[b]);
    out << row;
  }
  out << "];\n";

  out << "mpc.gen = [\n";
  for (int b = 1; b <= n_bus; ++b) {
    if (!is_gen_bus(b)) continue;
    std::snprintf(row, sizeof row,
                  "\t%d\t%.6g\t0\t%.6g\t%.6g\t1\t100\t1\t%.6g\t0;\n", b,
                  0.5 * pmax, 0.6 * pmax, -0.4 * pmax, pmax);
    out << row;
  }
  out << "];\n";

  out << "mpc.branch = [\n";
  auto emit_branch = [&](int f, int t, double r, double x, double bch) {
    std::snprintf(row, sizeof row,
                  "\t%d\t%d\t%.6g\t%.6g\t%.6g\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
                  f, t, r, x, bch);
    out << row;
  };
  for (int b = 1; b < n_bus; ++b)
    emit_branch(b, b + 1, 0.008 + 0.002 * (b % 5), 0.03 + 0.01 * (b % 7),
                0.02);
  emit_branch(n_bus, 1, 0.01, 0.05, 0.02);
  for (int b = 1; b + 7 <= n_bus; b += 11)
    emit_branch(b, b + 7, 0.012, 0.06, 0.01);
  out << "];\n";

  out << "mpc.gencost = [\n";
  int gi = 0;
  for (int b = 1; b <= n_bus; ++b) {
    if (!is_gen_bus(b)) continue;
    std::snprintf(row, sizeof row, "\t2\t0\t0\t3\t%.6g\t%.6g\t0;\n",
                  0.01 + 0.005 * (gi % 4), 2.0 + 0.5 * (gi % 3));
    out << row;
    ++gi;
  }
  out << "];\n";
  return out.str();
}

}  // namespace gridnewton
