#include "gridnewton/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

namespace gridnewton {

namespace {

double uniform_pm1(std::mt19937_64& eng) {
  // Fixed transform of the raw engine output; the engine itself is fully
  // specified, so draws are identical everywhere.
  return 2.0 * (static_cast<double>(eng() >> 11) * 0x1.0p-53) - 1.0;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string b64_encode(const double* data, std::size_t count) {
  static const char tab[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  const std::size_t len = count * sizeof(double);
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < len) v |= bytes[i + 1] << 8;
    if (i + 2 < len) v |= bytes[i + 2];
    out.push_back(tab[(v >> 18) & 63]);
    out.push_back(tab[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? tab[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? tab[v & 63] : '=');
  }
  return out;
}

std::vector<double> b64_decode(const std::string& text, std::size_t expect) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  unsigned acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = val(c);
    if (v < 0) throw std::runtime_error("invalid base64 payload");
    acc = (acc << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
    }
  }
  if (bytes.size() != expect * sizeof(double))
    throw std::runtime_error("base64 payload has wrong length");
  std::vector<double> out(expect);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

// Forward pass in normalized space for a row-major batch of pre-activated
// inputs A = relu(normalized). Fills H (batch x n_hidden) and Yn.
void forward_normalized(const MlpParams& p, const RowMat& a, RowMat& h,
                        RowMat& yn, kernels::Exec mode) {
  const std::size_t rows = static_cast<std::size_t>(a.rows());
  h.resize(a.rows(), p.n_hidden);
  kernels::gemm_nt(a.data(), p.w1.data(), h.data(), rows,
                   static_cast<std::size_t>(p.n_hidden),
                   static_cast<std::size_t>(p.n_in), mode);
  kernels::add_row_broadcast(h.data(), p.b1.data(), rows,
                             static_cast<std::size_t>(p.n_hidden), mode);
  kernels::tanh_inplace(h.data(), rows * static_cast<std::size_t>(p.n_hidden),
                        mode);
  yn.resize(a.rows(), p.n_out);
  kernels::gemm_nt(h.data(), p.w2.data(), yn.data(), rows,
                   static_cast<std::size_t>(p.n_out),
                   static_cast<std::size_t>(p.n_hidden), mode);
  kernels::add_row_broadcast(yn.data(), p.b2.data(), rows,
                             static_cast<std::size_t>(p.n_out), mode);
}

struct AdamState {
  RowMat mw1, vw1, mw2, vw2;
  Eigen::VectorXd mb1, vb1, mb2, vb2;
  long t = 0;

  explicit AdamState(const MlpParams& p)
      : mw1(RowMat::Zero(p.n_hidden, p.n_in)),
        vw1(RowMat::Zero(p.n_hidden, p.n_in)),
        mw2(RowMat::Zero(p.n_out, p.n_hidden)),
        vw2(RowMat::Zero(p.n_out, p.n_hidden)),
        mb1(Eigen::VectorXd::Zero(p.n_hidden)),
        vb1(Eigen::VectorXd::Zero(p.n_hidden)),
        mb2(Eigen::VectorXd::Zero(p.n_out)),
        vb2(Eigen::VectorXd::Zero(p.n_out)) {}

  template <typename M>
  void update_one(M& param, M& m, M& v, const M& grad,
                  const TrainOptions& opt, double bc1, double bc2) {
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
    v = (opt.beta2 * v.array() +
         (1.0 - opt.beta2) * grad.array().square()).matrix();
    param.array() -=
        opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
  }
};

}  // namespace

int heuristic_hidden(int n_in, int n_out) {
  return static_cast<int>(std::ceil(
      std::sqrt(static_cast<double>(n_in) * static_cast<double>(n_out))));
}

MlpParams init_network(int n_in, int n_out, int n_hidden, std::uint64_t seed,
                       const NormStats& norm, const Eigen::VectorXd& clamp_lo,
                       const Eigen::VectorXd& clamp_hi,
                       const std::string& case_hash) {
  if (n_hidden <= 0) n_hidden = heuristic_hidden(n_in, n_out);
  if (norm.in_mean.size() != n_in || norm.out_mean.size() != n_out)
    throw std::invalid_argument("normalization statistics do not match sizes");
  if (clamp_lo.size() != n_out || clamp_hi.size() != n_out)
    throw std::invalid_argument("clamp bounds do not match output size");

  MlpParams p;
  p.n_in = n_in;
  p.n_hidden = n_hidden;
  p.n_out = n_out;
  p.norm = norm;
  p.clamp_lo = clamp_lo;
  p.clamp_hi = clamp_hi;
  p.case_hash = case_hash;

  std::mt19937_64 eng(seed);
  const double lim1 = std::sqrt(6.0 / (n_in + n_hidden));
  p.w1.resize(n_hidden, n_in);
  for (int i = 0; i < n_hidden; ++i)
    for (int j = 0; j < n_in; ++j) p.w1(i, j) = lim1 * uniform_pm1(eng);
  p.b1 = Eigen::VectorXd::Zero(n_hidden);
  const double lim2 = std::sqrt(6.0 / (n_hidden + n_out));
  p.w2.resize(n_out, n_hidden);
  for (int i = 0; i < n_out; ++i)
    for (int j = 0; j < n_hidden; ++j) p.w2(i, j) = lim2 * uniform_pm1(eng);
  p.b2 = Eigen::VectorXd::Zero(n_out);
  return p;
}

Eigen::VectorXd mlp_apply(const MlpParams& p, const Eigen::VectorXd& input) {
  if (input.size() != p.n_in)
    throw std::invalid_argument("input size does not match the network");
  Eigen::VectorXd a =
      ((input - p.norm.in_mean).cwiseQuotient(p.norm.in_std)).cwiseMax(0.0);
  Eigen::VectorXd h = (p.w1 * a + p.b1).array().tanh().matrix();
  Eigen::VectorXd yn = p.w2 * h + p.b2;
  Eigen::VectorXd y =
      yn.cwiseProduct(p.norm.out_std) + p.norm.out_mean;
  return y.cwiseMax(p.clamp_lo).cwiseMin(p.clamp_hi);
}

RowMat mlp_apply_batch(const MlpParams& p, const RowMat& inputs,
                       kernels::Exec mode) {
  if (inputs.cols() != p.n_in)
    throw std::invalid_argument("input size does not match the network");
  RowMat a = inputs;
  for (long r = 0; r < a.rows(); ++r)
    a.row(r) = ((a.row(r).transpose() - p.norm.in_mean)
                    .cwiseQuotient(p.norm.in_std))
                   .cwiseMax(0.0)
                   .transpose();
  RowMat h, yn;
  forward_normalized(p, a, h, yn, mode);
  RowMat y(yn.rows(), yn.cols());
  for (long r = 0; r < yn.rows(); ++r)
    y.row(r) = ((yn.row(r).transpose().cwiseProduct(p.norm.out_std) +
                 p.norm.out_mean)
                    .cwiseMax(p.clamp_lo)
                    .cwiseMin(p.clamp_hi))
                   .transpose();
  return y;
}

TrainReport train(MlpParams& p, const Dataset& ds, const TrainOptions& opt) {
  if (ds.n_pairs() == 0)
    throw std::invalid_argument("cannot train on an empty dataset");
  if (ds.n + ds.n_loads != p.n_in || ds.n != p.n_out)
    throw std::invalid_argument("dataset does not match the network sizes");

  const int np = ds.n_pairs();
  const int ni = p.n_in;
  const int no = p.n_out;

  // The input layer has no trainable parameters, so its activations are
  // fixed per sample and can be precomputed, as can the normalized targets.
  RowMat a0(np, ni);
  RowMat tgt(np, no);
  for (int r = 0; r < np; ++r) {
    for (int j = 0; j < ds.n; ++j)
      a0(r, j) = std::max(
          0.0, (ds.x(r, j) - p.norm.in_mean[j]) / p.norm.in_std[j]);
    for (int j = 0; j < ds.n_loads; ++j)
      a0(r, ds.n + j) =
          std::max(0.0, (ds.loads(r, j) - p.norm.in_mean[ds.n + j]) /
                            p.norm.in_std[ds.n + j]);
    for (int j = 0; j < no; ++j)
      tgt(r, j) = (ds.x_next(r, j) - p.norm.out_mean[j]) / p.norm.out_std[j];
  }
  Eigen::VectorXd lo_n =
      (p.clamp_lo - p.norm.out_mean).cwiseQuotient(p.norm.out_std);
  Eigen::VectorXd hi_n =
      (p.clamp_hi - p.norm.out_mean).cwiseQuotient(p.norm.out_std);

  AdamState adam(p);
  MlpParams ckpt = p;
  AdamState adam_ckpt = adam;

  TrainReport rep;
  std::vector<int> order(np);
  for (int i = 0; i < np; ++i) order[i] = i;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    // Deterministic per-epoch shuffle.
    std::uint64_t st =
        splitmix64(opt.seed ^ (0xa076bd64c9e5f3ULL + 977u * epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      st = splitmix64(st);
      std::swap(order[i - 1], order[st % i]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < np; start += opt.batch) {
      const int bs = std::min(opt.batch, np - start);
      RowMat xb(bs, ni), tb(bs, no);
      for (int r = 0; r < bs; ++r) {
        xb.row(r) = a0.row(order[start + r]);
        tb.row(r) = tgt.row(order[start + r]);
      }

      RowMat h, yn;
      forward_normalized(p, xb, h, yn, opt.exec);

      // Clamp in normalized space; its subgradient kills components that got
      // clipped. Equivalent to clamping after denormalization, since the
      // denormalization is a strictly increasing affine map per feature.
      RowMat yc = yn;
      RowMat inside = RowMat::Ones(bs, no);
      for (int r = 0; r < bs; ++r)
        for (int j = 0; j < no; ++j) {
          if (yc(r, j) < lo_n[j]) {
            yc(r, j) = lo_n[j];
            inside(r, j) = 0.0;
          } else if (yc(r, j) > hi_n[j]) {
            yc(r, j) = hi_n[j];
            inside(r, j) = 0.0;
          }
        }

      RowMat err = yc - tb;
      loss_sum += err.array().square().sum();

      RowMat dyn = (2.0 / (static_cast<double>(bs) * no)) *
                   err.cwiseProduct(inside);
      RowMat dw2(no, p.n_hidden);
      kernels::gemm_tn(dyn.data(), h.data(), dw2.data(),
                       static_cast<std::size_t>(no),
                       static_cast<std::size_t>(p.n_hidden),
                       static_cast<std::size_t>(bs), opt.exec);
      Eigen::VectorXd db2(no);
      kernels::colsum(dyn.data(), db2.data(), static_cast<std::size_t>(bs),
                      static_cast<std::size_t>(no), opt.exec);
      RowMat dh(bs, p.n_hidden);
      kernels::gemm_nn(dyn.data(), p.w2.data(), dh.data(),
                       static_cast<std::size_t>(bs),
                       static_cast<std::size_t>(p.n_hidden),
                       static_cast<std::size_t>(no), opt.exec);
      RowMat dz1 = dh.cwiseProduct(
          (RowMat::Ones(bs, p.n_hidden) - h.cwiseProduct(h)));
      RowMat dw1(p.n_hidden, ni);
      kernels::gemm_tn(dz1.data(), xb.data(), dw1.data(),
                       static_cast<std::size_t>(p.n_hidden),
                       static_cast<std::size_t>(ni),
                       static_cast<std::size_t>(bs), opt.exec);
      Eigen::VectorXd db1(p.n_hidden);
      kernels::colsum(dz1.data(), db1.data(), static_cast<std::size_t>(bs),
                      static_cast<std::size_t>(p.n_hidden), opt.exec);

      ++adam.t;
      const double bc1 = 1.0 - std::pow(opt.beta1, adam.t);
      const double bc2 = 1.0 - std::pow(opt.beta2, adam.t);
      adam.update_one(p.w1, adam.mw1, adam.vw1, dw1, opt, bc1, bc2);
      adam.update_one(p.w2, adam.mw2, adam.vw2, dw2, opt, bc1, bc2);
      adam.update_one(p.b1, adam.mb1, adam.vb1, db1, opt, bc1, bc2);
      adam.update_one(p.b2, adam.mb2, adam.vb2, db2, opt, bc1, bc2);
    }

    const double epoch_loss = loss_sum / (static_cast<double>(np) * no);
    if (!std::isfinite(epoch_loss) || !p.w1.allFinite() ||
        !p.w2.allFinite() || !p.b1.allFinite() || !p.b2.allFinite()) {
      p = ckpt;
      adam = adam_ckpt;
      rep.restored_checkpoint = true;
      break;
    }
    rep.epoch_loss.push_back(epoch_loss);
    ++rep.epochs_run;
    ckpt = p;
    adam_ckpt = adam;
  }

  rep.final_loss = rep.epoch_loss.empty() ? 0.0 : rep.epoch_loss.back();
  return rep;
}

ContractionInfo contraction_modulus(const MlpParams& p) {
  ContractionInfo info;
  info.n_n = p.n_in + p.n_hidden + p.n_out;
  double cs = 0.0;
  for (int i = 0; i < p.n_hidden; ++i)
    for (int j = 0; j < p.n_in; ++j)
      cs = std::max(cs, std::abs(p.w1(i, j) / p.norm.in_std[j]));
  for (int i = 0; i < p.n_out; ++i)
    for (int j = 0; j < p.n_hidden; ++j)
      cs = std::max(cs, std::abs(p.norm.out_std[i] * p.w2(i, j)));
  info.c_star = cs;
  info.c = static_cast<double>(info.n_n) * cs;
  return info;
}

ContractionInfo project_contraction(MlpParams& p, double margin) {
  if (!(margin > 0.0))
    throw std::invalid_argument("contraction margin must be positive");
  const int n_n = p.n_in + p.n_hidden + p.n_out;
  const double cap = margin / static_cast<double>(n_n);
  for (int i = 0; i < p.n_hidden; ++i)
    for (int j = 0; j < p.n_in; ++j) {
      const double eff = p.w1(i, j) / p.norm.in_std[j];
      if (std::abs(eff) > cap)
        p.w1(i, j) = std::copysign(cap * p.norm.in_std[j], eff);
    }
  for (int i = 0; i < p.n_out; ++i)
    for (int j = 0; j < p.n_hidden; ++j) {
      const double eff = p.norm.out_std[i] * p.w2(i, j);
      if (std::abs(eff) > cap)
        p.w2(i, j) = std::copysign(cap / p.norm.out_std[i], eff);
    }
  return contraction_modulus(p);
}

FixedPointResult fixed_point_solve(const MlpParams& p,
                                   const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& loads,
                                   const FixedPointOptions& opt) {
  if (x0.size() != p.n_out || x0.size() + loads.size() != p.n_in)
    throw std::invalid_argument("state/load sizes do not match the network");

  FixedPointResult res;
  res.x = x0;
  if (opt.record_states) res.states.push_back(x0);

  Eigen::VectorXd u(p.n_in);
  u.tail(loads.size()) = loads;
  while (res.applications < opt.max_iter) {
    u.head(res.x.size()) = res.x;
    Eigen::VectorXd next = mlp_apply(p, u);
    ++res.applications;
    const double step = (next - res.x).norm();
    res.step_norms.push_back(step);
    if (opt.record_states) res.states.push_back(next);
    const bool done = check_convergence(res.x, next, opt.tol);
    res.x = next;
    if (done) {
      res.converged = true;
      res.iterations = res.applications - 1;
      return res;
    }
  }
  res.iterations = res.applications;
  return res;
}

void save_model(const MlpParams& p, const std::string& path) {
  nlohmann::ordered_json j{
      {"format", "gnw-model"},
      {"version", 1},
      {"case_hash", p.case_hash},
      {"n_in", p.n_in},
      {"n_hidden", p.n_hidden},
      {"n_out", p.n_out},
      {"activations", {"relu", "tanh", "identity"}},
      {"in_mean", b64_encode(p.norm.in_mean.data(), p.n_in)},
      {"in_std", b64_encode(p.norm.in_std.data(), p.n_in)},
      {"out_mean", b64_encode(p.norm.out_mean.data(), p.n_out)},
      {"out_std", b64_encode(p.norm.out_std.data(), p.n_out)},
      {"clamp_lo", b64_encode(p.clamp_lo.data(), p.n_out)},
      {"clamp_hi", b64_encode(p.clamp_hi.data(), p.n_out)},
      {"w1", b64_encode(p.w1.data(),
                        static_cast<std::size_t>(p.n_hidden) * p.n_in)},
      {"b1", b64_encode(p.b1.data(), p.n_hidden)},
      {"w2", b64_encode(p.w2.data(),
                        static_cast<std::size_t>(p.n_out) * p.n_hidden)},
      {"b2", b64_encode(p.b2.data(), p.n_out)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

MlpParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
  if (j.value("format", "") != "gnw-model")
    throw std::runtime_error(path + ": not a model file");
  if (j.value("version", 0) != 1)
    throw std::runtime_error(path + ": unsupported model version");

  MlpParams p;
  p.n_in = j.at("n_in").get<int>();
  p.n_hidden = j.at("n_hidden").get<int>();
  p.n_out = j.at("n_out").get<int>();
  if (p.n_in <= 0 || p.n_hidden <= 0 || p.n_out <= 0)
    throw std::runtime_error(path + ": bad layer sizes");
  p.case_hash = j.value("case_hash", "");

  auto vec = [&](const char* key, int len) {
    std::vector<double> v =
        b64_decode(j.at(key).get<std::string>(), static_cast<std::size_t>(len));
    return Eigen::Map<Eigen::VectorXd>(v.data(), len).eval();
  };
  p.norm.in_mean = vec("in_mean", p.n_in);
  p.norm.in_std = vec("in_std", p.n_in);
  p.norm.out_mean = vec("out_mean", p.n_out);
  p.norm.out_std = vec("out_std", p.n_out);
  p.clamp_lo = vec("clamp_lo", p.n_out);
  p.clamp_hi = vec("clamp_hi", p.n_out);

  std::vector<double> w1 = b64_decode(
      j.at("w1").get<std::string>(),
      static_cast<std::size_t>(p.n_hidden) * p.n_in);
  p.w1 = Eigen::Map<RowMat>(w1.data(), p.n_hidden, p.n_in);
  p.b1 = vec("b1", p.n_hidden);
  std::vector<double> w2 = b64_decode(
      j.at("w2").get<std::string>(),
      static_cast<std::size_t>(p.n_out) * p.n_hidden);
  p.w2 = Eigen::Map<RowMat>(w2.data(), p.n_out, p.n_hidden);
  p.b2 = vec("b2", p.n_out);
  return p;
}

}  // namespace gridnewton
