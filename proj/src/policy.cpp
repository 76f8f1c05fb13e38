#include "mlpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "mlpo/error.hpp"
#include "mlpo/rng.hpp"

namespace mlpo {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(int residue_count) : residues_(residue_count) {
  if (residue_count < 1 || residue_count > kAlphabetSize) {
    throw UsageError("residue_count must be in [1, 20]");
  }
}

std::vector<int> Vocabulary::encode(std::string_view residues) const {
  std::vector<int> out;
  out.reserve(residues.size());
  for (char c : residues) {
    const int id = residue_index(c);
    if (id < 0 || id >= residues_) {
      throw DataError("residue '" + std::string(1, c) + "' is outside the vocabulary");
    }
    out.push_back(id);
  }
  return out;
}

std::string Vocabulary::decode(std::span<const int> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t >= residues_) throw DataError("decode: non-residue token " + token_name(t));
    out.push_back(kAlphabet[static_cast<std::size_t>(t)]);
  }
  return out;
}

std::string Vocabulary::token_name(int id) const {
  if (id >= 0 && id < residues_) return std::string(1, kAlphabet[static_cast<std::size_t>(id)]);
  if (id == eos()) return "<eos>";
  if (id == bos()) return "<bos>";
  if (id == pad()) return "<pad>";
  return "<" + std::to_string(id) + ">";
}

// ---------------------------------------------------------------------------
// Config and layout

void ModelConfig::validate() const {
  if (residue_count < 1 || residue_count > kAlphabetSize) {
    throw UsageError("model.residue_count must be in [1, 20]");
  }
  if (width < 1 || layers < 1 || heads < 1 || context < 2 || mlp_hidden < 1 ||
      prefix_length < 1) {
    throw UsageError("model dimensions must be positive");
  }
  if (width % heads != 0) throw UsageError("model.width must be divisible by model.heads");
  if (!(init_scale >= 0.0) || !(prefix_init_scale >= 0.0)) {
    throw UsageError("model init scales must be >= 0");
  }
}

TrunkLayout::TrunkLayout(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.width);
  const auto f = static_cast<std::size_t>(c.mlp_hidden);
  const auto v = static_cast<std::size_t>(c.residue_count + 3);
  const auto o = static_cast<std::size_t>(c.residue_count + 1);
  std::size_t off = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    tensors.push_back({std::move(name), std::move(shape), off, n});
    const std::size_t at = off;
    off += n;
    return at;
  };
  tok_emb = add("tok_emb", {v, d});
  pos_emb = add("pos_emb", {static_cast<std::size_t>(c.context), d});
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.wq = add(p + "wq", {d, d});
    L.wk = add(p + "wk", {d, d});
    L.wv = add(p + "wv", {d, d});
    L.wo = add(p + "wo", {d, d});
    L.w1 = add(p + "w1", {d, f});
    L.b1 = add(p + "b1", {f});
    L.w2 = add(p + "w2", {f, d});
    L.b2 = add(p + "b2", {d});
    layers.push_back(L);
  }
  w_out = add("w_out", {d, o});
  b_out = add("b_out", {o});
  total = off;
}

// ---------------------------------------------------------------------------
// Prefixes

PrefixBank::PrefixBank(const ModelConfig& config, std::vector<std::string> names)
    : layers_(config.layers),
      width_(config.width),
      length_(config.prefix_length),
      block_(static_cast<std::size_t>(config.layers) * 2 * config.prefix_length * config.width),
      names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  if (std::adjacent_find(names_.begin(), names_.end()) != names_.end()) {
    throw UsageError("duplicate attribute in prefix bank");
  }
  for (const auto& n : names_) validate_attribute_name(n);
  values_.assign(block_ * names_.size(), 0.0);
}

std::size_t PrefixBank::index_of(std::string_view name) const {
  const auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) {
    std::string known;
    for (const auto& n : names_) known += (known.empty() ? "" : ", ") + n;
    throw UsageError("unknown attribute '" + std::string(name) + "' (known: " + known + ")");
  }
  return static_cast<std::size_t>(it - names_.begin());
}

bool PrefixBank::contains(std::string_view name) const {
  return std::binary_search(names_.begin(), names_.end(), name);
}

const double* Conditioning::keys(int layer) const {
  return values.data() + static_cast<std::size_t>(layer) * 2 * length() * width;
}

const double* Conditioning::vals(int layer) const {
  return keys(layer) + static_cast<std::size_t>(length()) * width;
}

Conditioning concat_prefixes(std::span<const PrefixView> prefixes, int prefix_length, int layers,
                             int width) {
  if (prefixes.empty()) throw UsageError("concat_prefixes: need at least one prefix");
  const std::size_t block = static_cast<std::size_t>(layers) * 2 * prefix_length * width;
  std::vector<const PrefixView*> order;
  for (const auto& p : prefixes) {
    if (p.values.size() != block) throw UsageError("concat_prefixes: prefix shape mismatch");
    order.push_back(&p);
  }
  std::sort(order.begin(), order.end(),
            [](const PrefixView* a, const PrefixView* b) { return a->attribute < b->attribute; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->attribute == order[i - 1]->attribute) {
      throw UsageError("concat_prefixes: duplicate attribute '" + order[i]->attribute + "'");
    }
  }

  Conditioning c;
  c.prefix_length = prefix_length;
  c.layers = layers;
  c.width = width;
  for (const auto* p : order) c.attributes.push_back(p->attribute);
  const std::size_t rows = static_cast<std::size_t>(prefix_length) * width;
  c.values.reserve(block * order.size());
  for (int l = 0; l < layers; ++l) {
    for (int kv = 0; kv < 2; ++kv) {
      for (const auto* p : order) {
        const double* src = p->values.data() + (static_cast<std::size_t>(l) * 2 + kv) * rows;
        c.values.insert(c.values.end(), src, src + rows);
      }
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Policy

Policy::Policy(const ModelConfig& config, std::vector<std::string> attributes,
               std::uint64_t init_seed)
    : config_(config),
      vocab_(config.residue_count),
      layout_(config),
      trunk_(layout_.total, 0.0),
      prefixes_(config, std::move(attributes)) {
  config_.validate();
  SplitMix64 rng(init_seed);
  for (const auto& t : layout_.tensors) {
    // Biases and the output projection start at zero, so the initial
    // next-token distribution is exactly uniform.
    if (t.shape.size() == 1 || t.name == "w_out") continue;
    double scale = config_.init_scale;
    if (t.name.ends_with(".wo") || t.name.ends_with(".w2")) {
      scale /= std::sqrt(2.0 * config_.layers);
    }
    for (std::size_t i = 0; i < t.count; ++i) trunk_[t.offset + i] = scale * rng.normal();
  }
  for (auto& v : prefixes_.values()) v = config_.prefix_init_scale * rng.normal();
}

Policy::Policy(const ModelConfig& config, std::vector<double> trunk, PrefixBank prefixes)
    : config_(config),
      vocab_(config.residue_count),
      layout_(config),
      trunk_(std::move(trunk)),
      prefixes_(std::move(prefixes)) {
  config_.validate();
  if (trunk_.size() != layout_.total) throw DataError("trunk parameter count mismatch");
}

Conditioning Policy::conditioning(std::span<const std::string> attributes) const {
  std::vector<PrefixView> views;
  for (const auto& a : attributes) views.push_back({a, prefixes_.block(prefixes_.index_of(a))});
  return concat_prefixes(views, config_.prefix_length, config_.layers, config_.width);
}

Conditioning Policy::conditioning(const std::string& attribute) const {
  return conditioning(std::span<const std::string>(&attribute, 1));
}

std::uint64_t Policy::checksum() const {
  std::uint64_t h = fnv1a({reinterpret_cast<const char*>(trunk_.data()),
                           trunk_.size() * sizeof(double)});
  const auto& p = prefixes_.values();
  return fnv1a({reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double)}, h);
}

void PolicyGradient::zero() {
  std::fill(trunk.begin(), trunk.end(), 0.0);
  std::fill(prefixes.begin(), prefixes.end(), 0.0);
}

PolicyGradient& PolicyGradient::operator+=(const PolicyGradient& other) {
  for (std::size_t i = 0; i < trunk.size(); ++i) trunk[i] += other.trunk[i];
  for (std::size_t i = 0; i < prefixes.size(); ++i) prefixes[i] += other.prefixes[i];
  return *this;
}

double PolicyGradient::squared_norm() const {
  double s = 0.0;
  for (double g : trunk) s += g * g;
  for (double g : prefixes) s += g * g;
  return s;
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

constexpr double kRmsEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;

// Y[rows x out] (+)= X[rows x in] * W[in x out]
void matmul(const double* x, const double* w, double* y, int rows, int in, int out,
            bool accumulate) {
  for (int t = 0; t < rows; ++t) {
    double* yr = y + static_cast<std::size_t>(t) * out;
    if (!accumulate) std::fill(yr, yr + out, 0.0);
    const double* xr = x + static_cast<std::size_t>(t) * in;
    for (int i = 0; i < in; ++i) {
      const double xv = xr[i];
      const double* wr = w + static_cast<std::size_t>(i) * out;
      for (int j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
}

// W^T as a fresh [out x in] buffer.
std::vector<double> transpose(const double* w, int in, int out) {
  std::vector<double> t(static_cast<std::size_t>(in) * out);
  for (int i = 0; i < in; ++i) {
    for (int j = 0; j < out; ++j) t[static_cast<std::size_t>(j) * in + i] = w[i * out + j];
  }
  return t;
}

// dW[in x out] += X^T[in x rows] * dY[rows x out]
void accumulate_weight_grad(const double* x, const double* dy, double* dw, int rows, int in,
                            int out) {
  for (int t = 0; t < rows; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * in;
    const double* dyr = dy + static_cast<std::size_t>(t) * out;
    for (int i = 0; i < in; ++i) {
      const double xv = xr[i];
      double* dwr = dw + static_cast<std::size_t>(i) * out;
      for (int j = 0; j < out; ++j) dwr[j] += xv * dyr[j];
    }
  }
}

void add_bias(double* y, const double* b, int rows, int out) {
  for (int t = 0; t < rows; ++t) {
    double* yr = y + static_cast<std::size_t>(t) * out;
    for (int j = 0; j < out; ++j) yr[j] += b[j];
  }
}

void accumulate_bias_grad(const double* dy, double* db, int rows, int out) {
  for (int t = 0; t < rows; ++t) {
    const double* dyr = dy + static_cast<std::size_t>(t) * out;
    for (int j = 0; j < out; ++j) db[j] += dyr[j];
  }
}

// n = x / sqrt(mean(x^2) + eps); stores the inverse rms per row.
void rms_norm(const double* x, double* n, double* inv, int rows, int d) {
  for (int t = 0; t < rows; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * d;
    double ss = 0.0;
    for (int i = 0; i < d; ++i) ss += xr[i] * xr[i];
    const double r = 1.0 / std::sqrt(ss / d + kRmsEps);
    inv[t] = r;
    double* nr = n + static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) nr[i] = xr[i] * r;
  }
}

// dx += r * dn - r^3 / d * x * (x . dn)
void rms_norm_backward(const double* x, const double* inv, const double* dn, double* dx, int rows,
                       int d) {
  for (int t = 0; t < rows; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * d;
    const double* dnr = dn + static_cast<std::size_t>(t) * d;
    double* dxr = dx + static_cast<std::size_t>(t) * d;
    const double r = inv[t];
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += xr[i] * dnr[i];
    const double c = r * r * r * dot / d;
    for (int i = 0; i < d; ++i) dxr[i] += r * dnr[i] - c * xr[i];
  }
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluK * x * x * x)));
}

inline double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluK * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluK * x * x);
}

// In-place log-softmax of one row; returns nothing, row becomes log-probs.
void log_softmax(double* row, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += std::exp(row[j] - mx);
  const double lse = mx + std::log(s);
  for (int j = 0; j < n; ++j) row[j] -= lse;
}

struct LayerCache {
  std::vector<double> x_in, inv_in, n_in;
  std::vector<double> keys, vals;  // (M + T) x d, prefix rows first
  std::vector<double> q;
  std::vector<double> probs;  // heads x T x S, S = M + T
  std::vector<double> attn;   // T x d
  std::vector<double> x_mid, inv_mid, n_mid;
  std::vector<double> hpre, hact;  // T x F
};

struct ForwardCache {
  int T = 0;
  int M = 0;
  std::vector<LayerCache> layers;
  std::vector<double> x_final, inv_final, n_final;
  std::vector<double> logp;  // T x O log-probabilities
};

struct Dims {
  int d, h, hd, f, o, M, T, S;
};

void check_context(const Policy& policy, const Conditioning& cond, int T) {
  const auto& c = policy.config();
  if (cond.layers != c.layers || cond.width != c.width) {
    throw UsageError("conditioning shape does not match the model");
  }
  if (T + cond.length() > c.context) {
    throw UsageError("context overflow: " + std::to_string(T) + " positions + " +
                     std::to_string(cond.length()) + " prefix rows > context " +
                     std::to_string(c.context));
  }
}

// Inputs are BOS followed by the residues; when not terminated, the last
// residue is never an input because nothing is predicted after it.
std::vector<int> input_tokens(const Vocabulary& vocab, std::span<const int> tokens,
                              bool terminated) {
  for (int t : tokens) {
    if (t < 0 || t >= vocab.residue_count()) {
      throw DataError("token id " + std::to_string(t) + " is not a residue");
    }
  }
  std::vector<int> in;
  if (tokens.empty() && !terminated) return in;
  in.push_back(vocab.bos());
  const std::size_t n = terminated ? tokens.size() : tokens.size() - 1;
  in.insert(in.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n));
  return in;
}

void forward(const Policy& policy, const Conditioning& cond, std::span<const int> inputs,
             ForwardCache& fc) {
  const auto& cfg = policy.config();
  const auto& lay = policy.layout();
  const double* P = policy.trunk().data();
  const Dims D{cfg.width, cfg.heads, cfg.width / cfg.heads, cfg.mlp_hidden,
               cfg.residue_count + 1, cond.length(), static_cast<int>(inputs.size()),
               cond.length() + static_cast<int>(inputs.size())};
  check_context(policy, cond, D.T);
  fc.T = D.T;
  fc.M = D.M;
  fc.layers.resize(static_cast<std::size_t>(cfg.layers));
  const std::size_t Td = static_cast<std::size_t>(D.T) * D.d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(D.hd));

  std::vector<double> x(Td);
  for (int t = 0; t < D.T; ++t) {
    const double* e = P + lay.tok_emb + static_cast<std::size_t>(inputs[t]) * D.d;
    const double* p = P + lay.pos_emb + static_cast<std::size_t>(t) * D.d;
    for (int i = 0; i < D.d; ++i) x[static_cast<std::size_t>(t) * D.d + i] = e[i] + p[i];
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& L = lay.layers[static_cast<std::size_t>(l)];
    auto& C = fc.layers[static_cast<std::size_t>(l)];
    C.x_in = x;
    C.inv_in.resize(D.T);
    C.n_in.resize(Td);
    rms_norm(C.x_in.data(), C.n_in.data(), C.inv_in.data(), D.T, D.d);

    C.q.resize(Td);
    matmul(C.n_in.data(), P + L.wq, C.q.data(), D.T, D.d, D.d, false);
    C.keys.assign(static_cast<std::size_t>(D.S) * D.d, 0.0);
    C.vals.assign(static_cast<std::size_t>(D.S) * D.d, 0.0);
    std::copy_n(cond.keys(l), static_cast<std::size_t>(D.M) * D.d, C.keys.begin());
    std::copy_n(cond.vals(l), static_cast<std::size_t>(D.M) * D.d, C.vals.begin());
    matmul(C.n_in.data(), P + L.wk, C.keys.data() + static_cast<std::size_t>(D.M) * D.d, D.T, D.d,
           D.d, false);
    matmul(C.n_in.data(), P + L.wv, C.vals.data() + static_cast<std::size_t>(D.M) * D.d, D.T, D.d,
           D.d, false);

    C.probs.assign(static_cast<std::size_t>(D.h) * D.T * D.S, 0.0);
    C.attn.assign(Td, 0.0);
    for (int hh = 0; hh < D.h; ++hh) {
      const int off = hh * D.hd;
      for (int t = 0; t < D.T; ++t) {
        const int span = D.M + t + 1;
        double* pr = C.probs.data() + (static_cast<std::size_t>(hh) * D.T + t) * D.S;
        const double* qt = C.q.data() + static_cast<std::size_t>(t) * D.d + off;
        double mx = -INFINITY;
        for (int j = 0; j < span; ++j) {
          const double* kj = C.keys.data() + static_cast<std::size_t>(j) * D.d + off;
          double s = 0.0;
          for (int i = 0; i < D.hd; ++i) s += qt[i] * kj[i];
          pr[j] = s * scale;
          mx = std::max(mx, pr[j]);
        }
        double z = 0.0;
        for (int j = 0; j < span; ++j) {
          pr[j] = std::exp(pr[j] - mx);
          z += pr[j];
        }
        const double iz = 1.0 / z;
        double* at = C.attn.data() + static_cast<std::size_t>(t) * D.d + off;
        for (int j = 0; j < span; ++j) {
          pr[j] *= iz;
          const double* vj = C.vals.data() + static_cast<std::size_t>(j) * D.d + off;
          for (int i = 0; i < D.hd; ++i) at[i] += pr[j] * vj[i];
        }
      }
    }

    C.x_mid = C.x_in;
    matmul(C.attn.data(), P + L.wo, C.x_mid.data(), D.T, D.d, D.d, true);
    C.inv_mid.resize(D.T);
    C.n_mid.resize(Td);
    rms_norm(C.x_mid.data(), C.n_mid.data(), C.inv_mid.data(), D.T, D.d);
    C.hpre.resize(static_cast<std::size_t>(D.T) * D.f);
    matmul(C.n_mid.data(), P + L.w1, C.hpre.data(), D.T, D.d, D.f, false);
    add_bias(C.hpre.data(), P + L.b1, D.T, D.f);
    C.hact.resize(C.hpre.size());
    for (std::size_t i = 0; i < C.hpre.size(); ++i) C.hact[i] = gelu(C.hpre[i]);
    x = C.x_mid;
    matmul(C.hact.data(), P + L.w2, x.data(), D.T, D.f, D.d, true);
    add_bias(x.data(), P + L.b2, D.T, D.d);
  }

  fc.x_final = std::move(x);
  fc.inv_final.resize(D.T);
  fc.n_final.resize(Td);
  rms_norm(fc.x_final.data(), fc.n_final.data(), fc.inv_final.data(), D.T, D.d);
  fc.logp.resize(static_cast<std::size_t>(D.T) * D.o);
  matmul(fc.n_final.data(), P + lay.w_out, fc.logp.data(), D.T, D.d, D.o, false);
  add_bias(fc.logp.data(), P + lay.b_out, D.T, D.o);
  for (int t = 0; t < D.T; ++t) log_softmax(fc.logp.data() + static_cast<std::size_t>(t) * D.o, D.o);
}

std::vector<int> targets_of(const Vocabulary& vocab, std::span<const int> tokens, bool terminated) {
  std::vector<int> tg(tokens.begin(), tokens.end());
  if (terminated) tg.push_back(vocab.eos());
  return tg;
}

void backward(const Policy& policy, const Conditioning& cond, std::span<const int> inputs,
              std::span<const int> targets, const ForwardCache& fc, double scale_out,
              PolicyGradient& grad) {
  const auto& cfg = policy.config();
  const auto& lay = policy.layout();
  const double* P = policy.trunk().data();
  double* G = grad.trunk.data();
  const Dims D{cfg.width, cfg.heads, cfg.width / cfg.heads, cfg.mlp_hidden,
               cfg.residue_count + 1, fc.M, fc.T, fc.M + fc.T};
  const std::size_t Td = static_cast<std::size_t>(D.T) * D.d;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(D.hd));

  // d logp(target) / d logits = onehot - softmax
  std::vector<double> dlogits(static_cast<std::size_t>(D.T) * D.o);
  for (int t = 0; t < D.T; ++t) {
    const double* lp = fc.logp.data() + static_cast<std::size_t>(t) * D.o;
    double* dl = dlogits.data() + static_cast<std::size_t>(t) * D.o;
    for (int j = 0; j < D.o; ++j) dl[j] = -scale_out * std::exp(lp[j]);
    dl[targets[t]] += scale_out;
  }
  accumulate_weight_grad(fc.n_final.data(), dlogits.data(), G + lay.w_out, D.T, D.d, D.o);
  accumulate_bias_grad(dlogits.data(), G + lay.b_out, D.T, D.o);
  std::vector<double> dn(Td);
  {
    const auto wt = transpose(P + lay.w_out, D.d, D.o);
    matmul(dlogits.data(), wt.data(), dn.data(), D.T, D.o, D.d, false);
  }
  std::vector<double> dx(Td, 0.0);
  rms_norm_backward(fc.x_final.data(), fc.inv_final.data(), dn.data(), dx.data(), D.T, D.d);

  // Conditioning gradient, same layout as cond.values.
  std::vector<double> dcond(cond.values.size(), 0.0);

  std::vector<double> dh(static_cast<std::size_t>(D.T) * D.f);
  std::vector<double> dmid(Td), dattn(Td), dq(Td), dnin(Td);
  std::vector<double> dkeys, dvals;
  std::vector<double> dp(static_cast<std::size_t>(D.S));

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& L = lay.layers[static_cast<std::size_t>(l)];
    const auto& C = fc.layers[static_cast<std::size_t>(l)];

    // MLP block: x_out = x_mid + gelu(n_mid W1 + b1) W2 + b2
    accumulate_bias_grad(dx.data(), G + L.b2, D.T, D.d);
    accumulate_weight_grad(C.hact.data(), dx.data(), G + L.w2, D.T, D.f, D.d);
    {
      const auto w2t = transpose(P + L.w2, D.f, D.d);
      matmul(dx.data(), w2t.data(), dh.data(), D.T, D.d, D.f, false);
    }
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= gelu_grad(C.hpre[i]);
    accumulate_bias_grad(dh.data(), G + L.b1, D.T, D.f);
    accumulate_weight_grad(C.n_mid.data(), dh.data(), G + L.w1, D.T, D.d, D.f);
    {
      const auto w1t = transpose(P + L.w1, D.d, D.f);
      matmul(dh.data(), w1t.data(), dn.data(), D.T, D.f, D.d, false);
    }
    dmid = dx;
    rms_norm_backward(C.x_mid.data(), C.inv_mid.data(), dn.data(), dmid.data(), D.T, D.d);

    // Attention block: x_mid = x_in + attn Wo
    accumulate_weight_grad(C.attn.data(), dmid.data(), G + L.wo, D.T, D.d, D.d);
    {
      const auto wot = transpose(P + L.wo, D.d, D.d);
      matmul(dmid.data(), wot.data(), dattn.data(), D.T, D.d, D.d, false);
    }
    dkeys.assign(static_cast<std::size_t>(D.S) * D.d, 0.0);
    dvals.assign(static_cast<std::size_t>(D.S) * D.d, 0.0);
    std::fill(dq.begin(), dq.end(), 0.0);
    for (int hh = 0; hh < D.h; ++hh) {
      const int off = hh * D.hd;
      for (int t = 0; t < D.T; ++t) {
        const int span = D.M + t + 1;
        const double* pr = C.probs.data() + (static_cast<std::size_t>(hh) * D.T + t) * D.S;
        const double* da = dattn.data() + static_cast<std::size_t>(t) * D.d + off;
        double pdp = 0.0;
        for (int j = 0; j < span; ++j) {
          const double* vj = C.vals.data() + static_cast<std::size_t>(j) * D.d + off;
          double s = 0.0;
          for (int i = 0; i < D.hd; ++i) s += da[i] * vj[i];
          dp[j] = s;
          pdp += pr[j] * s;
          double* dvj = dvals.data() + static_cast<std::size_t>(j) * D.d + off;
          for (int i = 0; i < D.hd; ++i) dvj[i] += pr[j] * da[i];
        }
        const double* qt = C.q.data() + static_cast<std::size_t>(t) * D.d + off;
        double* dqt = dq.data() + static_cast<std::size_t>(t) * D.d + off;
        for (int j = 0; j < span; ++j) {
          const double ds = pr[j] * (dp[j] - pdp) * att_scale;
          const double* kj = C.keys.data() + static_cast<std::size_t>(j) * D.d + off;
          double* dkj = dkeys.data() + static_cast<std::size_t>(j) * D.d + off;
          for (int i = 0; i < D.hd; ++i) {
            dqt[i] += ds * kj[i];
            dkj[i] += ds * qt[i];
          }
        }
      }
    }

    // Prefix rows feed the conditioning gradient directly.
    const std::size_t md = static_cast<std::size_t>(D.M) * D.d;
    double* dck = dcond.data() + static_cast<std::size_t>(l) * 2 * md;
    for (std::size_t i = 0; i < md; ++i) {
      dck[i] += dkeys[i];
      dck[md + i] += dvals[i];
    }
    const double* dk = dkeys.data() + md;
    const double* dv = dvals.data() + md;
    accumulate_weight_grad(C.n_in.data(), dq.data(), G + L.wq, D.T, D.d, D.d);
    accumulate_weight_grad(C.n_in.data(), dk, G + L.wk, D.T, D.d, D.d);
    accumulate_weight_grad(C.n_in.data(), dv, G + L.wv, D.T, D.d, D.d);
    {
      const auto wqt = transpose(P + L.wq, D.d, D.d);
      const auto wkt = transpose(P + L.wk, D.d, D.d);
      const auto wvt = transpose(P + L.wv, D.d, D.d);
      matmul(dq.data(), wqt.data(), dnin.data(), D.T, D.d, D.d, false);
      matmul(dk, wkt.data(), dnin.data(), D.T, D.d, D.d, true);
      matmul(dv, wvt.data(), dnin.data(), D.T, D.d, D.d, true);
    }
    dx = dmid;
    rms_norm_backward(C.x_in.data(), C.inv_in.data(), dnin.data(), dx.data(), D.T, D.d);
  }

  for (int t = 0; t < D.T; ++t) {
    const double* g = dx.data() + static_cast<std::size_t>(t) * D.d;
    double* ge = G + lay.tok_emb + static_cast<std::size_t>(inputs[t]) * D.d;
    double* gp = G + lay.pos_emb + static_cast<std::size_t>(t) * D.d;
    for (int i = 0; i < D.d; ++i) {
      ge[i] += g[i];
      gp[i] += g[i];
    }
  }

  // Route conditioning gradient to the prefix blocks it was built from.
  const auto& bank = policy.prefixes();
  const std::size_t rows = static_cast<std::size_t>(cond.prefix_length) * D.d;
  const std::size_t md = static_cast<std::size_t>(D.M) * D.d;
  for (std::size_t a = 0; a < cond.attributes.size(); ++a) {
    const std::size_t block = bank.index_of(cond.attributes[a]);
    double* gb = grad.prefixes.data() + block * bank.block_size();
    for (int l = 0; l < cfg.layers; ++l) {
      for (int kv = 0; kv < 2; ++kv) {
        const double* src = dcond.data() + (static_cast<std::size_t>(l) * 2 + kv) * md +
                            a * rows;
        double* dst = gb + (static_cast<std::size_t>(l) * 2 + kv) * rows;
        for (std::size_t i = 0; i < rows; ++i) dst[i] += src[i];
      }
    }
  }
}

double sum_target_logp(const ForwardCache& fc, std::span<const int> targets, int o) {
  double total = 0.0;
  for (int t = 0; t < fc.T; ++t) total += fc.logp[static_cast<std::size_t>(t) * o + targets[t]];
  return total;
}

}  // namespace

double sequence_logprob(const Policy& policy, const Conditioning& cond,
                        std::span<const int> tokens, bool terminated) {
  const auto inputs = input_tokens(policy.vocab(), tokens, terminated);
  if (inputs.empty()) return 0.0;
  const auto targets = targets_of(policy.vocab(), tokens, terminated);
  ForwardCache fc;
  forward(policy, cond, inputs, fc);
  return sum_target_logp(fc, targets, policy.vocab().output_size());
}

struct LogprobTape::State {
  const Policy* policy;
  const Conditioning* cond;
  std::vector<int> inputs;
  std::vector<int> targets;
  ForwardCache fc;
};

LogprobTape::LogprobTape(const Policy& policy, const Conditioning& cond,
                         std::span<const int> tokens, bool terminated)
    : state_(std::make_unique<State>()) {
  state_->policy = &policy;
  state_->cond = &cond;
  state_->inputs = input_tokens(policy.vocab(), tokens, terminated);
  if (state_->inputs.empty()) return;
  state_->targets = targets_of(policy.vocab(), tokens, terminated);
  forward(policy, cond, state_->inputs, state_->fc);
  value_ = sum_target_logp(state_->fc, state_->targets, policy.vocab().output_size());
}

LogprobTape::~LogprobTape() = default;
LogprobTape::LogprobTape(LogprobTape&&) noexcept = default;
LogprobTape& LogprobTape::operator=(LogprobTape&&) noexcept = default;

void LogprobTape::backward(double scale, PolicyGradient& grad) const {
  if (state_->inputs.empty()) return;
  mlpo::backward(*state_->policy, *state_->cond, state_->inputs, state_->targets, state_->fc,
                 scale, grad);
}

double sequence_logprob_backward(const Policy& policy, const Conditioning& cond,
                                 std::span<const int> tokens, bool terminated, double scale,
                                 PolicyGradient& grad) {
  LogprobTape tape(policy, cond, tokens, terminated);
  tape.backward(scale, grad);
  return tape.value();
}

double sampled_logprob(const Policy& policy, const Conditioning& cond, std::span<const int> tokens,
                       std::size_t max_len) {
  if (tokens.size() > max_len) return -INFINITY;
  return sequence_logprob(policy, cond, tokens, tokens.size() < max_len);
}

double logprob(const Policy& policy, const Conditioning& cond, const ProteinSequence& seq) {
  const auto tokens = policy.vocab().encode(seq.residues);
  return sequence_logprob(policy, cond, tokens, true);
}

std::vector<std::vector<double>> next_token_distributions(const Policy& policy,
                                                          const Conditioning& cond,
                                                          std::span<const int> tokens) {
  const auto inputs = input_tokens(policy.vocab(), tokens, true);
  ForwardCache fc;
  forward(policy, cond, inputs, fc);
  const int o = policy.vocab().output_size();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(fc.T));
  for (int t = 0; t < fc.T; ++t) {
    out[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(o));
    for (int j = 0; j < o; ++j) {
      out[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] =
          std::exp(fc.logp[static_cast<std::size_t>(t) * o + j]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incremental decoding

Decoder::Decoder(const Policy& policy, const Conditioning& cond)
    : policy_(policy), cond_(cond) {
  const auto& cfg = policy.config();
  check_context(policy, cond, 0);
  const std::size_t md = static_cast<std::size_t>(cond.length()) * cfg.width;
  keys_.resize(static_cast<std::size_t>(cfg.layers));
  vals_.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    keys_[static_cast<std::size_t>(l)].assign(cond.keys(l), cond.keys(l) + md);
    vals_[static_cast<std::size_t>(l)].assign(cond.vals(l), cond.vals(l) + md);
  }
}

const std::vector<double>& Decoder::feed(int token) {
  const auto& cfg = policy_.config();
  const auto& lay = policy_.layout();
  const double* P = policy_.trunk().data();
  const int d = cfg.width;
  const int hd = d / cfg.heads;
  const int f = cfg.mlp_hidden;
  const int o = cfg.residue_count + 1;
  if (position_ + cond_.length() + 1 > cfg.context) throw UsageError("context overflow in decoder");
  if (token < 0 || token >= policy_.vocab().size()) throw DataError("decoder: bad token id");
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> x(static_cast<std::size_t>(d));
  const double* e = P + lay.tok_emb + static_cast<std::size_t>(token) * d;
  const double* p = P + lay.pos_emb + static_cast<std::size_t>(position_) * d;
  for (int i = 0; i < d; ++i) x[i] = e[i] + p[i];

  std::vector<double> n(d), q(d), attn(d), hpre(f);
  std::vector<double> probs;
  double inv = 0.0;
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& L = lay.layers[static_cast<std::size_t>(l)];
    auto& K = keys_[static_cast<std::size_t>(l)];
    auto& V = vals_[static_cast<std::size_t>(l)];
    rms_norm(x.data(), n.data(), &inv, 1, d);
    matmul(n.data(), P + L.wq, q.data(), 1, d, d, false);
    const std::size_t row = K.size();
    K.resize(row + d);
    V.resize(row + d);
    matmul(n.data(), P + L.wk, K.data() + row, 1, d, d, false);
    matmul(n.data(), P + L.wv, V.data() + row, 1, d, d, false);
    const int span = static_cast<int>(K.size() / static_cast<std::size_t>(d));
    probs.resize(static_cast<std::size_t>(span));
    std::fill(attn.begin(), attn.end(), 0.0);
    for (int hh = 0; hh < cfg.heads; ++hh) {
      const int off = hh * hd;
      double mx = -INFINITY;
      for (int j = 0; j < span; ++j) {
        const double* kj = K.data() + static_cast<std::size_t>(j) * d + off;
        double s = 0.0;
        for (int i = 0; i < hd; ++i) s += q[off + i] * kj[i];
        probs[j] = s * scale;
        mx = std::max(mx, probs[j]);
      }
      double z = 0.0;
      for (int j = 0; j < span; ++j) {
        probs[j] = std::exp(probs[j] - mx);
        z += probs[j];
      }
      const double iz = 1.0 / z;
      for (int j = 0; j < span; ++j) {
        probs[j] *= iz;
        const double* vj = V.data() + static_cast<std::size_t>(j) * d + off;
        for (int i = 0; i < hd; ++i) attn[off + i] += probs[j] * vj[i];
      }
    }
    matmul(attn.data(), P + L.wo, x.data(), 1, d, d, true);
    rms_norm(x.data(), n.data(), &inv, 1, d);
    matmul(n.data(), P + L.w1, hpre.data(), 1, d, f, false);
    add_bias(hpre.data(), P + L.b1, 1, f);
    for (auto& h : hpre) h = gelu(h);
    matmul(hpre.data(), P + L.w2, x.data(), 1, f, d, true);
    add_bias(x.data(), P + L.b2, 1, d);
  }
  rms_norm(x.data(), n.data(), &inv, 1, d);
  logits_.resize(static_cast<std::size_t>(o));
  matmul(n.data(), P + lay.w_out, logits_.data(), 1, d, o, false);
  add_bias(logits_.data(), P + lay.b_out, 1, o);
  ++position_;
  return logits_;
}

std::vector<int> sample_tokens(const Policy& policy, const Conditioning& cond,
                               const SampleOptions& options, std::uint64_t seed) {
  if (options.max_len < 1) throw UsageError("max_len must be >= 1");
  if (!(options.temperature > 0.0)) throw UsageError("temperature must be > 0");
  const auto& vocab = policy.vocab();
  Decoder dec(policy, cond);
  SplitMix64 rng(seed);
  std::vector<int> out;
  std::vector<double> p(static_cast<std::size_t>(vocab.output_size()));
  int token = vocab.bos();
  while (out.size() < options.max_len) {
    const auto& logits = dec.feed(token);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] = logits[j] / options.temperature;
      mx = std::max(mx, p[j]);
    }
    double z = 0.0;
    for (auto& v : p) {
      v = std::exp(v - mx);
      z += v;
    }
    const double u = rng.uniform() * z;
    double acc = 0.0;
    int pick = static_cast<int>(p.size()) - 1;
    for (std::size_t j = 0; j < p.size(); ++j) {
      acc += p[j];
      if (u < acc) {
        pick = static_cast<int>(j);
        break;
      }
    }
    if (pick == vocab.eos()) break;
    out.push_back(pick);
    token = pick;
  }
  return out;
}

std::string sample(const Policy& policy, const Conditioning& cond, const SampleOptions& options,
                   std::uint64_t seed) {
  const auto tokens = sample_tokens(policy, cond, options, seed);
  return policy.vocab().decode(tokens);
}

}  // namespace mlpo
