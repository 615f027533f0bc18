#ifndef TMC_NETCORE_HPP
#define TMC_NETCORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "automata.hpp"
#include "fpcore.hpp"

namespace tmc {

using Vec = std::vector<double>;

struct Entry {
  int idx;
  int val;
  bool operator==(const Entry&) const = default;
};
using SparseVec = std::vector<Entry>;

inline double dot(const SparseVec& s, const Vec& x) {
  double acc = 0;
  for (const auto& e : s) acc += e.val * x[e.idx];
  return acc;
}

// Attention head. Q/K/V are stored by row (one sparse row per output
// coordinate), W_O by column (one sparse column per value coordinate).
struct Head {
  std::vector<SparseVec> wq, wk, wv;  // sizes <= d_k, d_k, d_v
  std::vector<SparseVec> wo;          // size == wv.size(); entries index d
  std::vector<double> rope;           // rotary frequencies, empty if none
  bool operator==(const Head&) const = default;

  bool inert() const {
    for (const auto& c : wo)
      if (!c.empty()) return false;
    return true;
  }
};

// MLP stored by neuron: input row of W_1, bias (times 4), output column of W_2.
struct Neuron {
  SparseVec in;
  int bias4 = 0;
  SparseVec out;
  bool operator==(const Neuron&) const = default;
};

struct Layer {
  std::vector<Head> heads;
  std::vector<Neuron> mlp;
  bool operator==(const Layer&) const = default;
};

struct Dims {
  int d = 0, d_k = 0, d_v = 0, d_ff = 0, H = 0, L = 0;
  bool operator==(const Dims&) const = default;
};

enum class PosKind { None, BinaryAbsolute, Rotary };

struct Positional {
  PosKind kind = PosKind::None;
  int r = 0;
  std::vector<int> targets;  // coordinates receiving bin_r(i)
  bool operator==(const Positional&) const = default;
};

struct TransformerParams {
  Dims dims;
  std::vector<std::string> vocab;
  std::vector<SparseVec> emb;    // per token, ternary
  std::vector<SparseVec> unemb;  // per token, ternary
  Positional pos;
  std::vector<Layer> layers;
  double c = 1.0;            // scale on query and key projections
  std::string mode = "hardmax";
  bool operator==(const TransformerParams&) const = default;
};

inline std::unordered_map<std::string, int> token_index(const TransformerParams& p) {
  std::unordered_map<std::string, int> m;
  for (size_t i = 0; i < p.vocab.size(); ++i) m[p.vocab[i]] = (int)i;
  return m;
}

// Structural checks: shapes within dims, weight codes in {0,+-1,+-2}.
inline void validate(const TransformerParams& p) {
  auto chk_vec = [&](const SparseVec& s, int bound, const char* what) {
    for (const auto& e : s) {
      if (e.idx < 0 || e.idx >= bound) throw std::invalid_argument(std::string(what) + ": index out of range");
      if (e.val < -2 || e.val > 2 || e.val == 0) throw std::invalid_argument(std::string(what) + ": weight code out of range");
    }
  };
  const auto& D = p.dims;
  if ((int)p.layers.size() != D.L) throw std::invalid_argument("layer count differs from L");
  if (p.emb.size() != p.vocab.size() || p.unemb.size() != p.vocab.size())
    throw std::invalid_argument("embedding table size differs from vocabulary");
  for (auto& e : p.emb) chk_vec(e, D.d, "emb");
  for (auto& e : p.unemb) chk_vec(e, D.d, "unemb");
  for (int t : p.pos.targets)
    if (t < 0 || t >= D.d) throw std::invalid_argument("positional target out of range");
  for (const auto& l : p.layers) {
    if ((int)l.heads.size() > D.H) throw std::invalid_argument("too many heads in a layer");
    if ((int)l.mlp.size() > D.d_ff) throw std::invalid_argument("too many neurons in a layer");
    for (const auto& h : l.heads) {
      if ((int)h.wq.size() > D.d_k || h.wk.size() != h.wq.size()) throw std::invalid_argument("query/key rows exceed d_k");
      if ((int)h.wv.size() > D.d_v || h.wo.size() != h.wv.size()) throw std::invalid_argument("value rows exceed d_v");
      if (2 * h.rope.size() > h.wq.size()) throw std::invalid_argument("too many rotary frequencies");
      for (auto& r : h.wq) chk_vec(r, D.d, "W_Q");
      for (auto& r : h.wk) chk_vec(r, D.d, "W_K");
      for (auto& r : h.wv) chk_vec(r, D.d, "W_V");
      for (auto& r : h.wo) chk_vec(r, D.d, "W_O");
    }
    for (const auto& n : l.mlp) {
      chk_vec(n.in, D.d, "W_1");
      chk_vec(n.out, D.d, "W_2");
    }
  }
}

// ----------------------------------------------------------- attention maps

inline constexpr double kTieTol = 1e-9;

inline std::vector<double> hardmax_weights(const std::vector<double>& s) {
  if (s.empty()) throw std::invalid_argument("hardmax of empty list");
  double m = *std::max_element(s.begin(), s.end());
  std::vector<double> w(s.size(), 0.0);
  int cnt = 0;
  for (double x : s) cnt += x >= m - kTieTol;
  for (size_t j = 0; j < s.size(); ++j)
    if (s[j] >= m - kTieTol) w[j] = 1.0 / cnt;
  return w;
}

inline std::vector<double> softmax_weights(const std::vector<double>& s) {
  if (s.empty()) throw std::invalid_argument("softmax of empty list");
  double m = *std::max_element(s.begin(), s.end());
  std::vector<double> w(s.size());
  double z = 0;
  for (size_t j = 0; j < s.size(); ++j) z += (w[j] = std::exp(s[j] - m));
  for (auto& x : w) x /= z;
  return w;
}

// Rotates pairs (2i, 2i+1) (0-based) by position * freqs[i].
inline Vec rope_rotate(const Vec& v, long long position, const std::vector<double>& freqs) {
  if (2 * freqs.size() > v.size()) throw std::invalid_argument("rope: too many frequencies");
  Vec o = v;
  for (size_t i = 0; i < freqs.size(); ++i) {
    double a = (double)position * freqs[i];
    double c = std::cos(a), s = std::sin(a);
    o[2 * i] = c * v[2 * i] - s * v[2 * i + 1];
    o[2 * i + 1] = s * v[2 * i] + c * v[2 * i + 1];
  }
  return o;
}

// ---------------------------------------------------------------- evaluator

inline std::string fmt_exact(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", a);
  return buf;
}

enum class AttnKind { Hardmax, Softmax };

struct EvalConfig {
  AttnKind attention = AttnKind::Hardmax;
  Precision act;
  Precision att;
  bool capture_trace = false;
  bool check_invariants = false;
};

struct HeadTrace {
  Vec q, k, v, o;
  std::vector<double> dots;   // q.k_j for j <= i (before 1/sqrt(d_k))
  std::vector<double> alpha;
};

struct PositionTrace {
  Vec x_in, x_mid, x_out;
  std::vector<HeadTrace> heads;
  Vec hidden;
};

// trace[layer][position]
struct ActivationTrace {
  std::vector<std::vector<PositionTrace>> layers;
};

struct InvariantStats {
  long long non_ternary = 0;
  long long score_gap = 0;    // argmax gap < 1
  long long tie_values = 0;   // tied positions with differing values
  long long output_gap = 0;   // unembedding gap < 1
  long long checked_positions = 0;
  std::string first;

  long long violations() const { return non_ternary + score_gap + tie_values + output_gap; }
  void note(long long& ctr, const std::string& msg) {
    ++ctr;
    if (first.empty()) first = msg;
  }
  void merge(const InvariantStats& o) {
    non_ternary += o.non_ternary;
    score_gap += o.score_gap;
    tie_values += o.tie_values;
    output_gap += o.output_gap;
    checked_positions += o.checked_positions;
    if (first.empty()) first = o.first;
  }
};

// Causal evaluation one position at a time. Keys and values of earlier
// positions never change, so each position is computed exactly once.
class Evaluator {
 public:
  Evaluator(const TransformerParams& p, EvalConfig cfg) : p_(p), cfg_(cfg) {
    const auto& D = p.dims;
    inv_sqrt_dk_ = D.d_k > 0 ? 1.0 / std::sqrt((double)D.d_k) : 1.0;
    cache_.resize(D.L);
    for (int l = 0; l < D.L; ++l) {
      cache_[l].resize(p.layers[l].heads.size());
      active_.emplace_back();
      for (size_t h = 0; h < p.layers[l].heads.size(); ++h)
        if (!p.layers[l].heads[h].inert()) active_[l].push_back((int)h);
    }
    mids_.assign(D.L, {});
    if (cfg.capture_trace) trace_.layers.resize(D.L);
  }

  int size() const { return n_; }

  // Appends a token and returns x^(L) at its position.
  const Vec& push(int token) {
    const auto& D = p_.dims;
    if (token < 0 || token >= (int)p_.vocab.size()) throw std::invalid_argument("token out of vocabulary");
    if (p_.pos.kind == PosKind::BinaryAbsolute && p_.pos.r < 62 && n_ >= (1LL << p_.pos.r))
      throw std::length_error("context longer than 2^r");
    const int i = n_;
    Vec x(D.d, 0.0);
    for (const auto& e : p_.emb[token]) x[e.idx] += e.val;
    if (p_.pos.kind == PosKind::BinaryAbsolute) {
      auto b = bin(p_.pos.r, i);
      for (int s = 0; s < p_.pos.r; ++s) x[p_.pos.targets[s]] += b[s];
    }
    round_act(x);
    check_ternary(x, "embedding");
    const double c = p_.c;
    for (int l = 0; l < D.L; ++l) {
      const auto& layer = p_.layers[l];
      cur_layer_ = l;
      PositionTrace* pt = nullptr;
      if (cfg_.capture_trace) {
        trace_.layers[l].emplace_back();
        pt = &trace_.layers[l].back();
        pt->x_in = x;
        pt->heads.resize(layer.heads.size());
      }
      Vec y(D.d, 0.0);
      for (int h : active_[l]) {
        const auto& hd = layer.heads[h];
        auto& kv = cache_[l][h];
        Vec q(hd.wq.size()), k(hd.wk.size()), v(hd.wv.size());
        for (size_t a = 0; a < q.size(); ++a) q[a] = c * dot(hd.wq[a], x);
        for (size_t a = 0; a < k.size(); ++a) k[a] = c * dot(hd.wk[a], x);
        for (size_t a = 0; a < v.size(); ++a) v[a] = dot(hd.wv[a], x);
        if (!hd.rope.empty()) {
          q = rope_rotate(q, i, hd.rope);
          k = rope_rotate(k, i, hd.rope);
        }
        round_act(q);
        round_act(k);
        round_act(v);
        if (hd.rope.empty()) {
          check_ternary(q, "query");
          check_ternary(k, "key");
        }
        check_ternary(v, "value");
        // sparse query for the score loop
        std::vector<std::pair<int, double>> qs;
        for (size_t a = 0; a < q.size(); ++a)
          if (q[a] != 0) qs.push_back({(int)a, q[a]});
        kv.k.push_back(std::move(k));
        kv.v.push_back(std::move(v));
        std::vector<double> dots(i + 1);
        for (int j = 0; j <= i; ++j) {
          double acc = 0;
          const auto& kj = kv.k[j];
          for (auto& [a, qa] : qs) acc += qa * kj[a];
          dots[j] = acc;
        }
        std::vector<double> alpha;
        if (cfg_.attention == AttnKind::Hardmax) {
          alpha = hardmax_weights(dots);
          // rotary scores are not integers; their separation is measured separately
          if (cfg_.check_invariants && hd.rope.empty()) check_scores(dots, alpha, kv.v, l, h, i);
        } else {
          std::vector<double> s(i + 1);
          for (int j = 0; j <= i; ++j) s[j] = dots[j] * inv_sqrt_dk_;
          alpha = softmax_weights(s);
          for (auto& a : alpha) a = cfg_.att.round(a);
        }
        Vec o(hd.wv.size(), 0.0);
        if (cfg_.attention == AttnKind::Hardmax) {
          // sum then divide once, exact when tied values agree
          int cnt = 0;
          for (int j = 0; j <= i; ++j) {
            if (alpha[j] == 0) continue;
            ++cnt;
            const auto& vj = kv.v[j];
            for (size_t a = 0; a < o.size(); ++a) o[a] += vj[a];
          }
          for (auto& a : o) a /= cnt;
        } else {
          for (int j = 0; j <= i; ++j) {
            if (alpha[j] == 0) continue;
            const auto& vj = kv.v[j];
            for (size_t a = 0; a < o.size(); ++a) o[a] += alpha[j] * vj[a];
          }
        }
        round_act(o);
        check_ternary(o, "head output");
        for (size_t a = 0; a < o.size(); ++a)
          if (o[a] != 0)
            for (const auto& e : hd.wo[a]) y[e.idx] += e.val * o[a];
        if (pt) {
          auto& ht = pt->heads[h];
          ht.q = q;
          ht.k = kv.k.back();
          ht.v = kv.v.back();
          ht.o = o;
          ht.dots = dots;
          ht.alpha = alpha;
        }
      }
      round_act(y);
      for (int a = 0; a < D.d; ++a) x[a] += y[a];
      round_act(x);
      check_ternary(x, "x(l-0.5)");
      mids_[l] = x;
      Vec z(D.d, 0.0);
      Vec hidden;
      if (pt) hidden.assign(layer.mlp.size(), 0.0);
      for (size_t n = 0; n < layer.mlp.size(); ++n) {
        const auto& nr = layer.mlp[n];
        double pre = dot(nr.in, x) + nr.bias4 * 0.25;
        if (pre <= 0) continue;
        double a = cfg_.act.round(pre);
        if (cfg_.check_invariants && a != 1.0) stats.note(stats.non_ternary, where("MLP hidden", l, i));
        if (pt) hidden[n] = a;
        for (const auto& e : nr.out) z[e.idx] += e.val * a;
      }
      round_act(z);
      for (int a = 0; a < D.d; ++a) x[a] += z[a];
      round_act(x);
      check_ternary(x, "x(l)");
      if (pt) {
        pt->x_mid = mids_[l];
        pt->x_out = x;
        pt->hidden = std::move(hidden);
      }
    }
    cur_layer_ = -1;
    ++n_;
    ++stats.checked_positions;
    x_ = std::move(x);
    return x_;
  }

  const Vec& last() const { return x_; }
  // x^(l-0.5) at the last pushed position, l = 1..L
  const Vec& last_mid(int l) const { return mids_[l - 1]; }

  std::vector<double> logits() const {
    std::vector<double> s(p_.vocab.size());
    for (size_t t = 0; t < s.size(); ++t) s[t] = dot(p_.unemb[t], x_);
    return s;
  }

  // Greedy choice; lowest index wins ties within 1e-6.
  int argmax_token() {
    auto s = logits();
    int best = 0;
    for (int t = 1; t < (int)s.size(); ++t)
      if (s[t] > s[best] + 1e-6) best = t;
    double second = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < (int)s.size(); ++t)
      if (t != best) second = std::max(second, s[t]);
    if (second >= s[best] - 1e-6)
      diagnostics.push_back("tie in unembedding scores at position " + std::to_string(n_ - 1));
    if (cfg_.check_invariants && s.size() > 1 && s[best] - second < 1.0 - 1e-9)
      stats.note(stats.output_gap, "output gap < 1 at position " + std::to_string(n_ - 1));
    return best;
  }

  const ActivationTrace& trace() const { return trace_; }

  InvariantStats stats;
  std::vector<std::string> diagnostics;

 private:
  struct KV {
    std::vector<Vec> k, v;
  };

  void round_act(Vec& v) const {
    if (cfg_.attention == AttnKind::Hardmax || cfg_.act.exact()) return;
    for (auto& x : v) x = cfg_.act.round(x);
  }

  std::string where(const char* what, int l, int i) const {
    return std::string(what) + " at layer " + std::to_string(l + 1) + ", position " + std::to_string(i);
  }

  void check_ternary(const Vec& v, const char* what) {
    if (!cfg_.check_invariants) return;
    for (double a : v)
      if (a != 0.0 && a != 1.0 && a != -1.0) {
        stats.note(stats.non_ternary, where(what, cur_layer_, n_) + " value " + fmt_exact(a));
        return;
      }
  }

  void check_scores(const std::vector<double>& dots, const std::vector<double>& alpha, const std::vector<Vec>& vals,
                    int l, int h, int i) {
    double m = *std::max_element(dots.begin(), dots.end());
    double second = -std::numeric_limits<double>::infinity();
    int first_max = -1;
    for (size_t j = 0; j < dots.size(); ++j) {
      if (alpha[j] > 0) {
        if (first_max < 0) first_max = (int)j;
        else if (vals[j] != vals[first_max])
          stats.note(stats.tie_values, where("tied values differ", l, i) + " head " + std::to_string(h));
      } else {
        second = std::max(second, dots[j]);
      }
    }
    double c2 = p_.c * p_.c;
    if (second > -std::numeric_limits<double>::infinity() && m - second < c2 - 1e-9)
      stats.note(stats.score_gap, where("score gap < 1", l, i) + " head " + std::to_string(h));
  }

  const TransformerParams& p_;
  EvalConfig cfg_;
  double inv_sqrt_dk_ = 1.0;
  std::vector<std::vector<KV>> cache_;
  std::vector<std::vector<int>> active_;
  std::vector<Vec> mids_;
  Vec x_;
  int n_ = 0;
  int cur_layer_ = -1;
  ActivationTrace trace_;
};

struct ForwardResult {
  std::vector<Vec> x;  // x^(L) per position
  ActivationTrace trace;
  InvariantStats stats;
};

inline ForwardResult forward(const TransformerParams& p, const std::vector<int>& tokens, const EvalConfig& cfg) {
  Evaluator ev(p, cfg);
  ForwardResult res;
  for (int t : tokens) res.x.push_back(ev.push(t));
  res.trace = ev.trace();
  res.stats = ev.stats;
  return res;
}

inline int next_token(const TransformerParams& p, const std::vector<int>& tokens, const EvalConfig& cfg,
                      std::vector<std::string>* diagnostics = nullptr) {
  if (tokens.empty()) throw std::invalid_argument("next_token: empty input");
  Evaluator ev(p, cfg);
  for (int t : tokens) ev.push(t);
  int best = ev.argmax_token();
  if (diagnostics) *diagnostics = ev.diagnostics;
  return best;
}

}  // namespace tmc

#endif  // TMC_NETCORE_HPP
