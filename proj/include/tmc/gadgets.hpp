#ifndef TMC_GADGETS_HPP
#define TMC_GADGETS_HPP

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "automata.hpp"
#include "netcore.hpp"

namespace tmc {

using Reg = std::vector<int>;

// Named disjoint coordinate groups. Allocation is append-only, in declaration order.
class RegisterLayout {
 public:
  Reg add(const std::string& name, int size) {
    if (index_.count(name)) throw std::invalid_argument("register declared twice: " + name);
    Reg r(size);
    for (int i = 0; i < size; ++i) r[i] = d_ + i;
    d_ += size;
    index_[name] = entries_.size();
    entries_.push_back({name, r});
    return r;
  }
  int flag(const std::string& name) { return add(name, 1)[0]; }

  const Reg& reg(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown register: " + name);
    return entries_[it->second].second;
  }
  int f(const std::string& name) const {
    const auto& r = reg(name);
    if (r.size() != 1) throw std::invalid_argument("not a flag: " + name);
    return r[0];
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int size() const { return d_; }
  const std::vector<std::pair<std::string, Reg>>& entries() const { return entries_; }

  std::string name_of(int coord) const {
    for (const auto& [n, r] : entries_)
      for (size_t i = 0; i < r.size(); ++i)
        if (r[i] == coord) return r.size() == 1 ? n : n + "[" + std::to_string(i) + "]";
    return "?";
  }

 private:
  int d_ = 0;
  std::map<std::string, size_t> index_;
  std::vector<std::pair<std::string, Reg>> entries_;
};

// ------------------------------------------------------------- conditions

// A register bit required to be +-1, or a flag required to be 0/1.
struct Cond {
  int coord;
  int val;
  bool reg;
};
using Pattern = std::vector<Cond>;

inline Cond flag_is(int coord, int bit) { return {coord, bit, false}; }
inline Cond bit_is(int coord, int v) { return {coord, v, true}; }

inline Pattern reg_is(const Reg& r, const std::vector<int>& v) {
  if (r.size() != v.size()) throw std::invalid_argument("pattern size mismatch");
  Pattern p;
  for (size_t i = 0; i < r.size(); ++i) p.push_back(bit_is(r[i], v[i]));
  return p;
}

inline Pattern operator+(Pattern a, const Pattern& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline SparseVec unit(int coord, int v = 1) { return {{coord, v}}; }

inline SparseVec reg_vec(const Reg& r, const std::vector<int>& v) {
  if (r.size() != v.size()) throw std::invalid_argument("vector size mismatch");
  SparseVec s;
  for (size_t i = 0; i < r.size(); ++i)
    if (v[i]) s.push_back({r[i], v[i]});
  return s;
}

inline SparseVec operator+(SparseVec a, const SparseVec& b) {
  for (const auto& e : b) {
    auto it = std::find_if(a.begin(), a.end(), [&](const Entry& x) { return x.idx == e.idx; });
    if (it == a.end()) a.push_back(e);
    else {
      it->val += e.val;
      if (it->val == 0) a.erase(it);
    }
  }
  return a;
}

// Fires (hidden activation 1) exactly when all conditions hold on admissible
// ternary inputs, then adds `out` to the residual stream.
inline Neuron single_neuron(const Pattern& p, SparseVec out) {
  std::set<int> seen;
  Neuron n;
  int need = 0;
  for (const auto& c : p) {
    if (!seen.insert(c.coord).second) throw std::invalid_argument("single_neuron: overlapping references");
    if (c.reg) {
      if (c.val != 1 && c.val != -1) throw std::invalid_argument("single_neuron: register bit must be +-1");
      n.in.push_back({c.coord, c.val});
      ++need;
    } else {
      if (c.val != 0 && c.val != 1) throw std::invalid_argument("single_neuron: flag value must be 0/1");
      n.in.push_back({c.coord, c.val ? 1 : -1});
      need += c.val;
    }
  }
  n.bias4 = 4 * (1 - need);
  n.out = std::move(out);
  return n;
}

using Neurons = std::vector<Neuron>;

inline Neurons merge_mlps(Neurons a, const Neurons& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline void check_disjoint(const Reg& a, const Pattern& g) {
  for (int c : a)
    for (const auto& x : g)
      if (x.coord == c) throw std::invalid_argument("gadget: register overlaps gate");
}

inline void check_disjoint(const Reg& a, const Reg& b) {
  for (int c : a)
    if (std::find(b.begin(), b.end(), c) != b.end()) throw std::invalid_argument("gadget: registers overlap");
}

// Evaluate an MLP on x (exact arithmetic); returns f(x).
inline Vec eval_mlp(const Neurons& ns, const Vec& x) {
  Vec z(x.size(), 0.0);
  for (const auto& n : ns) {
    double a = dot(n.in, x) + n.bias4 * 0.25;
    if (a <= 0) continue;
    for (const auto& e : n.out) z[e.idx] += e.val * a;
  }
  return z;
}

// -------------------------------------------------------------- gadgets

// 2|I| neurons
inline Neurons zero_register(const Reg& I, const Pattern& gates = {}) {
  check_disjoint(I, gates);
  Neurons ns;
  for (int c : I) {
    ns.push_back(single_neuron(Pattern{bit_is(c, 1)} + gates, unit(c, -1)));
    ns.push_back(single_neuron(Pattern{bit_is(c, -1)} + gates, unit(c, 1)));
  }
  return ns;
}

// 2|I1| neurons
inline Neurons copy_register(const Reg& I1, const Reg& I2, const Pattern& gates = {}) {
  if (I1.size() != I2.size()) throw std::invalid_argument("copy_register: size mismatch");
  check_disjoint(I1, I2);
  check_disjoint(I1, gates);
  check_disjoint(I2, gates);
  Neurons ns;
  for (size_t m = 0; m < I1.size(); ++m) {
    ns.push_back(single_neuron(Pattern{bit_is(I1[m], 1)} + gates, unit(I2[m], 1)));
    ns.push_back(single_neuron(Pattern{bit_is(I1[m], -1)} + gates, unit(I2[m], -1)));
  }
  return ns;
}

namespace detail {

// Flips that turn bin(p) (read from `src`) into bin(p -/+ 2^k) (written to `dst`).
// sign = -1 subtracts saturating at 0, sign = +1 adds saturating at 2^d'-1.
inline Neurons pow2_flips(const Reg& src, const Reg& dst, int k, int sign, const Pattern& gates) {
  const int n = (int)src.size();
  if (k < 0 || k > n) throw std::invalid_argument("pow2: k out of range");
  // For subtraction the "trigger" bit value is +1 and the bits below it are -1.
  const int hi = sign < 0 ? 1 : -1;
  Neurons ns;
  // saturation: all bits >= k equal -hi
  for (int m = 0; m < k; ++m) {
    Pattern p = gates;
    for (int b = k; b < n; ++b) p.push_back(bit_is(src[b], -hi));
    p.push_back(bit_is(src[m], hi));
    for (int t = 0; t < 2; ++t) ns.push_back(single_neuron(p, unit(dst[m], -hi)));
  }
  // borrow/carry into bit m
  for (int m = k; m < n; ++m) {
    Pattern p = gates;
    p.push_back(bit_is(src[m], hi));
    for (int b = k; b < m; ++b) p.push_back(bit_is(src[b], -hi));
    SparseVec out = unit(dst[m], -hi);
    for (int b = k; b < m; ++b) out.push_back({dst[b], hi});
    for (int t = 0; t < 2; ++t) ns.push_back(single_neuron(p, out));
  }
  return ns;
}

}  // namespace detail

// I2 <- bin(max(0, p - 2^k)); 4|I1| neurons. I2 must be zero.
inline Neurons sub_pow2(const Reg& I1, const Reg& I2, int k, const Pattern& gates = {}) {
  auto ns = copy_register(I1, I2, gates);
  return merge_mlps(ns, detail::pow2_flips(I1, I2, k, -1, gates));
}

// I2 <- bin(min(2^d'-1, p + 2^k)); 4|I1| neurons.
inline Neurons add_pow2(const Reg& I1, const Reg& I2, int k, const Pattern& gates = {}) {
  auto ns = copy_register(I1, I2, gates);
  return merge_mlps(ns, detail::pow2_flips(I1, I2, k, +1, gates));
}

// In place, 2|I| neurons.
inline Neurons sub_pow2_inplace(const Reg& I, int k, const Pattern& gates = {}) {
  check_disjoint(I, gates);
  return detail::pow2_flips(I, I, k, -1, gates);
}

inline Neurons add_pow2_inplace(const Reg& I, int k, const Pattern& gates = {}) {
  check_disjoint(I, gates);
  return detail::pow2_flips(I, I, k, +1, gates);
}

inline const std::vector<int>& enc_move(int mv) {
  static const std::vector<int> e[3] = {bin(2, 0), bin(2, 1), bin(2, 2)};
  return e[mv];
}

// I2 <- bin(s-1 saturating / s / s+1) according to the move in I3; 6r neurons.
inline Neurons add_head_movement(const Reg& I1, const Reg& I2, const Reg& I3, const Pattern& gates = {}) {
  if (I3.size() != 2) throw std::invalid_argument("add_head_movement: move register must have 2 bits");
  const int r = (int)I1.size();
  Neurons ns = copy_register(I1, I2, gates);
  for (int dir : {L, R}) {
    const int hi = dir == L ? 1 : -1;
    for (int j = 0; j < r; ++j) {
      Pattern p = gates + reg_is(I3, enc_move(dir));
      p.push_back(bit_is(I1[j], hi));
      for (int b = 0; b < j; ++b) p.push_back(bit_is(I1[b], -hi));
      SparseVec out = unit(I2[j], -hi);
      for (int b = 0; b < j; ++b) out.push_back({I2[b], hi});
      for (int t = 0; t < 2; ++t) ns.push_back(single_neuron(p, out));
    }
  }
  return ns;
}

// Stage i of I2 <- I2 - I1: subtracts 2^i from I2 when I1[i] = 1.
// 2(r-i) neurons; apply stages 0..r-1 in consecutive layers.
inline Neurons full_subtract_stage(const Reg& I1, const Reg& I2, int i, const Pattern& gates = {}) {
  if (I1.size() != I2.size()) throw std::invalid_argument("full_subtract: size mismatch");
  check_disjoint(I1, I2);
  const int r = (int)I1.size();
  Neurons ns;
  for (int j = i; j < r; ++j) {
    Pattern p = gates;
    p.push_back(bit_is(I1[i], 1));
    p.push_back(bit_is(I2[j], 1));
    for (int b = i; b < j; ++b) p.push_back(bit_is(I2[b], -1));
    SparseVec out = unit(I2[j], -1);
    for (int b = i; b < j; ++b) out.push_back({I2[b], 1});
    for (int t = 0; t < 2; ++t) ns.push_back(single_neuron(p, out));
  }
  return ns;
}

inline std::vector<Neurons> full_subtract(const Reg& I1, const Reg& I2, const Pattern& gates = {}) {
  std::vector<Neurons> stages;
  for (int i = 0; i < (int)I1.size(); ++i) stages.push_back(full_subtract_stage(I1, I2, i, gates));
  return stages;
}

// enc_{Q->Q}(f): slice j (d_Q bits) holds enc_Q(f(q_j)).
inline std::vector<int> enc_function(const std::vector<int>& f, int dq) {
  std::vector<int> v;
  for (int t : f) {
    auto b = bin(dq, t);
    v.insert(v.end(), b.begin(), b.end());
  }
  return v;
}

// Adds enc(f1 o f2) to I1 where I1 holds enc(f1), I2 holds enc(f2).
// 2 d_Q |Q|^2 neurons; caller zeroes the old contents.
inline Neurons compose_function_encoding(const Reg& I1, const Reg& I2, int nq, const Pattern& gates = {}) {
  const int dq = enc_bits(nq);
  if ((int)I1.size() != dq * nq || (int)I2.size() != dq * nq)
    throw std::invalid_argument("compose_function_encoding: size mismatch");
  Neurons ns;
  for (int j = 0; j < nq; ++j) {
    Reg slice_j(I2.begin() + dq * j, I2.begin() + dq * (j + 1));
    for (int i = 0; i < nq; ++i) {
      Pattern p = gates + reg_is(slice_j, bin(dq, i));
      for (int k = 0; k < dq; ++k)
        for (int s : {1, -1}) {
          Pattern pk = p;
          pk.push_back(bit_is(I1[dq * i + k], s));
          ns.push_back(single_neuron(pk, unit(I1[dq * j + k], s)));
        }
    }
  }
  return ns;
}

// Per coordinate: f(x) = (-x)+ - x+ + 2(x-1/4)+ - 2(x-3/4)+ - 2(-x-1/4)+ + 2(-x-3/4)+.
inline Neurons denoising_mlp(const Reg& I) {
  Neurons ns;
  for (int c : I) {
    ns.push_back({{{c, -1}}, 0, {{c, 1}}});
    ns.push_back({{{c, 1}}, 0, {{c, -1}}});
    ns.push_back({{{c, 1}}, -1, {{c, 2}}});
    ns.push_back({{{c, 1}}, -3, {{c, -2}}});
    ns.push_back({{{c, -1}}, -1, {{c, -2}}});
    ns.push_back({{{c, -1}}, -3, {{c, 2}}});
  }
  return ns;
}

// x + f(x) for one coordinate with every intermediate rounded to `fmt`,
// matching the rounding points of the evaluator.
inline double denoise_scalar(double x, const Precision& fmt) {
  double z = 0;
  auto relu = [](double a) { return a > 0 ? a : 0.0; };
  const double terms[6][3] = {{-1, 0, 1}, {1, 0, -1}, {1, -0.25, 2}, {1, -0.75, -2}, {-1, -0.25, -2}, {-1, -0.75, 2}};
  for (const auto& t : terms) {
    double a = fmt.round(relu(t[0] * x + t[1]));
    z += t[2] * a;
  }
  return fmt.round(x + fmt.round(z));
}

// ------------------------------------------------------------------ heads

struct HeadSpec {
  std::vector<SparseVec> q, k, v;
  Reg out;
  std::vector<double> rope;
};

inline std::vector<SparseVec> sel(const Reg& r) {
  std::vector<SparseVec> rows;
  for (int c : r) rows.push_back(unit(c));
  return rows;
}

inline std::vector<SparseVec> repeat(const SparseVec& row, int n) { return std::vector<SparseVec>(n, row); }

inline std::vector<SparseVec> operator+(std::vector<SparseVec> a, const std::vector<SparseVec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline HeadSpec selector_head(std::vector<SparseVec> q, std::vector<SparseVec> k, std::vector<SparseVec> v, Reg out,
                              std::vector<double> rope = {}) {
  if (q.size() != k.size()) throw std::invalid_argument("selector_head: query/key size mismatch");
  if (v.size() != out.size()) throw std::invalid_argument("selector_head: value/output size mismatch");
  return {std::move(q), std::move(k), std::move(v), std::move(out), std::move(rope)};
}

inline Head to_head(const HeadSpec& s) {
  Head h;
  h.wq = s.q;
  h.wk = s.k;
  h.wv = s.v;
  for (int c : s.out) h.wo.push_back(unit(c));
  h.rope = s.rope;
  return h;
}

// ---------------------------------------------------------------- builder

struct LayerPlan {
  std::vector<HeadSpec> heads;
  Neurons neurons;
  std::vector<std::string> manifest;
};

struct CompileReport {
  int r = 0;
  Dims formula;
  Dims used;
  Dims realized;
  std::vector<std::pair<std::string, Reg>> layout;
  std::vector<std::vector<std::string>> manifest;
  std::vector<std::string> notes;
};

class Builder {
 public:
  explicit Builder(int L) : plans_(L) {}

  RegisterLayout lay;

  int depth() const { return (int)plans_.size(); }

  // Token-type flags that are never simultaneously 1.
  void exclusive(std::vector<int> flags) { excl_.push_back(std::move(flags)); }

  // layer is 1-based.
  void head(int layer, HeadSpec h, const std::string& label) {
    auto& p = plan(layer);
    for (int c : h.out)
      for (const auto& [other, lbl] : head_writes_[layer])
        if (other == c) throw std::logic_error("layer " + std::to_string(layer) + ": heads '" + lbl + "' and '" + label + "' write " + lay.name_of(c));
    for (int c : h.out) head_writes_[layer].push_back({c, label});
    p.heads.push_back(std::move(h));
    p.manifest.push_back("head " + label);
  }

  // Neurons writing the same coordinate in one layer must be gated by
  // exclusive conditions unless they share a group.
  void mlp(int layer, const Neurons& ns, const std::string& label, const Pattern& gates = {},
           const std::string& group = "") {
    auto& p = plan(layer);
    std::set<int> writes;
    for (const auto& n : ns)
      for (const auto& e : n.out) writes.insert(e.idx);
    for (const auto& op : ops_[layer]) {
      if (!group.empty() && op.group == group) continue;
      bool overlap = false;
      for (int c : writes)
        if (op.writes.count(c)) overlap = true;
      if (overlap && !exclusive(op.gates, gates))
        throw std::logic_error("layer " + std::to_string(layer) + ": MLP ops '" + op.label + "' and '" + label +
                               "' write the same coordinates without exclusive gates");
    }
    ops_[layer].push_back({label, writes, gates, group});
    p.neurons.insert(p.neurons.end(), ns.begin(), ns.end());
    p.manifest.push_back("mlp " + label + " (" + std::to_string(ns.size()) + ")");
  }

  Dims used_dims() const {
    Dims u;
    u.L = depth();
    u.d = lay.size();
    for (const auto& p : plans_) {
      u.H = std::max<int>(u.H, (int)p.heads.size());
      u.d_ff = std::max<int>(u.d_ff, (int)p.neurons.size());
      for (const auto& h : p.heads) {
        u.d_k = std::max<int>(u.d_k, (int)h.q.size());
        u.d_v = std::max<int>(u.d_v, (int)h.v.size());
      }
    }
    return u;
  }

  int neurons_in(int layer) const { return (int)plans_.at(layer - 1).neurons.size(); }
  int heads_in(int layer) const { return (int)plans_.at(layer - 1).heads.size(); }

  // Pads every dimension up to `formula`; a used dimension above the
  // formula is an error unless `allow_exceed` lists it.
  TransformerParams finalize(const Dims& formula, CompileReport& rep, const std::set<std::string>& allow_exceed = {}) const {
    Dims u = used_dims();
    Dims z = formula;
    auto fit = [&](int used, int& target, const char* name) {
      if (used > target) {
        if (!allow_exceed.count(name))
          throw std::logic_error(std::string("construction uses ") + name + " = " + std::to_string(used) +
                                 " above the formula value " + std::to_string(target));
        rep.notes.push_back(std::string(name) + " used " + std::to_string(used) + " exceeds formula " + std::to_string(target));
        target = used;
      }
    };
    fit(u.d, z.d, "d");
    fit(u.d_ff, z.d_ff, "d_ff");
    fit(u.d_k, z.d_k, "d_k");
    fit(u.d_v, z.d_v, "d_v");
    fit(u.H, z.H, "H");
    if (u.L != z.L) throw std::logic_error("depth differs from formula");
    TransformerParams p;
    p.dims = z;
    for (const auto& pl : plans_) {
      Layer l;
      for (const auto& h : pl.heads) l.heads.push_back(to_head(h));
      while ((int)l.heads.size() < z.H) l.heads.push_back(Head{});
      l.mlp = pl.neurons;
      p.layers.push_back(std::move(l));
    }
    rep.formula = formula;
    rep.used = u;
    rep.realized = z;
    rep.layout = lay.entries();
    rep.manifest.clear();
    for (const auto& pl : plans_) rep.manifest.push_back(pl.manifest);
    return p;
  }

 private:
  struct Op {
    std::string label;
    std::set<int> writes;
    Pattern gates;
    std::string group;
  };

  LayerPlan& plan(int layer) {
    if (layer < 1 || layer > depth()) throw std::out_of_range("layer index " + std::to_string(layer) + " out of range");
    return plans_[layer - 1];
  }

  bool exclusive(const Pattern& a, const Pattern& b) const {
    for (const auto& x : a)
      for (const auto& y : b) {
        if (x.coord == y.coord && x.reg == y.reg && x.val != y.val) return true;
        if (!x.reg && !y.reg && x.val == 1 && y.val == 1 && x.coord != y.coord)
          for (const auto& grp : excl_)
            if (std::count(grp.begin(), grp.end(), x.coord) && std::count(grp.begin(), grp.end(), y.coord)) return true;
      }
    return false;
  }

  std::vector<LayerPlan> plans_;
  std::map<int, std::vector<Op>> ops_;
  std::map<int, std::vector<std::pair<int, std::string>>> head_writes_;
  std::vector<std::vector<int>> excl_;
};

}  // namespace tmc

#endif  // TMC_GADGETS_HPP
