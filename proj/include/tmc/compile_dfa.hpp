#ifndef TMC_COMPILE_DFA_HPP
#define TMC_COMPILE_DFA_HPP

#include <string>
#include <vector>

#include "automata.hpp"
#include "gadgets.hpp"
#include "netcore.hpp"

namespace tmc {

struct Compiled {
  TransformerParams params;
  CompileReport report;
};

inline Dims dfa_dims(const Dfa& m, int r) {
  const int nq = m.n_states(), dq = enc_bits(nq), ds = enc_bits(m.n_symbols());
  Dims z;
  z.L = r + 2;
  z.H = 1;
  z.d_k = r;
  z.d_v = nq * dq;
  z.d = 2 * r + 2 * nq * dq + ds + 1;
  z.d_ff = 4 * nq * dq + 2 * nq * nq * dq + 6 * r;
  return z;
}

inline std::string dfa_symbol_token(const Dfa& m, int a) { return "sym:" + m.alphabet[a]; }

// Vocabulary: input symbols, then <bos>, True, False.
inline Compiled compile_dfa(const Dfa& m, int r) {
  check(m);
  if (r < 1) throw std::invalid_argument("r must be >= 1");
  const int nq = m.n_states(), dq = enc_bits(nq), ns = m.n_symbols(), ds = enc_bits(ns);
  Builder b(r + 2);
  auto& lay = b.lay;
  Reg pos = lay.add("pos", r);
  Reg pos_ex = lay.add("pos_ex", r);
  Reg enc = lay.add("enc", nq * dq);
  Reg enc_ex = lay.add("enc_ex", nq * dq);
  Reg sym = lay.add("sym", ds);
  int bos = lay.flag("bos");

  // Layer 1: encode delta(., sigma) per symbol, identity at <bos>; pos_ex = (i-1)+.
  for (int a = 0; a < ns; ++a) {
    std::vector<int> f(nq);
    for (int q = 0; q < nq; ++q) f[q] = m.delta[q][a];
    b.mlp(1, {single_neuron(reg_is(sym, bin(ds, a)) + Pattern{flag_is(bos, 0)}, reg_vec(enc, enc_function(f, dq)))},
          "transition encoding " + m.alphabet[a], Pattern{flag_is(bos, 0)} + reg_is(sym, bin(ds, a)));
  }
  {
    std::vector<int> id(nq);
    for (int q = 0; q < nq; ++q) id[q] = q;
    b.mlp(1, {single_neuron({flag_is(bos, 1)}, reg_vec(enc, enc_function(id, dq)))}, "identity at <bos>",
          {flag_is(bos, 1)});
  }
  b.mlp(1, sub_pow2(pos, pos_ex, 0), "pos_ex = (i-1)+");

  // Layers k+2: double the window of composed transitions.
  for (int k = 0; k < r; ++k) {
    int l = k + 2;
    b.head(l, selector_head(sel(pos_ex), sel(pos), sel(enc), enc_ex), "fetch window ending 2^k back");
    b.mlp(l, compose_function_encoding(enc, enc_ex, nq), "compose", {}, "enc");
    b.mlp(l, zero_register(enc), "zero enc", {}, "enc");
    b.mlp(l, zero_register(enc_ex), "zero enc_ex", {}, "enc_ex");
    b.mlp(l, zero_register(pos_ex), "zero pos_ex", {}, "pos_ex");
    if (k < r - 1) b.mlp(l, sub_pow2(pos, pos_ex, k + 1), "pos_ex = (i-2^(k+1))+", {}, "pos_ex");
  }
  // last read of pos is the layer r+1 key; clear pos[0] there so the answer lands on 0
  b.mlp(r + 1, zero_register(Reg{pos[0]}), "clear output coordinate", {}, "answer");

  // Layer r+2: answer bit at coordinate pos[0].
  {
    int l = r + 2;
    Reg slice(enc.begin() + dq * m.init, enc.begin() + dq * (m.init + 1));
    Neurons ans;
    for (int q = 0; q < nq; ++q) ans.push_back(single_neuron(reg_is(slice, bin(dq, q)), unit(pos[0], m.accepting[q] ? 1 : -1)));
    b.mlp(l, ans, "accepting lookup", {}, "answer");
  }

  Compiled c;
  c.report.r = r;
  c.params = b.finalize(dfa_dims(m, r), c.report, {"d_ff"});
  auto& p = c.params;
  for (int a = 0; a < ns; ++a) {
    p.vocab.push_back(dfa_symbol_token(m, a));
    p.emb.push_back(reg_vec(sym, bin(ds, a)));
    p.unemb.push_back({});
  }
  p.vocab.push_back("<bos>");
  p.emb.push_back(unit(bos));
  p.unemb.push_back({});
  p.vocab.push_back("True");
  p.emb.push_back({});
  p.unemb.push_back(unit(pos[0], 1));
  p.vocab.push_back("False");
  p.emb.push_back({});
  p.unemb.push_back(unit(pos[0], -1));
  p.pos.kind = PosKind::BinaryAbsolute;
  p.pos.r = r;
  p.pos.targets = pos;
  validate(p);
  return c;
}

// <bos> followed by the word.
inline std::vector<int> dfa_prompt(const Dfa& m, const std::vector<int>& w) {
  std::vector<int> t{m.n_symbols()};
  t.insert(t.end(), w.begin(), w.end());
  return t;
}

}  // namespace tmc

#endif  // TMC_COMPILE_DFA_HPP
