#ifndef TMC_COMPILE_ROPE_HPP
#define TMC_COMPILE_ROPE_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "compile_dfa.hpp"
#include "gadgets.hpp"
#include "netcore.hpp"

namespace tmc {

inline Dims rope_prefix_dims(int r) {
  Dims z;
  z.d = 2 * r + 3;
  z.d_k = 2 * (r + 2) + 2;
  z.d_v = 1;
  z.H = 2;
  z.L = r + 1;
  z.d_ff = 2;
  return z;
}

// Hardmax stack that writes bin_r(i) into I_res using rotary heads only.
// Vocabulary: "<bos>" (first position) and "x".
inline Compiled build_rope_position_prefix(int r) {
  if (r < 1) throw std::invalid_argument("r must be >= 1");
  Builder b(r + 1);
  auto& lay = b.lay;
  const int one = lay.flag("const"), first = lay.flag("firstpos");
  Reg res = lay.add("res", r);
  std::vector<int> mod;  // mod[k-1] = F_mod^k
  for (int k = 1; k <= r; ++k) mod.push_back(lay.flag("mod" + std::to_string(k)));
  const int ex = lay.flag("ex");

  std::vector<double> freqs;
  for (int s = 1; s <= r + 2; ++s) freqs.push_back(2 * std::numbers::pi / std::ldexp(1.0, s));
  const int dk = 2 * (r + 2) + 2;
  // rows: rotated block s occupies 2(s-1), 2(s-1)+1; unrotated block is last
  auto rows = [&](std::vector<std::pair<int, SparseVec>> set) {
    std::vector<SparseVec> v(dk);
    for (auto& [i, row] : set) v[i] = row;
    return v;
  };
  auto rot = [](int s) { return 2 * (s - 1); };
  const int un = dk - 2;

  // F_mod^k: position divisible by 2^k
  b.head(1, selector_head(rows({{rot(1), unit(one)}, {un, unit(one)}}), rows({{rot(1), unit(one)}, {un, unit(first)}}),
                          {unit(first)}, {mod[0]}, freqs),
         "even position");
  for (int k = 2; k <= r; ++k)
    b.head(k, selector_head(rows({{rot(k), unit(mod[k - 2])}, {un, unit(mod[k - 2])}, {un + 1, unit(one)}}),
                            rows({{rot(k), unit(first)}, {un, unit(first)}, {un + 1, unit(one) + unit(first, -1)}}),
                            {unit(first)}, {mod[k - 1]}, freqs),
           "divisible by 2^" + std::to_string(k));

  if (r >= 1) {
    const int l = 2;
    b.mlp(l, {single_neuron({flag_is(mod[0], 1)}, unit(res[0], -1)), single_neuron({flag_is(mod[0], 0)}, unit(res[0], 1))},
          "bit 0", {}, "bit0");
  }
  // bit k from the latest multiple of 2^k
  for (int k = 1; k <= r - 1; ++k) {
    std::vector<std::pair<int, SparseVec>> q{{un, unit(one)}, {un + 1, unit(one)}}, kk{{un, unit(mod[k - 1])}, {un + 1, unit(mod[k - 1])}};
    for (int s = k + 2; s <= r + 2; ++s) {
      q.push_back({rot(s), unit(one)});
      kk.push_back({rot(s), unit(one)});
    }
    b.head(k + 2, selector_head(rows(q), rows(kk), {unit(mod[k])}, {ex}, freqs), "latest multiple of 2^" + std::to_string(k));
    b.mlp(k + 2, {single_neuron({flag_is(ex, 1)}, unit(res[k], -1) + unit(ex, -1)), single_neuron({flag_is(ex, 0)}, unit(res[k], 1))},
          "bit " + std::to_string(k), {}, "bit");
  }

  Compiled c;
  c.report.r = r;
  // L = r+1 needs the bit-0 MLP in layer 2, so r = 1 still has two layers.
  c.params = b.finalize(rope_prefix_dims(r), c.report);
  auto& p = c.params;
  p.vocab = {"<bos>", "x"};
  p.emb = {unit(one) + unit(first), unit(one)};
  p.unemb = {{}, {}};
  p.pos.kind = PosKind::Rotary;
  p.pos.r = r;
  p.pos.targets = res;
  validate(p);
  return c;
}

}  // namespace tmc

#endif  // TMC_COMPILE_ROPE_HPP
