#ifndef TMC_COMPILE_TM_HPP
#define TMC_COMPILE_TM_HPP

#include <string>
#include <vector>

#include "automata.hpp"
#include "compile_dfa.hpp"
#include "gadgets.hpp"
#include "netcore.hpp"

namespace tmc {

inline Dims cot_dims(const TuringMachine& m, int r) {
  const int K = m.tapes, dq = m.d_q(), dg = m.d_gamma();
  const long long trans = (long long)m.n_states() * m.n_tuples() + 1;
  Dims z;
  z.L = 5 * r / 2 + 8;
  z.H = 3 * K;
  z.d_k = 4 * r - 1;
  z.d_v = std::max({r, dq, dg});
  z.d = 6 * K * r + 6 * r + 3 * dq + (3 * K + 1) * dg + 10 * K + 21;
  z.d_ff = (int)std::max<long long>({18LL * r + 2, 14LL * K * r + 2 * r, trans});
  return z;
}

inline Dims scot_dims(const TuringMachine& m, int r) {
  const int K = m.tapes, dq = m.d_q(), dg = m.d_gamma();
  const long long trans = (long long)m.n_states() * m.n_tuples() + 4LL * K * dg + 4 * K + 1;
  Dims z;
  z.L = 5 * r / 2 + 8;
  z.H = 3 * K + 2;
  z.d_k = 4 * r - 1;
  z.d_v = std::max({r, dq, dg});
  z.d = 7 * K * r + 9 * r + 5 * dq + (4 * K + 1) * dg + 13 * K + 31;
  z.d_ff = (int)std::max<long long>({22LL * r + 11, 18LL * K * r + 2 * r + 1, trans});
  return z;
}

struct CompiledTm {
  TransformerParams params;
  CompileReport report;
  std::vector<Token> tokens;  // tokens[i] is params.vocab[i]
  bool scot = false;
};

namespace detail {

inline CompiledTm compile_tm(const TuringMachine& m, int r, bool scot) {
  check(m);
  if (r % 2 || r < (scot ? 4 : 2)) throw std::invalid_argument(scot ? "r must be even and >= 4" : "r must be even and >= 2");
  if (r > 30) throw std::invalid_argument("r too large");
  const int K = m.tapes, dq = m.d_q(), dg = m.d_gamma();
  const int L1 = r / 2 + 1, L2 = L1 + r + 2, L3 = L2 + r + 1, L = L3 + 4;
  Builder b(L);
  auto& lay = b.lay;

  // registers
  auto per_tape = [&](const std::string& n, int size) {
    std::vector<Reg> v;
    for (int k = 0; k < K; ++k) v.push_back(lay.add(n + "^" + std::to_string(k + 1), size));
    return v;
  };
  auto per_tape_flag = [&](const std::string& n) {
    std::vector<int> v;
    for (int k = 0; k < K; ++k) v.push_back(lay.flag(n + "^" + std::to_string(k + 1)));
    return v;
  };
  auto searchpos = per_tape("searchpos", r);
  auto spos = per_tape("spos", r);
  auto hposm = per_tape("hpos-", r);
  auto possym = per_tape("pos,sym", r);
  auto posmax = per_tape("pos,max", r);
  auto hpospos = per_tape("hpos,pos", r);
  Reg pos = lay.add("pos", r);
  Reg pos_outp = lay.add("pos,outp", r);
  Reg pos1 = lay.add("pos1", r);
  Reg pos2 = lay.add("pos2", r);
  Reg posm = lay.add("pos-", r);
  Reg posm2 = lay.add("pos-'", r);
  Reg state = lay.add("state", dq);
  Reg state_ex = lay.add("state,ex", dq);
  Reg state_new = lay.add("state,new", dq);
  auto sym = per_tape("sym", dg);
  auto sym_ex = per_tape("sym,ex", dg);
  auto sym_new = per_tape("sym,new", dg);
  Reg newsym = lay.add("newsym", dg);
  auto posbit = per_tape_flag("posbit");
  auto move = per_tape("move", 2);
  auto bex1 = per_tape_flag("bits,ex1");
  auto bex2 = per_tape_flag("bits,ex2");
  auto exist = per_tape_flag("exist");
  auto exhigh = per_tape_flag("exist,high");
  auto nextbit = per_tape_flag("nextbit");
  auto move_new = per_tape("move,new", 2);
  const int one = lay.flag("const"), notinp = lay.flag("not<inp>");
  const int f_inp = lay.flag("<inp>"), f_inpend = lay.flag("</inp>"), f_outp = lay.flag("<outp>"),
            f_outpend = lay.flag("</outp>"), f_p = lay.flag("<p>"), f_pend = lay.flag("</p>"), f_run = lay.flag("run"),
            f_sig = lay.flag("sigma"), f_pos = lay.flag("postok"), f_halt = lay.flag("halt"),
            f_exoutp = lay.flag("exists<outp>"), f_input = lay.flag("input"), f_output = lay.flag("output"),
            f_lastrun = lay.flag("last_run"), f_top = lay.flag("->p"), f_topend = lay.flag("->/p"),
            f_blank = lay.flag("blank"), f_tooutpend = lay.flag("->/outp"), f_tosig = lay.flag("->sigma");

  // summary registers
  Reg pos_pe, pos_summ, state_fin, state_fin_out;
  std::vector<Reg> hpos_fin, sym_next;
  std::vector<int> head_next, f_head, f_hn, bitequal;
  int f_summ = -1, f_summend = -1, f_exinpend = -1, f_exsummend = -1, f_tape = -1, f_q = -1, f_final = -1,
      f_tinit = -1, f_tfin = -1, f_lc = -1, f_tosumm = -1, f_nexttape = -1;
  if (scot) {
    pos_pe = lay.add("pos,promptend", r);
    pos_summ = lay.add("pos,summ", r);
    hpos_fin = per_tape("hpos,fin", r);
    state_fin = lay.add("state,fin", dq);
    state_fin_out = lay.add("state,fin,out", dq);
    sym_next = per_tape("sym,next", dg);
    head_next = per_tape_flag("head,next");
    f_head = per_tape_flag("head");
    f_hn = per_tape_flag("is_head_next");
    for (int s = 0; s < r - 2; ++s) bitequal.push_back(lay.flag("bitequal" + std::to_string(s)));
    f_summ = lay.flag("<summ>");
    f_summend = lay.flag("</summ>");
    f_exinpend = lay.flag("exists</inp>");
    f_exsummend = lay.flag("exists</summ>");
    f_tape = lay.flag("tape");
    f_q = lay.flag("statetok");
    f_final = lay.flag("final<summ>");
    f_tinit = lay.flag("tape,init");
    f_tfin = lay.flag("tape,fin");
    f_lc = lay.flag("lengthcap");
    f_tosumm = lay.flag("->summ");
    f_nexttape = lay.flag("nexttape");
  }

  // Token-type flags that never co-occur. <inp> is left out: the first
  // <summ> of a summary prompt also carries it.
  std::vector<int> types{f_inpend, f_outp, f_outpend, f_p, f_pend, f_run, f_sig, f_pos};
  if (scot) types.insert(types.end(), {f_summ, f_summend, f_tape, f_q});
  b.exclusive(types);
  std::vector<int> roles{f_outp, f_p, f_pend, f_run, f_input, f_output, f_inpend};
  if (scot) roles.insert(roles.end(), {f_final, f_tinit, f_tfin, f_summend, f_q});
  b.exclusive(roles);

  auto F = [](int c, int v = 1) { return Pattern{flag_is(c, v)}; };
  auto U = [](int c) { return unit(c); };
  auto slice = [](const Reg& rg, int from, int to) { return Reg(rg.begin() + from, rg.begin() + to); };
  // base trick: tokens flagged `f` broadcast to later tokens, themselves attend the base
  auto broadcast = [&](int f, Reg src) {
    return selector_head({U(one), U(f), U(f)}, {U(f), U(f_inp), U(f_inp)}, sel(src), src);
  };

  // ---- layer 1
  b.head(1, selector_head({U(one)}, {U(f_outp)}, {U(f_outp)}, {f_exoutp}), "exists <outp>");
  b.mlp(1, {single_neuron(F(f_sig) + F(f_exoutp, 0), U(f_input))}, "input flag");
  b.mlp(1, {single_neuron(F(f_sig) + F(f_exoutp), U(f_output))}, "output flag");
  b.mlp(1, sub_pow2(pos, spos[0], 0, F(f_sig) + F(f_exoutp, 0)), "input cell index", F(f_sig) + F(f_exoutp, 0));
  b.mlp(1, copy_register(pos, pos_outp, F(f_outp)), "record <outp> position", F(f_outp));
  b.mlp(1, sub_pow2(pos, pos1, 0), "pos1 = i-1");
  b.mlp(1, sub_pow2(pos, pos2, 1), "pos2 = i-2");
  b.mlp(1, sub_pow2(pos, posm, 0), "pos- = i-1");
  if (scot) {
    b.head(1, selector_head({U(one)}, {U(f_inpend)}, {U(f_inpend)}, {f_exinpend}), "exists </inp>");
    b.head(1, selector_head({U(one)}, {U(f_summend)}, {U(f_summend)}, {f_exsummend}), "exists </summ>");
    b.mlp(1, {single_neuron(F(f_summ) + F(f_exinpend), U(f_final)),
              single_neuron(F(f_summ) + F(f_exinpend, 0) + F(f_exsummend), U(f_final))},
          "final <summ>", {}, "final");
    b.mlp(1, {single_neuron(F(f_summ) + F(f_exinpend, 0) + F(f_exsummend, 0), unit(f_inp, 1) + unit(notinp, -1))},
          "summary prompt start acts as base");
    b.mlp(1, {single_neuron(F(f_tape) + F(f_exinpend, 0) + F(f_exsummend, 0), U(f_tinit))}, "prompt tape token");
    b.mlp(1, {single_neuron(F(f_tape) + F(f_exinpend), U(f_tfin)),
              single_neuron(F(f_tape) + F(f_exinpend, 0) + F(f_exsummend), U(f_tfin))},
          "generated tape token", {}, "tfin");
    b.mlp(1, copy_register(pos, pos_pe, F(f_inpend)), "prompt end at </inp>", F(f_inpend));
    b.mlp(1, copy_register(pos, pos_pe, F(f_summend)), "prompt end at </summ>", F(f_summend));
  }

  // ---- layer 2
  b.head(2, broadcast(f_outp, pos_outp), "broadcast <outp> position");
  b.mlp(2, copy_register(pos, searchpos[0], F(f_output)), "output token search start", F(f_output));
  for (int k = 0; k < K; ++k) b.mlp(2, copy_register(pos, possym[k], F(f_run)), "run token position", F(f_run));
  b.mlp(2, copy_register(pos, possym[0], F(f_input)), "input token position", F(f_input));
  if (scot) {
    {
      SparseVec pe = unit(f_inpend) + unit(f_summend);
      b.head(2, selector_head({U(one), pe, pe}, {pe, U(f_inp), U(f_inp)}, sel(pos_pe), pos_pe), "broadcast prompt end");
    }
    for (int k = 0; k < K; ++k) {
      b.mlp(2, sub_pow2(pos, spos[k], 0, F(f_tinit)), "prompt tape cell index", F(f_tinit));
      b.mlp(2, copy_register(pos, possym[k], F(f_tinit)), "prompt tape position", F(f_tinit));
    }
    for (int s = 0; s < r - 2; ++s)
      b.mlp(2, {single_neuron({bit_is(pos[s + 2], 1), bit_is(pos_pe[s], 1)}, U(bitequal[s])),
                single_neuron({bit_is(pos[s + 2], -1), bit_is(pos_pe[s], -1)}, U(bitequal[s]))},
            "bit equality " + std::to_string(s), {}, "be" + std::to_string(s));
    b.mlp(2, copy_register(pos, pos_summ, F(f_final)), "record final <summ> position", F(f_final));
  }

  // ---- layers 2..L1: decode head positions at </p>
  for (int l = 2; l <= L1; ++l) {
    const int j = l - 1;
    for (int k = 0; k < K; ++k) {
      b.head(l, selector_head(sel(pos1), sel(pos), {U(posbit[k])}, {bex1[k]}), "bit at i-1");
      b.head(l, selector_head(sel(pos2), sel(pos), {U(posbit[k])}, {bex2[k]}), "bit at i-2");
      b.mlp(l, copy_register({bex1[k]}, {searchpos[k][r - 2 * j + 1]}, F(f_pend)), "store high bit", F(f_pend));
      b.mlp(l, copy_register({bex2[k]}, {searchpos[k][r - 2 * j]}, F(f_pend)), "store low bit", F(f_pend));
      b.mlp(l, zero_register({bex1[k], bex2[k]}), "clear extracted bits");
    }
    b.mlp(l, sub_pow2_inplace(pos1, 1), "pos1 -= 2");
    b.mlp(l, sub_pow2_inplace(pos2, 1), "pos2 -= 2");
  }

  // ---- layers 3..r+2: offset of output tokens
  for (int i = 0; i < r; ++i)
    b.mlp(3 + i, full_subtract_stage(pos_outp, searchpos[0], i, F(f_output)), "output offset stage " + std::to_string(i),
          F(f_output));

  if (scot) {
    // ---- layer 3
    for (int k = 0; k < K; ++k)
      b.head(3, selector_head({U(one), U(f_summend), U(f_summend)}, {U(f_inp), U(f_head[k]), U(f_head[k])}, sel(spos[k]),
                              searchpos[k]),
             "head cell from summary");
    b.head(3, selector_head({U(one), U(f_summend), U(f_summend)}, {U(f_inp), U(f_q), U(f_q)}, sel(state), state),
           "state from summary");
    b.head(3, broadcast(f_final, pos_summ), "broadcast final <summ> position");
    {
      Pattern p{bit_is(pos[0], -1), bit_is(pos[1], -1), bit_is(pos_pe[r - 2], -1), bit_is(pos_pe[r - 1], -1)};
      for (int s = 0; s < r - 2; ++s) p.push_back(flag_is(bitequal[s], 1));
      b.mlp(3, {single_neuron(p, U(f_lc))}, "i = 4 * prompt end");
    }
    for (int k = 0; k < K; ++k) {
      b.mlp(3, copy_register(pos, searchpos[k], F(f_final)), "summary search start", F(f_final));
      b.mlp(3, copy_register(pos, searchpos[k], F(f_tfin)), "summary search start", F(f_tfin));
    }
    // ---- layer 4
    b.head(4, selector_head({U(one), U(f_lc), U(f_lc)}, {U(f_lc), U(f_inp), U(f_inp)}, {U(f_lc)}, {f_lc}),
           "broadcast length cap");
    b.mlp(4, {single_neuron(F(f_run) + F(f_lc) + F(f_halt, 0), U(f_tosumm))}, "emit <summ> next");
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < K; ++k) {
        b.mlp(4 + i, full_subtract_stage(pos_summ, searchpos[k], i, F(f_final)), "summary offset stage", F(f_final));
        b.mlp(4 + i, full_subtract_stage(pos_summ, searchpos[k], i, F(f_tfin)), "summary offset stage", F(f_tfin));
      }
  }

  // ---- layers L1+1..L1+r+1: propagate head positions along run tokens
  for (int j = 1; j <= r + 1; ++j) {
    const int l = L1 + j;
    for (int k = 0; k < K; ++k) {
      const std::string g = "prop" + std::to_string(k);
      b.head(l, selector_head(sel(posm), sel(pos), sel(searchpos[k]), hposm[k]), "previous head position");
      b.mlp(l, zero_register(searchpos[k], F(f_run)), "reset", F(f_run), g);
      b.mlp(l, add_head_movement(hposm[k], searchpos[k], move[k], F(f_run)), "apply move", F(f_run), g);
      b.mlp(l, zero_register(searchpos[k], F(f_p)), "reset", F(f_p), g);
      b.mlp(l, copy_register(hposm[k], searchpos[k], F(f_p)), "carry to <p>", F(f_p), g);
      if (j <= r) b.mlp(l, zero_register(hposm[k]), "clear");
    }
  }

  // ---- layer L2
  for (int k = 0; k < K; ++k) {
    b.mlp(L2, copy_register(hposm[k], spos[k], F(f_run)), "written cell", F(f_run));
    b.mlp(L2, copy_register(searchpos[k], hpospos[k], F(f_p)), "head position at <p>", F(f_p));
    b.mlp(L2, copy_register({searchpos[k][0]}, {nextbit[k]}, F(f_p)), "first position bit", F(f_p));
  }
  b.mlp(L2, sub_pow2(pos, posm2, 0), "pos-' = i-1");
  if (scot) {
    b.head(L2, selector_head(sel(posm), sel(pos), sel(state), state_fin), "state before <summ>");
    for (int k = 0; k < K; ++k)
      b.head(L2, selector_head(sel(posm), sel(pos), sel(searchpos[k]), hpos_fin[k]), "head before <summ>");
    b.mlp(L2 + 1, zero_register(state_fin, F(f_final, 0)), "keep only at final <summ>");
    for (int k = 0; k < K; ++k) b.mlp(L2 + 1, zero_register(hpos_fin[k], F(f_final, 0)), "keep only at final <summ>");
    b.head(L2 + 2, broadcast(f_final, state_fin), "broadcast final state");
    for (int k = 0; k < K; ++k)
      b.head(L2 + 2, selector_head(sel(searchpos[k]) + repeat(U(one), r - 1), sel(hpos_fin[k]) + repeat(U(f_inp), r - 1),
                                   {U(notinp)}, {f_hn[k]}),
             "head lies on next cell");
    for (int type : {f_final, f_tfin}) {
      Pattern none = F(type);
      for (int k = 0; k < K; ++k) none = none + F(exist[k], 0) + F(f_hn[k], 0);
      b.mlp(L2 + 3, {single_neuron(F(type), U(f_nexttape)), single_neuron(none, unit(f_nexttape, -1))},
            "next token is a tape token", {}, "nexttape");
    }
    b.mlp(L2 + 4, copy_register(state_fin, state_fin_out, F(f_nexttape, 0) + F(f_q, 0)), "final state token");
  }

  // ---- layers L2+1..L2+r: latest write per cell, nextbit, chunk end
  for (int j = 0; j < r; ++j) {
    const int l = L2 + j + 1, bb = r - 1 - j;
    for (int k = 0; k < K; ++k) {
      if (j == 0)
        b.head(l, selector_head(sel(searchpos[k]) + repeat(U(one), r - 1), sel(spos[k]) + repeat(U(f_inp), r - 1),
                                {U(notinp)}, {exist[k]}),
               "cell was written");
      auto q = sel(searchpos[k]) + repeat(U(one), r + j) + std::vector<SparseVec>{U(one)} + sel(slice(posmax[k], bb + 1, r));
      auto kk = sel(spos[k]) + repeat(U(f_inp), r + j) + std::vector<SparseVec>{U(possym[k][bb])} +
                sel(slice(possym[k], bb + 1, r));
      b.head(l, selector_head(q, kk, {U(notinp)}, {exhigh[k]}), "later write exists");
      b.mlp(l, {single_neuron(F(exhigh[k]), unit(posmax[k][bb], 1) + unit(exhigh[k], -1)),
                single_neuron(F(exist[k]) + F(exhigh[k], 0), unit(posmax[k][bb], -1))},
            "latest write bit", {}, "pm" + std::to_string(k));
    }
    const int p = j + 1;
    if (p <= r - 1)
      for (int k = 0; k < K; ++k)
        b.head(l, selector_head(sel(posm2), sel(pos), {U(hpospos[k][p])}, {nextbit[k]}), "next position bit");
    if (p == r - 1) {
      // at r = 2 this layer is one head over 3K; CoT has L2 free and i-(r-1) = i-1 there
      if (r == 2 && !scot) b.head(L2, selector_head(sel(posm), sel(pos), {U(f_run)}, {f_lastrun}), "chunk start r-1 back");
      else b.head(l, selector_head(sel(posm2), sel(pos), {U(f_run)}, {f_lastrun}), "chunk start r-1 back");
      Pattern g = F(f_lastrun) + F(f_run) + F(f_halt, 0);
      if (scot) g = g + F(f_tosumm, 0);
      b.mlp(l, {single_neuron(g, U(f_top))}, "emit <p> next");
    }
    if (p == r) b.head(l, selector_head(sel(posm2), sel(pos), {U(f_p)}, {f_topend}), "<p> r back");
    b.mlp(l, sub_pow2_inplace(posm2, p == r ? 1 : 0), "decrement pos-'");
  }

  // ---- layer L3: fetch symbols under heads, state for </p>
  for (int k = 0; k < K; ++k)
    b.head(L3, selector_head(sel(posmax[k]) + std::vector<SparseVec>{U(one)}, sel(possym[k]) + std::vector<SparseVec>{U(f_inp)},
                             sel(sym[k]), sym_ex[k]),
           "symbol under head");
  b.head(L3, selector_head(sel(posm2), sel(pos), sel(state), state_ex), "state r+2 back");
  b.mlp(L3, copy_register(state_ex, state, F(f_pend)), "state at </p>", F(f_pend));
  for (int k = 0; k < K; ++k)
    b.mlp(L3, {single_neuron(F(exist[k], 0) + F(f_p, 0) + F(f_pos, 0) + F(f_input, 0), reg_vec(sym_ex[k], bin(dg, m.blank)))},
          "unwritten cell is blank");

  // ---- layer L3+1: transition table
  {
    Neurons tr;
    for (int q = 0; q < m.n_states(); ++q) {
      if (q == m.halt) continue;
      for (long long c = 0; c < m.n_tuples(); ++c) {
        auto syms = m.decode(c);
        const auto& t = m.step(q, syms);
        Pattern p = reg_is(state, bin(dq, q)) + F(f_top, 0);
        if (scot) p = p + F(f_tosumm, 0) + F(f_q, 0);
        SparseVec out = reg_vec(state_new, bin(dq, t.next));
        for (int k = 0; k < K; ++k) {
          p = p + reg_is(sym_ex[k], bin(dg, syms[k]));
          out = out + reg_vec(sym_new[k], bin(dg, t.write[k])) + reg_vec(move_new[k], enc_move(t.move[k]));
        }
        tr.push_back(single_neuron(p, out));
      }
    }
    b.mlp(L3 + 1, tr, "transition function");
  }
  b.mlp(L3 + 1, {single_neuron(reg_is(sym_ex[0], bin(dg, m.blank)), U(f_blank))}, "blank on tape 1");
  if (scot)
    for (int k = 0; k < K; ++k) {
      b.mlp(L3 + 1, copy_register(sym_ex[k], sym_next[k], F(f_nexttape)), "next tape symbol", F(f_nexttape));
      b.mlp(L3 + 1, {single_neuron(F(f_nexttape) + F(f_hn[k]), unit(head_next[k], 1)),
                     single_neuron(F(f_nexttape) + F(f_hn[k], 0), unit(head_next[k], -1))},
            "next hat", {}, "hat" + std::to_string(k));
    }
  b.mlp(L3 + 2, {single_neuron(F(f_outp) + F(f_blank), U(f_tooutpend)), single_neuron(F(f_output) + F(f_blank), U(f_tooutpend))},
        "emit </outp> next", {}, "endout");
  b.mlp(L3 + 3, {single_neuron(F(f_exoutp) + F(f_tooutpend, 0), U(f_tosig))}, "emit output symbol next");
  b.mlp(L3 + 4, copy_register(sym_ex[0], newsym, F(f_tosig)), "output symbol");

  CompiledTm res;
  res.scot = scot;
  res.report.r = r;
  res.params = b.finalize(scot ? scot_dims(m, r) : cot_dims(m, r), res.report);
  auto& P = res.params;
  res.tokens = scot ? scot_vocab(m) : cot_vocab(m);
  for (const auto& t : res.tokens) {
    P.vocab.push_back(token_name(m, t));
    SparseVec e, u;
    if (t.kind != Tok::Inp) e = unit(one) + unit(notinp);
    switch (t.kind) {
      case Tok::Inp: e = unit(one) + unit(f_inp); break;
      case Tok::InpEnd:
        e = e + unit(f_inpend) + reg_vec(state, bin(dq, m.init));
        for (int k = 0; k < K; ++k) e = e + reg_vec(searchpos[k], bin(r, 0));
        break;
      case Tok::Outp:
        e = e + unit(f_outp) + reg_vec(searchpos[0], bin(r, 0));
        u = unit(f_halt);
        break;
      case Tok::OutpEnd: e = e + unit(f_outpend); u = unit(f_tooutpend); break;
      case Tok::P: e = e + unit(f_p); u = unit(f_top); break;
      case Tok::PEnd: e = e + unit(f_pend); u = unit(f_topend); break;
      case Tok::Summ: e = e + unit(f_summ); u = unit(f_tosumm); break;
      case Tok::SummEnd: e = e + unit(f_summend); u = unit(f_q); break;
      case Tok::Sym:
        e = e + unit(f_sig) + reg_vec(sym[0], bin(dg, t.a));
        u = reg_vec(newsym, bin(dg, t.a));
        break;
      case Tok::Run:
        e = e + unit(f_run) + reg_vec(state, bin(dq, t.a));
        if (t.a == m.halt) e = e + unit(f_halt);
        u = reg_vec(state_new, bin(dq, t.a));
        for (int k = 0; k < K; ++k) {
          e = e + reg_vec(sym[k], bin(dg, t.v[k])) + reg_vec(move[k], enc_move(t.w[k]));
          u = u + reg_vec(sym_new[k], bin(dg, t.v[k])) + reg_vec(move_new[k], enc_move(t.w[k]));
        }
        break;
      case Tok::Pos:
        e = e + unit(f_pos);
        for (int k = 0; k < K; ++k) {
          e = e + unit(posbit[k], t.v[k]);
          u = u + unit(nextbit[k], t.v[k]);
        }
        break;
      case Tok::State:
        e = e + unit(f_q) + reg_vec(state, bin(dq, t.a));
        u = reg_vec(state_fin_out, bin(dq, t.a));
        break;
      case Tok::Tape:
        e = e + unit(f_tape);
        for (int k = 0; k < K; ++k) {
          e = e + reg_vec(sym[k], bin(dg, t.v[k]));
          if (t.w[k]) e = e + unit(f_head[k]);
          u = u + reg_vec(sym_next[k], bin(dg, t.v[k])) + unit(head_next[k], t.w[k] ? 1 : -1);
        }
        break;
    }
    P.emb.push_back(e);
    P.unemb.push_back(u);
  }
  P.pos.kind = PosKind::BinaryAbsolute;
  P.pos.r = r;
  P.pos.targets = pos;
  validate(P);
  return res;
}

}  // namespace detail

inline CompiledTm compile_cot(const TuringMachine& m, int r) { return detail::compile_tm(m, r, false); }
inline CompiledTm compile_scot(const TuringMachine& m, int r) { return detail::compile_tm(m, r, true); }

// Smallest even r >= min_r with 2^r >= x.
inline int even_r_for(long long x, int min_r) {
  int r = min_r;
  while ((1LL << r) < x) r += 2;
  return r;
}

// 2 * ceil(log2(4 + 6 t) / 2)
inline int choose_r_cot(long long t_hat) { return even_r_for(4 + 6 * t_hat, 2); }

// 2 * ceil(log2(8 (s + 3)) / 2), at least 4
inline int choose_r_scot(long long s_hat) { return even_r_for(8 * (s_hat + 3), 4); }

}  // namespace tmc

#endif  // TMC_COMPILE_TM_HPP
