#ifndef TMC_HARNESS_HPP
#define TMC_HARNESS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "automata.hpp"
#include "compilers.hpp"
#include "fpcore.hpp"
#include "generation.hpp"
#include "netcore.hpp"
#include "softmaxify.hpp"

namespace tmc {

// ------------------------------------------------------------ sampling

// States q0.., then "halt" (last). Gamma = {_, a, b, ...}, blank first.
inline TuringMachine sample_tm(std::uint64_t seed, int K, int q_count, int gamma_count) {
  if (K < 1 || q_count < 2 || gamma_count < 2) throw std::invalid_argument("sample_tm: K >= 1, q_count >= 2, gamma_count >= 2");
  if (gamma_count > 27) throw std::invalid_argument("sample_tm: gamma_count too large");
  std::mt19937_64 rng(seed);
  TuringMachine m;
  m.tapes = K;
  for (int q = 0; q + 1 < q_count; ++q) m.states.push_back("q" + std::to_string(q));
  m.states.push_back("halt");
  m.init = 0;
  m.halt = q_count - 1;
  m.tape_alphabet.push_back("_");
  for (int g = 1; g < gamma_count; ++g) {
    m.tape_alphabet.push_back(std::string(1, char('a' + g - 1)));
    m.input_symbols.push_back(g);
  }
  m.blank = 0;
  const long long nt = m.n_tuples();
  m.delta.assign(q_count * nt, Transition{});
  std::uniform_int_distribution<int> dq(0, q_count - 1), dg(0, gamma_count - 1), dm(0, 2);
  for (int q = 0; q < q_count; ++q) {
    if (q == m.halt) continue;
    for (long long c = 0; c < nt; ++c) {
      Transition t;
      t.next = dq(rng);
      for (int k = 0; k < K; ++k) t.write.push_back(dg(rng));
      for (int k = 0; k < K; ++k) t.move.push_back(dm(rng));
      m.delta[q * nt + c] = t;
    }
  }
  return m;
}

inline std::vector<int> sample_word(std::mt19937_64& rng, const TuringMachine& m, int max_len) {
  std::uniform_int_distribution<int> dl(0, max_len), ds(0, (int)m.input_symbols.size() - 1);
  int n = dl(rng);
  std::vector<int> w(n);
  for (auto& a : w) a = m.input_symbols[ds(rng)];
  return w;
}

inline std::vector<std::string> symbol_names(const TuringMachine& m, const std::vector<int>& w) {
  std::vector<std::string> s;
  for (int a : w) s.push_back(m.tape_alphabet[a]);
  return s;
}

// ---------------------------------------------------------------- DFAs

inline Dfa parity_dfa() {
  Dfa d;
  d.states = {"even", "odd"};
  d.alphabet = {"0", "1"};
  d.delta = {{0, 1}, {1, 0}};
  d.init = 0;
  d.accepting = {true, false};
  return d;
}

inline Dfa contains_ab_dfa() {
  Dfa d;
  d.states = {"none", "seen_a", "found"};
  d.alphabet = {"a", "b"};
  d.delta = {{1, 0}, {1, 2}, {2, 2}};
  d.init = 0;
  d.accepting = {false, false, true};
  return d;
}

// Number of 1s divisible by 3.
inline Dfa mod3_dfa() {
  Dfa d;
  d.states = {"r0", "r1", "r2"};
  d.alphabet = {"0", "1"};
  d.delta = {{0, 1}, {1, 2}, {2, 0}};
  d.init = 0;
  d.accepting = {true, false, false};
  return d;
}

inline std::vector<Dfa> example_dfas() { return {parity_dfa(), contains_ab_dfa(), mod3_dfa()}; }

// ------------------------------------------------------------ reports

enum class AttnMode { Hardmax, Scaled, Denoised };

inline const char* attn_mode_name(AttnMode m) {
  return m == AttnMode::Hardmax ? "hardmax" : m == AttnMode::Scaled ? "scaled" : "denoised";
}

struct TrialInfo {
  int trial = 0;
  int K = 0, Q = 0, G = 0, w_len = 0;
  long long t = 0, s = 0;
  int r = 0;
  bool skipped = false;
  std::string skip_reason;
  bool match = false;
  long long generated = 0;
};

struct Mismatch {
  int trial = 0;
  int segment = 0;
  long long index = 0;
  std::string expected, actual;
};

struct ValidationReport {
  std::string kind;
  long long attempted = 0, skipped = 0, checked = 0;
  std::vector<Mismatch> mismatches;
  std::vector<TrialInfo> trials;
  InvariantStats invariants;
  long long length_bound_violations = 0;
  std::vector<std::string> notes;
  double max_denoise_deviation = 0;
  double c = 1;
  double wall_seconds = 0;

  bool ok() const { return mismatches.empty() && invariants.violations() == 0 && length_bound_violations == 0; }
};

struct ValidationConfig {
  std::uint64_t seed = 1;
  int trials = 200;
  int k_min = 1, k_max = 2;
  int q_min = 2, q_max = 4;
  int g_min = 2, g_max = 3;
  int max_w = 4;
  long long step_cap = 40;
  int r_spread = 8;  // r drawn from r_min, r_min+2, ..., r_min+r_spread
  AttnMode attention = AttnMode::Hardmax;
  int att_mantissa = 4;
  bool check_invariants = true;
  bool measure_deviation = true;
};

namespace detail {

inline std::vector<std::string> names(const TransformerParams& p, const std::vector<int>& ids) {
  std::vector<std::string> s;
  for (int t : ids) s.push_back(p.vocab[t]);
  return s;
}

inline std::vector<std::string> names(const TuringMachine& m, const std::vector<Token>& ts) {
  std::vector<std::string> s;
  for (const auto& t : ts) s.push_back(token_name(m, t));
  return s;
}

inline std::optional<Mismatch> diff(const std::vector<std::string>& exp, const std::vector<std::string>& got, int trial,
                                    int segment) {
  size_t n = std::min(exp.size(), got.size());
  for (size_t i = 0; i < n; ++i)
    if (exp[i] != got[i]) return Mismatch{trial, segment, (long long)i, exp[i], got[i]};
  if (exp.size() != got.size())
    return Mismatch{trial, segment, (long long)n, n < exp.size() ? exp[n] : "<end>", n < got.size() ? got[n] : "<end>"};
  return std::nullopt;
}

// A model plus the evaluation settings dictated by the attention mode.
struct Prepared {
  TransformerParams params;
  EvalConfig cfg;
  double c = 1;
};

inline Prepared prepare(const TransformerParams& p, AttnMode mode, long long N, int att_mantissa, bool check_inv) {
  Prepared r;
  if (mode == AttnMode::Hardmax) {
    r.params = p;
    r.cfg.check_invariants = check_inv;
    return r;
  }
  const auto& D = p.dims;
  r.cfg.attention = AttnKind::Softmax;
  if (mode == AttnMode::Scaled) {
    r.c = next_pow2(c0_exact_attention(D.d, D.d_ff, D.d_k, D.L, (double)N));
    r.params = scale_qk(p, r.c);
    r.cfg.act = formats::bf16;
  } else {
    r.c = next_pow2(c0_denoising(D.d_k, (double)N));
    r.params = convert_with_denoising(p, r.c);
    r.cfg.act = format_containing(r.c, 1, 3);
    r.cfg.att = FloatFormat{att_mantissa, min_att_exponent_bits(N)};
  }
  return r;
}

// Largest |x~(2l-1/2) - x(l-1/2)| entry over a teacher-forced token sequence.
inline double denoise_deviation(const TransformerParams& hard, const Prepared& conv, const std::vector<int>& tokens) {
  EvalConfig hc;
  Evaluator h(hard, hc), s(conv.params, conv.cfg);
  double worst = 0;
  for (int t : tokens) {
    h.push(t);
    s.push(t);
    for (int l = 1; l <= hard.dims.L; ++l) {
      const auto& a = h.last_mid(l);
      const auto& b = s.last_mid(2 * l - 1);
      for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    }
  }
  return worst;
}

struct SampledTrial {
  TuringMachine m;
  std::vector<int> w;
  RunResult run;
  TrialInfo info;
};

inline SampledTrial sample_trial(std::mt19937_64& master, const ValidationConfig& cfg, int trial) {
  std::mt19937_64 rng(master());
  SampledTrial st;
  auto& in = st.info;
  in.trial = trial;
  in.K = std::uniform_int_distribution<int>(cfg.k_min, cfg.k_max)(rng);
  in.Q = std::uniform_int_distribution<int>(cfg.q_min, cfg.q_max)(rng);
  in.G = std::uniform_int_distribution<int>(cfg.g_min, cfg.g_max)(rng);
  st.m = sample_tm(rng(), in.K, in.Q, in.G);
  st.w = sample_word(rng, st.m, cfg.max_w);
  in.w_len = (int)st.w.size();
  st.run = tm_run(st.m, st.w, cfg.step_cap);
  in.t = st.run.steps;
  in.s = st.run.space;
  if (!st.run.halted) {
    in.skipped = true;
    in.skip_reason = "no halt within step cap";
  } else if (!st.run.output) {
    in.skipped = true;
    in.skip_reason = "invalid output";
  }
  // r from the trial's own stream so skipped trials do not shift later ones
  in.r = 2 * std::uniform_int_distribution<int>(0, cfg.r_spread / 2)(rng);
  return st;
}

}  // namespace detail

inline ValidationReport validate_cot(const ValidationConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
  auto t0 = std::chrono::steady_clock::now();
  ValidationReport rep;
  rep.kind = std::string("cot/") + attn_mode_name(cfg.attention);
  std::mt19937_64 master(cfg.seed);
  for (int trial = 0; trial < cfg.trials; ++trial) {
    auto st = detail::sample_trial(master, cfg, trial);
    auto& in = st.info;
    ++rep.attempted;
    if (in.skipped) {
      ++rep.skipped;
      rep.trials.push_back(in);
      continue;
    }
    in.r += choose_r_cot(std::max<long long>({in.t, (long long)in.w_len, 1}));
    auto expect = cot_token_oracle(st.m, st.w, in.r);
    auto comp = compile_cot(st.m, in.r);
    const long long N = 1LL << in.r;
    auto prep = detail::prepare(comp.params, cfg.attention, N, cfg.att_mantissa, cfg.check_invariants);
    rep.c = prep.c;
    auto tr = run_cot(prep.params, symbol_names(st.m, st.w), prep.cfg, N + 16);
    ++rep.checked;
    rep.invariants.merge(tr.stats);
    auto got = detail::names(prep.params, tr.segments[0]);
    auto exp = detail::names(st.m, expect);
    in.generated = (long long)got.size();
    auto mm = detail::diff(exp, got, trial, 0);
    if (!mm && (tr.outcome != Outcome::Output || tr.output != symbol_names(st.m, *st.run.output)))
      mm = Mismatch{trial, 0, (long long)got.size(), "output", std::string(outcome_name(tr.outcome)) + " " + tr.reason};
    in.match = !mm;
    if (mm) rep.mismatches.push_back(*mm);
    if ((long long)exp.size() > 4 + 2 * in.w_len + 4 * in.t) ++rep.length_bound_violations;
    if (cfg.attention == AttnMode::Denoised && cfg.measure_deviation) {
      std::vector<int> ids;
      auto idx = token_index(comp.params);
      for (size_t i = 0; i + 1 < exp.size(); ++i) ids.push_back(idx.at(exp[i]));
      rep.max_denoise_deviation = std::max(rep.max_denoise_deviation, detail::denoise_deviation(comp.params, prep, ids));
    }
    rep.trials.push_back(in);
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline ValidationReport validate_scot(const ValidationConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
  auto t0 = std::chrono::steady_clock::now();
  ValidationReport rep;
  rep.kind = std::string("scot/") + attn_mode_name(cfg.attention);
  std::mt19937_64 master(cfg.seed);
  for (int trial = 0; trial < cfg.trials; ++trial) {
    auto st = detail::sample_trial(master, cfg, trial);
    auto& in = st.info;
    ++rep.attempted;
    if (in.skipped) {
      ++rep.skipped;
      rep.trials.push_back(in);
      continue;
    }
    in.r += choose_r_scot(in.s);
    auto orc = scot_segments_oracle(st.m, st.w, in.r);
    for (const auto& wmsg : orc.warnings) rep.notes.push_back("trial " + std::to_string(trial) + ": " + wmsg);
    auto comp = compile_scot(st.m, in.r);
    const long long N = 1LL << in.r;
    auto prep = detail::prepare(comp.params, cfg.attention, N, cfg.att_mantissa, cfg.check_invariants);
    rep.c = prep.c;
    long long budget = (long long)orc.segments.size() * (N + 16);
    auto tr = run_scot(prep.params, symbol_names(st.m, st.w), prep.cfg, budget);
    ++rep.checked;
    rep.invariants.merge(tr.stats);
    std::optional<Mismatch> mm;
    long long total = 0, longest = 0;
    for (size_t s = 0; s < std::max(orc.segments.size(), tr.segments.size()) && !mm; ++s) {
      auto exp = s < orc.segments.size() ? detail::names(st.m, orc.segments[s]) : std::vector<std::string>{};
      auto got = s < tr.segments.size() ? detail::names(prep.params, tr.segments[s]) : std::vector<std::string>{};
      mm = detail::diff(exp, got, trial, (int)s);
    }
    for (const auto& seg : orc.segments) {
      total += (long long)seg.size();
      longest = std::max<long long>(longest, (long long)seg.size());
    }
    if (!mm && (tr.outcome != Outcome::Output || tr.output != symbol_names(st.m, *st.run.output)))
      mm = Mismatch{trial, (int)tr.segments.size() - 1, 0, "output", std::string(outcome_name(tr.outcome)) + " " + tr.reason};
    in.match = !mm;
    in.generated = tr.total_tokens();
    if (mm) rep.mismatches.push_back(*mm);
    if (longest > 8 * (in.s + 3) || total > 8 * in.t + 2 * in.w_len + 4) ++rep.length_bound_violations;
    if (cfg.attention == AttnMode::Denoised && cfg.measure_deviation) {
      auto idx = token_index(comp.params);
      for (const auto& seg : orc.segments) {
        auto exp = detail::names(st.m, seg);
        std::vector<int> ids;
        for (size_t i = 0; i + 1 < exp.size(); ++i) ids.push_back(idx.at(exp[i]));
        rep.max_denoise_deviation = std::max(rep.max_denoise_deviation, detail::denoise_deviation(comp.params, prep, ids));
      }
    }
    rep.trials.push_back(in);
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Exhaustive over all words of length <= max_len.
inline ValidationReport validate_dfa(const std::vector<Dfa>& dfas, int r, int max_len, AttnMode mode = AttnMode::Hardmax,
                                     int att_mantissa = 4) {
  auto t0 = std::chrono::steady_clock::now();
  ValidationReport rep;
  rep.kind = std::string("dfa/") + attn_mode_name(mode);
  for (size_t di = 0; di < dfas.size(); ++di) {
    const auto& m = dfas[di];
    auto comp = compile_dfa(m, r);
    if (comp.params.dims != dfa_dims(m, r) && comp.report.notes.empty()) rep.notes.push_back("dims differ from formula");
    for (const auto& n : comp.report.notes) rep.notes.push_back("dfa " + std::to_string(di) + ": " + n);
    auto prep = detail::prepare(comp.params, mode, 1LL << r, att_mantissa, true);
    rep.c = prep.c;
    const int ns = m.n_symbols(), T = ns + 1, F = ns + 2;
    std::vector<int> w;
    for (int len = 0; len <= max_len; ++len) {
      long long count = 1;
      for (int i = 0; i < len; ++i) count *= ns;
      for (long long code = 0; code < count; ++code) {
        w.assign(len, 0);
        long long x = code;
        for (int i = 0; i < len; ++i) { w[i] = (int)(x % ns); x /= ns; }
        ++rep.attempted;
        ++rep.checked;
        Evaluator ev(prep.params, prep.cfg);
        for (int t : dfa_prompt(m, w)) ev.push(t);
        int got = ev.argmax_token();
        rep.invariants.merge(ev.stats);
        int want = dfa_accepts(m, w) ? T : F;
        if (got != want) {
          std::string ws;
          for (int a : w) ws += m.alphabet[a];
          rep.mismatches.push_back({(int)di, 0, len, prep.params.vocab[want] + " on '" + ws + "'", prep.params.vocab[got]});
        }
      }
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline ValidationReport validate_softmax(AttnMode mode, ValidationConfig cfg, bool scot = false) {
  cfg.attention = mode;
  return scot ? validate_scot(cfg) : validate_cot(cfg);
}

// ------------------------------------------------------------ rope prefix

struct RopeReport {
  int r = 0;
  long long positions = 0, wrong_bits = 0;
  double min_separation = INFINITY;  // over rotary heads, on dots / sqrt(d_k)
  double bound = 0;                  // 1 / (2 sqrt(d_k))
  InvariantStats invariants;
  bool ok() const { return wrong_bits == 0 && min_separation >= bound && invariants.violations() == 0; }
};

inline RopeReport validate_rope(int r) {
  auto c = build_rope_position_prefix(r);
  const auto& p = c.params;
  RopeReport rep;
  rep.r = r;
  rep.bound = 0.5 / std::sqrt((double)p.dims.d_k);
  EvalConfig cfg;
  cfg.check_invariants = true;
  cfg.capture_trace = true;
  Evaluator ev(p, cfg);
  const long long n = 1LL << r;
  for (long long i = 0; i < n; ++i) {
    const auto& x = ev.push(i == 0 ? 0 : 1);
    auto b = bin(r, i);
    for (int s = 0; s < r; ++s) rep.wrong_bits += x[p.pos.targets[s]] != b[s];
  }
  rep.positions = n;
  const auto& tr = ev.trace();
  for (int l = 0; l < p.dims.L; ++l)
    for (size_t h = 0; h < p.layers[l].heads.size(); ++h) {
      if (p.layers[l].heads[h].rope.empty() || p.layers[l].heads[h].inert()) continue;
      for (const auto& pt : tr.layers[l]) {
        const auto& dots = pt.heads[h].dots;
        double sep = separation(dots);
        if (std::isfinite(sep)) rep.min_separation = std::min(rep.min_separation, sep / std::sqrt((double)p.dims.d_k));
      }
    }
  rep.invariants = ev.stats;
  return rep;
}

// ------------------------------------------------------------- phi probe

struct ProbeReport {
  std::string format;
  bool found = false;
  long long i_star = 0, j_star = 0;
  long long scanned = 0;
};

namespace detail {

using Big = boost::multiprecision::cpp_bin_float_50;

// Components (a, b) of phi_i = (a, b, -a, -b), each rounded to fmt.
inline std::pair<double, double> phi(long long i, const Precision& fmt) {
  Big n = boost::multiprecision::sqrt(Big(2) * Big(i) * Big(i) + Big(2));
  double a = static_cast<double>(Big(i) / n), b = static_cast<double>(Big(1) / n);
  return {fmt.round(a), fmt.round(b)};
}

// Sign of (a1 b1 + a2 b2) - (a3 b3 + a4 b4), exact.
inline int exact_cmp(double a1, double b1, double a2, double b2, double a3, double b3, double a4, double b4) {
  using boost::multiprecision::cpp_rational;
  cpp_rational l = cpp_rational(a1) * cpp_rational(b1) + cpp_rational(a2) * cpp_rational(b2);
  cpp_rational r = cpp_rational(a3) * cpp_rational(b3) + cpp_rational(a4) * cpp_rational(b4);
  return l < r ? -1 : l > r ? 1 : 0;
}

}  // namespace detail

// First i whose rounded phi_i has a larger inner product with some earlier
// phi_j than with itself.
inline ProbeReport probe_phi(const Precision& fmt, long long max_i) {
  if (max_i < 2) throw std::invalid_argument("max_i must be >= 2");
  ProbeReport rep;
  rep.format = to_string(fmt);
  std::vector<std::pair<double, double>> ph(max_i + 1);
  for (long long i = 1; i <= max_i; ++i) ph[i] = detail::phi(i, fmt);
  for (long long i = 1; i <= max_i; ++i) {
    rep.scanned = i;
    auto [ai, bi] = ph[i];
    double self = ai * ai + bi * bi;
    long long best_j = 0;
    for (long long j = 1; j < i; ++j) {
      auto [aj, bj] = ph[j];
      double cross = ai * aj + bi * bj;
      if (cross < self - 1e-14 * self) continue;  // clearly smaller; double error is a few ulp
      if (detail::exact_cmp(ai, aj, bi, bj, ai, ai, bi, bi) > 0) {
        best_j = j;
        break;
      }
    }
    if (best_j) {
      // report the confounder with the largest inner product
      for (long long j = 1; j < i; ++j)
        if (detail::exact_cmp(ai, ph[j].first, bi, ph[j].second, ai, ph[best_j].first, bi, ph[best_j].second) > 0) best_j = j;
      rep.found = true;
      rep.i_star = i;
      rep.j_star = best_j;
      return rep;
    }
  }
  return rep;
}

// ------------------------------------------------------------- capacity

struct CapacityRow {
  int K = 0, gamma = 0, max_q = 0;
};

struct CapacityTable {
  bool scot = false;
  int r_depth = 0, r_dk = 0, r = 0;
  long double context = 0;
  std::vector<CapacityRow> rows;
};

inline int max_even_r(const std::function<bool(int)>& fits) {
  int best = 0;
  for (int r = 2; r <= 200; r += 2)
    if (fits(r)) best = r;
  return best;
}

inline CapacityTable instantiate_capacity(long long L_budget, long long d_k_budget, long long d_budget, long long d_ff_budget,
                                          bool scot, int max_K = 4, int max_gamma = 16) {
  if (L_budget < 1 || d_k_budget < 1 || d_budget < 1 || d_ff_budget < 1) throw std::invalid_argument("budgets must be >= 1");
  CapacityTable t;
  t.scot = scot;
  t.r_depth = max_even_r([&](int r) { return 5 * r / 2 + 8 <= L_budget; });
  t.r_dk = max_even_r([&](int r) { return 4 * r - 1 <= d_k_budget; });
  t.r = std::min(t.r_depth, t.r_dk);
  if (scot && t.r < 4) t.r = 0;
  t.context = std::ldexp(1.0L, t.r);
  if (t.r < 2) return t;
  for (int K = 1; K <= max_K; ++K)
    for (int g = 2; g <= max_gamma; ++g) {
      CapacityRow row{K, g, 0};
      for (int q = 2; q <= 1 << 20; ++q) {
        TuringMachine m;
        m.tapes = K;
        m.states.assign(q, "");
        m.tape_alphabet.assign(g, "");
        Dims z = scot ? scot_dims(m, t.r) : cot_dims(m, t.r);
        if (z.d > d_budget || z.d_ff > d_ff_budget) break;
        row.max_q = q;
      }
      t.rows.push_back(row);
    }
  return t;
}

}  // namespace tmc

#endif  // TMC_HARNESS_HPP
