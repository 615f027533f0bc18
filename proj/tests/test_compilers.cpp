#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "machines.hpp"
#include "oracles.hpp"
#include "tmc/compilers.hpp"
#include "tmc/generation.hpp"
#include "tmc/harness.hpp"

using namespace tmc;

namespace {

std::string join(const TuringMachine& m, const std::vector<int>& v) {
  std::string s;
  for (size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + m.tape_alphabet[v[k]];
  return s;
}

std::string pos_name(const std::vector<int>& heads, int bit) {
  std::string s = "pos:";
  for (int h : heads) s += ((h >> bit) & 1) ? "1" : "0";
  return s;
}

// CoT token names from the definition, driven by oracle::RefTm.
// Returns an empty vector when the run does not halt with a valid output.
std::vector<std::string> ref_cot(const TuringMachine& m, const std::vector<int>& w, int r, long long cap) {
  oracle::RefTm tm(m, w, (int)(w.size() + cap + 4));
  std::vector<std::string> out{"<inp>"};
  for (int a : w) out.push_back("sym:" + m.tape_alphabet[a]);
  out.push_back("</inp>");
  long long t = 0;
  while (tm.q != m.halt) {
    if (t == cap) return {};
    auto [y, mv] = tm.step();
    ++t;
    std::string s = "run:" + m.states[tm.q] + "|" + join(m, y) + "|";
    for (size_t k = 0; k < mv.size(); ++k) s += std::string(k ? "," : "") + (mv[k] == 0 ? "L" : mv[k] == 1 ? "S" : "R");
    out.push_back(s);
    if (t % r == 0 && tm.q != m.halt) {
      out.push_back("<p>");
      for (int b = 0; b < r; ++b) out.push_back(pos_name(tm.head, b));
      out.push_back("</p>");
    }
  }
  out.push_back("<outp>");
  const auto& t0 = tm.tape[0];
  size_t i = 0;
  for (; t0[i] != m.blank; ++i) {
    if (!m.is_input(t0[i])) return {};
    out.push_back("sym:" + m.tape_alphabet[t0[i]]);
  }
  for (; i < t0.size(); ++i)
    if (t0[i] != m.blank) return {};
  out.push_back("</outp>");
  return out;
}

std::vector<std::string> names(const TransformerParams& p, const std::vector<int>& ids) {
  std::vector<std::string> s;
  for (int t : ids) s.push_back(p.vocab[t]);
  return s;
}

int smallest_even_r(double x, int lo) {
  int r = lo;
  while (std::ldexp(1.0, r) < x) r += 2;
  return r;
}

}  // namespace

TEST_CASE("dimension formulas at reference points") {
  auto c = cot_dims(fixtures::replace_ab_machine(), 6);
  CHECK(c.L == 23);
  CHECK(c.H == 3);
  CHECK(c.d == 117);
  CHECK(c.d_k == 23);
  CHECK(c.d_v == 6);
  CHECK(c.d_ff == 110);

  auto s = scot_dims(fixtures::copy_machine(), 6);
  CHECK(s.L == 23);
  CHECK(s.H == 8);
  CHECK(s.d == 218);
  CHECK(s.d_k == 23);
  CHECK(s.d_v == 6);
  CHECK(s.d_ff == 229);

  auto d = dfa_dims(parity_dfa(), 3);
  CHECK(d.L == 5);
  CHECK(d.H == 1);
  CHECK(d.d == 12);
  CHECK(d.d_k == 3);
  CHECK(d.d_v == 2);
  CHECK(d.d_ff == 34);
}

TEST_CASE("compiled TM models have exactly the formula dimensions") {
  for (int r : {2, 4, 6, 8}) {
    auto m = fixtures::replace_ab_machine();
    auto c = compile_cot(m, r);
    CHECK(c.params.dims == cot_dims(m, r));
    CHECK(c.params.vocab.size() == cot_vocab(m).size());
  }
  for (int r : {4, 6, 8}) {
    auto m = fixtures::copy_machine();
    auto c = compile_scot(m, r);
    CHECK(c.params.dims == scot_dims(m, r));
    CHECK(c.params.vocab.size() == scot_vocab(m).size());
  }
  for (int K : {1, 2, 3}) {
    auto m = sample_tm(7 + K, K, 3, 3);
    CHECK(compile_cot(m, 4).params.dims == cot_dims(m, 4));
    CHECK(compile_scot(m, 4).params.dims == scot_dims(m, 4));
  }
}

TEST_CASE("compiled DFA dimensions") {
  for (const auto& m : example_dfas())
    for (int r = 1; r <= 5; ++r) {
      auto c = compile_dfa(m, r);
      auto f = dfa_dims(m, r);
      const auto& g = c.params.dims;
      CHECK(g.L == f.L);
      CHECK(g.H == f.H);
      CHECK(g.d == f.d);
      CHECK(g.d_k == f.d_k);
      CHECK(g.d_v == f.d_v);
      // d_ff may only exceed the formula with a note saying so
      if (g.d_ff != f.d_ff) {
        CHECK(g.d_ff > f.d_ff);
        CHECK_FALSE(c.report.notes.empty());
      }
    }
}

TEST_CASE("invalid r is rejected") {
  auto m = fixtures::replace_ab_machine();
  CHECK_THROWS_AS(compile_cot(m, 3), std::invalid_argument);
  CHECK_THROWS_AS(compile_cot(m, 0), std::invalid_argument);
  CHECK_THROWS_AS(compile_scot(m, 2), std::invalid_argument);
  CHECK_THROWS_AS(compile_scot(m, 5), std::invalid_argument);
  CHECK_THROWS_AS(compile_dfa(parity_dfa(), 0), std::invalid_argument);
  CHECK_THROWS_AS(build_rope_position_prefix(0), std::invalid_argument);
}

TEST_CASE("choose_r matches the smallest even exponent") {
  for (long long t = 0; t <= 3000; ++t) {
    CHECK(choose_r_cot(t) == smallest_even_r(4.0 + 6.0 * t, 2));
    CHECK(choose_r_scot(t) == smallest_even_r(8.0 * (t + 3), 4));
  }
  CHECK(choose_r_cot(1) == 4);
  CHECK(choose_r_cot(2) == 4);
  CHECK(choose_r_cot(3) == 6);
  CHECK(choose_r_scot(0) == 6);
  CHECK(choose_r_scot(5) == 6);
  CHECK(choose_r_scot(6) == 8);
}

TEST_CASE("DFA models decide membership on every short word") {
  auto parity = [](const std::vector<int>& w) {
    int n = 0;
    for (int a : w) n += a;
    return n % 2 == 0;
  };
  auto has_ab = [](const std::vector<int>& w) {
    for (size_t i = 0; i + 1 < w.size(); ++i)
      if (w[i] == 0 && w[i + 1] == 1) return true;
    return false;
  };
  auto mod3 = [](const std::vector<int>& w) {
    int n = 0;
    for (int a : w) n += a;
    return n % 3 == 0;
  };
  std::vector<std::pair<Dfa, std::function<bool(const std::vector<int>&)>>> cases{
      {parity_dfa(), parity}, {contains_ab_dfa(), has_ab}, {mod3_dfa(), mod3}};
  const int r = 3;
  EvalConfig cfg;
  cfg.check_invariants = true;
  for (auto& [m, pred] : cases) {
    auto c = compile_dfa(m, r);
    const auto& p = c.params;
    for (int len = 0; len < (1 << r); ++len)
      for (int code = 0; code < (1 << len); ++code) {
        std::vector<int> w(len);
        for (int i = 0; i < len; ++i) w[i] = (code >> i) & 1;
        Evaluator ev(p, cfg);
        for (int t : dfa_prompt(m, w)) ev.push(t);
        INFO("word code " << code << " length " << len);
        CHECK(p.vocab[ev.argmax_token()] == (pred(w) ? "True" : "False"));
        CHECK(ev.stats.violations() == 0);
      }
  }
}

TEST_CASE("DFA context is bounded by 2^r") {
  auto m = parity_dfa();
  auto c = compile_dfa(m, 2);
  Evaluator ev(c.params, {});
  for (int t : dfa_prompt(m, {1, 0, 1})) ev.push(t);
  CHECK_THROWS_AS(ev.push(0), std::length_error);
}

TEST_CASE("replace-ab machine: CoT tokens written out by hand") {
  auto m = fixtures::replace_ab_machine();
  auto c = compile_cot(m, 6);
  EvalConfig cfg;
  cfg.check_invariants = true;
  auto tr = run_cot(c.params, {"a", "b"}, cfg, 80);
  std::vector<std::string> want{"<inp>",         "sym:a",       "sym:b",          "</inp>",
                                "run:q_a|a|R",   "run:q_ab|b|L", "run:q_init|c|R", "run:q_init|b|R",
                                "run:q_halt|_|S", "<outp>",     "sym:c",          "sym:b",
                                "</outp>"};
  CHECK(names(c.params, tr.segments[0]) == want);
  CHECK(tr.outcome == Outcome::Output);
  CHECK(tr.output == std::vector<std::string>{"c", "b"});
  CHECK(tr.stats.violations() == 0);
}

TEST_CASE("replace-ab machine: position blocks every r steps") {
  auto m = fixtures::replace_ab_machine();
  std::vector<int> w{0, 1, 0, 1, 0, 1};  // ababab
  const int rr = choose_r_cot(15);
  auto want_rr = ref_cot(m, w, rr, 1000);
  REQUIRE_FALSE(want_rr.empty());
  auto c = compile_cot(m, rr);
  EvalConfig cfg;
  cfg.check_invariants = true;
  auto tr = run_cot(c.params, {"a", "b", "a", "b", "a", "b"}, cfg, 1LL << rr);
  CHECK(names(c.params, tr.segments[0]) == want_rr);
  CHECK(tr.output == std::vector<std::string>{"c", "b", "c", "b", "c", "b"});
  CHECK(std::count(want_rr.begin(), want_rr.end(), "<p>") > 0);
  CHECK(tr.stats.violations() == 0);
}

TEST_CASE("CoT models agree with an independent TM reference on random machines") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int K = 1 + trial % 2;
    auto m = sample_tm(rng(), K, 2 + (int)(rng() % 3), 2 + (int)(rng() % 2));
    auto w = sample_word(rng, m, 3);
    auto probe = ref_cot(m, w, 2, 30);
    if (probe.empty()) continue;
    // step count: run tokens in the probe
    long long t = std::count_if(probe.begin(), probe.end(), [](const std::string& s) { return s.rfind("run:", 0) == 0; });
    int r = choose_r_cot(std::max<long long>({t, (long long)w.size(), 1}));
    auto want = ref_cot(m, w, r, 30);
    auto c = compile_cot(m, r);
    EvalConfig cfg;
    cfg.check_invariants = true;
    auto tr = run_cot(c.params, symbol_names(m, w), cfg, (1LL << r) + 4);
    INFO("trial " << trial << " K=" << K << " r=" << r);
    CHECK(names(c.params, tr.segments[0]) == want);
    CHECK(tr.outcome == Outcome::Output);
    CHECK(tr.stats.violations() == 0);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("SCoT copy machine: segments match the oracle and the output is the input") {
  auto m = fixtures::copy_machine();
  std::vector<int> w{1, 0, 1, 1, 0};
  auto run = tm_run(m, w, 100);
  REQUIRE(run.halted);
  const int r = choose_r_scot(run.space);
  auto orc = scot_segments_oracle(m, w, r);
  auto c = compile_scot(m, r);
  EvalConfig cfg;
  cfg.check_invariants = true;
  auto tr = run_scot(c.params, symbol_names(m, w), cfg, 1 << 14);
  REQUIRE(tr.segments.size() == orc.segments.size());
  for (size_t i = 0; i < orc.segments.size(); ++i) {
    std::vector<std::string> exp;
    for (const auto& t : orc.segments[i]) exp.push_back(token_name(m, t));
    CHECK(names(c.params, tr.segments[i]) == exp);
    CHECK((long long)tr.segments[i].size() <= (1LL << r));
  }
  CHECK(tr.outcome == Outcome::Output);
  CHECK(tr.output == std::vector<std::string>{"1", "0", "1", "1", "0"});
  CHECK(tr.stats.violations() == 0);
}

TEST_CASE("SCoT models agree with the segment oracle on random machines") {
  std::mt19937_64 rng(77);
  int checked = 0, multi = 0;
  // short words and long runs force summaries
  for (int trial = 0; trial < 2000 && (checked < 20 || multi < 5); ++trial) {
    auto m = sample_tm(rng(), 1 + trial % 2, 3 + (int)(rng() % 2), 2 + (int)(rng() % 2));
    auto w = sample_word(rng, m, 1);
    auto run = tm_run(m, w, 200);
    if (!run.halted || !run.output) continue;
    const int r = choose_r_scot(run.space);
    auto orc = scot_segments_oracle(m, w, r);
    auto c = compile_scot(m, r);
    EvalConfig cfg;
    cfg.check_invariants = true;
    auto tr = run_scot(c.params, symbol_names(m, w), cfg, 1 << 16);
    INFO("trial " << trial << " r=" << r);
    REQUIRE(tr.segments.size() == orc.segments.size());
    for (size_t i = 0; i < orc.segments.size(); ++i) {
      std::vector<std::string> exp;
      for (const auto& t : orc.segments[i]) exp.push_back(token_name(m, t));
      CHECK(names(c.params, tr.segments[i]) == exp);
    }
    CHECK(tr.outcome == Outcome::Output);
    CHECK(tr.stats.violations() == 0);
    ++checked;
    multi += orc.segments.size() > 1;
  }
  CHECK(checked >= 10);
  CHECK(multi >= 5);
}

TEST_CASE("SCoT summaries list every used cell once with one head mark per tape") {
  auto m = fixtures::copy_machine();
  std::vector<int> w{0, 1, 1, 0, 1, 0};
  auto run = tm_run(m, w, 100);
  const int r = choose_r_scot(run.space);
  REQUIRE(scot_segments_oracle(m, w, r).segments.size() >= 1);
  auto c = compile_scot(m, r);
  auto tr = run_scot(c.params, symbol_names(m, w), {}, 1 << 14);
  REQUIRE(tr.outcome == Outcome::Output);
  for (size_t i = 1; i < tr.segments.size(); ++i) {
    auto seg = names(c.params, tr.segments[i]);
    REQUIRE(seg.front() == "<summ>");
    auto end = std::find(seg.begin(), seg.end(), "</summ>");
    REQUIRE(end != seg.end());
    int hats0 = 0, hats1 = 0, cells = 0;
    for (auto it = seg.begin() + 1; it != end; ++it) {
      if (it->rfind("tape:", 0) != 0) continue;
      ++cells;
      auto body = it->substr(5);
      auto comma = body.find(',');
      hats0 += body.substr(0, comma).find('^') != std::string::npos;
      hats1 += body.substr(comma + 1).find('^') != std::string::npos;
    }
    CHECK(hats0 == 1);
    CHECK(hats1 == 1);
    CHECK(cells >= (int)w.size());
    CHECK((end - 1)->rfind("state:", 0) == 0);
  }
}

TEST_CASE("rotary prefix writes the binary position") {
  for (int r = 1; r <= 6; ++r) {
    auto c = build_rope_position_prefix(r);
    CHECK(c.params.dims == rope_prefix_dims(r));
    EvalConfig cfg;
    cfg.check_invariants = true;
    Evaluator ev(c.params, cfg);
    for (long long i = 0; i < (1LL << r); ++i) {
      const auto& x = ev.push(i == 0 ? 0 : 1);
      for (int s = 0; s < r; ++s) {
        INFO("r=" << r << " i=" << i << " bit " << s);
        CHECK(x[c.params.pos.targets[s]] == (((i >> s) & 1) ? 1.0 : -1.0));
      }
    }
    CHECK(ev.stats.violations() == 0);
  }
}
