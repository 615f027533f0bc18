#include <catch_amalgamated.hpp>

#include <algorithm>

#include <random>

#include "machines.hpp"
#include "oracles.hpp"
#include "tmc/automata.hpp"
#include "tmc/harness.hpp"

using namespace tmc;

namespace {

Dfa parity() {
  Dfa d;
  d.states = {"even", "odd"};
  d.alphabet = {"0", "1"};
  d.delta = {{0, 1}, {1, 0}};
  d.init = 0;
  d.accepting = {true, false};
  return d;
}

}  // namespace

TEST_CASE("dfa_accepts") {
  auto d = parity();
  CHECK(dfa_accepts(d, {}));
  CHECK_FALSE(dfa_accepts(d, {1, 0, 1, 1}));
  CHECK_FALSE(dfa_accepts(d, {1, 0, 0}));
  CHECK(dfa_accepts(d, {1, 1}));
  CHECK_THROWS(dfa_accepts(d, {2}));
}

TEST_CASE("bin and unbin") {
  CHECK(bin(4, 11) == std::vector<int>{1, 1, -1, 1});
  CHECK(bin(3, 0) == std::vector<int>{-1, -1, -1});
  CHECK(bin(5, 19) == std::vector<int>{1, 1, -1, -1, 1});
  CHECK_THROWS(bin(3, 8));
  for (int i = 0; i < 64; ++i) CHECK(unbin(bin(6, i)) == i);
}

TEST_CASE("replace-ab machine") {
  auto m = fixtures::replace_ab_machine();
  check(m);
  auto run = tm_run(m, {0, 0, 1}, 100);
  REQUIRE(run.halted);
  CHECK(run.steps == 7);
  REQUIRE(run.output);
  CHECK(*run.output == std::vector<int>{0, 2, 1});
  std::vector<Token> expect = {
      Token::run(1, {0}, {R}), Token::run(0, {0}, {S}), Token::run(1, {0}, {R}), Token::run(2, {1}, {L}),
      Token::run(0, {2}, {R}), Token::run(0, {1}, {R}), Token::run(3, {3}, {S})};
  for (int t = 1; t <= 7; ++t) CHECK(run_token(m, run, t) == expect[t - 1]);
  auto toks = cot_token_oracle(m, {0, 0, 1}, 6);
  std::vector<Token> runs;
  for (auto& t : toks)
    if (t.kind == Tok::Run) runs.push_back(t);
  CHECK(runs == expect);
  CHECK(toks.size() <= 4 + 2 * 3 + 4 * 7);
  // one position block after the sixth run token
  int pblocks = 0;
  for (auto& t : toks) pblocks += t.kind == Tok::P;
  CHECK(pblocks == 1);
}

TEST_CASE("one-step machine and runaway machine") {
  auto m = fixtures::one_step_machine(1);
  auto run = tm_run(m, {}, 10);
  CHECK(run.halted);
  CHECK(run.steps == 1);
  CHECK(run.output == std::vector<int>{});
  auto toks = cot_token_oracle(m, {}, 4);
  CHECK(toks.size() == 5);
  // five tokens do not fit a context of 2^2
  CHECK_THROWS_AS(cot_token_oracle(m, {}, 2), OracleError);
  CHECK(toks[2].kind == Tok::Run);
  auto loop = fixtures::runaway_machine();
  auto r2 = tm_run(loop, {0}, 10);
  CHECK_FALSE(r2.halted);
  CHECK(r2.steps == 10);
  CHECK(r2.space == 11);
  CHECK_THROWS_AS(cot_token_oracle(loop, {0}, 4), OracleError);
}

TEST_CASE("left moves saturate at cell 0") {
  auto m = fixtures::one_step_machine(1);
  m.states = {"s", "t", "h"};
  m.init = 0;
  m.halt = 2;
  m.delta.assign(3 * 2, Transition{2, {1}, {S}});
  m.delta[0] = Transition{1, {0}, {L}};
  m.delta[1] = Transition{1, {0}, {L}};
  m.delta[2] = Transition{2, {0}, {S}};
  auto run = tm_run(m, {0}, 10);
  REQUIRE(run.halted);
  for (auto& c : run.config_trace) CHECK(c.heads[0] == 0);
}

TEST_CASE("tm_run agrees with a direct reference stepper") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    int K = 1 + trial % 2;
    auto m = sample_tm(rng(), K, 2 + trial % 3, 2 + trial % 2);
    std::vector<int> w;
    int n = rng() % 5;
    for (int i = 0; i < n; ++i) w.push_back(m.input_symbols[rng() % m.input_symbols.size()]);
    auto run = tm_run(m, w, 40);
    oracle::RefTm ref(m, w, 200);
    int space = std::max<int>(1, (int)w.size());
    for (int t = 1; t <= run.steps; ++t) {
      auto [y, mv] = ref.step();
      const auto& c = run.config_trace[t];
      REQUIRE(c.state == ref.q);
      for (int k = 0; k < K; ++k) {
        REQUIRE(c.heads[k] == ref.head[k]);
        space = std::max(space, ref.head[k] + 1);
        for (int i = 0; i < 50; ++i) REQUIRE(read_cell(c, k, i, m.blank) == ref.tape[k][i]);
      }
      auto tok = run_token(m, run, t);
      REQUIRE(tok.v == y);
      REQUIRE(tok.w == mv);
    }
    REQUIRE(run.space == space);
    REQUIRE(run.halted == (ref.q == m.halt));
  }
}

TEST_CASE("cot oracle structure on random machines") {
  std::mt19937_64 rng(9);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    int K = 1 + trial % 2;
    auto m = sample_tm(rng(), K, 2 + trial % 3, 2 + trial % 2);
    std::vector<int> w;
    int n = rng() % 5;
    for (int i = 0; i < n; ++i) w.push_back(m.input_symbols[rng() % m.input_symbols.size()]);
    auto run = tm_run(m, w, 40);
    if (!run.halted || !run.output) continue;
    int r = 2 * (1 + trial % 5);
    std::vector<Token> toks;
    try {
      toks = cot_token_oracle(m, w, r);
    } catch (const OracleError&) {
      continue;
    }
    ++checked;
    REQUIRE((long long)toks.size() <= 4 + 2 * (long long)w.size() + 4LL * run.steps);
    int runs = 0;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (toks[i].kind == Tok::Run) ++runs;
      if (toks[i].kind == Tok::P) {
        REQUIRE(runs % r == 0);
        for (int k = 0; k < K; ++k) {
          std::vector<int> bits;
          for (int s = 0; s < r; ++s) bits.push_back(toks[i + 1 + s].v[k]);
          REQUIRE(unbin(bits) == run.config_trace[runs].heads[k]);
        }
        REQUIRE(toks[i + r + 1].kind == Tok::PEnd);
      }
    }
    REQUIRE(runs == run.steps);
  }
  CHECK(checked > 50);
}

TEST_CASE("encode_summary of a two-tape configuration") {
  TuringMachine m;
  m.tapes = 2;
  m.states = {"q0", "q", "h"};
  m.tape_alphabet = {"a", "b", "c", "_"};
  m.input_symbols = {0, 1, 2};
  m.blank = 3;
  Configuration c;
  c.state = 1;
  c.tapes = {{0, 1, 2, 0}, {1, 2, 0, 1, 2, 0}};
  c.heads = {3, 5};
  auto s = encode_summary(m, c, 7);
  REQUIRE(s.size() == 10);
  CHECK(s[0].kind == Tok::Summ);
  CHECK(s[1] == Token::tape({0, 1}, {0, 0}));
  CHECK(s[4] == Token::tape({0, 1}, {1, 0}));
  CHECK(s[6] == Token::tape({3, 0}, {0, 1}));
  CHECK(s[7] == Token::tape({3, 3}, {0, 0}));
  CHECK(s[8] == Token::state(1));
  CHECK(s[9].kind == Tok::SummEnd);
  CHECK_THROWS(encode_summary(m, c, 5));
  auto init = encode_summary(m, initial_config(m, {0, 1}), 2);
  CHECK(init[1] == Token::tape({0, 3}, {1, 1}));
  CHECK(init[2] == Token::tape({1, 3}, {0, 0}));
}

TEST_CASE("scot oracle structure on random machines") {
  std::mt19937_64 rng(13);
  int checked = 0, multi = 0;
  for (int trial = 0; trial < 400; ++trial) {
    int K = 1 + trial % 2;
    auto m = sample_tm(rng(), K, 2 + trial % 3, 2 + trial % 2);
    std::vector<int> w;
    int n = rng() % 5;
    for (int i = 0; i < n; ++i) w.push_back(m.input_symbols[rng() % m.input_symbols.size()]);
    auto run = tm_run(m, w, 40);
    if (!run.halted || !run.output) continue;
    int r = 4 + 2 * (trial % 3);
    ScotOracle o;
    try {
      o = scot_segments_oracle(m, w, r);
    } catch (const OracleError&) {
      continue;
    }
    ++checked;
    multi += o.segments.size() > 1;
    long long total = 0;
    std::vector<Token> runs;
    for (size_t i = 0; i < o.segments.size(); ++i) {
      const auto& seg = o.segments[i];
      total += seg.size();
      REQUIRE((long long)seg.size() <= 8LL * (run.space + 3));
      REQUIRE((seg[0].kind == Tok::Inp || seg[0].kind == Tok::Summ));
      size_t prompt = 0;
      while (seg[prompt].kind != Tok::InpEnd && seg[prompt].kind != Tok::SummEnd) ++prompt;
      size_t last_run = 0;
      for (size_t j = prompt + 1; j < seg.size(); ++j)
        if (seg[j].kind == Tok::Run) {
          runs.push_back(seg[j]);
          last_run = j;
        }
      if (i + 1 < o.segments.size()) {
        REQUIRE(seg.back().kind == Tok::SummEnd);
        REQUIRE(last_run - prompt >= 3 * prompt);
        REQUIRE(seg[last_run + 1].kind == Tok::Summ);
        // the next segment is prompted by this segment's trailing summary
        const std::vector<Token> summ(seg.begin() + last_run + 1, seg.end());
        REQUIRE(o.segments[i + 1].size() > summ.size());
        REQUIRE(std::equal(summ.begin(), summ.end(), o.segments[i + 1].begin()));
      } else {
        REQUIRE(seg.back().kind == Tok::OutpEnd);
      }
    }
    REQUIRE(total <= 8LL * run.steps + 2 * (long long)w.size() + 4);
    REQUIRE((int)runs.size() == run.steps);
    for (int t = 1; t <= run.steps; ++t) REQUIRE(runs[t - 1] == run_token(m, run, t));
  }
  CHECK(checked > 50);
  CHECK(multi > 5);
}

TEST_CASE("machine halting before the first cap gives one segment") {
  auto m = fixtures::replace_ab_machine();
  auto o = scot_segments_oracle(m, {1, 1}, 6);
  // j = 3, cap at position 12; the run halts after 3 steps
  REQUIRE(o.segments.size() == 1);
  CHECK(o.segments[0].back().kind == Tok::OutpEnd);
}
