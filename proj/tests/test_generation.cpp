#include <catch_amalgamated.hpp>

#include <map>
#include <string>
#include <vector>

#include "tmc/generation.hpp"

using namespace tmc;

namespace {

// Zero-layer model whose greedy successor of token t is succ[t]. Token t
// embeds to e_t and u unembeds to e_{pred(u)}, so only succ(t) scores 1.
TransformerParams chain(const std::vector<std::string>& vocab, const std::map<std::string, std::string>& succ, int r = 0) {
  TransformerParams p;
  const int n = (int)vocab.size();
  p.vocab = vocab;
  p.dims.d = n + r;
  p.dims.L = 0;
  p.emb.resize(n);
  p.unemb.resize(n);
  std::map<std::string, int> idx;
  for (int i = 0; i < n; ++i) idx[vocab[i]] = i;
  for (int i = 0; i < n; ++i) p.emb[i] = {{i, 1}};
  for (auto& [from, to] : succ) p.unemb[idx.at(to)].push_back({idx.at(from), 1});
  if (r) {
    p.pos.kind = PosKind::BinaryAbsolute;
    p.pos.r = r;
    for (int s = 0; s < r; ++s) p.pos.targets.push_back(n + s);
  }
  validate(p);
  return p;
}

const std::vector<std::string> kCot{"<inp>", "</inp>", "<outp>", "</outp>", "sym:a", "sym:b", "run:x"};
const std::vector<std::string> kScot{"<inp>", "</inp>", "<outp>", "</outp>", "sym:a", "sym:b", "<summ>", "</summ>", "state:s"};

std::vector<std::string> names(const TransformerParams& p, const std::vector<int>& ids) {
  std::vector<std::string> s;
  for (int t : ids) s.push_back(p.vocab[t]);
  return s;
}

}  // namespace

TEST_CASE("CoT run ending in a well-formed output") {
  auto p = chain(kCot, {{"</inp>", "<outp>"}, {"<outp>", "sym:b"}, {"sym:b", "</outp>"}});
  auto tr = run_cot(p, {"a"}, {}, 10);
  CHECK(tr.outcome == Outcome::Output);
  CHECK(tr.output == std::vector<std::string>{"b"});
  REQUIRE(tr.segments.size() == 1);
  CHECK(names(p, tr.segments[0]) == std::vector<std::string>{"<inp>", "sym:a", "</inp>", "<outp>", "sym:b", "</outp>"});
  REQUIRE(tr.top2.size() == 1);
  CHECK(tr.top2[0].size() == 3);
  for (auto [a, b] : tr.top2[0]) {
    CHECK(a == 1);
    CHECK(b == 0);
  }
  CHECK(tr.total_tokens() == 6);
}

TEST_CASE("CoT budget counts generated tokens") {
  auto p = chain(kCot, {{"</inp>", "sym:a"}, {"sym:a", "sym:a"}});
  for (long long budget : {0LL, 1LL, 7LL}) {
    auto tr = run_cot(p, {"b"}, {}, budget);
    CHECK(tr.outcome == Outcome::BudgetExceeded);
    CHECK((long long)tr.segments[0].size() == 3 + budget);
  }
  // exactly enough budget for <outp> </outp>
  auto q = chain(kCot, {{"</inp>", "<outp>"}, {"<outp>", "</outp>"}});
  CHECK(run_cot(q, {}, {}, 2).outcome == Outcome::Output);
  CHECK(run_cot(q, {}, {}, 1).outcome == Outcome::BudgetExceeded);
  CHECK(run_cot(q, {}, {}, 2).output.empty());
}

TEST_CASE("CoT shape errors are undefined outcomes") {
  auto none = chain(kCot, {{"</inp>", "</outp>"}});
  auto tr = run_cot(none, {"a"}, {}, 5);
  CHECK(tr.outcome == Outcome::Undefined);
  CHECK(tr.reason.rfind("shape:", 0) == 0);

  auto foreign = chain(kCot, {{"</inp>", "<outp>"}, {"<outp>", "sym:a"}, {"sym:a", "run:x"}, {"run:x", "sym:b"},
                            {"sym:b", "</outp>"}});
  auto bad = run_cot(foreign, {}, {}, 10);
  CHECK(bad.outcome == Outcome::Undefined);
  CHECK(bad.reason.find("run:x") != std::string::npos);

  auto p = chain(kCot, {});
  CHECK_THROWS_AS(run_cot(p, {"c"}, {}, 5), std::invalid_argument);
  auto scot_needs = chain(kCot, {{"</inp>", "<outp>"}, {"<outp>", "</outp>"}});
  CHECK_THROWS_AS(run_scot(scot_needs, {}, {}, 5), std::invalid_argument);
}

TEST_CASE("SCoT output in the first segment") {
  auto p = chain(kScot, {{"</inp>", "<outp>"}, {"<outp>", "sym:a"}, {"sym:a", "</outp>"}});
  auto tr = run_scot(p, {"b", "b"}, {}, 10);
  CHECK(tr.outcome == Outcome::Output);
  CHECK(tr.output == std::vector<std::string>{"a"});
  CHECK(tr.segments.size() == 1);
}

TEST_CASE("SCoT budget spans segments") {
  // every segment emits <summ> state:s </summ> and restarts from it
  auto p = chain(kScot, {{"</inp>", "<summ>"}, {"</summ>", "<summ>"}, {"<summ>", "state:s"}, {"state:s", "</summ>"}});
  auto tr = run_scot(p, {"a"}, {}, 10);
  CHECK(tr.outcome == Outcome::BudgetExceeded);
  REQUIRE(tr.segments.size() == 4);
  long long generated = (long long)tr.segments[0].size() - 3;
  for (size_t i = 1; i < tr.segments.size(); ++i) {
    CHECK(names(p, tr.segments[i]).front() == "<summ>");
    generated += (long long)tr.segments[i].size() - 3;
  }
  CHECK(generated == 10);
  CHECK(names(p, tr.segments[1]) == std::vector<std::string>{"<summ>", "state:s", "</summ>", "<summ>", "state:s", "</summ>"});
  CHECK(tr.max_segment() == 6);
}

TEST_CASE("SCoT shape errors") {
  auto empty = chain(kScot, {{"</inp>", "<summ>"}, {"<summ>", "</summ>"}});
  auto a = run_scot(empty, {}, {}, 10);
  CHECK(a.outcome == Outcome::Undefined);
  CHECK(a.reason == "shape: empty summary");

  auto nosumm = chain(kScot, {{"</inp>", "state:s"}, {"state:s", "</summ>"}});
  auto b = run_scot(nosumm, {}, {}, 10);
  CHECK(b.outcome == Outcome::Undefined);
  CHECK(b.reason == "shape: <summ> occurs 0 times");

  auto mixed = chain(kScot, {{"</inp>", "<outp>"}, {"<outp>", "<summ>"}, {"<summ>", "state:s"}, {"state:s", "</summ>"}});
  auto c = run_scot(mixed, {}, {}, 10);
  CHECK(c.outcome == Outcome::Undefined);
  CHECK(c.reason == "shape: <outp> in summary segment");

  auto late = chain(kScot, {{"</inp>", "<summ>"}, {"<summ>", "<outp>"}, {"<outp>", "</outp>"}});
  auto d = run_scot(late, {}, {}, 10);
  CHECK(d.outcome == Outcome::Undefined);
  CHECK(d.reason == "shape: <summ> in output segment");
}

TEST_CASE("generate argument checks and stop handling") {
  auto p = chain(kCot, {{"<inp>", "sym:a"}, {"sym:a", "sym:b"}, {"sym:b", "</outp>"}});
  CHECK_THROWS_AS(generate(p, {}, {3}, 5, {}), std::invalid_argument);
  CHECK_THROWS_AS(generate(p, {0}, {}, 5, {}), std::invalid_argument);
  CHECK_THROWS_AS(generate(p, {42}, {3}, 5, {}), std::invalid_argument);
  auto g = generate(p, {0}, {3}, 10, {});
  CHECK(g.stopped);
  CHECK(names(p, g.tokens) == std::vector<std::string>{"<inp>", "sym:a", "sym:b", "</outp>"});
  CHECK(g.top2.size() == 3);
  // stop set containing a non-final token ends early
  auto h = generate(p, {0}, {5}, 10, {});
  CHECK(h.stopped);
  CHECK(h.tokens.size() == 3);
}

TEST_CASE("context overflow ends generation with a diagnostic") {
  auto p = chain(kCot, {{"</inp>", "sym:a"}, {"sym:a", "sym:a"}}, 2);
  auto tr = run_cot(p, {"b"}, {}, 100);
  CHECK(tr.outcome == Outcome::BudgetExceeded);
  CHECK(tr.segments[0].size() == 5);
  REQUIRE_FALSE(tr.diagnostics.empty());
  CHECK(tr.diagnostics.front().find("2^r") != std::string::npos);
}

TEST_CASE("ties in the unembedding are reported") {
  auto p = chain(kCot, {{"</inp>", "sym:a"}, {"sym:a", "sym:b"}});
  p.unemb[5].push_back({1, 1});  // sym:b also follows </inp>
  auto g = generate(p, {0, 1}, {3}, 1, {});
  CHECK(p.vocab[g.tokens.back()] == "sym:a");
  REQUIRE_FALSE(g.diagnostics.empty());
  CHECK(g.diagnostics.front().find("tie") != std::string::npos);
}
