#ifndef TMC_GENERATION_HPP
#define TMC_GENERATION_HPP

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "netcore.hpp"

namespace tmc {

enum class Protocol { Plain, CoT, SCoT };
enum class Outcome { Output, Undefined, BudgetExceeded };

inline const char* outcome_name(Outcome o) {
  return o == Outcome::Output ? "output" : o == Outcome::Undefined ? "undefined" : "budget-exceeded";
}

struct GenResult {
  std::vector<int> tokens;  // prompt + generated
  bool stopped = false;     // ended on a stop token
  std::vector<std::string> diagnostics;
  InvariantStats stats;
  std::vector<std::pair<double, double>> top2;  // per generated token
};

// Greedy extension until a stop token is emitted (included) or max_steps
// tokens were generated. The emitted stop token is not fed back.
inline GenResult generate(const TransformerParams& p, const std::vector<int>& prompt, const std::set<int>& stop_set,
                          long long max_steps, const EvalConfig& cfg) {
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  if (stop_set.empty()) throw std::invalid_argument("generate: empty stop set");
  for (int t : prompt)
    if (t < 0 || t >= (int)p.vocab.size()) throw std::invalid_argument("generate: token out of vocabulary");
  GenResult res;
  res.tokens = prompt;
  Evaluator ev(p, cfg);
  try {
    for (int t : prompt) ev.push(t);
    for (long long step = 0; step < max_steps; ++step) {
      auto s = ev.logits();
      int t = ev.argmax_token();
      double second = -1e300;
      for (size_t u = 0; u < s.size(); ++u)
        if ((int)u != t) second = std::max(second, s[u]);
      res.top2.push_back({s[t], second});
      res.tokens.push_back(t);
      if (stop_set.count(t)) {
        res.stopped = true;
        break;
      }
      ev.push(t);
    }
  } catch (const std::length_error& e) {
    res.diagnostics.push_back(e.what());
  }
  res.diagnostics.insert(res.diagnostics.end(), ev.diagnostics.begin(), ev.diagnostics.end());
  res.stats = ev.stats;
  return res;
}

struct GenerationTrace {
  Protocol protocol = Protocol::Plain;
  std::vector<std::vector<int>> segments;
  std::vector<std::vector<std::pair<double, double>>> top2;  // per segment, per generated token
  Outcome outcome = Outcome::Undefined;
  std::vector<std::string> output;  // symbol names when outcome is Output
  std::string reason;
  std::vector<std::string> diagnostics;
  InvariantStats stats;

  long long total_tokens() const {
    long long n = 0;
    for (const auto& s : segments) n += (long long)s.size();
    return n;
  }
  long long max_segment() const {
    long long n = 0;
    for (const auto& s : segments) n = std::max<long long>(n, (long long)s.size());
    return n;
  }
};

namespace detail {

struct ProtocolVocab {
  int inp, inpend, outp, outpend, summ = -1, summend = -1;
  std::unordered_map<std::string, int> idx;

  explicit ProtocolVocab(const TransformerParams& p, bool scot) : idx(token_index(p)) {
    inp = need("<inp>");
    inpend = need("</inp>");
    outp = need("<outp>");
    outpend = need("</outp>");
    if (scot) {
      summ = need("<summ>");
      summend = need("</summ>");
    }
  }
  int need(const std::string& n) const {
    auto it = idx.find(n);
    if (it == idx.end()) throw std::invalid_argument("model vocabulary lacks " + n);
    return it->second;
  }
};

inline std::vector<int> input_prompt(const ProtocolVocab& v, const std::vector<std::string>& w) {
  std::vector<int> pr{v.inp};
  for (const auto& a : w) pr.push_back(v.need("sym:" + a));
  pr.push_back(v.inpend);
  return pr;
}

// Checks <outp> u </outp> at the end of the generated part gen = seg[from..].
inline bool parse_output(const TransformerParams& p, const ProtocolVocab& v, const std::vector<int>& seg, size_t from,
                         std::vector<std::string>& out, std::string& reason) {
  if (seg.empty() || seg.back() != v.outpend) {
    reason = "shape: missing </outp>";
    return false;
  }
  long long n_outp = std::count(seg.begin() + from, seg.end(), v.outp);
  if (n_outp != 1) {
    reason = "shape: <outp> occurs " + std::to_string(n_outp) + " times";
    return false;
  }
  auto it = std::find(seg.begin() + from, seg.end(), v.outp);
  out.clear();
  for (++it; it + 1 < seg.end(); ++it) {
    const auto& name = p.vocab[*it];
    if (name.rfind("sym:", 0) != 0) {
      reason = "shape: non-input symbol " + name + " in output";
      return false;
    }
    out.push_back(name.substr(4));
  }
  return true;
}

}  // namespace detail

// Budgets count generated tokens over all segments.
inline GenerationTrace run_cot(const TransformerParams& p, const std::vector<std::string>& w, const EvalConfig& cfg,
                               long long budget) {
  detail::ProtocolVocab v(p, false);
  GenerationTrace tr;
  tr.protocol = Protocol::CoT;
  auto prompt = detail::input_prompt(v, w);
  auto g = generate(p, prompt, {v.outpend}, budget, cfg);
  tr.segments.push_back(g.tokens);
  tr.top2.push_back(g.top2);
  tr.diagnostics = g.diagnostics;
  tr.stats = g.stats;
  if (!g.stopped) {
    tr.outcome = Outcome::BudgetExceeded;
    tr.reason = "no </outp> within budget";
    return tr;
  }
  if (detail::parse_output(p, v, g.tokens, prompt.size(), tr.output, tr.reason)) tr.outcome = Outcome::Output;
  else tr.outcome = Outcome::Undefined;
  return tr;
}

inline GenerationTrace run_scot(const TransformerParams& p, const std::vector<std::string>& w, const EvalConfig& cfg,
                                long long budget) {
  detail::ProtocolVocab v(p, true);
  GenerationTrace tr;
  tr.protocol = Protocol::SCoT;
  auto prompt = detail::input_prompt(v, w);
  long long left = budget;
  for (;;) {
    auto g = generate(p, prompt, {v.outpend, v.summend}, left, cfg);
    left -= (long long)(g.tokens.size() - prompt.size());
    tr.segments.push_back(g.tokens);
    tr.top2.push_back(g.top2);
    tr.diagnostics.insert(tr.diagnostics.end(), g.diagnostics.begin(), g.diagnostics.end());
    tr.stats.merge(g.stats);
    if (!g.stopped) {
      tr.outcome = Outcome::BudgetExceeded;
      tr.reason = "no stop token within budget";
      return tr;
    }
    const auto& seg = g.tokens;
    if (seg.back() == v.outpend) {
      if (std::count(seg.begin() + prompt.size(), seg.end(), v.summ)) {
        tr.outcome = Outcome::Undefined;
        tr.reason = "shape: <summ> in output segment";
        return tr;
      }
      tr.outcome = detail::parse_output(p, v, seg, prompt.size(), tr.output, tr.reason) ? Outcome::Output : Outcome::Undefined;
      return tr;
    }
    long long n_summ = std::count(seg.begin() + prompt.size(), seg.end(), v.summ);
    if (n_summ != 1) {
      tr.outcome = Outcome::Undefined;
      tr.reason = "shape: <summ> occurs " + std::to_string(n_summ) + " times";
      return tr;
    }
    if (std::count(seg.begin() + prompt.size(), seg.end(), v.outp)) {
      tr.outcome = Outcome::Undefined;
      tr.reason = "shape: <outp> in summary segment";
      return tr;
    }
    auto at = std::find(seg.begin() + prompt.size(), seg.end(), v.summ);
    std::vector<int> next(at, seg.end());
    if (next.size() < 3) {
      tr.outcome = Outcome::Undefined;
      tr.reason = "shape: empty summary";
      return tr;
    }
    prompt = std::move(next);
  }
}

}  // namespace tmc

#endif  // TMC_GENERATION_HPP
