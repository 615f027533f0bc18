#ifndef TMC_MODEL_IO_HPP
#define TMC_MODEL_IO_HPP

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>  // vendored nlohmann::json

#include "automata.hpp"
#include "compilers.hpp"
#include "generation.hpp"
#include "harness.hpp"
#include "netcore.hpp"

namespace tmc {

using nlohmann::json;

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& m) : std::runtime_error("schema: " + m) {}
};

struct FileError : std::runtime_error {
  explicit FileError(const std::string& m) : std::runtime_error("file: " + m) {}
};

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write " + path);
  out << text;
  if (!out) throw FileError("write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

template <class T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": wrong type");
  }
}

template <class T>
T get_field(const json& j, const std::string& key, const std::string& where) {
  return get_as<T>(field(j, key, where), where + "." + key);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + v[i];
  return s;
}

inline std::map<std::string, int> index_names(const std::vector<std::string>& names, const std::string& what) {
  std::map<std::string, int> m;
  for (size_t i = 0; i < names.size(); ++i) {
    const auto& n = names[i];
    if (n.empty() || n.find_first_of(",|") != std::string::npos)
      throw SchemaError(what + " '" + n + "': names must be nonempty without ',' or '|'");
    if (!m.emplace(n, (int)i).second) throw SchemaError(what + " '" + n + "' declared twice");
  }
  return m;
}

inline int lookup(const std::map<std::string, int>& m, const std::string& name, const std::string& what,
                  const std::string& where) {
  auto it = m.find(name);
  if (it == m.end()) throw SchemaError(where + ": unknown " + what + " '" + name + "'");
  return it->second;
}

inline json sparse_to_json(const SparseVec& s) {
  json a = json::array();
  for (const auto& e : s) a.push_back({e.idx, e.val});
  return a;
}

inline SparseVec sparse_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of [index, weight] pairs");
  SparseVec s;
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
      throw SchemaError(where + "[" + std::to_string(i) + "]: expected [index, weight] integers");
    s.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return s;
}

inline json rows_to_json(const std::vector<SparseVec>& rows) {
  json a = json::array();
  for (const auto& r : rows) a.push_back(sparse_to_json(r));
  return a;
}

inline std::vector<SparseVec> rows_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  std::vector<SparseVec> rows;
  for (size_t i = 0; i < j.size(); ++i) rows.push_back(sparse_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return rows;
}

inline const char* pos_kind_name(PosKind k) {
  return k == PosKind::BinaryAbsolute ? "binary" : k == PosKind::Rotary ? "rotary" : "none";
}

}  // namespace detail

// ------------------------------------------------------------------ models

inline json dims_to_json(const Dims& z) {
  return {{"d", z.d}, {"d_k", z.d_k}, {"d_v", z.d_v}, {"d_ff", z.d_ff}, {"H", z.H}, {"L", z.L}};
}

inline Dims dims_from_json(const json& j, const std::string& where) {
  using detail::get_field;
  Dims z;
  z.d = get_field<int>(j, "d", where);
  z.d_k = get_field<int>(j, "d_k", where);
  z.d_v = get_field<int>(j, "d_v", where);
  z.d_ff = get_field<int>(j, "d_ff", where);
  z.H = get_field<int>(j, "H", where);
  z.L = get_field<int>(j, "L", where);
  return z;
}

// Sparse [index, weight] pairs; biases stored as numerators over 4.
inline json model_to_json(const TransformerParams& p) {
  using namespace detail;
  json j;
  j["format"] = "tmc-model";
  j["version"] = 1;
  j["dims"] = dims_to_json(p.dims);
  j["vocab"] = p.vocab;
  j["c"] = p.c;
  j["mode"] = p.mode;
  j["positional"] = {{"kind", pos_kind_name(p.pos.kind)}, {"r", p.pos.r}, {"targets", p.pos.targets}};
  j["embeddings"] = rows_to_json(p.emb);
  j["unembeddings"] = rows_to_json(p.unemb);
  json layers = json::array();
  for (const auto& l : p.layers) {
    json heads = json::array();
    for (const auto& h : l.heads)
      heads.push_back({{"wq", rows_to_json(h.wq)},
                       {"wk", rows_to_json(h.wk)},
                       {"wv", rows_to_json(h.wv)},
                       {"wo", rows_to_json(h.wo)},
                       {"rope", h.rope}});
    json mlp = json::array();
    for (const auto& n : l.mlp) mlp.push_back({{"in", sparse_to_json(n.in)}, {"bias4", n.bias4}, {"out", sparse_to_json(n.out)}});
    layers.push_back({{"heads", heads}, {"mlp", mlp}});
  }
  j["layers"] = layers;
  return j;
}

inline TransformerParams model_from_json(const json& j) {
  using namespace detail;
  const std::string w = "model";
  if (get_field<std::string>(j, "format", w) != "tmc-model") throw SchemaError("model.format: expected 'tmc-model'");
  if (get_field<int>(j, "version", w) != 1) throw SchemaError("model.version: unsupported");
  TransformerParams p;
  p.dims = dims_from_json(field(j, "dims", w), "model.dims");
  p.vocab = get_field<std::vector<std::string>>(j, "vocab", w);
  p.c = get_field<double>(j, "c", w);
  p.mode = get_field<std::string>(j, "mode", w);
  const auto& pj = field(j, "positional", w);
  auto kind = get_field<std::string>(pj, "kind", "model.positional");
  if (kind == "binary") p.pos.kind = PosKind::BinaryAbsolute;
  else if (kind == "rotary") p.pos.kind = PosKind::Rotary;
  else if (kind == "none") p.pos.kind = PosKind::None;
  else throw SchemaError("model.positional.kind: unknown '" + kind + "'");
  p.pos.r = get_field<int>(pj, "r", "model.positional");
  p.pos.targets = get_field<std::vector<int>>(pj, "targets", "model.positional");
  p.emb = rows_from_json(field(j, "embeddings", w), "model.embeddings");
  p.unemb = rows_from_json(field(j, "unembeddings", w), "model.unembeddings");
  const auto& lj = field(j, "layers", w);
  if (!lj.is_array()) throw SchemaError("model.layers: expected an array");
  for (size_t li = 0; li < lj.size(); ++li) {
    const std::string lw = "model.layers[" + std::to_string(li) + "]";
    Layer l;
    const auto& hj = field(lj[li], "heads", lw);
    if (!hj.is_array()) throw SchemaError(lw + ".heads: expected an array");
    for (size_t hi = 0; hi < hj.size(); ++hi) {
      const std::string hw = lw + ".heads[" + std::to_string(hi) + "]";
      Head h;
      h.wq = rows_from_json(field(hj[hi], "wq", hw), hw + ".wq");
      h.wk = rows_from_json(field(hj[hi], "wk", hw), hw + ".wk");
      h.wv = rows_from_json(field(hj[hi], "wv", hw), hw + ".wv");
      h.wo = rows_from_json(field(hj[hi], "wo", hw), hw + ".wo");
      h.rope = get_field<std::vector<double>>(hj[hi], "rope", hw);
      l.heads.push_back(std::move(h));
    }
    const auto& mj = field(lj[li], "mlp", lw);
    if (!mj.is_array()) throw SchemaError(lw + ".mlp: expected an array");
    for (size_t ni = 0; ni < mj.size(); ++ni) {
      const std::string nw = lw + ".mlp[" + std::to_string(ni) + "]";
      Neuron n;
      n.in = sparse_from_json(field(mj[ni], "in", nw), nw + ".in");
      n.bias4 = get_field<int>(mj[ni], "bias4", nw);
      n.out = sparse_from_json(field(mj[ni], "out", nw), nw + ".out");
      l.mlp.push_back(std::move(n));
    }
    p.layers.push_back(std::move(l));
  }
  try {
    validate(p);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("model: ") + e.what());
  }
  return p;
}

inline void save_model(const std::string& path, const TransformerParams& p) {
  write_text_file(path, model_to_json(p).dump() + "\n");
}

inline TransformerParams load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

// ---------------------------------------------------------------- machines

inline json dfa_to_json(const Dfa& m) {
  json j;
  j["states"] = m.states;
  j["alphabet"] = m.alphabet;
  j["init"] = m.states[m.init];
  json acc = json::array();
  for (int q = 0; q < m.n_states(); ++q)
    if (m.accepting[q]) acc.push_back(m.states[q]);
  j["accepting"] = acc;
  json d = json::object();
  for (int q = 0; q < m.n_states(); ++q)
    for (int a = 0; a < m.n_symbols(); ++a) d[m.states[q] + "," + m.alphabet[a]] = m.states[m.delta[q][a]];
  j["delta"] = d;
  return j;
}

inline Dfa dfa_from_json(const json& j) {
  using namespace detail;
  const std::string w = "dfa";
  Dfa m;
  m.states = get_field<std::vector<std::string>>(j, "states", w);
  m.alphabet = get_field<std::vector<std::string>>(j, "alphabet", w);
  if (m.states.empty()) throw SchemaError("dfa.states: empty");
  if (m.alphabet.empty()) throw SchemaError("dfa.alphabet: empty");
  auto qi = index_names(m.states, "state");
  auto ai = index_names(m.alphabet, "symbol");
  m.init = lookup(qi, get_field<std::string>(j, "init", w), "state", "dfa.init");
  m.accepting.assign(m.states.size(), false);
  for (const auto& s : get_field<std::vector<std::string>>(j, "accepting", w))
    m.accepting[lookup(qi, s, "state", "dfa.accepting")] = true;
  m.delta.assign(m.states.size(), std::vector<int>(m.alphabet.size(), -1));
  const auto& dj = field(j, "delta", w);
  if (!dj.is_object()) throw SchemaError("dfa.delta: expected an object");
  for (auto it = dj.begin(); it != dj.end(); ++it) {
    const std::string ew = "dfa.delta entry \"" + it.key() + "\"";
    auto parts = split(it.key(), ',');
    if (parts.size() != 2) throw SchemaError(ew + ": key must be 'state,symbol'");
    int q = lookup(qi, parts[0], "state", ew), a = lookup(ai, parts[1], "symbol", ew);
    if (!it.value().is_string()) throw SchemaError(ew + ": target must be a state name");
    m.delta[q][a] = lookup(qi, it.value().get<std::string>(), "state", ew);
  }
  for (int q = 0; q < m.n_states(); ++q)
    for (int a = 0; a < m.n_symbols(); ++a)
      if (m.delta[q][a] < 0) throw SchemaError("dfa.delta: missing entry \"" + m.states[q] + "," + m.alphabet[a] + "\"");
  return m;
}

inline json tm_to_json(const TuringMachine& m) {
  using detail::join;
  json j;
  j["tapes"] = m.tapes;
  j["states"] = m.states;
  std::vector<std::string> in;
  for (int g : m.input_symbols) in.push_back(m.tape_alphabet[g]);
  j["input_alphabet"] = in;
  j["tape_alphabet"] = m.tape_alphabet;
  j["blank"] = m.tape_alphabet[m.blank];
  j["init"] = m.states[m.init];
  j["halt"] = m.states[m.halt];
  json d = json::object();
  for (int q = 0; q < m.n_states(); ++q) {
    if (q == m.halt) continue;
    for (long long c = 0; c < m.n_tuples(); ++c) {
      std::vector<std::string> rd, wr, mv;
      for (int s : m.decode(c)) rd.push_back(m.tape_alphabet[s]);
      const auto& t = m.delta[q * m.n_tuples() + c];
      for (int s : t.write) wr.push_back(m.tape_alphabet[s]);
      for (int x : t.move) mv.push_back(move_name(x));
      d[m.states[q] + "|" + join(rd, ',')] = m.states[t.next] + "|" + join(wr, ',') + "|" + join(mv, ',');
    }
  }
  j["delta"] = d;
  return j;
}

inline TuringMachine tm_from_json(const json& j) {
  using namespace detail;
  const std::string w = "tm";
  TuringMachine m;
  m.tapes = get_field<int>(j, "tapes", w);
  if (m.tapes < 1) throw SchemaError("tm.tapes: must be >= 1");
  m.states = get_field<std::vector<std::string>>(j, "states", w);
  m.tape_alphabet = get_field<std::vector<std::string>>(j, "tape_alphabet", w);
  auto qi = index_names(m.states, "state");
  auto gi = index_names(m.tape_alphabet, "symbol");
  if (m.states.size() < 2) throw SchemaError("tm.states: need at least two states");
  m.blank = lookup(gi, get_field<std::string>(j, "blank", w), "symbol", "tm.blank");
  m.init = lookup(qi, get_field<std::string>(j, "init", w), "state", "tm.init");
  m.halt = lookup(qi, get_field<std::string>(j, "halt", w), "state", "tm.halt");
  if (m.init == m.halt) throw SchemaError("tm.halt: must differ from init");
  auto in = get_field<std::vector<std::string>>(j, "input_alphabet", w);
  if (in.empty()) throw SchemaError("tm.input_alphabet: empty");
  for (const auto& s : in) {
    int g = lookup(gi, s, "symbol", "tm.input_alphabet");
    if (g == m.blank) throw SchemaError("tm.input_alphabet: contains the blank");
    if (m.is_input(g)) throw SchemaError("tm.input_alphabet: '" + s + "' listed twice");
    m.input_symbols.push_back(g);
  }
  const long long nt = m.n_tuples();
  if (nt * (long long)m.states.size() > 50'000'000) throw SchemaError("tm: transition table too large");
  m.delta.assign(m.states.size() * nt, Transition{});
  const auto& dj = field(j, "delta", w);
  if (!dj.is_object()) throw SchemaError("tm.delta: expected an object");
  auto syms = [&](const std::string& s, const std::string& ew) {
    auto parts = split(s, ',');
    if ((int)parts.size() != m.tapes) throw SchemaError(ew + ": expected " + std::to_string(m.tapes) + " symbols");
    std::vector<int> v;
    for (const auto& x : parts) v.push_back(lookup(gi, x, "symbol", ew));
    return v;
  };
  for (auto it = dj.begin(); it != dj.end(); ++it) {
    const std::string ew = "tm.delta entry \"" + it.key() + "\"";
    auto key = split(it.key(), '|');
    if (key.size() != 2) throw SchemaError(ew + ": key must be 'state|a1,..,aK'");
    int q = lookup(qi, key[0], "state", ew);
    if (q == m.halt) throw SchemaError(ew + ": transition out of the halt state");
    auto rd = syms(key[1], ew);
    if (!it.value().is_string()) throw SchemaError(ew + ": value must be 'state|b1,..,bK|M1,..,MK'");
    auto val = split(it.value().get<std::string>(), '|');
    if (val.size() != 3) throw SchemaError(ew + ": value must be 'state|b1,..,bK|M1,..,MK'");
    Transition t;
    t.next = lookup(qi, val[0], "state", ew);
    t.write = syms(val[1], ew);
    auto mv = split(val[2], ',');
    if ((int)mv.size() != m.tapes) throw SchemaError(ew + ": expected " + std::to_string(m.tapes) + " moves");
    for (const auto& x : mv) {
      if (x == "L") t.move.push_back(L);
      else if (x == "S") t.move.push_back(S);
      else if (x == "R") t.move.push_back(R);
      else throw SchemaError(ew + ": unknown move '" + x + "'");
    }
    auto& slot = m.delta[q * nt + m.code(rd)];
    if (slot.next >= 0) throw SchemaError(ew + ": duplicate entry");
    slot = std::move(t);
  }
  for (int q = 0; q < m.n_states(); ++q) {
    if (q == m.halt) continue;
    for (long long c = 0; c < nt; ++c)
      if (m.delta[q * nt + c].next < 0) {
        std::vector<std::string> rd;
        for (int s : m.decode(c)) rd.push_back(m.tape_alphabet[s]);
        throw SchemaError("tm.delta: missing entry \"" + m.states[q] + "|" + join(rd, ',') + "\"");
      }
  }
  return m;
}

using Machine = std::variant<Dfa, TuringMachine>;

// A file with "tapes" is a Turing machine, otherwise a DFA.
inline Machine machine_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("machine: expected an object");
  if (j.contains("tapes")) return tm_from_json(j);
  return dfa_from_json(j);
}

inline Machine load_machine(const std::string& path) { return machine_from_json(read_json_file(path)); }

inline Dfa load_dfa(const std::string& path) {
  auto m = load_machine(path);
  if (!std::holds_alternative<Dfa>(m)) throw SchemaError(path + ": expected a DFA");
  return std::get<Dfa>(m);
}

inline TuringMachine load_tm(const std::string& path) {
  auto m = load_machine(path);
  if (!std::holds_alternative<TuringMachine>(m)) throw SchemaError(path + ": expected a Turing machine");
  return std::get<TuringMachine>(m);
}

// ----------------------------------------------------------------- reports

inline json report_to_json(const CompileReport& r) {
  json j;
  j["r"] = r.r;
  j["formula"] = dims_to_json(r.formula);
  j["used"] = dims_to_json(r.used);
  j["realized"] = dims_to_json(r.realized);
  json lay = json::object();
  for (const auto& [name, reg] : r.layout) lay[name] = reg;
  j["layout"] = lay;
  j["manifest"] = r.manifest;
  j["notes"] = r.notes;
  return j;
}

inline json invariants_to_json(const InvariantStats& s) {
  return {{"non_ternary", s.non_ternary}, {"score_gap", s.score_gap},           {"tie_values", s.tie_values},
          {"output_gap", s.output_gap},   {"checked_positions", s.checked_positions}, {"first", s.first}};
}

inline json report_to_json(const ValidationReport& r) {
  json j;
  j["kind"] = r.kind;
  j["ok"] = r.ok();
  j["attempted"] = r.attempted;
  j["skipped"] = r.skipped;
  j["checked"] = r.checked;
  json mm = json::array();
  for (const auto& m : r.mismatches)
    mm.push_back({{"trial", m.trial}, {"segment", m.segment}, {"index", m.index}, {"expected", m.expected}, {"actual", m.actual}});
  j["mismatches"] = mm;
  json tr = json::array();
  for (const auto& t : r.trials) {
    json x{{"trial", t.trial}, {"K", t.K}, {"Q", t.Q}, {"Gamma", t.G}, {"w", t.w_len}, {"t", t.t}, {"s", t.s}, {"skipped", t.skipped}};
    if (t.skipped) x["skip_reason"] = t.skip_reason;
    else {
      x["r"] = t.r;
      x["match"] = t.match;
      x["generated"] = t.generated;
    }
    tr.push_back(x);
  }
  j["trials"] = tr;
  j["invariants"] = invariants_to_json(r.invariants);
  j["length_bound_violations"] = r.length_bound_violations;
  j["max_denoise_deviation"] = r.max_denoise_deviation;
  j["c"] = r.c;
  j["notes"] = r.notes;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

inline json report_to_json(const ProbeReport& r) {
  json j{{"format", r.format}, {"found", r.found}, {"scanned", r.scanned}};
  if (r.found) {
    j["i_star"] = r.i_star;
    j["j_star"] = r.j_star;
  }
  return j;
}

inline json report_to_json(const CapacityTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back({{"K", r.K}, {"Gamma", r.gamma}, {"max_Q", r.max_q}});
  return {{"construction", t.scot ? "scot" : "cot"},
          {"r_depth", t.r_depth},
          {"r_dk", t.r_dk},
          {"r", t.r},
          {"context", (double)t.context},
          {"machines", rows}};
}

inline json report_to_json(const RopeReport& r) {
  return {{"r", r.r},
          {"ok", r.ok()},
          {"positions", r.positions},
          {"wrong_bits", r.wrong_bits},
          {"min_separation", r.min_separation},
          {"bound", r.bound},
          {"invariants", invariants_to_json(r.invariants)}};
}

// One record per emitted token, then a summary record per segment.
inline void write_trace_jsonl(std::ostream& os, const TransformerParams& p, const GenerationTrace& tr) {
  for (size_t s = 0; s < tr.segments.size(); ++s) {
    const auto& seg = tr.segments[s];
    const auto& t2 = s < tr.top2.size() ? tr.top2[s] : std::vector<std::pair<double, double>>{};
    const size_t start = seg.size() - t2.size();
    for (size_t k = 0; k < t2.size(); ++k) {
      json rec{{"segment", s},
               {"position", start + k},
               {"token", p.vocab[seg[start + k]]},
               {"top2", {t2[k].first, t2[k].second}}};
      os << rec.dump() << "\n";
    }
    os << json{{"segment", s}, {"summary", true}, {"length", seg.size()}, {"generated", t2.size()}}.dump() << "\n";
  }
  json fin{{"outcome", outcome_name(tr.outcome)},
           {"t", tr.total_tokens()},
           {"s", tr.max_segment()},
           {"segments", tr.segments.size()}};
  if (tr.outcome == Outcome::Output) fin["output"] = tr.output;
  if (!tr.reason.empty()) fin["reason"] = tr.reason;
  os << fin.dump() << "\n";
}

}  // namespace tmc

#endif  // TMC_MODEL_IO_HPP
