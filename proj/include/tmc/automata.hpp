#ifndef TMC_AUTOMATA_HPP
#define TMC_AUTOMATA_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmc {

// ---------------------------------------------------------------- encodings

// Number of +-1 bits needed to index n elements.
inline int enc_bits(int n) {
  int b = 0;
  while ((1 << b) < n) ++b;
  return b;
}

// LSB-first +-1 binary of i with `bits` entries.
inline std::vector<int> bin(int bits, long long i) {
  if (i < 0 || (bits < 62 && i >= (1LL << bits)))
    throw std::out_of_range("bin: value out of range");
  std::vector<int> v(bits);
  for (int s = 0; s < bits; ++s) v[s] = ((i >> s) & 1) ? 1 : -1;
  return v;
}

inline long long unbin(const std::vector<int>& v) {
  long long x = 0;
  for (size_t s = 0; s < v.size(); ++s)
    if (v[s] > 0) x |= (1LL << s);
  return x;
}

// ---------------------------------------------------------------------- DFA

struct Dfa {
  std::vector<std::string> states;
  std::vector<std::string> alphabet;
  std::vector<std::vector<int>> delta;  // [q][a]
  int init = 0;
  std::vector<bool> accepting;

  int n_states() const { return (int)states.size(); }
  int n_symbols() const { return (int)alphabet.size(); }
};

inline void check(const Dfa& m) {
  if (m.states.empty()) throw std::invalid_argument("dfa: empty state set");
  if (m.alphabet.empty()) throw std::invalid_argument("dfa: empty alphabet");
  if (m.init < 0 || m.init >= m.n_states()) throw std::invalid_argument("dfa: bad init");
  if ((int)m.accepting.size() != m.n_states()) throw std::invalid_argument("dfa: bad accepting");
  if ((int)m.delta.size() != m.n_states()) throw std::invalid_argument("dfa: delta not total");
  for (auto& row : m.delta) {
    if ((int)row.size() != m.n_symbols()) throw std::invalid_argument("dfa: delta not total");
    for (int q : row)
      if (q < 0 || q >= m.n_states()) throw std::invalid_argument("dfa: delta target out of range");
  }
}

inline bool dfa_accepts(const Dfa& m, const std::vector<int>& w) {
  int q = m.init;
  for (int a : w) {
    if (a < 0 || a >= m.n_symbols()) throw std::invalid_argument("dfa: symbol not in alphabet");
    q = m.delta[q][a];
  }
  return m.accepting[q];
}

// --------------------------------------------------------- Turing machines

enum Move : int { L = 0, S = 1, R = 2 };

inline const char* move_name(int m) { return m == L ? "L" : m == S ? "S" : "R"; }

struct Transition {
  int next = -1;
  std::vector<int> write;
  std::vector<int> move;
  bool operator==(const Transition&) const = default;
};

// Symbols are indices into tape_alphabet; input symbols are a subset.
struct TuringMachine {
  int tapes = 1;
  std::vector<std::string> states;
  std::vector<std::string> tape_alphabet;
  std::vector<int> input_symbols;  // indices into tape_alphabet
  int blank = 0;
  int init = 0;
  int halt = 1;
  // Indexed by q * |Gamma|^K + code(symbols); entries for halt are unused.
  std::vector<Transition> delta;

  int n_states() const { return (int)states.size(); }
  int n_gamma() const { return (int)tape_alphabet.size(); }
  long long n_tuples() const {
    long long n = 1;
    for (int k = 0; k < tapes; ++k) n *= n_gamma();
    return n;
  }
  long long code(const std::vector<int>& syms) const {
    long long c = 0;
    for (int k = tapes - 1; k >= 0; --k) c = c * n_gamma() + syms[k];
    return c;
  }
  std::vector<int> decode(long long c) const {
    std::vector<int> s(tapes);
    for (int k = 0; k < tapes; ++k) {
      s[k] = (int)(c % n_gamma());
      c /= n_gamma();
    }
    return s;
  }
  const Transition& step(int q, const std::vector<int>& syms) const {
    return delta[q * n_tuples() + code(syms)];
  }
  Transition& step(int q, const std::vector<int>& syms) {
    return delta[q * n_tuples() + code(syms)];
  }
  bool is_input(int g) const {
    return std::find(input_symbols.begin(), input_symbols.end(), g) != input_symbols.end();
  }
  int d_q() const { return enc_bits(n_states()); }
  int d_gamma() const { return enc_bits(n_gamma()); }
};

inline void check(const TuringMachine& m) {
  if (m.tapes < 1) throw std::invalid_argument("tm: tapes must be >= 1");
  if (m.n_states() < 2) throw std::invalid_argument("tm: need at least two states");
  if (m.init < 0 || m.init >= m.n_states() || m.halt < 0 || m.halt >= m.n_states())
    throw std::invalid_argument("tm: bad init/halt");
  if (m.init == m.halt) throw std::invalid_argument("tm: init equals halt");
  if (m.blank < 0 || m.blank >= m.n_gamma()) throw std::invalid_argument("tm: bad blank");
  if (m.input_symbols.empty()) throw std::invalid_argument("tm: empty input alphabet");
  for (int g : m.input_symbols) {
    if (g < 0 || g >= m.n_gamma()) throw std::invalid_argument("tm: input symbol not in tape alphabet");
    if (g == m.blank) throw std::invalid_argument("tm: blank in input alphabet");
  }
  if ((long long)m.delta.size() != m.n_states() * m.n_tuples())
    throw std::invalid_argument("tm: delta table has wrong size");
  for (int q = 0; q < m.n_states(); ++q) {
    if (q == m.halt) continue;
    for (long long c = 0; c < m.n_tuples(); ++c) {
      const auto& t = m.delta[q * m.n_tuples() + c];
      if (t.next < 0 || t.next >= m.n_states() || (int)t.write.size() != m.tapes ||
          (int)t.move.size() != m.tapes)
        throw std::invalid_argument("tm: delta not total at state " + m.states[q]);
      for (int k = 0; k < m.tapes; ++k) {
        if (t.write[k] < 0 || t.write[k] >= m.n_gamma()) throw std::invalid_argument("tm: bad write symbol");
        if (t.move[k] < 0 || t.move[k] > 2) throw std::invalid_argument("tm: bad move");
      }
    }
  }
}

struct Configuration {
  int state = 0;
  std::vector<std::vector<int>> tapes;  // finite prefixes; beyond is blank
  std::vector<int> heads;
  bool operator==(const Configuration&) const = default;
};

inline int read_cell(const Configuration& c, int k, int i, int blank) {
  const auto& t = c.tapes[k];
  return i < (int)t.size() ? t[i] : blank;
}

inline Configuration initial_config(const TuringMachine& m, const std::vector<int>& w) {
  Configuration c;
  c.state = m.init;
  c.tapes.assign(m.tapes, {});
  c.tapes[0] = w;
  c.heads.assign(m.tapes, 0);
  return c;
}

// One transition from a non-halting configuration.
inline Configuration step_config(const TuringMachine& m, const Configuration& c) {
  std::vector<int> syms(m.tapes);
  for (int k = 0; k < m.tapes; ++k) syms[k] = read_cell(c, k, c.heads[k], m.blank);
  const auto& tr = m.step(c.state, syms);
  Configuration n = c;
  n.state = tr.next;
  for (int k = 0; k < m.tapes; ++k) {
    int h = c.heads[k];
    auto& tape = n.tapes[k];
    if (h >= (int)tape.size()) tape.resize(h + 1, m.blank);
    tape[h] = tr.write[k];
    if (tr.move[k] == R) n.heads[k] = h + 1;
    else if (tr.move[k] == L) n.heads[k] = std::max(0, h - 1);
  }
  return n;
}

struct RunResult {
  bool halted = false;
  int steps = 0;
  int space = 0;
  std::optional<std::vector<int>> output;
  std::vector<Configuration> config_trace;  // C_0 .. C_steps
};

// Output of a halted configuration: tape 1 read until the first blank; a
// non-input symbol before it or a non-blank after it makes it invalid.
inline std::optional<std::vector<int>> extract_output(const TuringMachine& m, const Configuration& c) {
  const auto& t = c.tapes[0];
  std::vector<int> u;
  size_t i = 0;
  for (; i < t.size() && t[i] != m.blank; ++i) {
    if (!m.is_input(t[i])) return std::nullopt;
    u.push_back(t[i]);
  }
  for (; i < t.size(); ++i)
    if (t[i] != m.blank) return std::nullopt;
  return u;
}

inline RunResult tm_run(const TuringMachine& m, const std::vector<int>& w, long long step_cap) {
  for (int a : w)
    if (!m.is_input(a)) throw std::invalid_argument("tm_run: input symbol not in input alphabet");
  RunResult res;
  Configuration c = initial_config(m, w);
  res.space = std::max<int>((int)w.size(), 1);
  res.config_trace.push_back(c);
  long long t = 0;
  while (c.state != m.halt && t < step_cap) {
    c = step_config(m, c);
    ++t;
    for (int h : c.heads) res.space = std::max(res.space, h + 1);
    res.config_trace.push_back(c);
  }
  res.steps = (int)t;
  res.halted = c.state == m.halt;
  if (res.halted) res.output = extract_output(m, c);
  return res;
}

// ------------------------------------------------------------------- tokens

enum class Tok : int {
  Inp, InpEnd, Outp, OutpEnd, P, PEnd, Summ, SummEnd,
  Run,    // a = state, v = written symbols, w = moves
  Pos,    // v = one +-1 bit per tape
  Sym,    // a = symbol (index into tape alphabet)
  Tape,   // v = symbol per tape, w = hat per tape (0/1)
  State,  // a = state
};

struct Token {
  Tok kind = Tok::Inp;
  int a = -1;
  std::vector<int> v;
  std::vector<int> w;
  bool operator==(const Token&) const = default;

  static Token delim(Tok k) { return Token{k, -1, {}, {}}; }
  static Token sym(int g) { return Token{Tok::Sym, g, {}, {}}; }
  static Token state(int q) { return Token{Tok::State, q, {}, {}}; }
  static Token run(int q, std::vector<int> y, std::vector<int> mv) { return Token{Tok::Run, q, std::move(y), std::move(mv)}; }
  static Token pos(std::vector<int> bits) { return Token{Tok::Pos, -1, std::move(bits), {}}; }
  static Token tape(std::vector<int> syms, std::vector<int> hats) { return Token{Tok::Tape, -1, std::move(syms), std::move(hats)}; }
};

inline std::string token_name(const TuringMachine& m, const Token& t) {
  auto join_syms = [&](const std::vector<int>& v, const std::vector<int>* hats) {
    std::string s;
    for (size_t k = 0; k < v.size(); ++k) {
      if (k) s += ",";
      s += m.tape_alphabet[v[k]];
      if (hats && (*hats)[k]) s += "^";
    }
    return s;
  };
  switch (t.kind) {
    case Tok::Inp: return "<inp>";
    case Tok::InpEnd: return "</inp>";
    case Tok::Outp: return "<outp>";
    case Tok::OutpEnd: return "</outp>";
    case Tok::P: return "<p>";
    case Tok::PEnd: return "</p>";
    case Tok::Summ: return "<summ>";
    case Tok::SummEnd: return "</summ>";
    case Tok::Sym: return "sym:" + m.tape_alphabet[t.a];
    case Tok::State: return "state:" + m.states[t.a];
    case Tok::Run: {
      std::string s = "run:" + m.states[t.a] + "|" + join_syms(t.v, nullptr) + "|";
      for (size_t k = 0; k < t.w.size(); ++k) s += (k ? "," : "") + std::string(move_name(t.w[k]));
      return s;
    }
    case Tok::Pos: {
      std::string s = "pos:";
      for (int b : t.v) s += b > 0 ? "1" : "0";
      return s;
    }
    case Tok::Tape: return "tape:" + join_syms(t.v, &t.w);
  }
  return "?";
}

inline std::string tokens_to_string(const TuringMachine& m, const std::vector<Token>& ts) {
  std::string s;
  for (size_t i = 0; i < ts.size(); ++i) s += (i ? " " : "") + token_name(m, ts[i]);
  return s;
}

// CoT vocabulary in a fixed order.
inline std::vector<Token> cot_vocab(const TuringMachine& m) {
  std::vector<Token> v;
  for (Tok k : {Tok::Inp, Tok::InpEnd, Tok::Outp, Tok::OutpEnd, Tok::P, Tok::PEnd}) v.push_back(Token::delim(k));
  for (int g : m.input_symbols) v.push_back(Token::sym(g));
  long long nt = m.n_tuples();
  long long nm = 1;
  for (int k = 0; k < m.tapes; ++k) nm *= 3;
  for (int q = 0; q < m.n_states(); ++q)
    for (long long c = 0; c < nt; ++c)
      for (long long mc = 0; mc < nm; ++mc) {
        std::vector<int> mv(m.tapes);
        long long x = mc;
        for (int k = 0; k < m.tapes; ++k) { mv[k] = (int)(x % 3); x /= 3; }
        v.push_back(Token::run(q, m.decode(c), mv));
      }
  for (int b = 0; b < (1 << m.tapes); ++b) {
    std::vector<int> bits(m.tapes);
    for (int k = 0; k < m.tapes; ++k) bits[k] = ((b >> k) & 1) ? 1 : -1;
    v.push_back(Token::pos(bits));
  }
  return v;
}

inline std::vector<Token> scot_vocab(const TuringMachine& m) {
  auto v = cot_vocab(m);
  v.push_back(Token::delim(Tok::Summ));
  v.push_back(Token::delim(Tok::SummEnd));
  for (int q = 0; q < m.n_states(); ++q) v.push_back(Token::state(q));
  long long n = 1;
  for (int k = 0; k < m.tapes; ++k) n *= 2 * m.n_gamma();
  for (long long c = 0; c < n; ++c) {
    std::vector<int> syms(m.tapes), hats(m.tapes);
    long long x = c;
    for (int k = 0; k < m.tapes; ++k) {
      int e = (int)(x % (2 * m.n_gamma()));
      x /= 2 * m.n_gamma();
      syms[k] = e / 2;
      hats[k] = e % 2;
    }
    v.push_back(Token::tape(syms, hats));
  }
  return v;
}

// ------------------------------------------------------------------ oracles

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Token run_token(const TuringMachine& m, const RunResult& run, int t) {
  const auto& prev = run.config_trace[t - 1];
  const auto& cur = run.config_trace[t];
  std::vector<int> syms(m.tapes);
  for (int k = 0; k < m.tapes; ++k) syms[k] = read_cell(prev, k, prev.heads[k], m.blank);
  const auto& tr = m.step(prev.state, syms);
  return Token::run(cur.state, tr.write, tr.move);
}

inline void append_position_block(std::vector<Token>& out, const Configuration& c, int r) {
  out.push_back(Token::delim(Tok::P));
  for (int s = 0; s < r; ++s) {
    std::vector<int> bits(c.heads.size());
    for (size_t k = 0; k < c.heads.size(); ++k) bits[k] = ((c.heads[k] >> s) & 1) ? 1 : -1;
    out.push_back(Token::pos(bits));
  }
  out.push_back(Token::delim(Tok::PEnd));
}

inline long long default_step_cap(int r) { return (1LL << r) - 2; }

inline RunResult checked_run(const TuringMachine& m, const std::vector<int>& w, long long step_cap) {
  auto run = tm_run(m, w, step_cap);
  if (!run.halted) throw OracleError("machine does not halt within the step cap");
  if (!run.output) throw OracleError("machine output is invalid");
  return run;
}

// toks(M, w, r)
inline std::vector<Token> cot_token_oracle(const TuringMachine& m, const std::vector<int>& w, int r) {
  if (r < 2 || r % 2) throw std::invalid_argument("r must be even and >= 2");
  auto run = checked_run(m, w, default_step_cap(r));
  std::vector<Token> out;
  out.push_back(Token::delim(Tok::Inp));
  for (int a : w) out.push_back(Token::sym(a));
  out.push_back(Token::delim(Tok::InpEnd));
  for (int t = 1; t <= run.steps; ++t) {
    out.push_back(run_token(m, run, t));
    if (t % r == 0 && t < run.steps) append_position_block(out, run.config_trace[t], r);
  }
  out.push_back(Token::delim(Tok::Outp));
  for (int a : *run.output) out.push_back(Token::sym(a));
  out.push_back(Token::delim(Tok::OutpEnd));
  if ((long long)out.size() > (1LL << r)) throw OracleError("token sequence longer than 2^r");
  return out;
}

// summary of configuration c using `used_cells` cells.
inline std::vector<Token> encode_summary(const TuringMachine& m, const Configuration& c, int used_cells) {
  for (int h : c.heads)
    if (h >= used_cells) throw std::invalid_argument("encode_summary: head index >= used_cells");
  std::vector<Token> out;
  out.push_back(Token::delim(Tok::Summ));
  for (int i = 0; i < used_cells; ++i) {
    std::vector<int> syms(m.tapes), hats(m.tapes);
    for (int k = 0; k < m.tapes; ++k) {
      syms[k] = read_cell(c, k, i, m.blank);
      hats[k] = c.heads[k] == i ? 1 : 0;
    }
    out.push_back(Token::tape(syms, hats));
  }
  out.push_back(Token::state(c.state));
  out.push_back(Token::delim(Tok::SummEnd));
  return out;
}

struct ScotOracle {
  std::vector<std::vector<Token>> segments;
  std::vector<int> times;  // t_i at the end of each segment
  std::vector<std::string> warnings;
  RunResult run;
};

// Time is not bounded by 2^r here, only segment length is.
inline ScotOracle scot_segments_oracle(const TuringMachine& m, const std::vector<int>& w, int r,
                                       long long step_cap = 1LL << 20) {
  if (r < 4 || r % 2) throw std::invalid_argument("r must be even and >= 4");
  ScotOracle res;
  res.run = checked_run(m, w, step_cap);
  const auto& run = res.run;
  // running space s_t
  std::vector<int> space(run.steps + 1);
  space[0] = std::max<int>((int)w.size(), 1);
  for (int t = 1; t <= run.steps; ++t) {
    space[t] = space[t - 1];
    for (int h : run.config_trace[t].heads) space[t] = std::max(space[t], h + 1);
  }
  std::vector<Token> prompt;
  prompt.push_back(Token::delim(Tok::Inp));
  for (int a : w) prompt.push_back(Token::sym(a));
  prompt.push_back(Token::delim(Tok::InpEnd));
  int t = 0;
  for (;;) {
    long long j = (long long)prompt.size() - 1;
    if (j >= (1LL << (r - 2)))
      res.warnings.push_back("prompt end position " + std::to_string(j) + " >= 2^(r-2)");
    std::vector<Token> seg = prompt;
    int cnt = 0;
    bool done = false;
    for (;;) {
      ++t;
      ++cnt;
      seg.push_back(run_token(m, run, t));
      if (t == run.steps) {
        seg.push_back(Token::delim(Tok::Outp));
        for (int a : *run.output) seg.push_back(Token::sym(a));
        seg.push_back(Token::delim(Tok::OutpEnd));
        done = true;
        break;
      }
      if ((long long)seg.size() - 1 >= 4 * j) {
        prompt = encode_summary(m, run.config_trace[t], space[t]);
        seg.insert(seg.end(), prompt.begin(), prompt.end());
        break;
      }
      if (cnt % r == 0) append_position_block(seg, run.config_trace[t], r);
    }
    if ((long long)seg.size() > (1LL << r)) throw OracleError("segment longer than 2^r");
    res.segments.push_back(std::move(seg));
    res.times.push_back(t);
    if (done) break;
  }
  return res;
}

}  // namespace tmc

#endif  // TMC_AUTOMATA_HPP
