#ifndef TMC_TESTS_MACHINES_HPP
#define TMC_TESTS_MACHINES_HPP

#include "tmc/automata.hpp"

namespace fixtures {

// One tape, replaces "ab" with "cb". States q_init, q_a, q_ab, q_halt;
// tape alphabet a, b, c, _ (blank). Unlisted transitions are arbitrary.
inline tmc::TuringMachine replace_ab_machine() {
  using namespace tmc;
  TuringMachine m;
  m.tapes = 1;
  m.states = {"q_init", "q_a", "q_ab", "q_halt"};
  m.tape_alphabet = {"a", "b", "c", "_"};
  m.input_symbols = {0, 1, 2};
  m.blank = 3;
  m.init = 0;
  m.halt = 3;
  m.delta.assign(4 * 4, Transition{0, {3}, {S}});
  auto set = [&](int q, int a, int q2, int y, int mv) { m.delta[q * 4 + a] = Transition{q2, {y}, {mv}}; };
  // arbitrary filler: halt in place
  for (int q = 0; q < 3; ++q)
    for (int a = 0; a < 4; ++a) set(q, a, 3, a, S);
  set(0, 0, 1, 0, R);  // q_init a -> q_a a R
  set(1, 0, 0, 0, S);  // q_a a -> q_init a S
  set(1, 1, 2, 1, L);  // q_a b -> q_ab b L
  set(2, 0, 0, 2, R);  // q_ab a -> q_init c R
  set(0, 1, 0, 1, R);  // q_init b -> q_init b R
  set(0, 2, 0, 2, R);  // q_init c -> q_init c R
  set(0, 3, 3, 3, S);  // q_init _ -> q_halt _ S
  set(1, 3, 3, 3, S);
  return m;
}

// Halts in one step on any symbol tuple without changing anything.
inline tmc::TuringMachine one_step_machine(int K) {
  using namespace tmc;
  TuringMachine m;
  m.tapes = K;
  m.states = {"s", "h"};
  m.tape_alphabet = {"1", "_"};
  m.input_symbols = {0};
  m.blank = 1;
  m.init = 0;
  m.halt = 1;
  m.delta.resize(2 * m.n_tuples());
  for (long long c = 0; c < m.n_tuples(); ++c) {
    auto syms = m.decode(c);
    m.delta[c] = Transition{1, syms, std::vector<int>(K, S)};
  }
  return m;
}

// Moves right forever.
inline tmc::TuringMachine runaway_machine() {
  using namespace tmc;
  TuringMachine m = one_step_machine(1);
  for (long long c = 0; c < m.n_tuples(); ++c) m.delta[c] = Transition{0, {1}, {R}};
  return m;
}

// Two tapes: copies the input to tape 2 and halts at the first blank.
inline tmc::TuringMachine copy_machine() {
  using namespace tmc;
  TuringMachine m;
  m.tapes = 2;
  m.states = {"copy", "halt"};
  m.tape_alphabet = {"0", "1", "_"};
  m.input_symbols = {0, 1};
  m.blank = 2;
  m.init = 0;
  m.halt = 1;
  m.delta.assign(2 * 9, Transition{1, {2, 2}, {S, S}});
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      std::vector<int> s{a, b};
      if (a != 2) m.step(0, s) = Transition{0, {a, a}, {R, R}};
      else m.step(0, s) = Transition{1, {a, b}, {S, L}};
    }
  return m;
}

}  // namespace fixtures

#endif
