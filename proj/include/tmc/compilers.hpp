#ifndef TMC_COMPILERS_HPP
#define TMC_COMPILERS_HPP

#include "compile_dfa.hpp"
#include "compile_rope.hpp"
#include "compile_tm.hpp"

#endif  // TMC_COMPILERS_HPP
