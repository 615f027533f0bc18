#ifndef TMC_SOFTMAXIFY_HPP
#define TMC_SOFTMAXIFY_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fpcore.hpp"
#include "gadgets.hpp"
#include "netcore.hpp"

namespace tmc {

enum class ConversionMode { ScaledOnly, Denoised };

struct ConversionSpec {
  double c = 1;
  ConversionMode mode = ConversionMode::ScaledOnly;
  Precision act, att;
  long long N = 1;
};

inline void check(const ConversionSpec& s) {
  if (!(s.c > 0)) throw std::invalid_argument("c must be positive");
  if (s.mode == ConversionMode::Denoised && (s.att.exact() || s.att.format().mantissa_bits < 4))
    throw std::invalid_argument("denoised conversion needs a finite attention format with b_m >= 4");
}

inline TransformerParams scale_qk(TransformerParams p, double c) {
  if (!(c > 0)) throw std::invalid_argument("c must be positive");
  if (p.c != 1.0) throw std::invalid_argument("scale_qk expects an unscaled model");
  p.c = c;
  p.mode = "softmax-scaled";
  return p;
}

// (2 sqrt(d_k) ln((16/6) max{4d, 20 d_k} N (48 d d_ff + 12)^L))^(1/2)
inline double c0_exact_attention(double d, double d_ff, double d_k, double L, double N) {
  if (d < 1 || d_ff < 1 || d_k < 1 || L < 1 || N < 1) throw std::invalid_argument("c0: arguments must be >= 1");
  double lg = std::log(16.0 / 6.0) + std::log(std::max(4 * d, 20 * d_k)) + std::log(N) + L * std::log(48 * d * d_ff + 12);
  return std::sqrt(2 * std::sqrt(d_k) * lg);
}

// d_k^(1/4) (ln(96 N))^(1/2)
inline double c0_denoising(double d_k, double N) {
  if (d_k < 1 || N < 1) throw std::invalid_argument("c0: arguments must be >= 1");
  return std::pow(d_k, 0.25) * std::sqrt(std::log(96 * N));
}

inline int ceil_log2(long long n) {
  int k = 0;
  while ((1LL << k) < n) ++k;
  return k;
}

// Smallest b_e with E_min = 2 - 2^(b_e-1) <= -ceil(log2 N).
inline int min_att_exponent_bits(long long N) {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  const int need = ceil_log2(N);
  int be = 2;
  while (2 - (1LL << (be - 1)) > -need) ++be;
  return be;
}

// Smallest power of two >= x.
inline double next_pow2(double x) {
  if (!(x > 0)) throw std::invalid_argument("next_pow2: x must be positive");
  int e;
  double m = std::frexp(x, &e);  // x = m 2^e, m in [0.5, 1)
  return m == 0.5 ? x : std::ldexp(1.0, e);
}

// Smallest exponent width whose format holds c exactly (and at least `min_be`).
inline FloatFormat format_containing(double c, int mantissa_bits, int min_be = 2) {
  for (int be = min_be; be <= 11; ++be) {
    FloatFormat f{mantissa_bits, be};
    if (is_representable(c, f)) return f;
  }
  throw std::invalid_argument("no format holds c");
}

// Depth 2L: odd layers carry the scaled attention plus a denoising MLP over
// every coordinate, even layers carry the original MLP.
inline TransformerParams convert_with_denoising(const TransformerParams& p, double c) {
  if (!(c > 0)) throw std::invalid_argument("c must be positive");
  if (p.c != 1.0) throw std::invalid_argument("convert_with_denoising expects an unscaled model");
  TransformerParams q = p;
  Reg all(p.dims.d);
  for (int i = 0; i < p.dims.d; ++i) all[i] = i;
  const Neurons den = denoising_mlp(all);
  q.layers.clear();
  for (const auto& l : p.layers) {
    Layer a;
    a.heads = l.heads;
    a.mlp = den;
    Layer b;
    b.heads.assign(l.heads.size(), Head{});
    b.mlp = l.mlp;
    q.layers.push_back(std::move(a));
    q.layers.push_back(std::move(b));
  }
  q.dims.L = 2 * p.dims.L;
  q.dims.d_ff = std::max(p.dims.d_ff, 6 * p.dims.d);
  q.c = c;
  q.mode = "softmax-denoised";
  return q;
}

// ||softmax(s) - hardmax(s)||_1
inline double softmax_hardmax_l1(const std::vector<double>& s) {
  auto a = softmax_weights(s), b = hardmax_weights(s);
  double d = 0;
  for (size_t i = 0; i < s.size(); ++i) d += std::fabs(a[i] - b[i]);
  return d;
}

// Gap between the maximum and the largest non-maximal entry (inf if none).
inline double separation(const std::vector<double>& s, double tol = kTieTol) {
  double m = *std::max_element(s.begin(), s.end());
  double second = -INFINITY;
  for (double x : s)
    if (x < m - tol) second = std::max(second, x);
  return m - second;
}

}  // namespace tmc

#endif  // TMC_SOFTMAXIFY_HPP
