#ifndef TMC_FPCORE_HPP
#define TMC_FPCORE_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

namespace tmc {

// Finite binary float set with b_m mantissa bits and b_e exponent bits.
// No infinities, no NaNs.
struct FloatFormat {
  int mantissa_bits = 7;
  int exponent_bits = 8;

  int e_min() const { return 2 - (1 << (exponent_bits - 1)); }
  int e_max() const { return (1 << (exponent_bits - 1)) - 1; }

  bool operator==(const FloatFormat&) const = default;
};

inline void validate(const FloatFormat& f) {
  if (f.mantissa_bits < 1 || f.mantissa_bits > 52)
    throw std::invalid_argument("mantissa_bits must be in [1,52]");
  if (f.exponent_bits < 2 || f.exponent_bits > 11)
    throw std::invalid_argument("exponent_bits must be in [2,11]");
}

struct NormalRange {
  double min_normal;
  double max_value;
};

inline NormalRange normal_range(const FloatFormat& f) {
  double maxv = std::ldexp(2.0 - std::ldexp(1.0, -f.mantissa_bits), f.e_max());
  return {std::ldexp(1.0, f.e_min()), maxv};
}

// Round to the nearest element of the format, ties to even, saturating at
// +-max_value. `saturated` is set when the magnitude exceeded max_value.
inline double round_nearest(double x, const FloatFormat& f, bool* saturated = nullptr) {
  if (saturated) *saturated = false;
  if (x == 0.0 || !std::isfinite(x)) {
    if (!std::isfinite(x)) {
      if (saturated) *saturated = true;
      double m = normal_range(f).max_value;
      return x > 0 ? m : -m;
    }
    return 0.0;
  }
  double a = std::fabs(x);
  int ex;
  std::frexp(a, &ex);
  int e = ex - 1;  // a in [2^e, 2^{e+1})
  if (e < f.e_min()) e = f.e_min();
  int shift = e - f.mantissa_bits;
  double q = std::ldexp(a, -shift);
  double rq = std::nearbyint(q);  // default mode: nearest, ties to even
  double res = std::ldexp(rq, shift);
  double maxv = normal_range(f).max_value;
  if (res > maxv) {
    if (saturated) *saturated = true;
    res = maxv;
  }
  return std::signbit(x) ? -res : res;
}

inline bool is_representable(double x, const FloatFormat& f) {
  bool sat = false;
  return round_nearest(x, f, &sat) == x && !sat;
}

struct Exact {
  bool operator==(const Exact&) const = default;
};

// Either real arithmetic (wide float) or a finite format.
struct Precision {
  std::variant<Exact, FloatFormat> v;

  Precision() : v(Exact{}) {}
  Precision(FloatFormat f) : v(f) {}
  Precision(Exact e) : v(e) {}

  bool exact() const { return std::holds_alternative<Exact>(v); }
  const FloatFormat& format() const { return std::get<FloatFormat>(v); }
  double round(double x) const { return exact() ? x : round_nearest(x, format()); }
  bool operator==(const Precision&) const = default;
};

namespace formats {
inline constexpr FloatFormat bf16{7, 8};
inline constexpr FloatFormat fp16{10, 5};
inline constexpr FloatFormat fp32{23, 8};
inline constexpr FloatFormat fp64{52, 11};
}  // namespace formats

// "bf16", "fp16", "fp32", "fp64", "custom:<b_m>,<b_e>", "exact"
inline Precision parse_precision(const std::string& s) {
  if (s == "exact") return Exact{};
  if (s == "bf16") return formats::bf16;
  if (s == "fp16") return formats::fp16;
  if (s == "fp32") return formats::fp32;
  if (s == "fp64") return formats::fp64;
  const std::string pre = "custom:";
  if (s.rfind(pre, 0) == 0) {
    auto rest = s.substr(pre.size());
    auto comma = rest.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("bad format: " + s);
    FloatFormat f;
    try {
      size_t p1 = 0, p2 = 0;
      f.mantissa_bits = std::stoi(rest.substr(0, comma), &p1);
      f.exponent_bits = std::stoi(rest.substr(comma + 1), &p2);
      if (p1 != comma || p2 != rest.size() - comma - 1) throw std::invalid_argument("");
    } catch (...) {
      throw std::invalid_argument("bad format: " + s);
    }
    validate(f);
    return f;
  }
  throw std::invalid_argument("unknown format: " + s);
}

inline std::string to_string(const Precision& p) {
  if (p.exact()) return "exact";
  const auto& f = p.format();
  if (f == formats::bf16) return "bf16";
  if (f == formats::fp16) return "fp16";
  if (f == formats::fp32) return "fp32";
  if (f == formats::fp64) return "fp64";
  return "custom:" + std::to_string(f.mantissa_bits) + "," + std::to_string(f.exponent_bits);
}

}  // namespace tmc

#endif  // TMC_FPCORE_HPP
