#pragma once

// Scalar layer. Every algorithm in the library is templated on a scalar S
// that is either BigRational (exact arbitrary-precision arithmetic) or
// double (binary64). scalar_traits<S> is the small bridge the templates use
// to construct values and to decide exactness-dependent behaviour
// (fraction-free elimination vs partial pivoting, zero tests vs tolerances).

#include <boost/multiprecision/cpp_int.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>

#include "treechain/errors.hpp"

namespace treechain {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

// Parses "num", "-num" or "num/den" (den > 0 after sign normalization).
inline BigRational parse_rational(const std::string& text) {
  auto bad = [&] { return UsageError("bad_rational", "not a rational: '" + text + "'"); };
  if (text.empty()) throw bad();
  std::size_t slash = text.find('/');
  try {
    if (slash == std::string::npos) return BigRational(BigInt(text));
    BigInt num(text.substr(0, slash));
    BigInt den(text.substr(slash + 1));
    if (den == 0) throw bad();
    return BigRational(num, den);
  } catch (const std::exception&) {
    throw bad();
  }
}

inline std::string to_string(const BigRational& q) {
  if (denominator(q) == 1) return numerator(q).str();
  return numerator(q).str() + "/" + denominator(q).str();
}

// Shortest round-trip decimal for binary64.
inline std::string to_string(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

template <class S>
struct scalar_traits;

template <>
struct scalar_traits<BigRational> {
  static constexpr bool is_exact = true;
  static BigRational zero() { return BigRational(0); }
  static BigRational one() { return BigRational(1); }
  static BigRational from_int(long long n) { return BigRational(n); }
  static BigRational from_ratio(const BigRational& q) { return q; }
  static BigRational from_ratio(long long num, long long den) {
    return BigRational(num) / BigRational(den);
  }
  static double to_double(const BigRational& q) {
    return static_cast<double>(q);
  }
  static bool is_zero(const BigRational& q) { return q == 0; }
  static BigRational abs(const BigRational& q) { return q < 0 ? BigRational(-q) : q; }
  static std::string str(const BigRational& q) { return treechain::to_string(q); }
};

template <>
struct scalar_traits<double> {
  static constexpr bool is_exact = false;
  static double zero() { return 0.0; }
  static double one() { return 1.0; }
  static double from_int(long long n) { return static_cast<double>(n); }
  static double from_ratio(const BigRational& q) { return static_cast<double>(q); }
  static double from_ratio(long long num, long long den) {
    return static_cast<double>(num) / static_cast<double>(den);
  }
  static double to_double(double x) { return x; }
  static bool is_zero(double x) { return x == 0.0; }
  static double abs(double x) { return std::fabs(x); }
  static std::string str(double x) { return treechain::to_string(x); }
};

// Integer power by repeated squaring; exponent may be negative for fields.
template <class S>
S scalar_pow(S base, long long e) {
  if (e < 0) return scalar_traits<S>::one() / scalar_pow(base, -e);
  S acc = scalar_traits<S>::one();
  while (e > 0) {
    if (e & 1) acc = acc * base;
    base = base * base;
    e >>= 1;
  }
  return acc;
}

}  // namespace treechain
