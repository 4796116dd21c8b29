#pragma once

// Truncated formal power series with a fixed coefficient cap.  Arithmetic is
// closed under the cap; the cap of an expression is the smaller of its
// operands' caps, so mixing truncation orders degrades gracefully instead of
// inventing coefficients.

#include <cstddef>
#include <string>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/rational.hpp"

namespace treechain {

template <typename S>
class PowerSeries {
 public:
  PowerSeries() : coeff_(1, scalar_traits<S>::zero()) {}
  explicit PowerSeries(std::vector<S> coeff) : coeff_(std::move(coeff)) {
    if (coeff_.empty()) coeff_.push_back(scalar_traits<S>::zero());
  }

  static PowerSeries constant(const S& value, std::size_t cap) {
    std::vector<S> c(cap + 1, scalar_traits<S>::zero());
    c[0] = value;
    return PowerSeries(std::move(c));
  }
  static PowerSeries zero(std::size_t cap) { return constant(scalar_traits<S>::zero(), cap); }
  static PowerSeries one(std::size_t cap) { return constant(scalar_traits<S>::one(), cap); }
  // value * x^degree
  static PowerSeries monomial(const S& value, std::size_t degree, std::size_t cap) {
    std::vector<S> c(cap + 1, scalar_traits<S>::zero());
    if (degree <= cap) c[degree] = value;
    return PowerSeries(std::move(c));
  }

  std::size_t cap() const { return coeff_.size() - 1; }
  const std::vector<S>& coefficients() const { return coeff_; }
  const S& operator[](std::size_t k) const { return coeff_[k]; }
  S& operator[](std::size_t k) { return coeff_[k]; }

  bool is_zero() const {
    for (const S& c : coeff_)
      if (!scalar_traits<S>::is_zero(c)) return false;
    return true;
  }

  S evaluate(const S& x) const {
    S acc = scalar_traits<S>::zero();
    for (std::size_t k = coeff_.size(); k-- > 0;) acc = acc * x + coeff_[k];
    return acc;
  }

  friend PowerSeries operator+(const PowerSeries& a, const PowerSeries& b) {
    std::size_t cap = std::min(a.cap(), b.cap());
    PowerSeries out = zero(cap);
    for (std::size_t k = 0; k <= cap; ++k) out.coeff_[k] = a.coeff_[k] + b.coeff_[k];
    return out;
  }
  friend PowerSeries operator-(const PowerSeries& a, const PowerSeries& b) {
    std::size_t cap = std::min(a.cap(), b.cap());
    PowerSeries out = zero(cap);
    for (std::size_t k = 0; k <= cap; ++k) out.coeff_[k] = a.coeff_[k] - b.coeff_[k];
    return out;
  }
  friend PowerSeries operator-(const PowerSeries& a) {
    PowerSeries out = a;
    for (S& c : out.coeff_) c = -c;
    return out;
  }
  friend PowerSeries operator*(const PowerSeries& a, const PowerSeries& b) {
    std::size_t cap = std::min(a.cap(), b.cap());
    PowerSeries out = zero(cap);
    for (std::size_t i = 0; i <= cap; ++i) {
      if (scalar_traits<S>::is_zero(a.coeff_[i])) continue;
      for (std::size_t j = 0; i + j <= cap; ++j)
        out.coeff_[i + j] += a.coeff_[i] * b.coeff_[j];
    }
    return out;
  }

  // 1 / this, defined when the constant term is nonzero.
  PowerSeries reciprocal() const {
    if (scalar_traits<S>::is_zero(coeff_[0]))
      throw DomainError("series_not_invertible",
                        "power series with zero constant term has no reciprocal");
    PowerSeries out = zero(cap());
    out.coeff_[0] = scalar_traits<S>::one() / coeff_[0];
    for (std::size_t n = 1; n <= cap(); ++n) {
      S acc = scalar_traits<S>::zero();
      for (std::size_t k = 1; k <= n; ++k) acc += coeff_[k] * out.coeff_[n - k];
      out.coeff_[n] = -acc / coeff_[0];
    }
    return out;
  }

  friend PowerSeries operator/(const PowerSeries& a, const PowerSeries& b) {
    std::size_t cap = std::min(a.cap(), b.cap());
    PowerSeries bb = b;
    bb.coeff_.resize(cap + 1, scalar_traits<S>::zero());
    PowerSeries aa = a;
    aa.coeff_.resize(cap + 1, scalar_traits<S>::zero());
    return aa * bb.reciprocal();
  }

  PowerSeries& operator+=(const PowerSeries& b) { return *this = *this + b; }
  PowerSeries& operator-=(const PowerSeries& b) { return *this = *this - b; }
  PowerSeries& operator*=(const PowerSeries& b) { return *this = *this * b; }
  PowerSeries& operator/=(const PowerSeries& b) { return *this = *this / b; }

  friend bool operator==(const PowerSeries& a, const PowerSeries& b) {
    return a.coeff_ == b.coeff_;
  }

  std::string str() const {
    std::string out;
    for (std::size_t k = 0; k < coeff_.size(); ++k) {
      if (k) out += ", ";
      out += scalar_traits<S>::str(coeff_[k]);
    }
    return "[" + out + "]";
  }

 private:
  std::vector<S> coeff_;
};

}  // namespace treechain
