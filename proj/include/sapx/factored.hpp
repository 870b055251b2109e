// Copyright 2026 The sapx Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Integers carried together with their prime factorization, and the divisor
// algebra built on top of them (exact divisors, fractional-power moduli,
// splitting by exponent threshold).

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/rational.hpp>

namespace sapx {

using u64 = std::uint64_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;
using i128 = __int128;

/// Exact nonnegative rational used for exponents such as alpha in q^{alpha}.
using Rational = boost::rational<i64>;

// ---------------------------------------------------------------------------
// Modular helpers. All take residues already reduced into [0, m).

inline u64 mod_add(u64 a, u64 b, u64 m) {
  u128 s = static_cast<u128>(a) + b;
  return static_cast<u64>(s % m);
}

inline u64 mod_sub(u64 a, u64 b, u64 m) {
  return a >= b ? (a - b) % m : static_cast<u64>((static_cast<u128>(a) + m - b) % m);
}

inline u64 mod_mul(u64 a, u64 b, u64 m) {
  return static_cast<u64>(static_cast<u128>(a) * b % m);
}

inline u64 mod_neg(u64 a, u64 m) { return a == 0 ? 0 : m - a; }

/// Reduces a signed integer into [0, m).
inline u64 mod_reduce(i128 x, u64 m) {
  i128 r = x % static_cast<i128>(m);
  if (r < 0) r += m;
  return static_cast<u64>(r);
}

inline u64 mod_pow(u64 base, u64 exp, u64 m) {
  u64 result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = mod_mul(result, base, m);
    base = mod_mul(base, base, m);
    exp >>= 1;
  }
  return result;
}

inline u64 gcd_u64(u64 a, u64 b) {
  while (b != 0) {
    u64 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

/// Multiplicative inverse of a modulo m, if gcd(a, m) = 1.
inline std::optional<u64> mod_inverse(u64 a, u64 m) {
  if (m == 1) return 0;
  i128 old_r = static_cast<i128>(a % m), r = m;
  i128 old_s = 1, s = 0;
  while (r != 0) {
    i128 quot = old_r / r;
    i128 tmp = old_r - quot * r;
    old_r = r;
    r = tmp;
    tmp = old_s - quot * s;
    old_s = s;
    s = tmp;
  }
  if (old_r != 1) return std::nullopt;
  return mod_reduce(old_s, m);
}

/// p-adic valuation of a residue modulo p^n, capped at n (so 0 has valuation n).
inline unsigned valuation_mod_prime_power(u64 r, u64 p, unsigned n) {
  unsigned v = 0;
  while (v < n && r % p == 0) {
    if (r == 0) return n;
    r /= p;
    ++v;
  }
  return v;
}

/// p^e, throwing std::overflow_error past 64 bits.
inline u64 checked_pow(u64 p, unsigned e) {
  u64 r = 1;
  for (unsigned i = 0; i < e; ++i) {
    if (r > std::numeric_limits<u64>::max() / p) {
      throw std::overflow_error("prime power exceeds 64 bits");
    }
    r *= p;
  }
  return r;
}

// ---------------------------------------------------------------------------

struct PrimePower {
  u64 prime = 2;
  unsigned exponent = 1;

  u64 value() const { return checked_pow(prime, exponent); }
  friend auto operator<=>(const PrimePower&, const PrimePower&) = default;
};

class FactoredModulus {
 public:
  FactoredModulus() = default;

  /// Factorizes by trial division. Throws std::invalid_argument for 0.
  explicit FactoredModulus(u64 value) : value_(value) {
    if (value == 0) throw std::invalid_argument("modulus must be positive");
    u64 n = value;
    for (u64 p = 2; p <= n / p; p += (p == 2 ? 1 : 2)) {
      if (n % p != 0) continue;
      unsigned e = 0;
      while (n % p == 0) {
        n /= p;
        ++e;
      }
      factors_.push_back({p, e});
    }
    if (n > 1) factors_.push_back({n, 1});
  }

  /// Builds from an explicit factorization; primes must be strictly increasing
  /// with positive exponents. Primality of the entries is checked.
  static FactoredModulus from_factors(std::vector<PrimePower> factors) {
    FactoredModulus m;
    u64 v = 1;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      const auto& f = factors[i];
      if (f.exponent == 0) throw std::invalid_argument("zero exponent");
      if (i > 0 && factors[i - 1].prime >= f.prime) {
        throw std::invalid_argument("primes must be strictly increasing");
      }
      if (FactoredModulus(f.prime).factors_.size() != 1 ||
          FactoredModulus(f.prime).factors_[0].exponent != 1) {
        throw std::invalid_argument("factor is not prime: " + std::to_string(f.prime));
      }
      u64 pv = f.value();
      if (v > std::numeric_limits<u64>::max() / pv) {
        throw std::overflow_error("modulus exceeds 64 bits");
      }
      v *= pv;
    }
    m.value_ = v;
    m.factors_ = std::move(factors);
    return m;
  }

  u64 value() const { return value_; }
  const std::vector<PrimePower>& factors() const { return factors_; }
  bool is_one() const { return value_ == 1; }

  /// Exponent n with p^n || value (0 when p does not divide).
  unsigned exponent_of(u64 p) const {
    for (const auto& f : factors_) {
      if (f.prime == p) return f.exponent;
    }
    return 0;
  }

  std::vector<u64> primes() const {
    std::vector<u64> out;
    out.reserve(factors_.size());
    for (const auto& f : factors_) out.push_back(f.prime);
    return out;
  }

  std::string to_string() const { return std::to_string(value_); }

  friend bool operator==(const FactoredModulus& a, const FactoredModulus& b) {
    return a.value_ == b.value_;
  }
  friend auto operator<=>(const FactoredModulus& a, const FactoredModulus& b) {
    return a.value_ <=> b.value_;
  }

 private:
  u64 value_ = 1;
  std::vector<PrimePower> factors_;
};

inline bool divides(u64 a, u64 b) { return a != 0 && b % a == 0; }

/// True iff p^n || a implies p^n || b for every prime p dividing a.
inline bool exact_divides(const FactoredModulus& a, const FactoredModulus& b) {
  for (const auto& f : a.factors()) {
    if (b.exponent_of(f.prime) != f.exponent) return false;
  }
  return true;
}

/// q^{alpha} = prod p_i^{floor(n_i * alpha)} with exact rational arithmetic.
inline FactoredModulus frac_power(const FactoredModulus& q, const Rational& alpha) {
  if (alpha < 0) throw std::invalid_argument("alpha must be nonnegative");
  std::vector<PrimePower> out;
  for (const auto& f : q.factors()) {
    i128 e = static_cast<i128>(f.exponent) * alpha.numerator() / alpha.denominator();
    if (e > 0) out.push_back({f.prime, static_cast<unsigned>(e)});
  }
  return FactoredModulus::from_factors(std::move(out));
}

/// Splits q = q_s * q_l where q_s keeps the prime powers with exponent <= L.
inline std::pair<FactoredModulus, FactoredModulus> split_by_exponent(const FactoredModulus& q,
                                                                     unsigned L) {
  std::vector<PrimePower> small, large;
  for (const auto& f : q.factors()) (f.exponent <= L ? small : large).push_back(f);
  return {FactoredModulus::from_factors(std::move(small)),
          FactoredModulus::from_factors(std::move(large))};
}

inline FactoredModulus radical(const FactoredModulus& q) {
  std::vector<PrimePower> out;
  for (const auto& f : q.factors()) out.push_back({f.prime, 1});
  return FactoredModulus::from_factors(std::move(out));
}

namespace detail {

template <class Pick>
FactoredModulus merge_factors(const FactoredModulus& a, const FactoredModulus& b, Pick pick) {
  std::vector<PrimePower> out;
  const auto& fa = a.factors();
  const auto& fb = b.factors();
  std::size_t i = 0, j = 0;
  while (i < fa.size() || j < fb.size()) {
    u64 p;
    unsigned ea = 0, eb = 0;
    if (j == fb.size() || (i < fa.size() && fa[i].prime < fb[j].prime)) {
      p = fa[i].prime;
      ea = fa[i++].exponent;
    } else if (i == fa.size() || fb[j].prime < fa[i].prime) {
      p = fb[j].prime;
      eb = fb[j++].exponent;
    } else {
      p = fa[i].prime;
      ea = fa[i++].exponent;
      eb = fb[j++].exponent;
    }
    unsigned e = pick(ea, eb);
    if (e > 0) out.push_back({p, e});
  }
  return FactoredModulus::from_factors(std::move(out));
}

}  // namespace detail

inline FactoredModulus gcd(const FactoredModulus& a, const FactoredModulus& b) {
  return detail::merge_factors(a, b, [](unsigned x, unsigned y) { return std::min(x, y); });
}

inline FactoredModulus lcm(const FactoredModulus& a, const FactoredModulus& b) {
  return detail::merge_factors(a, b, [](unsigned x, unsigned y) { return std::max(x, y); });
}

/// a / b for b | a, keeping the factorization.
inline FactoredModulus quotient(const FactoredModulus& a, const FactoredModulus& b) {
  if (!divides(b.value(), a.value())) throw std::invalid_argument("quotient: b does not divide a");
  return detail::merge_factors(a, b, [](unsigned x, unsigned y) { return x - y; });
}

inline FactoredModulus product(const FactoredModulus& a, const FactoredModulus& b) {
  return detail::merge_factors(a, b, [](unsigned x, unsigned y) { return x + y; });
}

/// All divisors of q in increasing order.
inline std::vector<FactoredModulus> divisors(const FactoredModulus& q) {
  std::vector<std::vector<PrimePower>> acc{{}};
  for (const auto& f : q.factors()) {
    std::vector<std::vector<PrimePower>> next;
    for (const auto& partial : acc) {
      next.push_back(partial);
      for (unsigned e = 1; e <= f.exponent; ++e) {
        auto extended = partial;
        extended.push_back({f.prime, e});
        next.push_back(std::move(extended));
      }
    }
    acc = std::move(next);
  }
  std::vector<FactoredModulus> out;
  out.reserve(acc.size());
  for (auto& fs : acc) out.push_back(FactoredModulus::from_factors(std::move(fs)));
  std::sort(out.begin(), out.end());
  return out;
}

/// Divisors d with d || q, in increasing order (2^k of them for k primes).
inline std::vector<FactoredModulus> exact_divisors(const FactoredModulus& q) {
  const auto& fs = q.factors();
  std::vector<FactoredModulus> out;
  const std::size_t k = fs.size();
  for (u64 mask = 0; mask < (u64{1} << k); ++mask) {
    std::vector<PrimePower> pick;
    for (std::size_t i = 0; i < k; ++i) {
      if (mask >> i & 1) pick.push_back(fs[i]);
    }
    out.push_back(FactoredModulus::from_factors(std::move(pick)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Order of SL_2(Z/qZ): q^3 prod_{p|q} (1 - p^-2).
inline u64 sl2_order(const FactoredModulus& q) {
  u64 order = 1;
  for (const auto& f : q.factors()) {
    u64 part = checked_pow(f.prime, 3 * f.exponent - 2);
    u64 factor = f.prime * f.prime - 1;
    if (part > std::numeric_limits<u64>::max() / factor ||
        order > std::numeric_limits<u64>::max() / (part * factor)) {
      throw std::overflow_error("group order exceeds 64 bits");
    }
    order *= part * factor;
  }
  return order;
}

/// Order of the congruence quotient Lambda(q_sub)/Lambda(q) for q_sub | q.
inline u64 congruence_quotient_order(const FactoredModulus& q, const FactoredModulus& q_sub) {
  if (!divides(q_sub.value(), q.value())) {
    throw std::invalid_argument("congruence level must divide the modulus");
  }
  u64 order = 1;
  for (const auto& f : q.factors()) {
    unsigned m = q_sub.exponent_of(f.prime);
    if (m == 0) {
      order *= sl2_order(FactoredModulus::from_factors({f}));
    } else {
      order *= checked_pow(f.prime, 3 * (f.exponent - m));
    }
  }
  return order;
}

}  // namespace sapx
