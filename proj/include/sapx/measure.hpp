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

// Finitely supported measures on a group with sparse convolution.
//
// Convention: (f*g)(x) = sum_y f(y) g(x y^{-1}), so mass f(y)g(z) lands on z*y
// and delta_a * delta_b = delta_{ba}.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "sapx/integral.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

inline constexpr std::size_t kDefaultSupportCap = 10'000'000;

inline std::size_t element_hash(const SL2Residue& x) { return SL2Hash{}(x); }
inline std::size_t element_hash(const PairElement& x) { return PairHash{}(x); }
inline std::size_t element_hash(const RatPair& x) {
  std::size_t h = 0;
  for (const auto* m : {&x.left, &x.right}) {
    for (const auto* e : {&m->a, &m->b, &m->c, &m->d}) {
      h ^= std::hash<std::string>{}(rational_to_string(*e)) + 0x9E3779B97F4A7C15ULL + (h << 6) +
           (h >> 2);
    }
  }
  return h;
}

struct ElementHash {
  template <class E>
  std::size_t operator()(const E& x) const {
    return element_hash(x);
  }
};

/// Weights are BigRational (exact mode) or double (floating mode); the mode is
/// fixed by the type so the two never mix.
template <class E, class W>
class SparseMeasure {
 public:
  static constexpr bool kExact = std::is_same_v<W, BigRational>;
  static_assert(kExact || std::is_same_v<W, double>, "weights are BigRational or double");

  using Entry = std::pair<E, W>;

  SparseMeasure() = default;

  /// Takes raw (element, weight) entries; merges duplicates and drops zeros.
  static SparseMeasure from_entries(std::vector<Entry> entries) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& x, const Entry& y) { return x.first < y.first; });
    SparseMeasure m;
    for (auto& e : entries) {
      if (!m.entries_.empty() && m.entries_.back().first == e.first) {
        m.entries_.back().second += e.second;
      } else {
        m.entries_.push_back(std::move(e));
      }
    }
    std::erase_if(m.entries_, [](const Entry& e) { return e.second == W(0); });
    return m;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t support_size() const { return entries_.size(); }

  W total_mass() const {
    W s(0);
    for (const auto& e : entries_) s += e.second;
    return s;
  }

  W operator()(const E& x) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), x,
                               [](const Entry& e, const E& k) { return e.first < k; });
    if (it != entries_.end() && it->first == x) return it->second;
    return W(0);
  }

  friend bool operator==(const SparseMeasure&, const SparseMeasure&) = default;

 private:
  std::vector<Entry> entries_;
};

template <class E, class W = BigRational>
SparseMeasure<E, W> uniform_on(const std::vector<E>& S) {
  if (S.empty()) throw std::invalid_argument("uniform_on: empty set");
  std::vector<std::pair<E, W>> entries;
  entries.reserve(S.size());
  W w;
  if constexpr (std::is_same_v<W, BigRational>) {
    w = BigRational(1, static_cast<long long>(S.size()));
  } else {
    w = 1.0 / static_cast<double>(S.size());
  }
  for (const auto& x : S) entries.emplace_back(x, w);
  return SparseMeasure<E, W>::from_entries(std::move(entries));
}

template <class E, class W = BigRational>
SparseMeasure<E, W> delta(const E& x) {
  return SparseMeasure<E, W>::from_entries({{x, W(1)}});
}

namespace detail {

inline void check_compatible(const SL2Residue& x, const SL2Residue& y) {
  if (x.q != y.q) throw std::invalid_argument("modulus mismatch in convolution");
}
inline void check_compatible(const PairElement& x, const PairElement& y) {
  if (x.left.q != y.left.q || x.right.q != y.right.q) {
    throw std::invalid_argument("modulus mismatch in convolution");
  }
}
template <class E>
void check_compatible(const E&, const E&) {}

// Common denominator of exact weights and the numerators over it.
template <class E>
std::pair<BigInt, std::vector<BigInt>> over_common_denominator(
    const SparseMeasure<E, BigRational>& f) {
  BigInt D = 1;
  for (const auto& e : f.entries()) {
    BigInt den = boost::multiprecision::denominator(e.second);
    D = D / boost::multiprecision::gcd(D, den) * den;
  }
  std::vector<BigInt> nums;
  nums.reserve(f.support_size());
  for (const auto& e : f.entries()) {
    nums.push_back(boost::multiprecision::numerator(e.second) * (D / boost::multiprecision::denominator(e.second)));
  }
  return {D, std::move(nums)};
}

}  // namespace detail

template <class E, class W>
SparseMeasure<E, W> convolve(const SparseMeasure<E, W>& f, const SparseMeasure<E, W>& g,
                             std::size_t cap = kDefaultSupportCap) {
  if (f.support_size() == 0 || g.support_size() == 0) return {};
  detail::check_compatible(f.entries().front().first, g.entries().front().first);

  std::vector<std::pair<E, W>> out;
  if constexpr (SparseMeasure<E, W>::kExact) {
    auto [Df, nf] = detail::over_common_denominator(f);
    auto [Dg, ng] = detail::over_common_denominator(g);
    const BigInt D = Df * Dg;
    // Every bucket sum is at most D = Df * Dg, so 128-bit accumulation is exact
    // once both denominators fit in 64 bits.
    const bool narrow =
        boost::multiprecision::msb(Df) < 64 && boost::multiprecision::msb(Dg) < 64;
    std::unordered_map<E, u128, ElementHash> acc_narrow;
    std::unordered_map<E, BigInt, ElementHash> acc_wide;
    std::vector<u128> nf128, ng128;
    if (narrow) {
      for (const auto& v : nf) nf128.push_back(static_cast<u128>(v.template convert_to<u64>()));
      for (const auto& v : ng) ng128.push_back(static_cast<u128>(v.template convert_to<u64>()));
    }
    for (std::size_t i = 0; i < f.support_size(); ++i) {
      const E& y = f.entries()[i].first;
      for (std::size_t j = 0; j < g.support_size(); ++j) {
        E x = g.entries()[j].first * y;
        if (narrow) {
          acc_narrow[x] += nf128[i] * ng128[j];
        } else {
          acc_wide[x] += nf[i] * ng[j];
        }
      }
      if (acc_narrow.size() + acc_wide.size() > cap) {
        throw std::length_error("convolution support exceeds cap");
      }
    }
    if (narrow) {
      for (auto& [x, v] : acc_narrow) {
        BigInt hi = static_cast<u64>(v >> 64), lo = static_cast<u64>(v);
        out.emplace_back(x, BigRational((hi << 64) + lo, D));
      }
    } else {
      for (auto& [x, v] : acc_wide) out.emplace_back(x, BigRational(v, D));
    }
  } else {
    std::unordered_map<E, double, ElementHash> acc;
    for (const auto& [y, wy] : f.entries()) {
      for (const auto& [z, wz] : g.entries()) acc[z * y] += wy * wz;
      if (acc.size() > cap) throw std::length_error("convolution support exceeds cap");
    }
    out.assign(acc.begin(), acc.end());
    // Summation order inside a bucket follows (f, g) order, so results are deterministic.
  }
  return SparseMeasure<E, W>::from_entries(std::move(out));
}

/// f^(l) by binary powering.
template <class E, class W>
SparseMeasure<E, W> convolve_power(const SparseMeasure<E, W>& f, unsigned l,
                                   std::size_t cap = kDefaultSupportCap) {
  if (l == 0) throw std::invalid_argument("convolve_power: l must be at least 1");
  SparseMeasure<E, W> result, base = f;
  bool have = false;
  while (l > 0) {
    if (l & 1) {
      result = have ? convolve(result, base, cap) : base;
      have = true;
    }
    l >>= 1;
    if (l > 0) base = convolve(base, base, cap);
  }
  return result;
}

/// Weights summed over the fibers of an arbitrary map.
template <class E, class W, class Map>
auto pushforward(const SparseMeasure<E, W>& f, Map&& map) {
  using E2 = std::decay_t<decltype(map(f.entries().front().first))>;
  std::vector<std::pair<E2, W>> out;
  out.reserve(f.support_size());
  for (const auto& [x, w] : f.entries()) out.emplace_back(map(x), w);
  return SparseMeasure<E2, W>::from_entries(std::move(out));
}

template <class W>
SparseMeasure<SL2Residue, W> pushforward(const SparseMeasure<SL2Residue, W>& f, u64 q_target) {
  return pushforward(f, [q_target](const SL2Residue& x) { return reduce(x, q_target); });
}

template <class W>
SparseMeasure<PairElement, W> pushforward(const SparseMeasure<PairElement, W>& f, u64 q1,
                                          u64 q2) {
  return pushforward(f, [q1, q2](const PairElement& x) { return reduce(x, q1, q2); });
}

/// From the integral (rational) group to its finite quotient.
template <class W>
SparseMeasure<PairElement, W> pushforward(const SparseMeasure<RatPair, W>& f, u64 q1, u64 q2) {
  return pushforward(f, [q1, q2](const RatPair& x) { return reduce(x, q1, q2); });
}

template <class E, class W, class Pred>
W mass_on(const SparseMeasure<E, W>& f, Pred&& pred) {
  W s(0);
  for (const auto& [x, w] : f.entries()) {
    if (pred(x)) s += w;
  }
  return s;
}

/// ||f - u||_2 with u uniform on a group of order N containing the support.
template <class E, class W>
double l2_to_uniform(const SparseMeasure<E, W>& f, u64 N) {
  double s = 0;
  for (const auto& [x, w] : f.entries()) {
    double v;
    if constexpr (std::is_same_v<W, BigRational>) {
      v = w.template convert_to<double>();
    } else {
      v = w;
    }
    s += v * v;
  }
  return std::sqrt(std::max(0.0, s - 1.0 / static_cast<double>(N)));
}

/// Exact version of ||f - u||_2^2.
template <class E>
BigRational l2_squared_to_uniform(const SparseMeasure<E, BigRational>& f, u64 N) {
  BigRational s(0);
  for (const auto& [x, w] : f.entries()) s += w * w;
  return s - BigRational(1, static_cast<long long>(N));
}

inline std::string weight_string(const BigRational& w) { return rational_to_string(w); }
inline std::string weight_string(double w) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", w);
  return buf;
}

template <class E, class W>
nlohmann::json to_json(const SparseMeasure<E, W>& f) {
  nlohmann::json out = nlohmann::json::object();
  out["mode"] = SparseMeasure<E, W>::kExact ? "exact" : "floating";
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [x, w] : f.entries()) {
    entries.push_back({{"element", to_string(x)}, {"weight", weight_string(w)}});
  }
  out["entries"] = std::move(entries);
  return out;
}

}  // namespace sapx
