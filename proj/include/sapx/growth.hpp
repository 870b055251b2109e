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

// Product sets in SL_2(Z/q1) x SL_2(Z/q2): growth, bounded generation and
// congruence coverage.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sapx/factored.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

/// The ambient group SL_2(Z/q1) x SL_2(Z/q2) with elements numbered
/// i1 * |G2| + i2 by their positions in the sorted enumerations.
class PairGroup {
 public:
  static std::shared_ptr<const PairGroup> get(u64 q1, u64 q2, u64 cap = kDefaultEnumerationCap) {
    static std::mutex mu;
    static std::map<std::pair<u64, u64>, std::shared_ptr<const PairGroup>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({q1, q2});
    if (it != cache.end()) {
      if (it->second->order() > cap) throw std::length_error("group order exceeds cap");
      return it->second;
    }
    auto g = std::shared_ptr<const PairGroup>(new PairGroup(q1, q2, cap));
    cache[{q1, q2}] = g;
    return g;
  }

  u64 q1() const { return q1_; }
  u64 q2() const { return q2_; }
  u64 order() const { return left_.n * right_.n; }
  std::size_t side_order(int side) const { return side == 1 ? left_.n : right_.n; }

  u64 id(const PairElement& x) const {
    if (x.left.q != q1_ || x.right.q != q2_) throw std::invalid_argument("modulus mismatch");
    return left_.index(x.left) * right_.n + right_.index(x.right);
  }
  PairElement element(u64 id) const {
    return {left_.elems[id / right_.n], right_.elems[id % right_.n]};
  }
  u64 identity_id() const { return id(pair_identity(q1_, q2_)); }

  u64 mul(u64 x, u64 y) const {
    return left_.mul(x / right_.n, y / right_.n) * right_.n +
           right_.mul(x % right_.n, y % right_.n);
  }
  u64 inv(u64 x) const { return left_.inv[x / right_.n] * right_.n + right_.inv[x % right_.n]; }

 private:
  struct Side {
    u64 q = 1;
    std::size_t n = 0;
    std::vector<SL2Residue> elems;
    std::unordered_map<u64, u64> lookup;
    std::vector<u64> inv;
    std::vector<std::uint32_t> table;  // full multiplication table when small

    void build(u64 q_, u64 cap) {
      q = q_;
      elems = enumerate_group(FactoredModulus(q), cap);
      n = elems.size();
      lookup.reserve(2 * n);
      for (std::size_t i = 0; i < n; ++i) lookup[pack(elems[i])] = i;
      inv.resize(n);
      for (std::size_t i = 0; i < n; ++i) inv[i] = index(sapx::inverse(elems[i]));
      if (n <= 2500) {
        table.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            table[i * n + j] = static_cast<std::uint32_t>(index(elems[i] * elems[j]));
          }
        }
      }
    }
    u64 index(const SL2Residue& x) const { return lookup.at(pack(x)); }
    u64 mul(u64 i, u64 j) const {
      if (!table.empty()) return table[i * n + j];
      return index(elems[i] * elems[j]);
    }
  };

  PairGroup(u64 q1, u64 q2, u64 cap) : q1_(q1), q2_(q2) {
    if (q1 == 0 || q2 == 0 || q1 >= 65536 || q2 >= 65536) {
      throw std::invalid_argument("moduli must lie in [1, 65535]");
    }
    const u64 o = sl2_order(FactoredModulus(q1)) * sl2_order(FactoredModulus(q2));
    if (o > cap) throw std::length_error("group order exceeds cap");
    left_.build(q1, cap);
    right_.build(q2, cap);
  }

  u64 q1_, q2_;
  Side left_, right_;
};

/// Deduplicated set of pair elements sharing moduli (q1, q2).
class GroupSet {
 public:
  GroupSet() = default;
  GroupSet(std::shared_ptr<const PairGroup> g, std::vector<u64> ids) : g_(std::move(g)), ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }

  static GroupSet from_elements(const std::vector<PairElement>& xs, u64 q1, u64 q2,
                                u64 cap = kDefaultEnumerationCap) {
    auto g = PairGroup::get(q1, q2, cap);
    std::vector<u64> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) ids.push_back(g->id(x));
    return GroupSet(g, std::move(ids));
  }
  static GroupSet whole(u64 q1, u64 q2, u64 cap = kDefaultEnumerationCap) {
    auto g = PairGroup::get(q1, q2, cap);
    std::vector<u64> ids(g->order());
    for (u64 i = 0; i < ids.size(); ++i) ids[i] = i;
    return GroupSet(g, std::move(ids));
  }
  static GroupSet identity_set(u64 q1, u64 q2) {
    auto g = PairGroup::get(q1, q2);
    return GroupSet(g, {g->identity_id()});
  }

  const PairGroup& group() const { return *g_; }
  const std::shared_ptr<const PairGroup>& group_ptr() const { return g_; }
  u64 q1() const { return g_->q1(); }
  u64 q2() const { return g_->q2(); }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<u64>& ids() const { return ids_; }

  bool contains_id(u64 id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }
  bool contains(const PairElement& x) const { return contains_id(g_->id(x)); }

  std::vector<PairElement> elements() const {
    std::vector<PairElement> out;
    out.reserve(ids_.size());
    for (u64 i : ids_) out.push_back(g_->element(i));
    return out;
  }

  bool symmetric() const {
    for (u64 i : ids_) {
      if (!contains_id(g_->inv(i))) return false;
    }
    return true;
  }

  /// Image under reduction to (t1, t2) with t1 | q1 and t2 | q2.
  GroupSet reduce_to(u64 t1, u64 t2) const {
    if (!divides(t1, q1()) || !divides(t2, q2())) {
      throw std::invalid_argument("target moduli must divide the set's moduli");
    }
    std::vector<PairElement> xs;
    xs.reserve(ids_.size());
    for (u64 i : ids_) xs.push_back(reduce(g_->element(i), t1, t2));
    return from_elements(xs, t1, t2);
  }

  /// P_side(A) as a set over (q_side, 1).
  GroupSet project_side(int side) const {
    std::vector<PairElement> xs;
    const u64 q = side == 1 ? q1() : q2();
    for (u64 i : ids_) xs.push_back({project(g_->element(i), side), identity(1)});
    return from_elements(xs, q, 1);
  }

  friend bool operator==(const GroupSet& a, const GroupSet& b) {
    return a.q1() == b.q1() && a.q2() == b.q2() && a.ids_ == b.ids_;
  }

 private:
  std::shared_ptr<const PairGroup> g_;
  std::vector<u64> ids_;
};

namespace detail {

inline void check_same_group(const GroupSet& a, const GroupSet& b) {
  if (a.q1() != b.q1() || a.q2() != b.q2()) throw std::invalid_argument("modulus mismatch");
}

inline std::vector<u64> bitmap_ids(const std::vector<std::uint64_t>& bits) {
  std::vector<u64> out;
  for (std::size_t w = 0; w < bits.size(); ++w) {
    u64 word = bits[w];
    while (word) {
      out.push_back(w * 64 + __builtin_ctzll(word));
      word &= word - 1;
    }
  }
  return out;
}

}  // namespace detail

/// A . B = {ab}. When |A| + |B| exceeds the group order every g has a
/// factorization g = a b (gB^{-1} meets A), so the whole group is returned.
inline GroupSet product_set(const GroupSet& A, const GroupSet& B, u64 cap = kDefaultEnumerationCap) {
  detail::check_same_group(A, B);
  const PairGroup& G = A.group();
  const u64 N = G.order();
  if (N > cap) throw std::length_error("product set exceeds cap");
  if (A.empty() || B.empty()) return GroupSet(A.group_ptr(), {});
  if (A.size() + B.size() > N) return GroupSet::whole(A.q1(), A.q2(), cap);
  std::vector<std::uint64_t> bits((N + 63) / 64, 0);
  const auto& a = A.ids();
  const auto& b = B.ids();
#pragma omp parallel
  {
    std::vector<std::uint64_t> local((N + 63) / 64, 0);
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.size()); ++i) {
      for (u64 y : b) {
        u64 z = G.mul(a[i], y);
        local[z >> 6] |= u64{1} << (z & 63);
      }
    }
#pragma omp critical
    for (std::size_t w = 0; w < bits.size(); ++w) bits[w] |= local[w];
  }
  return GroupSet(A.group_ptr(), detail::bitmap_ids(bits));
}

inline GroupSet set_union(const GroupSet& A, const GroupSet& B) {
  detail::check_same_group(A, B);
  std::vector<u64> ids;
  std::set_union(A.ids().begin(), A.ids().end(), B.ids().begin(), B.ids().end(),
                 std::back_inserter(ids));
  return GroupSet(A.group_ptr(), std::move(ids));
}

inline GroupSet set_difference(const GroupSet& A, const GroupSet& B) {
  detail::check_same_group(A, B);
  std::vector<u64> ids;
  std::set_difference(A.ids().begin(), A.ids().end(), B.ids().begin(), B.ids().end(),
                      std::back_inserter(ids));
  return GroupSet(A.group_ptr(), std::move(ids));
}

/// Successive powers A, A^2, A^3, ... When 1 is in A the powers are nested, so
/// only the newest layer is multiplied by A at each step.
class PowerSequence {
 public:
  explicit PowerSequence(GroupSet A, u64 cap = kDefaultEnumerationCap)
      : A_(std::move(A)), current_(A_), cap_(cap) {
    nested_ = A_.contains_id(A_.group().identity_id());
    frontier_ = current_;
  }

  const GroupSet& current() const { return current_; }
  unsigned exponent() const { return k_; }

  const GroupSet& advance() {
    if (nested_) {
      GroupSet grown = product_set(frontier_, A_, cap_);
      frontier_ = set_difference(grown, current_);
      current_ = set_union(current_, grown);
    } else {
      current_ = product_set(current_, A_, cap_);
    }
    ++k_;
    return current_;
  }

 private:
  GroupSet A_, current_, frontier_;
  u64 cap_;
  bool nested_ = false;
  unsigned k_ = 1;
};

// ---------------------------------------------------------------------------

struct GrowthReport {
  std::size_t size_a = 0;
  std::size_t size_aaa = 0;
  double exponent = std::numeric_limits<double>::quiet_NaN();  // undefined when |A| = 1
  std::optional<bool> grows;  // |AAA| > |A|^{1+delta}, when delta is supplied
  std::vector<std::size_t> trajectory;  // |A^l| for l = 1..max(3, max_power)
  bool symmetric = false;
  std::vector<unsigned> bound_violations;  // l with |A^l| > (|A^3|/|A|)^{l-2} |A|
};

/// |A^l| <= (|A^3|/|A|)^{l-2} |A| holds for symmetric A; checked in logs.
inline bool tripling_bound_holds(std::size_t a, std::size_t a3, std::size_t al, unsigned l) {
  if (l < 3) return true;
  const double lhs = std::log(static_cast<double>(al));
  const double rhs = (l - 2) * (std::log(static_cast<double>(a3)) - std::log(static_cast<double>(a))) +
                     std::log(static_cast<double>(a));
  return lhs <= rhs + 1e-9;
}

inline GrowthReport tripling(const GroupSet& A, std::optional<double> delta = std::nullopt,
                             unsigned max_power = 3, u64 cap = kDefaultEnumerationCap) {
  if (A.empty()) throw std::invalid_argument("tripling of the empty set");
  GrowthReport r;
  r.size_a = A.size();
  r.symmetric = A.symmetric();
  PowerSequence seq(A, cap);
  r.trajectory.push_back(A.size());
  for (unsigned l = 2; l <= std::max(3u, max_power); ++l) r.trajectory.push_back(seq.advance().size());
  r.size_aaa = r.trajectory[2];
  if (r.size_a > 1) {
    r.exponent = std::log(static_cast<double>(r.size_aaa)) / std::log(static_cast<double>(r.size_a));
  }
  if (delta) r.grows = static_cast<double>(r.size_aaa) > std::pow(static_cast<double>(r.size_a), 1 + *delta);
  for (unsigned l = 3; l <= r.trajectory.size(); ++l) {
    if (!tripling_bound_holds(r.size_a, r.size_aaa, r.trajectory[l - 1], l)) {
      r.bound_violations.push_back(l);
    }
  }
  if (r.symmetric && !r.bound_violations.empty()) {
    throw std::logic_error("tripling bound violated by a symmetric set");
  }
  return r;
}

// ---------------------------------------------------------------------------

/// Lambda(q1p)/Lambda(q1) x Lambda(q2p)/Lambda(q2) as a GroupSet.
inline GroupSet congruence_box(u64 q1, u64 q2, u64 q1p, u64 q2p, u64 cap = kDefaultEnumerationCap) {
  if (!divides(q1p, q1) || !divides(q2p, q2)) {
    throw std::invalid_argument("congruence level must divide the modulus");
  }
  auto L = enumerate_congruence(FactoredModulus(q1), FactoredModulus(q1p), cap);
  auto R = enumerate_congruence(FactoredModulus(q2), FactoredModulus(q2p), cap);
  if (static_cast<u64>(L.size()) * R.size() > cap) throw std::length_error("congruence box exceeds cap");
  auto g = PairGroup::get(q1, q2, cap);
  std::vector<u64> ids;
  ids.reserve(L.size() * R.size());
  for (const auto& x : L) {
    for (const auto& y : R) ids.push_back(g->id({x, y}));
  }
  return GroupSet(g, std::move(ids));
}

inline bool covers_congruence(const GroupSet& X, u64 q1p, u64 q2p, u64 cap = kDefaultEnumerationCap) {
  GroupSet box = congruence_box(X.q1(), X.q2(), q1p, q2p, cap);
  if (box.size() > X.size()) return false;
  return std::includes(X.ids().begin(), X.ids().end(), box.ids().begin(), box.ids().end());
}

/// Admissible (q1p, q2p) pairs: exact divisors with q1p q2p <= max_product,
/// ordered by (q1p q2p, q1p).
inline std::vector<std::pair<u64, u64>> exact_divisor_pairs(u64 q1, u64 q2, u64 max_product) {
  std::vector<std::pair<u64, u64>> out;
  for (const auto& a : exact_divisors(FactoredModulus(q1))) {
    for (const auto& b : exact_divisors(FactoredModulus(q2))) {
      if (a.value() * b.value() <= max_product) out.emplace_back(a.value(), b.value());
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    const u64 px = x.first * x.second, py = y.first * y.second;
    return px != py ? px < py : x.first < y.first;
  });
  return out;
}

/// Largest integer strictly below (q1 q2)^{40 delta}, but at least 1 so the
/// full-coverage pair is always admissible.
inline u64 generation_bound(u64 q1, u64 q2, double delta) {
  const double b = std::pow(static_cast<double>(q1) * q2, 40 * delta);
  if (!(b > 1)) return 1;
  const double f = std::ceil(b) - 1;
  return f >= 1.8e19 ? std::numeric_limits<u64>::max() : std::max<u64>(1, static_cast<u64>(f));
}

struct GenerationResult {
  bool found = false;
  unsigned k = 0;
  u64 q1p = 0, q2p = 0;
  std::vector<std::size_t> power_sizes;  // |A^k| for each k examined
};

/// Smallest k <= k_max and first admissible pair with A^k covering the box.
inline GenerationResult bounded_generation_search(const GroupSet& A, unsigned k_max,
                                                  u64 max_product = 1,
                                                  u64 cap = kDefaultEnumerationCap) {
  GenerationResult res;
  if (A.empty() || k_max == 0) return res;
  const auto pairs = exact_divisor_pairs(A.q1(), A.q2(), max_product);
  PowerSequence seq(A, cap);
  for (unsigned k = 1; k <= k_max; ++k) {
    const GroupSet& X = k == 1 ? seq.current() : seq.advance();
    res.power_sizes.push_back(X.size());
    for (auto [a, b] : pairs) {
      if (covers_congruence(X, a, b, cap)) {
        res.found = true;
        res.k = k;
        res.q1p = a;
        res.q2p = b;
        return res;
      }
    }
  }
  return res;
}

/// (A A) with both coordinates congruent to 1 mod radical(q_l).
inline GroupSet a0_filter(const GroupSet& A, u64 q_l, u64 cap = kDefaultEnumerationCap) {
  const u64 q0 = radical(FactoredModulus(q_l)).value();
  if (!divides(q0, A.q1()) || !divides(q0, A.q2())) {
    throw std::invalid_argument("radical of q_l must divide both moduli");
  }
  GroupSet AA = product_set(A, A, cap);
  std::vector<u64> ids;
  for (u64 i : AA.ids()) {
    PairElement x = A.group().element(i);
    if (is_identity(reduce(x.left, q0)) && is_identity(reduce(x.right, q0))) ids.push_back(i);
  }
  return GroupSet(A.group_ptr(), std::move(ids));
}

struct CoverageEntry {
  u64 q_prime = 1;
  Rational rho;
  u64 level = 1;  // frac_power(q', rho)
  std::optional<unsigned> C;
};

/// For each exact divisor q' of the side modulus (largest first) and rho in the
/// grid, the least C <= C_max with P_side(A0)^C containing Lambda(q'^rho)/Lambda(q').
inline std::vector<CoverageEntry> congruence_coverage_search(const GroupSet& A0, int side,
                                                             unsigned C_max,
                                                             const std::vector<Rational>& rho_grid,
                                                             u64 cap = kDefaultEnumerationCap) {
  if (side != 1 && side != 2) throw std::invalid_argument("side must be 1 or 2");
  std::vector<CoverageEntry> out;
  if (A0.empty()) return out;
  const u64 q = side == 1 ? A0.q1() : A0.q2();
  auto qs = exact_divisors(FactoredModulus(q));
  std::reverse(qs.begin(), qs.end());
  const GroupSet P = A0.project_side(side);
  for (const auto& qp : qs) {
    GroupSet base = P.reduce_to(qp.value(), 1);
    std::vector<CoverageEntry> rows;
    std::vector<GroupSet> boxes;
    for (const auto& rho : rho_grid) {
      CoverageEntry e{qp.value(), rho, frac_power(qp, rho).value(), std::nullopt};
      rows.push_back(e);
      boxes.push_back(congruence_box(qp.value(), 1, e.level, 1, cap));
    }
    PowerSequence seq(base, cap);
    for (unsigned C = 1; C <= C_max; ++C) {
      const GroupSet& X = C == 1 ? seq.current() : seq.advance();
      bool all = true;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].C && std::includes(X.ids().begin(), X.ids().end(), boxes[i].ids().begin(),
                                        boxes[i].ids().end())) {
          rows[i].C = C;
        }
        all = all && rows[i].C.has_value();
      }
      if (all) break;
    }
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

inline std::string growth_csv(const GrowthReport& r) {
  std::ostringstream out;
  out << "l,size\n";
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) out << i + 1 << ',' << r.trajectory[i] << '\n';
  return out.str();
}

}  // namespace sapx
