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

// Finite groups given by multiplication tables: approximate homomorphisms,
// restricted products with few defects, and subgroups behind small doubling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sapx/factored.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

using Elem = std::uint32_t;

/// Group on {0, ..., n-1} with a full multiplication table.
class FiniteGroupTable {
 public:
  FiniteGroupTable() = default;

  /// Builds the table from mul and validates identity, inverses and
  /// associativity on sampled triples.
  static FiniteGroupTable from_function(std::size_t n, const std::function<Elem(Elem, Elem)>& mul,
                                        std::size_t assoc_samples = 2000) {
    if (n == 0) throw std::invalid_argument("group must be nonempty");
    FiniteGroupTable g;
    g.n_ = n;
    g.table_.resize(n * n);
    for (Elem i = 0; i < n; ++i) {
      for (Elem j = 0; j < n; ++j) {
        Elem k = mul(i, j);
        if (k >= n) throw std::invalid_argument("product out of range");
        g.table_[i * n + j] = k;
      }
    }
    g.finish(assoc_samples);
    return g;
  }

  static FiniteGroupTable cyclic(std::size_t n) {
    return from_function(n, [n](Elem a, Elem b) { return static_cast<Elem>((a + b) % n); });
  }

  /// SL_2(Z/qZ) numbered by the sorted enumeration.
  static FiniteGroupTable sl2(u64 q) {
    auto elems = enumerate_group(FactoredModulus(q));
    std::unordered_map<u64, Elem> index;
    for (Elem i = 0; i < elems.size(); ++i) index[pack(elems[i])] = i;
    auto g = from_function(elems.size(),
                           [&](Elem a, Elem b) { return index.at(pack(elems[a] * elems[b])); });
    g.sl2_elements_ = std::move(elems);
    return g;
  }

  static FiniteGroupTable direct_product(const FiniteGroupTable& a, const FiniteGroupTable& b) {
    const std::size_t nb = b.order();
    return from_function(a.order() * nb, [&](Elem x, Elem y) {
      return static_cast<Elem>(a.mul(x / nb, y / nb) * nb + b.mul(x % nb, y % nb));
    });
  }

  /// {"order": n, "table": [[...], ...]} with table[i][j] = i * j.
  static FiniteGroupTable from_json(const nlohmann::json& j) {
    const std::size_t n = j.at("order").get<std::size_t>();
    const auto& t = j.at("table");
    if (t.size() != n) throw std::invalid_argument("table has wrong number of rows");
    for (const auto& row : t) {
      if (row.size() != n) throw std::invalid_argument("table row has wrong length");
    }
    return from_function(n, [&](Elem a, Elem b) { return t[a][b].get<Elem>(); });
  }

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (Elem i = 0; i < n_; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Elem j = 0; j < n_; ++j) row.push_back(mul(i, j));
      t.push_back(row);
    }
    return {{"order", n_}, {"table", t}};
  }

  std::size_t order() const { return n_; }
  Elem identity() const { return e_; }
  Elem mul(Elem a, Elem b) const { return table_[a * n_ + b]; }
  Elem inv(Elem a) const { return inv_[a]; }
  const std::vector<SL2Residue>& sl2_elements() const { return sl2_elements_; }

  /// Subgroup generated by gens, as a sorted element list.
  std::vector<Elem> closure(const std::vector<Elem>& gens) const {
    std::vector<char> in(n_, 0);
    std::vector<Elem> out{e_};
    in[e_] = 1;
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (Elem g : gens) {
        Elem y = mul(out[i], g);
        if (!in[y]) {
          in[y] = 1;
          out.push_back(y);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool is_subgroup(const std::vector<Elem>& H) const {
    if (H.empty()) return false;
    std::vector<char> in(n_, 0);
    for (Elem h : H) in[h] = 1;
    if (!in[e_]) return false;
    for (Elem a : H) {
      if (!in[inv(a)]) return false;
      for (Elem b : H) {
        if (!in[mul(a, b)]) return false;
      }
    }
    return true;
  }

 private:
  void finish(std::size_t assoc_samples) {
    std::optional<Elem> e;
    for (Elem c = 0; c < n_ && !e; ++c) {
      bool ok = true;
      for (Elem x = 0; x < n_ && ok; ++x) ok = mul(c, x) == x && mul(x, c) == x;
      if (ok) e = c;
    }
    if (!e) throw std::invalid_argument("table has no identity");
    e_ = *e;
    inv_.assign(n_, 0);
    for (Elem a = 0; a < n_; ++a) {
      bool found = false;
      for (Elem b = 0; b < n_ && !found; ++b) {
        if (mul(a, b) == e_) {
          if (mul(b, a) != e_) throw std::invalid_argument("one-sided inverse in table");
          inv_[a] = b;
          found = true;
        }
      }
      if (!found) throw std::invalid_argument("element without inverse");
    }
    std::mt19937_64 rng(0x5eed);
    for (std::size_t t = 0; t < assoc_samples; ++t) {
      Elem a = rng() % n_, b = rng() % n_, c = rng() % n_;
      if (mul(mul(a, b), c) != mul(a, mul(b, c))) {
        throw std::invalid_argument("table is not associative");
      }
    }
  }

  std::size_t n_ = 0;
  Elem e_ = 0;
  std::vector<Elem> table_, inv_;
  std::vector<SL2Residue> sl2_elements_;
};

/// psi : G1 -> G2 as image indices.
using MapTable = std::vector<Elem>;

inline void check_map(const MapTable& psi, const FiniteGroupTable& G1, const FiniteGroupTable& G2) {
  if (psi.size() != G1.order()) throw std::invalid_argument("map is not total on G1");
  for (Elem y : psi) {
    if (y >= G2.order()) throw std::invalid_argument("map image out of range");
  }
}

inline bool is_homomorphism(const MapTable& f, const FiniteGroupTable& G1, const FiniteGroupTable& G2) {
  for (Elem x = 0; x < G1.order(); ++x) {
    for (Elem y = 0; y < G1.order(); ++y) {
      if (f[G1.mul(x, y)] != G2.mul(f[x], f[y])) return false;
    }
  }
  return true;
}

inline constexpr std::size_t kExactAgreementLimit = 4096;

struct Agreement {
  u64 good = 0, total = 0;
  bool exact = true;
  double ci_low = 0, ci_high = 1;  // Wilson 95% when sampled
  std::optional<std::pair<Elem, Elem>> witness;  // some (x, y) with a defect

  Rational fraction() const { return Rational(static_cast<i64>(good), static_cast<i64>(total)); }
  double value() const { return static_cast<double>(good) / static_cast<double>(total); }
};

/// Fraction of (x, y) with psi(xy) = psi(x) psi(y): exact up to |G1| = 4096,
/// otherwise estimated from n_samples seeded pairs.
inline Agreement agreement(const MapTable& psi, const FiniteGroupTable& G1, const FiniteGroupTable& G2,
                           std::size_t n_samples = 1'000'000, u64 seed = 1) {
  check_map(psi, G1, G2);
  const std::size_t n = G1.order();
  Agreement a;
  auto ok = [&](Elem x, Elem y) { return psi[G1.mul(x, y)] == G2.mul(psi[x], psi[y]); };
  if (n <= kExactAgreementLimit) {
    a.total = static_cast<u64>(n) * n;
    std::vector<u64> rows(n, 0);
#pragma omp parallel for schedule(static)
    for (std::int64_t x = 0; x < static_cast<std::int64_t>(n); ++x) {
      for (Elem y = 0; y < n; ++y) rows[x] += ok(static_cast<Elem>(x), y);
    }
    for (Elem x = 0; x < n && !a.witness; ++x) {
      if (rows[x] == n) continue;
      for (Elem y = 0; y < n; ++y) {
        if (!ok(x, y)) {
          a.witness = {x, y};
          break;
        }
      }
    }
    for (u64 r : rows) a.good += r;
    a.ci_low = a.ci_high = a.value();
    return a;
  }
  a.exact = false;
  a.total = n_samples;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Elem x = rng() % n, y = rng() % n;
    if (ok(x, y)) {
      ++a.good;
    } else if (!a.witness) {
      a.witness = {x, y};
    }
  }
  const double z = 1.959963984540054, p = a.value(), N = static_cast<double>(n_samples);
  const double denom = 1 + z * z / N, centre = (p + z * z / (2 * N)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / N + z * z / (4 * N * N)) / denom;
  a.ci_low = std::max(0.0, centre - half);
  a.ci_high = std::min(1.0, centre + half);
  return a;
}

struct InequalityCheck {
  std::string name;
  double lhs = 0, rhs = 0;
  bool holds = false;
};

// ---------------------------------------------------------------------------

/// Group structure on G1 x G2 without a table: elements x1 * |G2| + x2.
struct ProductGroupView {
  const FiniteGroupTable& G1;
  const FiniteGroupTable& G2;

  std::size_t order() const { return G1.order() * G2.order(); }
  u64 pack(Elem a, Elem b) const { return static_cast<u64>(a) * G2.order() + b; }
  Elem first(u64 x) const { return static_cast<Elem>(x / G2.order()); }
  Elem second(u64 x) const { return static_cast<Elem>(x % G2.order()); }
  u64 mul(u64 x, u64 y) const {
    return pack(G1.mul(first(x), first(y)), G2.mul(second(x), second(y)));
  }
  u64 inv(u64 x) const { return pack(G1.inv(first(x)), G2.inv(second(x))); }
  u64 identity() const { return pack(G1.identity(), G2.identity()); }
};

struct ExtractResult {
  std::vector<u64> A_prime;              // sorted
  std::vector<InequalityCheck> checks;   // size and doubling bounds
  std::size_t restricted_product = 0;    // |A .G A|
  std::size_t doubling = 0;              // |A' A'|
};

/// Degree pruning: A' = {a : #{b : (a, b) in graph} >= (1 - sqrt(eps)) |A|}.
/// A is a sorted element list of any group exposing mul(u64, u64);
/// graph(i, j) tells whether (A[i], A[j]) is an edge.
template <class Group>
ExtractResult restricted_product_extract(const Group& G, const std::vector<u64>& A,
                                         const std::function<bool(std::size_t, std::size_t)>& graph,
                                         double eps) {
  if (!(eps > 0) || eps >= 0.25) throw std::invalid_argument("need 0 < eps < 1/4");
  const std::size_t n = A.size();
  if (n == 0) throw std::invalid_argument("empty set");
  std::vector<std::size_t> deg(n, 0);
  std::size_t edges = 0;
  std::set<u64> agA;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (graph(i, j)) {
        ++deg[i];
        agA.insert(G.mul(A[i], A[j]));
      }
    }
    edges += deg[i];
  }
  const double nn = static_cast<double>(n);
  if (!(static_cast<double>(edges) > (1 - eps) * nn * nn)) {
    throw std::invalid_argument("graph hypothesis |G| > (1 - eps)|A|^2 violated");
  }
  const double se = std::sqrt(eps);
  ExtractResult r;
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<double>(deg[i]) >= (1 - se) * nn) r.A_prime.push_back(A[i]);
  }
  std::set<u64> aa;
  for (u64 x : r.A_prime) {
    for (u64 y : r.A_prime) aa.insert(G.mul(x, y));
  }
  r.restricted_product = agA.size();
  r.doubling = aa.size();
  const double ap = static_cast<double>(r.A_prime.size());
  r.checks.push_back({"|A'| > (1-sqrt(eps))|A|", ap, (1 - se) * nn, ap > (1 - se) * nn});
  const double bound = std::pow(static_cast<double>(r.restricted_product), 4) /
                       ((1 - se) * (1 - 2 * se) * (1 - 2 * se) * nn * nn * nn);
  r.checks.push_back({"|A'A'| < |AGA|^4/((1-sqrt(eps))(1-2sqrt(eps))^2|A|^3)",
                      static_cast<double>(r.doubling), bound, static_cast<double>(r.doubling) < bound});
  return r;
}

// ---------------------------------------------------------------------------

enum class Branch { kDefect, kStructured, kConstructionFailed };

inline std::string branch_name(Branch b) {
  switch (b) {
    case Branch::kDefect:
      return "DEFECT";
    case Branch::kStructured:
      return "STRUCTURED";
    case Branch::kConstructionFailed:
      return "CONSTRUCTION_FAILED";
  }
  return "?";
}

struct DichotomyResult {
  Agreement agreement;
  Branch branch = Branch::kDefect;
  std::vector<Elem> S;   // sorted subset of G1 where f = psi
  MapTable f;            // homomorphism G1 -> G2 (structured branch)
  std::vector<InequalityCheck> checks;
  std::string failure;   // violated condition when construction fails
  bool epsilon_override = false;
};

inline constexpr double kDichotomyEpsilonLimit = 1.0 / 1600;

/// Either many defects (agreement < 1 - eps) or a homomorphism f agreeing with
/// psi on S with |S| > (1 - sqrt(eps))|G1|. The structured branch prunes the
/// graph A = {(x, psi(x))}, takes H generated by a0^{-1} A' for a base point a0
/// in A', and reads f off the coset a0 H.
inline DichotomyResult dichotomy(const MapTable& psi, const FiniteGroupTable& G1,
                                 const FiniteGroupTable& G2, double eps, bool allow_override = false) {
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  DichotomyResult r;
  if (eps >= kDichotomyEpsilonLimit) {
    if (!allow_override) throw std::invalid_argument("eps must be below 1/1600");
    r.epsilon_override = true;
  }
  r.agreement = agreement(psi, G1, G2);
  if (!r.agreement.exact) throw std::invalid_argument("dichotomy needs |G1| <= 4096");
  const double n1 = static_cast<double>(G1.order());
  if (r.agreement.value() < 1 - eps) {
    r.branch = Branch::kDefect;
    return r;
  }

  ProductGroupView P{G1, G2};
  std::vector<u64> A(G1.order());
  for (Elem x = 0; x < G1.order(); ++x) A[x] = P.pack(x, psi[x]);
  auto edge = [&](std::size_t i, std::size_t j) {
    return psi[G1.mul(static_cast<Elem>(i), static_cast<Elem>(j))] ==
           G2.mul(psi[i], psi[j]);
  };
  ExtractResult ex;
  try {
    ex = restricted_product_extract(P, A, edge, std::min(eps, 0.2499));
  } catch (const std::invalid_argument& e) {
    r.branch = Branch::kConstructionFailed;
    r.failure = e.what();
    return r;
  }
  r.checks = ex.checks;
  const double ap = static_cast<double>(ex.A_prime.size());
  r.checks.push_back({"|A'A'| < 5/4 |A'|", static_cast<double>(ex.doubling), 1.25 * ap,
                      static_cast<double>(ex.doubling) < 1.25 * ap});
  auto fail = [&](std::string why) {
    r.branch = Branch::kConstructionFailed;
    r.failure = std::move(why);
    return r;
  };
  if (ex.A_prime.empty()) return fail("A' is empty");

  u64 a0 = ex.A_prime.front();
  for (u64 a : ex.A_prime) {
    if (P.first(a) == G1.identity()) a0 = a;
  }
  const u64 a0inv = P.inv(a0);
  std::vector<u64> gens;
  for (u64 a : ex.A_prime) gens.push_back(P.mul(a0inv, a));

  // Closure of gens in G1 x G2; stop early once a fiber over G1 has two points.
  std::vector<std::optional<Elem>> phi(G1.order());
  std::vector<u64> H{P.identity()};
  phi[G1.identity()] = G2.identity();
  for (std::size_t i = 0; i < H.size(); ++i) {
    for (u64 g : gens) {
      u64 y = P.mul(H[i], g);
      auto& slot = phi[P.first(y)];
      if (!slot) {
        slot = P.second(y);
        H.push_back(y);
      } else if (*slot != P.second(y)) {
        return fail("H meets {1} x G2 nontrivially");
      }
    }
  }
  if (H.size() != G1.order()) return fail("projection of H is a proper subgroup of G1");

  const Elem x1 = P.first(a0), x2 = P.second(a0);
  r.f.resize(G1.order());
  for (Elem x = 0; x < G1.order(); ++x) r.f[x] = G2.mul(x2, *phi[G1.mul(G1.inv(x1), x)]);
  if (!is_homomorphism(r.f, G1, G2)) return fail("coset map a0 H is not a homomorphism");

  for (u64 a : ex.A_prime) r.S.push_back(P.first(a));
  std::sort(r.S.begin(), r.S.end());
  for (Elem x : r.S) {
    if (r.f[x] != psi[x]) return fail("f differs from psi on S");
  }
  const double s = static_cast<double>(r.S.size());
  if (!(s > (1 - std::sqrt(eps)) * n1)) return fail("|S| <= (1 - sqrt(eps))|G1|");

  if (gcd_u64(G1.order(), G2.order()) == 1) {
    std::size_t nontrivial = 0;
    for (Elem x = 0; x < G1.order(); ++x) nontrivial += psi[x] != G2.identity();
    if (!(static_cast<double>(nontrivial) < std::sqrt(eps) * n1)) {
      throw std::logic_error("coprime orders but psi is far from trivial");
    }
  }
  r.branch = Branch::kStructured;
  return r;
}

// ---------------------------------------------------------------------------

/// All subgroups of G by cyclic extension; practical for |G| <= 512.
inline std::vector<std::vector<Elem>> all_subgroups(const FiniteGroupTable& G) {
  if (G.order() > 512) throw std::length_error("subgroup enumeration is limited to |G| <= 512");
  std::set<std::vector<Elem>> seen;
  std::vector<std::pair<std::vector<Elem>, std::vector<Elem>>> queue;  // (elements, generators)
  auto trivial = G.closure({});
  seen.insert(trivial);
  queue.push_back({trivial, {}});
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto K = queue[i].first;
    const auto gens = queue[i].second;
    std::vector<char> in(G.order(), 0);
    for (Elem k : K) in[k] = 1;
    // <K, g> depends only on the coset K g.
    for (Elem g = 0; g < G.order(); ++g) {
      if (in[g]) continue;
      for (Elem k : K) in[G.mul(k, g)] = 1;
      auto ng = gens;
      ng.push_back(g);
      auto H = G.closure(ng);
      if (seen.insert(H).second) queue.push_back({std::move(H), std::move(ng)});
    }
  }
  std::vector<std::vector<Elem>> out;
  for (auto& q : queue) out.push_back(std::move(q.first));
  return out;
}

/// Representatives x with S contained in the union of the right cosets H x.
inline std::vector<Elem> right_coset_cover(const FiniteGroupTable& G, const std::vector<Elem>& H,
                                           const std::vector<Elem>& S) {
  std::vector<char> covered(G.order(), 0);
  std::vector<Elem> reps;
  for (Elem s : S) {
    if (covered[s]) continue;
    reps.push_back(s);
    for (Elem h : H) covered[G.mul(h, s)] = 1;
  }
  return reps;
}

struct SmallDoublingResult {
  std::vector<Elem> H;
  std::vector<Elem> cosets;  // right-coset representatives covering S
  bool fast_path = false;
};

/// A subgroup H with |H| <= (2/eps - 1)|S| and S inside at most 2/eps - 1 right
/// cosets of H. Tries <S S^{-1}> first; otherwise searches all subgroups and
/// keeps the tightest cover (least |H| * #cosets, then fewest cosets, then least |H|).
inline SmallDoublingResult small_doubling_subgroup(const FiniteGroupTable& G, const std::vector<Elem>& S,
                                                   const std::vector<Elem>& A, double eps) {
  if (S.empty() || A.empty()) throw std::invalid_argument("S and A must be nonempty");
  if (!(eps > 0) || eps > 1) throw std::invalid_argument("need 0 < eps <= 1");
  std::set<Elem> AS;
  for (Elem a : A) {
    for (Elem s : S) AS.insert(G.mul(a, s));
  }
  const double ns = static_cast<double>(std::set<Elem>(S.begin(), S.end()).size());
  if (static_cast<double>(AS.size()) > (2 - eps) * ns) {
    throw std::invalid_argument("hypothesis |AS| <= (2 - eps)|S| violated");
  }
  if (std::set<Elem>(A.begin(), A.end()).size() < ns) {
    throw std::invalid_argument("hypothesis |A| >= |S| violated");
  }
  const double max_cosets = 2 / eps - 1;
  const double max_order = max_cosets * ns;
  auto qualifies = [&](const std::vector<Elem>& H, const std::vector<Elem>& reps) {
    return static_cast<double>(H.size()) <= max_order + 1e-9 &&
           static_cast<double>(reps.size()) <= max_cosets + 1e-9;
  };

  std::vector<Elem> gens;
  for (Elem s : S) gens.push_back(G.mul(s, G.inv(S.front())));
  for (Elem s : S) gens.push_back(G.mul(S.front(), G.inv(s)));
  auto H0 = G.closure(gens);
  auto reps0 = right_coset_cover(G, H0, S);
  if (qualifies(H0, reps0)) return {H0, reps0, true};

  std::optional<SmallDoublingResult> best;
  auto key = [](const SmallDoublingResult& r) {
    return std::make_tuple(r.H.size() * r.cosets.size(), r.cosets.size(), r.H.size(), r.H);
  };
  for (auto& H : all_subgroups(G)) {
    auto reps = right_coset_cover(G, H, S);
    if (!qualifies(H, reps)) continue;
    SmallDoublingResult cand{H, reps, false};
    if (!best || key(cand) < key(*best)) best = std::move(cand);
  }
  if (!best) throw std::runtime_error("no qualifying subgroup");
  return *best;
}

}  // namespace sapx
