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

// Random-walk measurements: exact decay of chi_S^(l) on algebraic events in a
// finite quotient, and Monte-Carlo sampling of the integral walk.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sapx/factored.hpp"
#include "sapx/integral.hpp"
#include "sapx/sl2.hpp"
#include "sapx/spectral.hpp"

namespace sapx {

/// L(g) = X1 a1 + Y1 b1 + Z1 c1 + W1 d1 + X2 a2 + Y2 b2 + Z2 c2 + W2 d2.
struct LinearForm8 {
  std::array<i64, 8> coeffs{};

  static LinearForm8 make(const std::array<i64, 8>& c) {
    i64 g = 0;
    for (i64 x : c) g = std::gcd(g, x);
    if (g != 1) throw std::invalid_argument("linear form is not primitive");
    return {c};
  }

  u64 eval(const PairElement& x, u64 Q) const {
    const u64 e[8] = {x.left.a, x.left.b, x.left.c, x.left.d,
                      x.right.a, x.right.b, x.right.c, x.right.d};
    u64 s = 0;
    for (int i = 0; i < 8; ++i) s = mod_add(s, mod_mul(mod_reduce(coeffs[i], Q), e[i] % Q, Q), Q);
    return s;
  }

  BigInt eval(const IntPair& g) const {
    const BigInt* e[8] = {&g.left.a, &g.left.b, &g.left.c, &g.left.d,
                          &g.right.a, &g.right.b, &g.right.c, &g.right.d};
    BigInt s = 0;
    for (int i = 0; i < 8; ++i) s += coeffs[i] * *e[i];
    return s;
  }
};

/// Tr(g1 xi1 g1^{-1} eta1) + Tr(g2 xi2 g2^{-1} eta2) with traceless integer matrices.
struct TraceForm {
  std::array<IntMatrix2, 2> xi, eta;

  /// Checks tracelessness and that each matrix is nonzero mod every prime of Q.
  void validate(u64 Q) const {
    const FactoredModulus fq(Q);
    for (const auto* m : {&xi[0], &xi[1], &eta[0], &eta[1]}) {
      if (trace(*m) != 0) throw std::invalid_argument("trace form matrix is not traceless");
      for (u64 p : fq.primes()) {
        if (reduce_int(m->a, p) == 0 && reduce_int(m->b, p) == 0 && reduce_int(m->c, p) == 0 &&
            reduce_int(m->d, p) == 0) {
          throw std::invalid_argument("trace form matrix vanishes mod " + std::to_string(p));
        }
      }
    }
  }

  u64 eval(const PairElement& x, u64 Q) const {
    auto side = [Q](const SL2Residue& g, const IntMatrix2& xi_, const IntMatrix2& eta_) {
      SL2Residue gq = reduce(g, Q);
      auto m = [Q](const IntMatrix2& M) {
        return std::array<u64, 4>{reduce_int(M.a, Q), reduce_int(M.b, Q), reduce_int(M.c, Q),
                                  reduce_int(M.d, Q)};
      };
      auto mm = [Q](const std::array<u64, 4>& x, const std::array<u64, 4>& y) {
        auto dot = [Q](u64 p1, u64 p2, u64 p3, u64 p4) {
          return mod_add(mod_mul(p1, p2, Q), mod_mul(p3, p4, Q), Q);
        };
        return std::array<u64, 4>{dot(x[0], y[0], x[1], y[2]), dot(x[0], y[1], x[1], y[3]),
                                  dot(x[2], y[0], x[3], y[2]), dot(x[2], y[1], x[3], y[3])};
      };
      SL2Residue gi = inverse(gq);
      auto r = mm(mm(mm({gq.a, gq.b, gq.c, gq.d}, m(xi_)), {gi.a, gi.b, gi.c, gi.d}), m(eta_));
      return mod_add(r[0], r[3], Q);
    };
    return mod_add(side(x.left, xi[0], eta[0]), side(x.right, xi[1], eta[1]), Q);
  }
};

/// Which factor a single-sided event reads.
enum class Side { kLeft = 1, kRight = 2 };

struct LinearEvent {
  LinearForm8 form;
  i64 n = 0;
};
struct TraceEvent {
  TraceForm form;
};
struct ParabolicEvent {  // tr^2 - 4 = 0
  Side side = Side::kLeft;
};
struct LowerEntryEvent {  // c = 0
  Side side = Side::kLeft;
};
struct TraceValueEvent {  // tr = n
  i64 n = 0;
  Side side = Side::kLeft;
};
struct IntegralLinearEvent {  // L(g) = n exactly, in the integral group
  LinearForm8 form;
  i64 n = 0;
};

using EventSpec = std::variant<LinearEvent, TraceEvent, ParabolicEvent, LowerEntryEvent,
                               TraceValueEvent, IntegralLinearEvent>;

inline std::optional<Side> single_side(const EventSpec& ev) {
  if (auto* e = std::get_if<ParabolicEvent>(&ev)) return e->side;
  if (auto* e = std::get_if<LowerEntryEvent>(&ev)) return e->side;
  if (auto* e = std::get_if<TraceValueEvent>(&ev)) return e->side;
  return std::nullopt;
}

/// Event on a single SL_2(Z/QZ) element.
inline bool holds_single(const EventSpec& ev, const SL2Residue& x, u64 Q) {
  SL2Residue y = reduce(x, Q);
  if (std::holds_alternative<ParabolicEvent>(ev)) {
    u64 t = trace(y);
    return mod_sub(mod_mul(t, t, Q), 4 % Q, Q) == 0;
  }
  if (std::holds_alternative<LowerEntryEvent>(ev)) return y.c == 0;
  if (auto* e = std::get_if<TraceValueEvent>(&ev)) return trace(y) == mod_reduce(e->n, Q);
  throw std::invalid_argument("event is not single-sided");
}

/// Event on a pair element; moduli of both components must be divisible by Q
/// (or equal 1 on a side the event ignores).
inline bool holds(const EventSpec& ev, const PairElement& x, u64 Q) {
  if (auto side = single_side(ev)) return holds_single(ev, project(x, static_cast<int>(*side)), Q);
  if (auto* e = std::get_if<LinearEvent>(&ev)) return e->form.eval(x, Q) == mod_reduce(e->n, Q);
  if (auto* e = std::get_if<TraceEvent>(&ev)) return e->form.eval(x, Q) == 0;
  throw std::invalid_argument("integral events have no finite-quotient evaluation");
}

inline bool holds(const IntegralLinearEvent& ev, const IntPair& g) { return ev.form.eval(g) == ev.n; }

inline void validate_event(const EventSpec& ev, u64 Q) {
  if (std::holds_alternative<IntegralLinearEvent>(ev)) return;
  if (Q < 2) throw std::invalid_argument("modular events need Q >= 2");
  if (auto* e = std::get_if<TraceEvent>(&ev)) e->form.validate(Q);
}

// ---------------------------------------------------------------------------

struct DecayRow {
  unsigned l = 0;
  double mass = 0.0;
};

struct DecayProfile {
  std::vector<DecayRow> rows;
  double uniform_mass = 0.0;  // event density in the generated quotient group
  double c_hat = std::numeric_limits<double>::quiet_NaN();
  std::size_t group_order = 0;
};

/// Mass of the event under pi_Q[chi_S^(l)] for each l in l_values.
///
/// The walk runs in the smallest quotient that determines the event: the
/// projected factor SL_2(Z/QZ) for single-sided events, otherwise the pair
/// group mod (Q, Q). Only the subgroup generated by S is materialized.
inline DecayProfile decay_profile(const GeneratorSet& S, const EventSpec& ev, u64 Q,
                                  const std::vector<unsigned>& l_values,
                                  u64 cap = kDefaultEnumerationCap) {
  validate_event(ev, Q);
  if (std::holds_alternative<IntegralLinearEvent>(ev)) {
    throw std::invalid_argument("decay_profile needs a modular event");
  }
  CayleyOperator T;
  std::vector<char> in_event;
  auto side = single_side(ev);
  if (side || S.sides == 1) {
    const int sd = side ? static_cast<int>(*side) : 1;
    std::vector<SL2Residue> gens;
    for (const auto& g : S.elements) gens.push_back(reduce(sd == 1 ? g.left : g.right, Q));
    T = CayleyOperator::sl2(gens, Q, Domain::kGenerated, cap);
    for (const auto& x : T.sl2_elements()) {
      in_event.push_back(side ? holds_single(ev, x, Q)
                              : holds(ev, PairElement{x, identity(Q)}, Q));
    }
  } else {
    T = CayleyOperator::pairs(S.reduce_all(Q, Q), Q, Q, Domain::kGenerated, cap);
    for (std::size_t i = 0; i < T.dimension(); ++i) in_event.push_back(holds(ev, T.pair_at(static_cast<Index>(i)), Q));
  }
  const std::size_t N = T.dimension();
  DecayProfile prof;
  prof.group_order = N;
  prof.uniform_mass = static_cast<double>(std::count(in_event.begin(), in_event.end(), 1)) /
                      static_cast<double>(N);

  std::vector<unsigned> ls = l_values;
  std::sort(ls.begin(), ls.end());
  std::vector<double> mu(N, 0.0), next;
  mu[T.identity_index()] = 1.0;
  unsigned cur = 0;
  for (unsigned l : ls) {
    while (cur < l) {
      T.apply_into(mu, next);
      mu.swap(next);
      ++cur;
    }
    double m = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (in_event[i]) m += mu[i];
    }
    prof.rows.push_back({l, m});
  }
  if (!prof.rows.empty() && prof.rows.back().mass > 0) {
    prof.c_hat = -std::log(prof.rows.back().mass) / std::log(static_cast<double>(Q));
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Sampling.

/// Counter-based generator: the i-th output of stream (seed, index) is a fixed
/// function of the triple, so samples are reproducible in any order.
class CounterRng {
 public:
  CounterRng(u64 seed, u64 index) : key_(mix(seed ^ mix(index + 0x632BE59BD9B4E019ULL))) {}

  u64 next() { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  /// Uniform in [0, n) by rejection.
  u64 below(u64 n) {
    const u64 limit = std::numeric_limits<u64>::max() - std::numeric_limits<u64>::max() % n;
    for (;;) {
      u64 x = next();
      if (x < limit) return x % n;
    }
  }

 private:
  static u64 mix(u64 z) {  // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  u64 key_;
  u64 counter_ = 0;
};

/// s_l ... s_1 for one sample stream, returning every prefix product.
inline std::vector<IntPair> sample_path(const std::vector<IntPair>& S, unsigned l, u64 seed,
                                        u64 index) {
  CounterRng rng(seed, index);
  std::vector<IntPair> path;
  path.reserve(l);
  IntPair g{IntMatrix2{}, IntMatrix2{}};
  for (unsigned i = 0; i < l; ++i) {
    g = S[rng.below(S.size())] * g;
    path.push_back(g);
  }
  return path;
}

/// n_samples independent draws from chi_S^(l).
inline std::vector<IntPair> sample_walk(const GeneratorSet& S, unsigned l, std::size_t n_samples,
                                        u64 seed) {
  if (l == 0) throw std::invalid_argument("walk length must be at least 1");
  auto gens = S.integral_elements();
  std::vector<IntPair> out(n_samples);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_samples); ++i) {
    out[i] = sample_path(gens, l, seed, static_cast<u64>(i)).back();
  }
  return out;
}

struct ArchimedeanRow {
  unsigned l = 0;
  std::size_t hits = 0;
  std::size_t samples = 0;
  double p_hat = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // Wilson 95%
};

struct ArchimedeanReport {
  std::vector<ArchimedeanRow> rows;
  double rate = std::numeric_limits<double>::quiet_NaN();  // c in mass ~ e^{-c l}
  std::size_t fitted_points = 0;
};

inline std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n, nn = static_cast<double>(n);
  const double denom = 1 + z * z / nn;
  const double centre = (p + z * z / (2 * nn)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / denom;
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

/// Monte-Carlo estimate of chi_S^(l)({L(g) = n}) for l in [lmin, lmax]. Each
/// sample is one path whose prefixes serve all l, so rows are correlated but
/// each is marginally exact. The rate is a least-squares fit of -log p_hat on l
/// over rows with at least one hit.
inline ArchimedeanReport archimedean_decay(const GeneratorSet& S, const IntegralLinearEvent& ev,
                                           unsigned lmin, unsigned lmax, std::size_t n_samples,
                                           u64 seed) {
  if (lmin == 0 || lmin > lmax) throw std::invalid_argument("need 1 <= lmin <= lmax");
  auto gens = S.integral_elements();
  const std::size_t L = lmax - lmin + 1;
  std::vector<std::size_t> hits(L, 0);
#pragma omp parallel
  {
    std::vector<std::size_t> local(L, 0);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_samples); ++i) {
      auto path = sample_path(gens, lmax, seed, static_cast<u64>(i));
      for (unsigned l = lmin; l <= lmax; ++l) local[l - lmin] += holds(ev, path[l - 1]);
    }
#pragma omp critical
    for (std::size_t j = 0; j < L; ++j) hits[j] += local[j];
  }
  ArchimedeanReport rep;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (unsigned l = lmin; l <= lmax; ++l) {
    ArchimedeanRow row;
    row.l = l;
    row.hits = hits[l - lmin];
    row.samples = n_samples;
    row.p_hat = n_samples ? static_cast<double>(row.hits) / n_samples : 0.0;
    std::tie(row.ci_low, row.ci_high) = wilson_interval(row.hits, n_samples);
    if (row.hits > 0) {
      const double y = -std::log(row.p_hat);
      sx += l;
      sy += y;
      sxx += static_cast<double>(l) * l;
      sxy += l * y;
      ++rep.fitted_points;
    }
    rep.rows.push_back(row);
  }
  if (rep.fitted_points >= 2) {
    const double n = static_cast<double>(rep.fitted_points);
    rep.rate = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return rep;
}

inline std::string decay_csv(const DecayProfile& p) {
  std::ostringstream out;
  out << "l,mass,uniform_mass\n";
  for (const auto& r : p.rows) {
    out << r.l << ',' << format_double(r.mass) << ',' << format_double(p.uniform_mass) << '\n';
  }
  return out.str();
}

inline std::string archimedean_csv(const ArchimedeanReport& r) {
  std::ostringstream out;
  out << "l,hits,samples,p_hat,ci_low,ci_high\n";
  for (const auto& row : r.rows) {
    out << row.l << ',' << row.hits << ',' << row.samples << ',' << format_double(row.p_hat) << ','
        << format_double(row.ci_low) << ',' << format_double(row.ci_high) << '\n';
  }
  return out.str();
}

}  // namespace sapx
