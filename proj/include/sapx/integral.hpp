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

// Integral and rational 2x2 matrices with exact big-number entries, their
// reductions to SL_2(Z/qZ), and generator-set files.

#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "sapx/factored.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

template <class T>
struct Mat2T {
  T a{1}, b{0}, c{0}, d{1};

  friend bool operator==(const Mat2T&, const Mat2T&) = default;
  friend bool operator<(const Mat2T& x, const Mat2T& y) {
    if (x.a != y.a) return x.a < y.a;
    if (x.b != y.b) return x.b < y.b;
    if (x.c != y.c) return x.c < y.c;
    return x.d < y.d;
  }
};

using IntMatrix2 = Mat2T<BigInt>;
using RatMatrix2 = Mat2T<BigRational>;

template <class T>
Mat2T<T> operator*(const Mat2T<T>& x, const Mat2T<T>& y) {
  return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c,
          x.c * y.b + x.d * y.d};
}

template <class T>
T det(const Mat2T<T>& x) {
  return x.a * x.d - x.b * x.c;
}

template <class T>
T trace(const Mat2T<T>& x) {
  return x.a + x.d;
}

/// Adjugate; the inverse for determinant-one matrices.
template <class T>
Mat2T<T> inverse(const Mat2T<T>& x) {
  return {x.d, T(-x.b), T(-x.c), x.a};
}

template <class T>
struct IntPairT {
  Mat2T<T> left;
  Mat2T<T> right;

  friend bool operator==(const IntPairT&, const IntPairT&) = default;
  friend bool operator<(const IntPairT& x, const IntPairT& y) {
    if (x.left == y.left) return x.right < y.right;
    return x.left < y.left;
  }
};

using IntPair = IntPairT<BigInt>;
using RatPair = IntPairT<BigRational>;

template <class T>
IntPairT<T> operator*(const IntPairT<T>& x, const IntPairT<T>& y) {
  return {x.left * y.left, x.right * y.right};
}

template <class T>
IntPairT<T> inverse(const IntPairT<T>& x) {
  return {inverse(x.left), inverse(x.right)};
}

// ---------------------------------------------------------------------------
// Reduction.

inline u64 reduce_int(const BigInt& x, u64 q) {
  BigInt r = x % q;
  if (r < 0) r += q;
  return r.convert_to<u64>();
}

/// m/n maps to m * n^{-1}; throws when gcd(n, q) > 1.
inline u64 reduce_rational(const BigRational& x, u64 q) {
  u64 num = reduce_int(boost::multiprecision::numerator(x), q);
  u64 den = reduce_int(boost::multiprecision::denominator(x), q);
  auto inv = mod_inverse(den, q);
  if (!inv) {
    throw std::domain_error("denominator " +
                            boost::multiprecision::denominator(x).str() +
                            " is not invertible mod " + std::to_string(q));
  }
  return mod_mul(num, *inv, q);
}

inline u64 reduce_entry(const BigInt& x, u64 q) { return reduce_int(x, q); }
inline u64 reduce_entry(const BigRational& x, u64 q) { return reduce_rational(x, q); }

template <class T>
SL2Residue reduce(const Mat2T<T>& x, u64 q) {
  if (q == 0) throw std::invalid_argument("modulus must be positive");
  SL2Residue r{q, reduce_entry(x.a, q), reduce_entry(x.b, q), reduce_entry(x.c, q),
               reduce_entry(x.d, q)};
  if (det_mod(q, r.a, r.b, r.c, r.d) != 1 % q) {
    throw std::invalid_argument("reduction does not have determinant 1");
  }
  return r;
}

template <class T>
PairElement reduce(const IntPairT<T>& g, u64 q1, u64 q2) {
  return {reduce(g.left, q1), reduce(g.right, q2)};
}

inline IntMatrix2 lift(const SL2Residue& x) {
  return {BigInt(x.a), BigInt(x.b), BigInt(x.c), BigInt(x.d)};
}

inline std::string to_string(const IntMatrix2& x) {
  return "[[" + x.a.str() + "," + x.b.str() + "],[" + x.c.str() + "," + x.d.str() + "]]";
}

// ---------------------------------------------------------------------------
// Generator sets.

/// A symmetric multiset of pairs of determinant-one rational matrices. Files may
/// also list single matrices; those load with an identity right component and
/// sides = 1.
struct GeneratorSet {
  int sides = 2;
  std::vector<RatPair> elements;

  std::vector<PairElement> reduce_all(u64 q1, u64 q2) const {
    std::vector<PairElement> out;
    out.reserve(elements.size());
    for (const auto& g : elements) out.push_back(reduce(g, q1, q2));
    return out;
  }

  std::vector<SL2Residue> reduce_left(u64 q) const {
    std::vector<SL2Residue> out;
    for (const auto& g : elements) out.push_back(reduce(g.left, q));
    return out;
  }

  bool integral() const {
    auto is_int = [](const BigRational& x) {
      return boost::multiprecision::denominator(x) == 1;
    };
    for (const auto& g : elements) {
      for (const auto* m : {&g.left, &g.right}) {
        if (!is_int(m->a) || !is_int(m->b) || !is_int(m->c) || !is_int(m->d)) return false;
      }
    }
    return true;
  }

  std::vector<IntPair> integral_elements() const {
    if (!integral()) throw std::domain_error("generator set has non-integral entries");
    auto cv = [](const RatMatrix2& m) {
      return IntMatrix2{boost::multiprecision::numerator(m.a),
                        boost::multiprecision::numerator(m.b),
                        boost::multiprecision::numerator(m.c),
                        boost::multiprecision::numerator(m.d)};
    };
    std::vector<IntPair> out;
    for (const auto& g : elements) out.push_back({cv(g.left), cv(g.right)});
    return out;
  }
};

inline BigRational parse_rational(const nlohmann::json& j) {
  if (j.is_number_integer()) return BigRational(j.get<i64>());
  if (!j.is_string()) throw std::invalid_argument("matrix entry must be an integer or string");
  std::string s = j.get<std::string>();
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return BigRational(BigInt(s));
    BigInt n(s.substr(0, slash)), m(s.substr(slash + 1));
    if (m == 0) throw std::invalid_argument("zero denominator in " + s);
    return BigRational(n, m);
  } catch (const std::runtime_error&) {
    throw std::invalid_argument("malformed matrix entry: " + s);
  }
}

inline RatMatrix2 parse_matrix(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_array() || !j[1].is_array() ||
      j[0].size() != 2 || j[1].size() != 2) {
    throw std::invalid_argument("matrix must be [[a,b],[c,d]]");
  }
  return {parse_rational(j[0][0]), parse_rational(j[0][1]), parse_rational(j[1][0]),
          parse_rational(j[1][1])};
}

inline std::string rational_to_string(const BigRational& x) {
  if (boost::multiprecision::denominator(x) == 1) return boost::multiprecision::numerator(x).str();
  return boost::multiprecision::numerator(x).str() + "/" +
         boost::multiprecision::denominator(x).str();
}

inline nlohmann::json matrix_to_json(const RatMatrix2& m) {
  return nlohmann::json::array({nlohmann::json::array({rational_to_string(m.a), rational_to_string(m.b)}),
                                nlohmann::json::array({rational_to_string(m.c), rational_to_string(m.d)})});
}

/// Validates determinant one and closure under inversion (as a multiset).
inline void validate(const GeneratorSet& s) {
  if (s.elements.empty()) throw std::invalid_argument("generator set is empty");
  for (const auto& g : s.elements) {
    if (det(g.left) != 1 || det(g.right) != 1) {
      throw std::invalid_argument("generator has determinant different from 1");
    }
  }
  std::vector<RatPair> sorted = s.elements, inverted;
  for (const auto& g : s.elements) inverted.push_back(inverse(g));
  std::sort(sorted.begin(), sorted.end());
  std::sort(inverted.begin(), inverted.end());
  if (sorted != inverted) throw std::invalid_argument("generator set is not closed under inverse");
}

inline GeneratorSet parse_generators(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("generator file must hold a JSON array");
  GeneratorSet s;
  bool any_single = false, any_pair = false;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2) throw std::invalid_argument("bad generator entry");
    bool is_pair = item[0].is_array() && item[0].size() == 2 && item[0][0].is_array();
    if (is_pair) {
      any_pair = true;
      s.elements.push_back({parse_matrix(item[0]), parse_matrix(item[1])});
    } else {
      any_single = true;
      s.elements.push_back({parse_matrix(item), RatMatrix2{}});
    }
  }
  if (any_single && any_pair) throw std::invalid_argument("mixed single and pair generators");
  s.sides = any_single ? 1 : 2;
  validate(s);
  return s;
}

inline GeneratorSet load_generators(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open generator file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid JSON in " + path + ": " + e.what());
  }
  return parse_generators(j);
}

inline nlohmann::json to_json(const GeneratorSet& s) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : s.elements) {
    if (s.sides == 1) {
      out.push_back(matrix_to_json(g.left));
    } else {
      out.push_back(nlohmann::json::array({matrix_to_json(g.left), matrix_to_json(g.right)}));
    }
  }
  return out;
}

/// Symmetrizes a list of pairs: each element followed by its inverse.
inline GeneratorSet symmetric_from(const std::vector<RatPair>& base, int sides = 2) {
  GeneratorSet s;
  s.sides = sides;
  for (const auto& g : base) {
    s.elements.push_back(g);
    s.elements.push_back(inverse(g));
  }
  validate(s);
  return s;
}

inline RatMatrix2 rat_matrix(i64 a, i64 b, i64 c, i64 d) {
  return {BigRational(a), BigRational(b), BigRational(c), BigRational(d)};
}

/// The Zariski-dense pair set {(u,l), (l,ul)}^{+-1} with u, l the unipotent
/// generators of SL_2(Z).
inline GeneratorSet standard_pair_generators() {
  RatMatrix2 u = rat_matrix(1, 1, 0, 1), l = rat_matrix(1, 0, 1, 1);
  return symmetric_from({{u, l}, {l, u * l}});
}

}  // namespace sapx
