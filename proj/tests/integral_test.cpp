#include "sapx/integral.hpp"

#include <gtest/gtest.h>

namespace sapx {
namespace {

TEST(Integral, RationalReduction) {
  RatMatrix2 m{BigRational(1), BigRational(1, 2), BigRational(0), BigRational(1)};
  EXPECT_EQ(reduce(m, 5), make_sl2(5, 1, 3, 0, 1));
  EXPECT_THROW(reduce(m, 4), std::domain_error);
  EXPECT_EQ(reduce(m, 1), identity(1));
}

TEST(Integral, ReduceTowerAndHomomorphism) {
  IntMatrix2 x{BigInt(2), BigInt(3), BigInt(5), BigInt(8)};    // det 1
  IntMatrix2 y{BigInt(7), BigInt(-3), BigInt(-2), BigInt(1)};  // det 1
  for (u64 q : {2u, 6u, 12u, 35u, 1000003u}) {
    EXPECT_EQ(reduce(x * y, q), reduce(x, q) * reduce(y, q));
    for (const auto& d : divisors(FactoredModulus(q))) {
      EXPECT_EQ(reduce(reduce(x, q), d.value()), reduce(x, d.value()));
    }
  }
  IntPair g{x, y};
  EXPECT_EQ(reduce(g, 4, 9).left, reduce(x, 4));
  EXPECT_TRUE(is_identity(reduce(g, 1, 1)));
}

TEST(Integral, ParseGeneratorsValidates) {
  auto ok = nlohmann::json::parse(R"([
      [[["1","1"],["0","1"]], [["1","0"],["1","1"]]],
      [[["1","-1"],["0","1"]], [["1","0"],["-1","1"]]]
  ])");
  auto s = parse_generators(ok);
  EXPECT_EQ(s.sides, 2);
  EXPECT_EQ(s.elements.size(), 2u);

  auto asym = nlohmann::json::parse(R"([ [[["1","1"],["0","1"]], [["1","0"],["1","1"]]] ])");
  EXPECT_THROW(parse_generators(asym), std::invalid_argument);

  auto baddet = nlohmann::json::parse(R"([ [["2","0"],["0","1"]], [["1/2","0"],["0","1"]] ])");
  EXPECT_THROW(parse_generators(baddet), std::invalid_argument);

  auto single = nlohmann::json::parse(R"([ [["1","1/2"],["0","1"]], [["1","-1/2"],["0","1"]] ])");
  auto t = parse_generators(single);
  EXPECT_EQ(t.sides, 1);
  EXPECT_FALSE(t.integral());
  EXPECT_EQ(t.reduce_left(5)[0], make_sl2(5, 1, 3, 0, 1));
  EXPECT_THROW(t.reduce_left(4), std::domain_error);
}

TEST(Integral, JsonRoundTrip) {
  auto s = standard_pair_generators();
  auto back = parse_generators(to_json(s));
  EXPECT_EQ(back.elements, s.elements);
  EXPECT_TRUE(s.integral());
}

}  // namespace
}  // namespace sapx
