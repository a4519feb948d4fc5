#include <gtest/gtest.h>

#include <set>

#include "hyperop/toy.hpp"
#include "test_util.hpp"

using namespace hyperop;
using namespace hyperop::toy;

namespace {
const Enumeration& enumeration(Regime r) {
  static const Enumeration lin = enumerate_absorbing(Regime::linear);
  static const Enumeration nonlin = enumerate_absorbing(Regime::nonlinear);
  return r == Regime::linear ? lin : nonlin;
}

// Absorption under the alternative reading where the current workplace stays
// in both candidate sets: a state is stuck iff no vertex can flip and no
// vertex can reach a workplace other than its own.
bool stuck_with_self_moves(ToyCode code, const ModelParams& p) {
  int hh_a[2] = {0, 0}, wp_a[2] = {0, 0}, wp_size[2] = {0, 0};
  for (int v = 0; v < 10; ++v) {
    const bool a = !((code >> v) & 1u);
    const int w = (code >> (10 + v)) & 1u;
    ++wp_size[w];
    if (a) {
      ++hh_a[v / 5];
      ++wp_a[w];
    }
  }
  for (int v = 0; v < 10; ++v) {
    const bool a = !((code >> v) & 1u);
    const int w = (code >> (10 + v)) & 1u;
    const int same_h = a ? hh_a[v / 5] : 5 - hh_a[v / 5];
    const int same_w = a ? wp_a[w] : wp_size[w] - wp_a[w];
    const double hv = same_h / 5.0, wv = static_cast<double>(same_w) / wp_size[w];
    if ((hv + p.lambda * wv) / (1 + p.lambda) < p.r1 - 1e-12) return false;
    if (wv < p.r2 - 1e-12) {
      const int other = 1 - w;
      const int same_other = a ? wp_a[other] : wp_size[other] - wp_a[other];
      const bool own_major = 2 * same_w > wp_size[w];
      const bool other_major = 2 * same_other > wp_size[other];
      // Primary set {own?, other?}; empty primary falls back to {0, 1}.
      const bool can_leave = other_major || !own_major;
      if (can_leave) return false;
    }
  }
  return true;
}
}  // namespace

TEST(ToyEncoding, RoundTrip) {
  for (ToyCode c : {0u, 1u, 0x12345u, kNumStates - 1, 0xABCDEu}) EXPECT_EQ(encode(decode(c)), c);
  // Relabelling inside a household keeps the structure.
  EXPECT_EQ(structural_key(encode(testutil::toy_state_e())),
            structural_key(encode(testutil::make_state("BABBAAABBB", "1011000111", 2))));
  const auto [ops, wps] = render(encode(testutil::toy_state_e()));
  EXPECT_EQ(ops, "AABBBAABBB");
  EXPECT_EQ(wps, "0011100111");
}

TEST(ToyCanonical, Invariances) {
  Rng rng = make_rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto c = static_cast<ToyCode>(uniform_index(rng, kNumStates));
    const auto k = canonical_class(c);
    EXPECT_EQ(canonical_class(swap_opinions(c)), k);
    EXPECT_EQ(canonical_class(swap_workplaces(c)), k);
    EXPECT_EQ(canonical_class(swap_households(c)), k);
    EXPECT_EQ(swap_households(swap_households(c)), c);
    EXPECT_LE(k, c);
    EXPECT_EQ(classify(c), classify(k));
  }
}

TEST(ToyEnumeration, LinearIsFullyHomogeneous) {
  const auto& e = enumeration(Regime::linear);
  EXPECT_EQ(e.raw_total, 2052u);
  EXPECT_EQ(e.classes.size(), 273u);
  EXPECT_EQ(e.structural_total, 13u);
  EXPECT_EQ(e.family_raw.at(Family::a), 2048u);  // 2 opinions x 2^10 workplace layouts
  EXPECT_EQ(e.family_raw.at(Family::b), 4u);
  EXPECT_EQ(e.family_classes.size(), 2u);
  EXPECT_EQ(e.family_classes.at(Family::b), 1u);
  EXPECT_EQ(e.family_structural.at(Family::a), 12u);  // workplace-0 members per household (k0, k1) up to symmetry
}

TEST(ToyEnumeration, NonlinearFamilies) {
  const auto& e = enumeration(Regime::nonlinear);
  EXPECT_EQ(e.raw_total, 4316u);
  EXPECT_EQ(e.classes.size(), 574u);
  EXPECT_EQ(e.structural_total, 21u);
  for (auto f : {Family::a, Family::b, Family::c, Family::d, Family::e, Family::f, Family::g, Family::h})
    EXPECT_TRUE(e.family_classes.contains(f)) << label(f);
  EXPECT_FALSE(e.family_classes.contains(Family::other));
  EXPECT_EQ(e.family_raw.at(Family::empty_workplace), 4u);
  EXPECT_EQ(e.family_raw.at(Family::mixed_household_balanced_wp), 800u);
  EXPECT_EQ(e.family_structural.at(Family::empty_workplace), 1u);
  EXPECT_EQ(e.family_structural.at(Family::mixed_household_balanced_wp), 1u);
  for (const auto& c : e.classes) {
    EXPECT_EQ(c.reachable, !has_empty_workplace(c.key));
    if (c.family == Family::empty_workplace) EXPECT_FALSE(c.reachable);
  }
}

TEST(ToyEnumeration, PartitionsExactlyTheAbsorbingSet) {
  for (Regime r : {Regime::linear, Regime::nonlinear}) {
    const auto p = toy_params(r, 0.5, 0.5);
    const auto& e = enumeration(r);
    std::map<ToyCode, std::size_t> class_raw;
    for (const auto& c : e.classes) class_raw[c.key] = c.raw_count;
    std::map<ToyCode, std::size_t> seen;
    for (ToyCode c = 0; c < kNumStates; ++c)
      if (is_absorbing(decode(c), p)) ++seen[canonical_class(c)];
    EXPECT_EQ(seen, class_raw);
  }
}

TEST(ToyEnumeration, LinearSubsetOfNonlinear) {
  const auto lin = toy_params(Regime::linear, 0.5, 0.5), nonlin = toy_params(Regime::nonlinear, 0.5, 0.5);
  for (ToyCode c = 0; c < kNumStates; ++c) {
    const auto s = decode(c);
    if (is_absorbing(s, lin)) ASSERT_TRUE(is_absorbing(s, nonlin)) << c;
  }
}

TEST(ToyEnumeration, DistinctFamiliesHaveDistinctKeys) {
  const auto& e = enumeration(Regime::nonlinear);
  std::set<ToyCode> keys;
  for (const auto& c : e.classes) EXPECT_TRUE(keys.insert(c.key).second);
  for (const auto& x : e.classes)
    for (const auto& y : e.classes)
      if (x.family != y.family) EXPECT_NE(x.key, y.key);
}

TEST(ToyEnumeration, SelfMoveReadingChangesNoAbsorbingClass) {
  for (Regime r : {Regime::linear, Regime::nonlinear}) {
    const auto p = toy_params(r, 0.5, 0.5);
    for (ToyCode c = 0; c < kNumStates; ++c) ASSERT_EQ(stuck_with_self_moves(c, p), is_absorbing(decode(c), p)) << c;
  }
}

TEST(ToyEnumeration, FixpointProperty) {
  for (Regime r : {Regime::linear, Regime::nonlinear}) {
    const auto p = toy_params(r, 0.7, 0.3);
    for (const auto& cls : enumeration(r).classes) {
      const auto s = decode(cls.key);
      for (std::size_t v = 0; v < kVertices; ++v) {
        EXPECT_EQ(flip_probability(s, p, v), 0.0);
        EXPECT_EQ(move_probability(s, p, v), 0.0);
      }
    }
  }
}

TEST(ToyClassify, FigureStates) {
  EXPECT_EQ(classify(encode(testutil::toy_state_b())), Family::b);
  EXPECT_EQ(classify(encode(testutil::toy_state_e())), Family::e);
  EXPECT_EQ(classify(encode(testutil::toy_state_a())), Family::a);
}

TEST(ToyRates, LinearNoMovesEndsHomogeneous) {
  const auto r = absorption_rates(toy_params(Regime::linear, 0.9, 0.0), 2000, 3, 1'000'000);
  EXPECT_EQ(r.non_absorbed, 0u);
  EXPECT_GT(r.rate(Family::a), 0.97);
}

TEST(ToyRates, RatesSumToOne) {
  const auto r = absorption_rates(toy_params(Regime::nonlinear, 0.5, 0.5), 500, 4, 1'000'000);
  double total = r.non_absorbed_fraction();
  for (auto f : kAllFamilies) total += r.rate(f);
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(r.rate(Family::empty_workplace), 0.0);
}

TEST(ToyRates, SeedInvariantWithinSamplingError) {
  const auto p = toy_params(Regime::nonlinear, 0.5, 0.5);
  const auto x = absorption_rates(p, 3000, 1, 1'000'000), y = absorption_rates(p, 3000, 2, 1'000'000);
  const double rx = x.rate_where(is_mixed_household_family), ry = y.rate_where(is_mixed_household_family);
  const double pooled = (rx + ry) / 2;
  const double se = std::sqrt(2 * pooled * (1 - pooled) / 3000);
  EXPECT_NEAR(rx, ry, 4 * se);
}

TEST(ToyRates, RejectsWrongGeometry) {
  EXPECT_THROW(absorption_rates(ModelParams::for_regime(Regime::linear, 0.5, 0.5, 20), 10, 1, 100),
               std::invalid_argument);
}
