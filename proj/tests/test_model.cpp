#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>

#include "hyperop/model.hpp"
#include "hyperop/statistics.hpp"
#include "test_util.hpp"

using namespace hyperop;
using testutil::make_state;

TEST(InitialState, AllAToyGeometry) {
  const auto p = ModelParams::for_regime(Regime::linear, 0.5, 0.5, 10);
  const auto s = build_initial_state(p, 10, 7);
  EXPECT_EQ(s.num_a(), 10u);
  ASSERT_EQ(s.num_workplaces(), 2u);
  EXPECT_EQ(s.workplace_size(0), 5u);
  EXPECT_EQ(s.workplace_size(1), 5u);
}

TEST(InitialState, PaperScaleBalanced) {
  const auto p = ModelParams::for_regime(Regime::linear, 0.5, 0.5);
  const auto s = build_initial_state(p, 500, 42);
  EXPECT_EQ(s.num_households(), 200u);
  EXPECT_EQ(s.num_workplaces(), 200u);
  EXPECT_EQ(s.num_a(), 500u);
  for (std::size_t w = 0; w < s.num_workplaces(); ++w) EXPECT_EQ(s.workplace_size(w), 5u);
}

TEST(InitialState, DeterministicInSeed) {
  const auto p = ModelParams::for_regime(Regime::nonlinear, 0.3, 0.7, 200);
  EXPECT_EQ(build_initial_state(p, 100, 9), build_initial_state(p, 100, 9));
  EXPECT_NE(build_initial_state(p, 100, 9), build_initial_state(p, 100, 10));
}

TEST(InitialState, RejectsBadInput) {
  auto p = ModelParams::for_regime(Regime::linear, 0.5, 0.5, 10);
  EXPECT_THROW(build_initial_state(p, 11, 1), std::invalid_argument);
  p.n = 12;
  EXPECT_THROW(build_initial_state(p, 5, 1), std::invalid_argument);
  p = ModelParams::for_regime(Regime::linear, 0.5, 0.5, 10);
  p.num_workplaces = 3;
  EXPECT_THROW(build_initial_state(p, 5, 1), std::invalid_argument);
}

TEST(Params, Validation) {
  auto p = ModelParams::for_regime(Regime::linear, 0.0, 0.5, 10);
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.beta = 0.5;
  p.lambda = 0.0;
  EXPECT_NO_THROW(p.validate());
  p.q = 1.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(GroupProportion, LoneMemberCountsItself) {
  const auto s = make_state("ABBBBAAAAA", "0000011111", 2);
  EXPECT_DOUBLE_EQ(group_proportion(s, 0).household, 0.2);
}

TEST(GroupProportion, FigureStateE) {
  const auto s = testutil::toy_state_e();
  const auto blue = group_proportion(s, 0);
  EXPECT_DOUBLE_EQ(blue.household, 0.4);
  EXPECT_DOUBLE_EQ(blue.workplace, 1.0);
  const auto red = group_proportion(s, 2);
  EXPECT_DOUBLE_EQ(red.household, 0.6);
  EXPECT_DOUBLE_EQ(red.workplace, 1.0);
}

TEST(GroupProportion, Homogeneous) {
  const auto g = group_proportion(testutil::toy_state_b(), 3);
  EXPECT_DOUBLE_EQ(g.household, 1.0);
  EXPECT_DOUBLE_EQ(g.workplace, 1.0);
}

TEST(WeightedAverage, CaptionValues) {
  EXPECT_NEAR(weighted_average(0.4, 1.0, 0.5), 0.6, 1e-15);
  EXPECT_NEAR(weighted_average(0.6, 1.0, 0.5), 0.7333333333333333, 1e-15);
  EXPECT_DOUBLE_EQ(weighted_average(1.0, 1.0, 0.3), 1.0);
}

TEST(CandidateWorkplaces, MajorityOnly) {
  // v0 (A) in workplace 0; workplace 1 = {5,6} all A; workplace 2 = {7,8,9} all B.
  const auto s = make_state("ABBBBAABBB", "0000011222", 3);
  EXPECT_EQ(candidate_workplaces(s, 0), (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(candidate_workplaces(s, 1), (std::vector<std::uint32_t>{2}));
}

TEST(CandidateWorkplaces, OwnWorkplaceExcluded) {
  // v0 sits in a 4/5 A workplace; the only other workplace is all B.
  const auto s = make_state("AAAABBBBBB", "0000011111", 2);
  EXPECT_EQ(candidate_workplaces(s, 0), (std::vector<std::uint32_t>{1}));  // fallback, still not 0
}

TEST(CandidateWorkplaces, TieIsNotMajority) {
  // Workplace 1 = {4,5,6,7}: 2 A and 2 B. Workplace 2 = {8,9}: B.
  const auto s = make_state("AAAAABABBB", "0000111122", 3, 5);
  EXPECT_EQ(candidate_workplaces(s, 0), (std::vector<std::uint32_t>{1, 2}));  // fallback: neither qualifies
  const auto t = make_state("AAAAABABBA", "0000111122", 3, 5);
  // Workplace 2 = {8 (B), 9 (A)} is tied too; workplace 1 still tied.
  EXPECT_EQ(candidate_workplaces(t, 0), (std::vector<std::uint32_t>{1, 2}));
  const auto u = make_state("AAAAABAABB", "0000111122", 3, 5);
  // Workplace 1 now 3 A of 4.
  EXPECT_EQ(candidate_workplaces(u, 0), (std::vector<std::uint32_t>{1}));
}

TEST(CandidateWorkplaces, SingleWorkplaceIsEmpty) {
  const auto s = make_state("AABBB", "00000", 1);
  EXPECT_TRUE(candidate_workplaces(s, 0).empty());
}

TEST(MicroStep, AbsorbingVertexNeverChanges) {
  const auto p = ModelParams::for_regime(Regime::linear, 1.0, 1.0, 10);
  auto s = testutil::toy_state_b();
  const auto before = s;
  Rng rng = make_rng(5);
  for (int i = 0; i < 10000; ++i) EXPECT_EQ(micro_step(s, p, rng).kind, StepKind::no_change);
  EXPECT_EQ(s, before);
}

namespace {
// Empirical P(flip | v chosen) and P(move | v chosen, no flip) over `trials`
// selections of v; the state is restored after every step.
struct Frequencies {
  double flip, move;
  std::size_t chosen, not_flipped;
};

Frequencies measure(const SimState& start, const ModelParams& p, std::size_t v, std::size_t trials, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::size_t chosen = 0, flips = 0, moves = 0;
  SimState s = start;
  while (chosen < trials) {
    const auto out = micro_step(s, p, rng);
    if (out.vertex == v) {
      ++chosen;
      if (out.kind == StepKind::opinion_flipped) ++flips;
      if (out.kind == StepKind::moved_workplace) ++moves;
    }
    if (out.kind == StepKind::opinion_flipped) s.flip(out.vertex);
    if (out.kind == StepKind::moved_workplace) s.move(out.vertex, out.from);
  }
  EXPECT_EQ(s, start);
  return {static_cast<double>(flips) / chosen, static_cast<double>(moves) / (chosen - flips), chosen, chosen - flips};
}

double binomial_se(double p, std::size_t n) { return std::sqrt(p * (1 - p) / static_cast<double>(n)); }
}  // namespace

TEST(MicroStep, NonlinearFlipFrequency) {
  // v0 is alone in its household (h = 0.2) and shares a size-2 workplace
  // with one B (w = 0.5): a = (0.2 + 0.25) / 1.5 = 0.3, flip prob 1 * (0.5 - 0.3).
  auto p = ModelParams::for_regime(Regime::nonlinear, 1.0, 0.5, 10);
  p.num_workplaces = 5;
  const auto t = make_state("ABBBBAAAAA", "0012233444", 5);
  ASSERT_NEAR(weighted_average(group_proportion(t, 0).household, group_proportion(t, 0).workplace, p.lambda), 0.3,
              1e-12);
  EXPECT_NEAR(flip_probability(t, p, 0), 0.2, 1e-12);
  const auto f = measure(t, p, 0, 100000, 11);
  EXPECT_NEAR(f.flip, 0.2, 3 * binomial_se(0.2, f.chosen));
}

TEST(MicroStep, LinearMoveFrequency) {
  // v0's workplace {0,1,2,5,6} holds three A: w = 0.6, move prob 0.5 * 0.4.
  auto p = ModelParams::for_regime(Regime::linear, 0.05, 0.5, 10);
  const auto s = make_state("AAABBBBBBB", "0001100111", 2);
  ASSERT_DOUBLE_EQ(group_proportion(s, 0).workplace, 0.6);
  EXPECT_NEAR(move_probability(s, p, 0), 0.2, 1e-12);
  const auto f = measure(s, p, 0, 100000, 12);
  EXPECT_NEAR(f.move, 0.2, 3 * binomial_se(0.2, f.not_flipped));
  EXPECT_NEAR(f.flip, flip_probability(s, p, 0), 3 * binomial_se(flip_probability(s, p, 0), f.chosen));
}

TEST(MicroStep, MoveTargetsAreMajorityWorkplaces) {
  // A-vertex 0 in a mostly-B workplace; only workplace 1 has an A majority.
  const auto start = make_state("ABBBBAAABBAABBB", "000001112233333", 4);
  auto p = ModelParams::for_regime(Regime::linear, 0.01, 1.0, 15);
  p.num_workplaces = 4;
  Rng rng = make_rng(3);
  std::map<std::uint32_t, int> seen;
  SimState s = start;
  for (int i = 0; i < 200000; ++i) {
    const auto out = micro_step(s, p, rng);
    if (out.kind == StepKind::moved_workplace && out.vertex == 0) ++seen[out.to];
    if (out.kind == StepKind::opinion_flipped) s.flip(out.vertex);
    if (out.kind == StepKind::moved_workplace) s.move(out.vertex, out.from);
  }
  const auto cand = candidate_workplaces(start, 0);
  ASSERT_EQ(cand, (std::vector<std::uint32_t>{1}));
  ASSERT_FALSE(seen.empty());
  for (const auto& [w, c] : seen) EXPECT_EQ(w, 1u);
}

TEST(MicroStep, FallbackIsUniformOverOthers) {
  // Vertex 0 (A) with every other workplace all B: the move is uniform over 1..3.
  const auto start = make_state("ABBBBBBBBBBBBBB", "000111222333000", 4);
  auto p = ModelParams::for_regime(Regime::linear, 0.01, 1.0, 15);
  p.num_workplaces = 4;
  Rng rng = make_rng(4);
  std::array<int, 4> seen{};
  int total = 0;
  SimState s = start;
  for (int i = 0; i < 300000; ++i) {
    const auto out = micro_step(s, p, rng);
    if (out.kind == StepKind::moved_workplace && out.vertex == 0) {
      ++seen[out.to];
      ++total;
    }
    if (out.kind == StepKind::opinion_flipped) s.flip(out.vertex);
    if (out.kind == StepKind::moved_workplace) s.move(out.vertex, out.from);
  }
  EXPECT_EQ(seen[0], 0);
  for (int w = 1; w < 4; ++w) EXPECT_NEAR(seen[w] / static_cast<double>(total), 1.0 / 3, 3 * binomial_se(1.0 / 3, total));
}

TEST(MicroStep, ConservationAndCachedCounts) {
  for (Regime r : {Regime::linear, Regime::nonlinear}) {
    const auto p = ModelParams::for_regime(r, 0.6, 0.4, 100);
    SimState s = build_initial_state(p, 50, 77);
    Rng rng = make_rng(78);
    for (int i = 0; i < 100000; ++i) {
      const auto before_a = s.num_a();
      const auto out = micro_step(s, p, rng);
      const auto diff = static_cast<long>(s.num_a()) - static_cast<long>(before_a);
      if (out.kind == StepKind::opinion_flipped)
        EXPECT_EQ(std::abs(diff), 1);
      else
        EXPECT_EQ(diff, 0);
      if (out.kind == StepKind::moved_workplace) {
        EXPECT_NE(out.from, out.to);
        EXPECT_EQ(s.workplace_of(out.vertex), out.to);
      }
    }
    EXPECT_TRUE(s.counts_consistent());
    std::size_t total = 0;
    for (std::size_t w = 0; w < s.num_workplaces(); ++w) total += s.workplace_size(w);
    EXPECT_EQ(total, 100u);
  }
}

TEST(MicroStep, SingleWorkplaceMoveIsNoChange) {
  auto p = ModelParams::for_regime(Regime::linear, 0.01, 1.0, 10);
  p.num_workplaces = 1;
  SimState s = make_state("AAAAABBBBB", "0000000000", 1);
  Rng rng = make_rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_NE(micro_step(s, p, rng).kind, StepKind::moved_workplace);
  EXPECT_TRUE(s.counts_consistent());
}

TEST(IsAbsorbing, FigureStates) {
  const auto lin = ModelParams::for_regime(Regime::linear, 0.5, 0.5, 10);
  const auto nonlin = ModelParams::for_regime(Regime::nonlinear, 0.5, 0.5, 10);
  EXPECT_TRUE(is_absorbing(testutil::toy_state_b(), lin));
  EXPECT_TRUE(is_absorbing(testutil::toy_state_b(), nonlin));
  EXPECT_TRUE(is_absorbing(testutil::toy_state_e(), nonlin));
  EXPECT_FALSE(is_absorbing(testutil::toy_state_e(), lin));
}

TEST(IsAbsorbing, DegenerateConfigurations) {
  auto p = ModelParams::for_regime(Regime::linear, 0.5, 0.5, 10);
  p.num_workplaces = 1;
  EXPECT_TRUE(is_absorbing(make_state("AAAAAAAAAA", "0000000000", 1), p));
  EXPECT_FALSE(is_absorbing(make_state("AAAAABBBBB", "0000000000", 1), p));
  // q = 0 drops the workplace clause.
  auto nl = ModelParams::for_regime(Regime::nonlinear, 0.5, 0.0, 10);
  const auto mixed = make_state("AAAAABBBBB", "0101001010", 2);
  EXPECT_TRUE(is_absorbing(mixed, nl));
  nl.q = 0.5;
  EXPECT_TRUE(is_absorbing(mixed, nl));  // balanced 3+3 / 2+2 workplaces: w = 0.5 is not below r2
}
