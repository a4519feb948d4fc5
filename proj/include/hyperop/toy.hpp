#pragma once

// Exhaustive analysis of the 10-vertex toy model: two households {0..4},
// {5..9} and two workplaces. A state packs into 20 bits: bit v (v < 10) is 1
// when vertex v holds B, bit 10+v is vertex v's workplace.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hyperop/model.hpp"
#include "hyperop/rng.hpp"

namespace hyperop::toy {

using ToyCode = std::uint32_t;

inline constexpr std::size_t kVertices = 10;
inline constexpr std::size_t kHouseholdSize = 5;
inline constexpr ToyCode kNumStates = ToyCode{1} << (2 * kVertices);
inline constexpr ToyCode kOpinionMask = (ToyCode{1} << kVertices) - 1;
inline constexpr ToyCode kWorkplaceMask = kOpinionMask << kVertices;

inline ModelParams toy_params(Regime regime, double beta, double q, double lambda = 0.5) {
  ModelParams p = ModelParams::for_regime(regime, beta, q, kVertices, kHouseholdSize);
  p.lambda = lambda;
  return p;
}

inline SimState decode(ToyCode code) {
  std::vector<Opinion> opinions(kVertices);
  std::vector<std::uint32_t> workplaces(kVertices);
  for (std::size_t v = 0; v < kVertices; ++v) {
    opinions[v] = (code >> v) & 1u ? Opinion::B : Opinion::A;
    workplaces[v] = (code >> (kVertices + v)) & 1u;
  }
  return SimState(kHouseholdSize, 2, std::move(opinions), std::move(workplaces));
}

inline ToyCode encode(const SimState& s) {
  if (s.n() != kVertices || s.household_size() != kHouseholdSize || s.num_workplaces() != 2)
    throw std::invalid_argument("not a toy-geometry state");
  ToyCode code = 0;
  for (std::size_t v = 0; v < kVertices; ++v) {
    if (s.opinion(v) == Opinion::B) code |= ToyCode{1} << v;
    if (s.workplace_of(v) == 1) code |= ToyCode{1} << (kVertices + v);
  }
  return code;
}

constexpr ToyCode swap_opinions(ToyCode c) noexcept { return c ^ kOpinionMask; }
constexpr ToyCode swap_workplaces(ToyCode c) noexcept { return c ^ kWorkplaceMask; }

/// Exchanges the two households, relabelling vertex v <-> v+5 in both halves.
constexpr ToyCode swap_households(ToyCode c) noexcept {
  constexpr ToyCode lo = 0b11111u | (0b11111u << 10);
  constexpr ToyCode hi = lo << 5;
  return ((c & lo) << 5) | ((c & hi) >> 5);
}

/// Smallest code in the orbit under opinion swap x household swap x workplace swap.
constexpr ToyCode canonical_class(ToyCode c) noexcept {
  ToyCode best = c;
  for (int mask = 1; mask < 8; ++mask) {
    ToyCode x = c;
    if (mask & 1) x = swap_opinions(x);
    if (mask & 2) x = swap_households(x);
    if (mask & 4) x = swap_workplaces(x);
    best = x < best ? x : best;
  }
  return best;
}

/// Key of the household x opinion x workplace contingency table, minimised
/// over the same 8 symmetries. Coarser than canonical_class: it also merges
/// states that differ by relabelling vertices inside a household.
constexpr std::uint32_t structural_key(ToyCode c) noexcept {
  std::uint32_t table[2][2][2] = {};  // [household][opinion][workplace]
  for (std::size_t v = 0; v < kVertices; ++v)
    ++table[v / kHouseholdSize][(c >> v) & 1u][(c >> (kVertices + v)) & 1u];
  std::uint32_t best = ~std::uint32_t{0};
  for (int mask = 0; mask < 8; ++mask) {
    std::uint32_t key = 0;
    for (int h = 0; h < 2; ++h)
      for (int o = 0; o < 2; ++o)
        for (int w = 0; w < 2; ++w)
          key = key * 6 + table[h ^ ((mask >> 1) & 1)][o ^ (mask & 1)][w ^ ((mask >> 2) & 1)];
    best = key < best ? key : best;
  }
  return best;
}

/// Structural families of absorbing states. a..h follow the usual drawing of
/// the toy example; the last three cover what the enumeration finds beyond it.
enum class Family : std::uint8_t {
  a,  // a single opinion everywhere, any workplace layout
  b,  // opposite homogeneous households, homogeneous aligned workplaces
  c,  // opposite homogeneous households, balanced workplaces 3+3 / 2+2
  d,  // opposite homogeneous households, balanced workplaces 4+4 / 1+1
  e,  // homogeneous workplaces, households split 2/3 and 2/3 the same way
  f,  // homogeneous workplaces, households split 2/3 in opposite ways
  g,  // homogeneous workplaces, one homogeneous household, other holds 2 of its opinion
  h,  // homogeneous workplaces, one homogeneous household, other holds 3 of its opinion
  empty_workplace,             // opposite homogeneous households sharing one workplace
  mixed_household_balanced_wp, // a mixed household next to a balanced workplace
  other,
};

inline constexpr std::array kAllFamilies{Family::a, Family::b, Family::c, Family::d, Family::e, Family::f,
                                         Family::g, Family::h, Family::empty_workplace,
                                         Family::mixed_household_balanced_wp, Family::other};

inline const char* label(Family f) noexcept {
  switch (f) {
    case Family::a: return "a";
    case Family::b: return "b";
    case Family::c: return "c";
    case Family::d: return "d";
    case Family::e: return "e";
    case Family::f: return "f";
    case Family::g: return "g";
    case Family::h: return "h";
    case Family::empty_workplace: return "empty-wp";
    case Family::mixed_household_balanced_wp: return "mixed-hh-balanced-wp";
    case Family::other: return "other";
  }
  return "?";
}

/// Families a..h: the eight drawn structures.
constexpr bool is_drawn_family(Family f) noexcept { return static_cast<int>(f) <= static_cast<int>(Family::h); }
/// Opposite homogeneous households with some mixing through workplaces (b, c, d).
constexpr bool is_split_household_family(Family f) noexcept {
  return f == Family::b || f == Family::c || f == Family::d;
}
/// Homogeneous workplaces over mixed households (e, f, g, h).
constexpr bool is_mixed_household_family(Family f) noexcept {
  return f == Family::e || f == Family::f || f == Family::g || f == Family::h;
}

/// Classifies a state by its household x opinion x workplace contingency
/// table. Invariant under all vertex relabellings inside a household.
inline Family classify(ToyCode code) {
  std::array<std::array<int, 2>, 2> hh{};  // [household][opinion]
  std::array<std::array<int, 2>, 2> wp{};  // [workplace][opinion]
  for (std::size_t v = 0; v < kVertices; ++v) {
    const int o = (code >> v) & 1u;
    const int w = (code >> (kVertices + v)) & 1u;
    ++hh[v / kHouseholdSize][o];
    ++wp[w][o];
  }
  const int total_b = hh[0][1] + hh[1][1];
  if (total_b == 0 || total_b == static_cast<int>(kVertices)) return Family::a;

  auto homogeneous = [](const std::array<int, 2>& g) { return g[0] == 0 || g[1] == 0; };
  auto balanced = [](const std::array<int, 2>& g) { return g[0] == g[1]; };
  const bool households_split = homogeneous(hh[0]) && homogeneous(hh[1]);
  const bool wp_homogeneous = homogeneous(wp[0]) && homogeneous(wp[1]);

  if (households_split) {  // both opinions present, so the households disagree
    if (wp_homogeneous) return Family::b;
    if (balanced(wp[0]) && balanced(wp[1])) {
      const int smaller = std::min(wp[0][0], wp[1][0]);
      if (smaller == 0) return Family::empty_workplace;
      if (smaller == 1) return Family::d;
      return Family::c;
    }
    return Family::other;
  }
  if (wp_homogeneous) {
    const int x0 = hh[0][0], x1 = hh[1][0];  // A-members per household
    auto full = [](int x) { return x == 0 || x == static_cast<int>(kHouseholdSize); };
    auto split = [](int x) { return x == 2 || x == 3; };
    if (split(x0) && split(x1)) return x0 == x1 ? Family::e : Family::f;
    if (full(x0) != full(x1)) {
      const int homo = full(x0) ? x0 : x1;
      const int mixed = full(x0) ? x1 : x0;
      const int share = homo == 0 ? static_cast<int>(kHouseholdSize) - mixed : mixed;
      if (share == 2) return Family::g;
      if (share == 3) return Family::h;
    }
    return Family::other;
  }
  const bool one_balanced_one_homogeneous = (balanced(wp[0]) && homogeneous(wp[1])) ||
                                            (balanced(wp[1]) && homogeneous(wp[0]));
  if (one_balanced_one_homogeneous) return Family::mixed_household_balanced_wp;
  return Family::other;
}

/// Two 10-character lines: opinions (A/B) and workplaces (0/1).
inline std::pair<std::string, std::string> render(ToyCode code) {
  std::string ops(kVertices, 'A'), wps(kVertices, '0');
  for (std::size_t v = 0; v < kVertices; ++v) {
    if ((code >> v) & 1u) ops[v] = 'B';
    if ((code >> (kVertices + v)) & 1u) wps[v] = '1';
  }
  return {ops, wps};
}

/// A workplace with no members; such states are never reached by the dynamics
/// from a balanced start.
inline bool has_empty_workplace(ToyCode code) {
  const ToyCode w = (code & kWorkplaceMask) >> kVertices;
  return w == 0 || w == kOpinionMask;
}

struct AbsorbingClass {
  ToyCode key{0};  // canonical code, also the representative
  Family family{Family::other};
  std::size_t raw_count{0};
  bool reachable{true};
};

struct Enumeration {
  std::vector<AbsorbingClass> classes;  // ordered by family, then key
  std::size_t raw_total{0};
  std::size_t structural_total{0};      // distinct structural_key values
  std::map<Family, std::size_t> family_structural;
  std::map<Family, std::size_t> family_classes;
  std::map<Family, std::size_t> family_raw;
};

/// Sweeps all 2^20 toy states and groups the absorbing ones (with the
/// workplace condition active) by canonical class and by structure.
inline Enumeration enumerate_absorbing(Regime regime, double lambda = 0.5) {
  const ModelParams p = toy_params(regime, 0.5, 0.5, lambda);
  std::map<ToyCode, std::size_t> counts;
  std::map<std::uint32_t, Family> structures;
  std::size_t raw = 0;
  for (ToyCode c = 0; c < kNumStates; ++c) {
    if (is_absorbing(decode(c), p)) {
      ++counts[canonical_class(c)];
      structures.emplace(structural_key(c), classify(c));
      ++raw;
    }
  }
  Enumeration out;
  out.raw_total = raw;
  out.structural_total = structures.size();
  for (const auto& [key, f] : structures) ++out.family_structural[f];
  for (const auto& [key, count] : counts) {
    const Family f = classify(key);
    out.classes.push_back({key, f, count, !has_empty_workplace(key)});
    ++out.family_classes[f];
    out.family_raw[f] += count;
  }
  std::stable_sort(out.classes.begin(), out.classes.end(),
                   [](const AbsorbingClass& x, const AbsorbingClass& y) { return x.family < y.family; });
  return out;
}

struct ToyRates {
  std::size_t runs{0};
  std::size_t non_absorbed{0};
  std::map<Family, std::size_t> family_counts;
  std::map<ToyCode, std::size_t> class_counts;  // canonical key -> runs
  double mean_absorption_step{0.0};             // over absorbed runs

  double rate(Family f) const {
    const auto it = family_counts.find(f);
    return it == family_counts.end() || runs == 0 ? 0.0 : static_cast<double>(it->second) / runs;
  }
  template <class Pred>
  double rate_where(Pred pred) const {
    std::size_t k = 0;
    for (const auto& [f, c] : family_counts)
      if (pred(f)) k += c;
    return runs == 0 ? 0.0 : static_cast<double>(k) / runs;
  }
  double non_absorbed_fraction() const { return runs == 0 ? 0.0 : static_cast<double>(non_absorbed) / runs; }
};

/// Outcome of one toy run.
struct ToyRun {
  ToyCode final_state{0};
  bool absorbed{false};
  std::uint64_t steps{0};
};

/// Runs from a fresh 5-A start until absorption or step_cap micro-steps.
/// The initial state uses derive_seed(seed, {0}), the dynamics derive_seed(seed, {1}).
inline ToyRun run_toy(const ModelParams& p, std::uint64_t seed, std::uint64_t step_cap) {
  SimState s = build_initial_state(p, kVertices / 2, derive_seed(seed, {0}));
  Rng rng = make_rng(derive_seed(seed, {1}));
  ToyRun out;
  out.absorbed = is_absorbing(s, p);
  while (!out.absorbed && out.steps < step_cap) {
    const auto step = micro_step(s, p, rng);
    ++out.steps;
    if (step.kind != StepKind::no_change) out.absorbed = is_absorbing(s, p);
  }
  out.final_state = encode(s);
  return out;
}

/// Monte-Carlo absorption rates per family; run r uses derive_seed(seed, {r}).
inline ToyRates absorption_rates(const ModelParams& p, std::size_t num_runs, std::uint64_t seed,
                                 std::uint64_t step_cap) {
  if (p.n != kVertices || p.household_size != kHouseholdSize || p.num_workplaces != 2)
    throw std::invalid_argument("absorption_rates needs the toy geometry (n=10, 2 households, 2 workplaces)");
  if (num_runs == 0) throw std::invalid_argument("num_runs must be positive");
  ToyRates out;
  out.runs = num_runs;
  double step_sum = 0;
  for (std::size_t r = 0; r < num_runs; ++r) {
    const ToyRun run = run_toy(p, derive_seed(seed, {r}), step_cap);
    if (!run.absorbed) {
      ++out.non_absorbed;
      continue;
    }
    step_sum += static_cast<double>(run.steps);
    ++out.family_counts[classify(run.final_state)];
    ++out.class_counts[canonical_class(run.final_state)];
  }
  const auto absorbed = num_runs - out.non_absorbed;
  if (absorbed) out.mean_absorption_step = step_sum / static_cast<double>(absorbed);
  return out;
}

}  // namespace hyperop::toy
