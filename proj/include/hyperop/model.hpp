#pragma once

// Two-layer adaptive hypergraph: fixed households, mutable workplaces, binary
// opinions. One micro-step picks a vertex uniformly, possibly flips its opinion
// under peer pressure and otherwise possibly moves it to another workplace.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyperop/rng.hpp"

namespace hyperop {

enum class Opinion : std::uint8_t { A = 0, B = 1 };

constexpr Opinion opposite(Opinion o) noexcept { return o == Opinion::A ? Opinion::B : Opinion::A; }
constexpr char to_char(Opinion o) noexcept { return o == Opinion::A ? 'A' : 'B'; }

enum class Regime : std::uint8_t { linear = 0, nonlinear = 1 };

inline const char* to_string(Regime r) noexcept { return r == Regime::linear ? "linear" : "nonlinear"; }

inline Regime parse_regime(const std::string& s) {
  if (s == "linear") return Regime::linear;
  if (s == "nonlinear") return Regime::nonlinear;
  throw std::invalid_argument("unknown regime '" + s + "' (expected linear|nonlinear)");
}

struct ModelParams {
  double beta{0.5};    // opinion change scale
  double q{0.5};       // workplace change scale
  double r1{1.0};      // opinion change threshold
  double r2{1.0};      // workplace change threshold
  double lambda{0.5};  // workplace weight in the blended support
  std::size_t n{1000};
  std::size_t household_size{5};
  std::size_t num_workplaces{200};

  /// Linear regime uses r1 = r2 = 1, nonlinear r1 = r2 = 0.5. One workplace
  /// per household_size vertices, lambda = 0.5.
  static ModelParams for_regime(Regime regime, double beta, double q, std::size_t n = 1000,
                                std::size_t household_size = 5) {
    const double r = regime == Regime::linear ? 1.0 : 0.5;
    ModelParams p;
    p.beta = beta;
    p.q = q;
    p.r1 = r;
    p.r2 = r;
    p.n = n;
    p.household_size = household_size;
    p.num_workplaces = household_size == 0 ? 0 : n / household_size;
    return p;
  }

  std::size_t num_households() const noexcept { return n / household_size; }

  void validate() const {
    auto in = [](double x, double lo, bool lo_open, double hi) {
      return (lo_open ? x > lo : x >= lo) && x <= hi;
    };
    if (!in(beta, 0.0, true, 1.0)) throw std::invalid_argument("beta must lie in (0, 1]");
    if (!in(q, 0.0, false, 1.0)) throw std::invalid_argument("q must lie in [0, 1]");
    if (!in(r1, 0.0, true, 1.0)) throw std::invalid_argument("r1 must lie in (0, 1]");
    if (!in(r2, 0.0, true, 1.0)) throw std::invalid_argument("r2 must lie in (0, 1]");
    if (!in(lambda, 0.0, false, 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
    if (n == 0 || household_size == 0 || num_workplaces == 0)
      throw std::invalid_argument("n, household_size and num_workplaces must be positive");
    if (n % household_size != 0) throw std::invalid_argument("n must be divisible by household_size");
    if (n % num_workplaces != 0) throw std::invalid_argument("n must be divisible by num_workplaces");
  }
};

/// Opinions plus the two partitions. Households are the consecutive blocks
/// [k*household_size, (k+1)*household_size); workplaces are arbitrary and
/// change over time. Per-group counts are cached and updated incrementally.
class SimState {
 public:
  SimState(std::size_t household_size, std::size_t num_workplaces, std::vector<Opinion> opinions,
           std::vector<std::uint32_t> workplace_of)
      : household_size_(household_size),
        opinions_(std::move(opinions)),
        workplace_of_(std::move(workplace_of)),
        wp_size_(num_workplaces, 0),
        wp_count_a_(num_workplaces, 0) {
    if (household_size_ == 0 || opinions_.empty() || opinions_.size() % household_size_ != 0)
      throw std::invalid_argument("vertex count must be a positive multiple of household_size");
    if (workplace_of_.size() != opinions_.size())
      throw std::invalid_argument("workplace assignment length differs from vertex count");
    if (num_workplaces == 0) throw std::invalid_argument("need at least one workplace");
    hh_count_a_.assign(opinions_.size() / household_size_, 0);
    for (std::size_t v = 0; v < opinions_.size(); ++v) {
      const auto w = workplace_of_[v];
      if (w >= num_workplaces) throw std::invalid_argument("workplace index out of range");
      ++wp_size_[w];
      if (opinions_[v] == Opinion::A) {
        ++wp_count_a_[w];
        ++hh_count_a_[v / household_size_];
        ++num_a_;
      }
    }
  }

  std::size_t n() const noexcept { return opinions_.size(); }
  std::size_t household_size() const noexcept { return household_size_; }
  std::size_t num_households() const noexcept { return hh_count_a_.size(); }
  std::size_t num_workplaces() const noexcept { return wp_size_.size(); }
  std::size_t num_a() const noexcept { return num_a_; }

  Opinion opinion(std::size_t v) const { return opinions_.at(v); }
  std::size_t household_of(std::size_t v) const { return check(v) / household_size_; }
  std::uint32_t workplace_of(std::size_t v) const { return workplace_of_.at(v); }

  std::span<const Opinion> opinions() const noexcept { return opinions_; }
  std::span<const std::uint32_t> workplace_assignment() const noexcept { return workplace_of_; }

  std::uint32_t household_count_a(std::size_t h) const { return hh_count_a_.at(h); }
  std::uint32_t household_count(std::size_t h, Opinion o) const {
    const auto a = household_count_a(h);
    return o == Opinion::A ? a : static_cast<std::uint32_t>(household_size_) - a;
  }
  std::uint32_t workplace_size(std::size_t w) const { return wp_size_.at(w); }
  std::uint32_t workplace_count_a(std::size_t w) const { return wp_count_a_.at(w); }
  std::uint32_t workplace_count(std::size_t w, Opinion o) const {
    const auto a = workplace_count_a(w);
    return o == Opinion::A ? a : wp_size_[w] - a;
  }

  void flip(std::size_t v) {
    auto& o = opinions_.at(v);
    const auto h = v / household_size_;
    const auto w = workplace_of_[v];
    if (o == Opinion::A) {
      --hh_count_a_[h];
      --wp_count_a_[w];
      --num_a_;
    } else {
      ++hh_count_a_[h];
      ++wp_count_a_[w];
      ++num_a_;
    }
    o = opposite(o);
  }

  void move(std::size_t v, std::uint32_t to) {
    if (to >= wp_size_.size()) throw std::out_of_range("target workplace out of range");
    auto& from = workplace_of_.at(v);
    const bool is_a = opinions_[v] == Opinion::A;
    --wp_size_[from];
    ++wp_size_[to];
    if (is_a) {
      --wp_count_a_[from];
      ++wp_count_a_[to];
    }
    from = to;
  }

  /// Cached counts against a from-scratch recount.
  bool counts_consistent() const {
    const SimState fresh(household_size_, wp_size_.size(), opinions_, workplace_of_);
    return fresh.hh_count_a_ == hh_count_a_ && fresh.wp_size_ == wp_size_ &&
           fresh.wp_count_a_ == wp_count_a_ && fresh.num_a_ == num_a_;
  }

  bool operator==(const SimState&) const = default;

 private:
  std::size_t check(std::size_t v) const {
    if (v >= opinions_.size()) throw std::out_of_range("vertex index out of range");
    return v;
  }

  std::size_t household_size_;
  std::vector<Opinion> opinions_;
  std::vector<std::uint32_t> workplace_of_;
  std::vector<std::uint32_t> hh_count_a_;
  std::vector<std::uint32_t> wp_size_;
  std::vector<std::uint32_t> wp_count_a_;
  std::size_t num_a_{0};
};

/// Balanced random initial condition: exactly num_a vertices hold A, chosen
/// uniformly; workplaces are a uniformly shuffled balanced partition of size
/// n / num_workplaces each. Deterministic in seed.
inline SimState build_initial_state(const ModelParams& params, std::size_t num_a, std::uint64_t seed) {
  params.validate();
  if (num_a > params.n) throw std::invalid_argument("num_a exceeds n");
  Rng rng = make_rng(seed);

  std::vector<std::size_t> order(params.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Opinion> opinions(params.n, Opinion::B);
  for (std::size_t i = 0; i < num_a; ++i) opinions[order[i]] = Opinion::A;

  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t wp_size = params.n / params.num_workplaces;
  std::vector<std::uint32_t> workplace_of(params.n);
  for (std::size_t i = 0; i < params.n; ++i) workplace_of[order[i]] = static_cast<std::uint32_t>(i / wp_size);

  return SimState(params.household_size, params.num_workplaces, std::move(opinions), std::move(workplace_of));
}

namespace detail {
// Thresholds use strict inequality; values within this distance of the
// threshold count as equal so that ties such as a == 0.5 are not decided by
// floating-point rounding.
inline constexpr double kTieTolerance = 1e-12;

inline bool strictly_below(double x, double threshold) noexcept { return x < threshold - kTieTolerance; }

inline bool is_majority(std::uint32_t same, std::uint32_t size) noexcept { return 2 * same > size; }
}  // namespace detail

/// Own-opinion shares of v's household and workplace, counting v itself.
struct GroupProportions {
  double household;
  double workplace;
};

inline GroupProportions group_proportion(const SimState& s, std::size_t v) {
  const Opinion o = s.opinion(v);
  const auto h = s.household_of(v);
  const auto w = s.workplace_of(v);
  return {static_cast<double>(s.household_count(h, o)) / static_cast<double>(s.household_size()),
          static_cast<double>(s.workplace_count(w, o)) / static_cast<double>(s.workplace_size(w))};
}

constexpr double weighted_average(double h, double w, double lambda) noexcept {
  return (h + lambda * w) / (1.0 + lambda);
}

/// Workplaces v may move to: those other than its own where v's opinion holds
/// a strict majority before v joins; if there are none, every other workplace.
/// Empty when there is only one workplace.
inline std::vector<std::uint32_t> candidate_workplaces(const SimState& s, std::size_t v) {
  const Opinion o = s.opinion(v);
  const auto current = s.workplace_of(v);
  std::vector<std::uint32_t> out;
  for (std::uint32_t w = 0; w < s.num_workplaces(); ++w)
    if (w != current && detail::is_majority(s.workplace_count(w, o), s.workplace_size(w))) out.push_back(w);
  if (out.empty())
    for (std::uint32_t w = 0; w < s.num_workplaces(); ++w)
      if (w != current) out.push_back(w);
  return out;
}

/// Probability that step 1 flips v.
inline double flip_probability(const SimState& s, const ModelParams& p, std::size_t v) {
  const auto [h, w] = group_proportion(s, v);
  const double a = weighted_average(h, w, p.lambda);
  return detail::strictly_below(a, p.r1) ? p.beta * (p.r1 - a) : 0.0;
}

/// Probability that step 2 moves v, given that step 1 did not flip it.
inline double move_probability(const SimState& s, const ModelParams& p, std::size_t v) {
  if (s.num_workplaces() < 2) return 0.0;
  const double w = group_proportion(s, v).workplace;
  return detail::strictly_below(w, p.r2) ? p.q * (p.r2 - w) : 0.0;
}

enum class StepKind : std::uint8_t { no_change, opinion_flipped, moved_workplace };

struct StepOutcome {
  std::size_t vertex{0};
  StepKind kind{StepKind::no_change};
  std::uint32_t from{0};
  std::uint32_t to{0};
};

namespace detail {
template <class URBG>
std::uint32_t draw_target(const SimState& s, std::size_t v, URBG& rng) {
  const Opinion o = s.opinion(v);
  const auto current = s.workplace_of(v);
  const auto num_w = static_cast<std::uint32_t>(s.num_workplaces());
  std::size_t majority = 0;
  for (std::uint32_t w = 0; w < num_w; ++w)
    if (w != current && is_majority(s.workplace_count(w, o), s.workplace_size(w))) ++majority;
  if (majority == 0) {
    auto k = static_cast<std::uint32_t>(uniform_index(rng, num_w - 1));
    return k >= current ? k + 1 : k;
  }
  std::size_t k = uniform_index(rng, majority);
  for (std::uint32_t w = 0; w < num_w; ++w)
    if (w != current && is_majority(s.workplace_count(w, o), s.workplace_size(w)) && k-- == 0) return w;
  return current;  // unreachable
}
}  // namespace detail

/// One micro-step of the dynamics. Counts are updated incrementally.
template <class URBG>
StepOutcome micro_step(SimState& s, const ModelParams& p, URBG& rng) {
  const std::size_t v = uniform_index(rng, s.n());
  const Opinion o = s.opinion(v);
  const auto current = s.workplace_of(v);
  const double h = static_cast<double>(s.household_count(s.household_of(v), o)) /
                   static_cast<double>(s.household_size());
  const double w = static_cast<double>(s.workplace_count(current, o)) /
                   static_cast<double>(s.workplace_size(current));
  const double a = weighted_average(h, w, p.lambda);

  if (detail::strictly_below(a, p.r1) && bernoulli(rng, p.beta * (p.r1 - a))) {
    s.flip(v);
    return {v, StepKind::opinion_flipped, current, current};
  }
  if (detail::strictly_below(w, p.r2) && bernoulli(rng, p.q * (p.r2 - w))) {
    if (s.num_workplaces() < 2) return {v, StepKind::no_change, current, current};
    const auto to = detail::draw_target(s, v, rng);
    s.move(v, to);
    return {v, StepKind::moved_workplace, current, to};
  }
  return {v, StepKind::no_change, current, current};
}

/// No vertex can flip (a >= r1 everywhere) and none can move (w >= r2
/// everywhere, or q == 0, or there is nowhere to move to).
inline bool is_absorbing(const SimState& s, const ModelParams& p) {
  const bool moves_possible = p.q > 0.0 && s.num_workplaces() >= 2;
  const double hs = static_cast<double>(s.household_size());
  for (std::size_t v = 0; v < s.n(); ++v) {
    const Opinion o = s.opinion(v);
    const auto w_idx = s.workplace_of(v);
    const double h = s.household_count(v / s.household_size(), o) / hs;
    const double w = static_cast<double>(s.workplace_count(w_idx, o)) / s.workplace_size(w_idx);
    if (detail::strictly_below(weighted_average(h, w, p.lambda), p.r1)) return false;
    if (moves_possible && detail::strictly_below(w, p.r2)) return false;
  }
  return true;
}

}  // namespace hyperop
