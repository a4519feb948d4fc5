#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "hyperop/model.hpp"
#include "hyperop/union_find.hpp"

namespace hyperop {

inline constexpr std::size_t kHouseholdBins = 6;   // k = 0..5 A-members
inline constexpr std::size_t kDecileBins = 10;     // A-share deciles
inline constexpr std::size_t kSizeBins = 14;       // workplace sizes 1..14
inline constexpr std::size_t kStatWidth = 1 + kHouseholdBins + kDecileBins + kSizeBins + 1 + 1;
static_assert(kStatWidth == 33);

/// Per-timestep observation vector, laid out in this order when flattened:
/// N_A, D_hh[0..5], D_wp[1..10], S_wp[1..14], M_wp, N_ch.
struct StatRecord {
  std::uint32_t t{0};
  std::int32_t num_a{0};
  std::array<std::int32_t, kHouseholdBins> d_hh{};
  std::array<std::int32_t, kDecileBins> d_wp{};
  std::array<std::int32_t, kSizeBins> s_wp{};
  std::int32_t moves{0};
  std::int32_t flips{0};
  /// Some workplace had size 0 or > 14 and was clipped into an edge bin.
  bool size_clipped{false};

  std::array<std::int32_t, kStatWidth> flatten() const {
    std::array<std::int32_t, kStatWidth> out{};
    auto it = out.begin();
    *it++ = num_a;
    it = std::copy(d_hh.begin(), d_hh.end(), it);
    it = std::copy(d_wp.begin(), d_wp.end(), it);
    it = std::copy(s_wp.begin(), s_wp.end(), it);
    *it++ = moves;
    *it = flips;
    return out;
  }

  static StatRecord unflatten(std::uint32_t t, std::span<const std::int32_t> v) {
    if (v.size() != kStatWidth) throw std::invalid_argument("statistic vector must have 33 entries");
    StatRecord r;
    r.t = t;
    auto it = v.begin();
    r.num_a = *it++;
    std::copy_n(it, kHouseholdBins, r.d_hh.begin());
    it += kHouseholdBins;
    std::copy_n(it, kDecileBins, r.d_wp.begin());
    it += kDecileBins;
    std::copy_n(it, kSizeBins, r.s_wp.begin());
    it += kSizeBins;
    r.moves = *it++;
    r.flips = *it;
    return r;
  }

  bool operator==(const StatRecord& o) const { return t == o.t && flatten() == o.flatten(); }
};

/// Decile bin of an A-share c/s: [0, 0.1] -> 0, (0.1, 0.2] -> 1, ..., (0.9, 1] -> 9.
/// Empty workplaces land in bin 0.
constexpr std::size_t decile_bin(std::uint32_t count_a, std::uint32_t size) noexcept {
  if (count_a == 0 || size == 0) return 0;
  return (10 * static_cast<std::size_t>(count_a) + size - 1) / size - 1;
}

inline StatRecord snapshot(const SimState& s, std::uint32_t t, std::int32_t moves_this_step,
                           std::int32_t flips_this_step) {
  if (s.household_size() != kHouseholdBins - 1)
    throw std::invalid_argument("the 33-dimensional statistic is defined for households of size 5");
  StatRecord r;
  r.t = t;
  r.num_a = static_cast<std::int32_t>(s.num_a());
  for (std::size_t h = 0; h < s.num_households(); ++h) ++r.d_hh[s.household_count_a(h)];
  for (std::size_t w = 0; w < s.num_workplaces(); ++w) {
    const auto size = s.workplace_size(w);
    ++r.d_wp[decile_bin(s.workplace_count_a(w), size)];
    if (size == 0 || size > kSizeBins) r.size_clipped = true;
    ++r.s_wp[std::clamp<std::size_t>(size, 1, kSizeBins) - 1];
  }
  r.moves = moves_this_step;
  r.flips = flips_this_step;
  return r;
}

enum class Layer : std::uint8_t { households, workplaces };

/// Number of vertices whose hyperedge in `layer` holds a single opinion.
inline std::size_t homogeneous_vertex_count(const SimState& s, Layer layer) {
  std::size_t total = 0;
  if (layer == Layer::households) {
    const auto hs = static_cast<std::uint32_t>(s.household_size());
    for (std::size_t h = 0; h < s.num_households(); ++h) {
      const auto a = s.household_count_a(h);
      if (a == 0 || a == hs) total += hs;
    }
  } else {
    for (std::size_t w = 0; w < s.num_workplaces(); ++w) {
      const auto a = s.workplace_count_a(w);
      const auto size = s.workplace_size(w);
      if (a == 0 || a == size) total += size;
    }
  }
  return total;
}

/// Fraction of vertices that sit in an opinion-homogeneous hyperedge of the layer.
inline double homophily_index(const SimState& s, Layer layer) {
  return static_cast<double>(homogeneous_vertex_count(s, layer)) / static_cast<double>(s.n());
}

/// Sizes of the connected components of the graph in which two vertices are
/// adjacent when they share a household or a workplace; largest first.
inline std::vector<std::size_t> components(const SimState& s) {
  UnionFind uf(s.n());
  std::vector<std::size_t> wp_anchor(s.num_workplaces(), s.n());
  for (std::size_t v = 0; v < s.n(); ++v) {
    uf.unite(v, s.household_of(v) * s.household_size());
    auto& anchor = wp_anchor[s.workplace_of(v)];
    if (anchor == s.n())
      anchor = v;
    else
      uf.unite(v, anchor);
  }
  std::vector<std::size_t> sizes;
  for (std::size_t v = 0; v < s.n(); ++v)
    if (uf.find(v) == v) sizes.push_back(uf.component_size(v));
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  return sizes;
}

/// First index whose value is strictly above threshold.
inline std::optional<std::uint32_t> first_passage(std::span<const double> series, double threshold) {
  for (std::size_t t = 0; t < series.size(); ++t)
    if (series[t] > threshold) return static_cast<std::uint32_t>(t);
  return std::nullopt;
}

/// Homophily threshold used for the polarization timing observables.
inline constexpr double kPolarizationThreshold = 0.4;

struct RunSummary {
  std::int64_t final_num_a{0};
  std::uint64_t stopping_step{0};  // micro-steps executed until absorption or the cap
  bool absorbed{false};
  std::optional<std::uint32_t> tau_hh;
  std::optional<std::uint32_t> tau_wp;
  std::vector<std::size_t> component_sizes;
  double homophily_hh{0.0};
  double homophily_wp{0.0};
  bool size_clipped{false};

  bool operator==(const RunSummary&) const = default;
};

struct CrossRunSummary {
  std::size_t runs{0};
  double mean_num_a{0.0};
  double sigma_num_a{0.0};  // population standard deviation at the stopping time
  std::optional<double> mean_tau_hh;
  std::size_t missing_tau_hh{0};
  std::optional<double> mean_tau_wp;
  std::size_t missing_tau_wp{0};
  double mean_homophily_hh{0.0};
  double mean_homophily_wp{0.0};
  double absorbed_fraction{0.0};
  double mean_stopping_step{0.0};
  std::map<std::size_t, std::size_t> component_count_histogram;  // #components -> #runs
  std::map<std::size_t, std::size_t> component_size_histogram;   // size -> #components
};

inline CrossRunSummary cross_run_summary(std::span<const RunSummary> runs) {
  if (runs.empty()) throw std::invalid_argument("cross_run_summary needs at least one run");
  CrossRunSummary out;
  out.runs = runs.size();
  const double n = static_cast<double>(runs.size());
  double tau_hh = 0, tau_wp = 0;
  std::size_t have_hh = 0, have_wp = 0, absorbed = 0;
  for (const auto& r : runs) {
    out.mean_num_a += static_cast<double>(r.final_num_a) / n;
    out.mean_homophily_hh += r.homophily_hh / n;
    out.mean_homophily_wp += r.homophily_wp / n;
    out.mean_stopping_step += static_cast<double>(r.stopping_step) / n;
    if (r.absorbed) ++absorbed;
    if (r.tau_hh) {
      tau_hh += *r.tau_hh;
      ++have_hh;
    }
    if (r.tau_wp) {
      tau_wp += *r.tau_wp;
      ++have_wp;
    }
    ++out.component_count_histogram[r.component_sizes.size()];
    for (auto c : r.component_sizes) ++out.component_size_histogram[c];
  }
  double ss = 0;
  for (const auto& r : runs) {
    const double d = static_cast<double>(r.final_num_a) - out.mean_num_a;
    ss += d * d;
  }
  out.sigma_num_a = std::sqrt(ss / n);
  out.missing_tau_hh = runs.size() - have_hh;
  out.missing_tau_wp = runs.size() - have_wp;
  if (have_hh) out.mean_tau_hh = tau_hh / static_cast<double>(have_hh);
  if (have_wp) out.mean_tau_wp = tau_wp / static_cast<double>(have_wp);
  out.absorbed_fraction = static_cast<double>(absorbed) / n;
  return out;
}

namespace detail {
template <class Map>
void write_histogram(std::ostream& os, const Map& m) {
  bool first = true;
  for (const auto& [k, v] : m) {
    os << (first ? "" : ";") << k << ':' << v;
    first = false;
  }
}
inline void write_optional(std::ostream& os, const std::optional<double>& x) {
  if (x)
    os << *x;
  else
    os << "NA";
}
}  // namespace detail

/// Tab-separated columns shared by `analyze` output. Histograms are written as
/// `key:count` pairs joined by ';'.
inline void write_summary_header(std::ostream& os) {
  os << "runs\tmean_NA\tsigma_NA\tmean_tau_hh\tmissing_tau_hh\tmean_tau_wp\tmissing_tau_wp"
        "\tmean_homophily_hh\tmean_homophily_wp\tabsorbed_fraction\tmean_stopping_step"
        "\tcomponent_count_hist\tcomponent_size_hist";
}

inline void write_summary_row(std::ostream& os, const CrossRunSummary& s) {
  os << s.runs << '\t' << s.mean_num_a << '\t' << s.sigma_num_a << '\t';
  detail::write_optional(os, s.mean_tau_hh);
  os << '\t' << s.missing_tau_hh << '\t';
  detail::write_optional(os, s.mean_tau_wp);
  os << '\t' << s.missing_tau_wp << '\t' << s.mean_homophily_hh << '\t' << s.mean_homophily_wp << '\t'
     << s.absorbed_fraction << '\t' << s.mean_stopping_step << '\t';
  detail::write_histogram(os, s.component_count_histogram);
  os << '\t';
  detail::write_histogram(os, s.component_size_histogram);
}

}  // namespace hyperop
