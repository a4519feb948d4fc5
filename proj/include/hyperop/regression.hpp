#pragma once

// Linear-regression estimator of (beta, q) from trajectory prefixes.
//
// Features for horizon t are built from the first t stored records. Each
// timestep contributes, in this order and only for included sources:
//   N_A                                   raw count
//   D_hh  -> mean, var, var^2 of per-household A-count   (values 0..5)
//   D_wp  -> mean, var, var^2 of per-workplace A-share   (decile midpoints 0.05..0.95)
//   S_wp  -> mean, var, var^2 of workplace size          (values 1..14)
//   M_wp                                  raw count
//   N_ch                                  raw count
// Variances are population variances across groups. Timesteps are laid out
// one after another, so the feature count is t * width.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyperop/dataset.hpp"
#include "hyperop/statistics.hpp"
#include "hyperop/sweep.hpp"

namespace hyperop {

enum class Source : std::uint8_t {
  num_a = 1u << 0,
  d_hh = 1u << 1,
  d_wp = 1u << 2,
  s_wp = 1u << 3,
  moves = 1u << 4,
  flips = 1u << 5,
};

inline constexpr std::uint8_t kAllSources = 0x3F;

struct FeatureSpec {
  std::size_t horizon{0};
  std::uint8_t sources{0};

  bool has(Source s) const noexcept { return (sources & static_cast<std::uint8_t>(s)) != 0; }

  std::size_t width() const noexcept {
    std::size_t w = 0;
    for (Source s : {Source::num_a, Source::moves, Source::flips}) w += has(s) ? 1 : 0;
    for (Source s : {Source::d_hh, Source::d_wp, Source::s_wp}) w += has(s) ? 3 : 0;
    return w;
  }
  std::size_t feature_count() const noexcept { return horizon * width(); }

  /// Comma-separated source names (NA, Dhh, Dwp, Swp, Mwp, Nch), or one of the
  /// presets: all, no-nch, no-nch-mwp, dhh-dwp.
  static std::uint8_t parse_sources(const std::string& text) {
    if (text == "all") return kAllSources;
    if (text == "no-nch") return kAllSources & ~static_cast<std::uint8_t>(Source::flips);
    if (text == "no-nch-mwp")
      return kAllSources & ~static_cast<std::uint8_t>(Source::flips) & ~static_cast<std::uint8_t>(Source::moves);
    if (text == "dhh-dwp") return static_cast<std::uint8_t>(Source::d_hh) | static_cast<std::uint8_t>(Source::d_wp);
    std::uint8_t mask = 0;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "NA") mask |= static_cast<std::uint8_t>(Source::num_a);
      else if (item == "Dhh") mask |= static_cast<std::uint8_t>(Source::d_hh);
      else if (item == "Dwp") mask |= static_cast<std::uint8_t>(Source::d_wp);
      else if (item == "Swp") mask |= static_cast<std::uint8_t>(Source::s_wp);
      else if (item == "Mwp") mask |= static_cast<std::uint8_t>(Source::moves);
      else if (item == "Nch") mask |= static_cast<std::uint8_t>(Source::flips);
      else throw std::invalid_argument("unknown feature source '" + item + "'");
    }
    if (mask == 0) throw std::invalid_argument("empty feature source list");
    return mask;
  }

  std::string source_names() const {
    static constexpr std::array<std::pair<Source, const char*>, 6> names{{{Source::num_a, "NA"},
                                                                          {Source::d_hh, "Dhh"},
                                                                          {Source::d_wp, "Dwp"},
                                                                          {Source::s_wp, "Swp"},
                                                                          {Source::moves, "Mwp"},
                                                                          {Source::flips, "Nch"}}};
    std::string out;
    for (const auto& [s, name] : names)
      if (has(s)) out += (out.empty() ? "" : ",") + std::string(name);
    return out;
  }
};

namespace detail {
template <std::size_t N, class ValueAt>
void append_moments(std::vector<double>& out, const std::array<std::int32_t, N>& hist, ValueAt value_at) {
  double total = 0, mean = 0;
  for (std::size_t k = 0; k < N; ++k) {
    total += hist[k];
    mean += hist[k] * value_at(k);
  }
  mean = total > 0 ? mean / total : 0.0;
  double var = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const double d = value_at(k) - mean;
    var += hist[k] * d * d;
  }
  var = total > 0 ? var / total : 0.0;
  out.push_back(mean);
  out.push_back(var);
  out.push_back(var * var);
}
}  // namespace detail

/// Appends the feature vector of a trajectory prefix (rows of 33 values).
inline void append_features(std::vector<double>& out, std::span<const std::int32_t> rows, const FeatureSpec& spec) {
  if (spec.sources == 0 || spec.width() == 0) throw std::invalid_argument("feature spec selects no sources");
  if (rows.size() < spec.horizon * kStatWidth) throw std::invalid_argument("trajectory shorter than the horizon");
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    const auto r = StatRecord::unflatten(0, rows.subspan(t * kStatWidth, kStatWidth));
    if (spec.has(Source::num_a)) out.push_back(r.num_a);
    if (spec.has(Source::d_hh)) detail::append_moments(out, r.d_hh, [](std::size_t k) { return double(k); });
    if (spec.has(Source::d_wp)) detail::append_moments(out, r.d_wp, [](std::size_t k) { return (k + 0.5) / 10.0; });
    if (spec.has(Source::s_wp)) detail::append_moments(out, r.s_wp, [](std::size_t k) { return double(k + 1); });
    if (spec.has(Source::moves)) out.push_back(r.moves);
    if (spec.has(Source::flips)) out.push_back(r.flips);
  }
}

inline std::vector<double> build_features(std::span<const std::int32_t> rows, const FeatureSpec& spec) {
  std::vector<double> out;
  out.reserve(spec.feature_count());
  append_features(out, rows, spec);
  return out;
}

/// Relative ridge applied to standardized columns.
inline constexpr double kDefaultRidge = 1e-8;

struct OlsModel {
  Eigen::VectorXd weights;
  double intercept{0.0};

  double predict(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(weights.size())) throw std::invalid_argument("feature count mismatch");
    return intercept + Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())).dot(weights);
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    return (X * weights).array() + intercept;
  }
};

/// Least squares with intercept for every column of Y. Columns are centered
/// and scaled to unit standard deviation, then
///   min ||Z w - (y - mean y)||^2 + ridge * rows * ||w||^2
/// is solved by Householder QR of the row-augmented system. ridge = 0 uses a
/// column-pivoting QR instead, which copes with rank deficiency on its own.
inline std::vector<OlsModel> fit_ols(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge = kDefaultRidge) {
  const Eigen::Index m = X.rows(), p = X.cols();
  if (m < 1) throw std::invalid_argument("fit_ols needs at least one row");
  if (Y.rows() != m) throw std::invalid_argument("target count differs from row count");
  if (!X.allFinite() || !Y.allFinite()) throw std::invalid_argument("non-finite values in regression inputs");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw std::invalid_argument("ridge must be a finite non-negative number");

  const Eigen::RowVectorXd mu = X.colwise().mean();
  Eigen::MatrixXd Z = X.rowwise() - mu;
  Eigen::VectorXd scale = (Z.colwise().squaredNorm() / static_cast<double>(m)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(scale[j] > 0.0)) scale[j] = 1.0;
  Z = Z * scale.cwiseInverse().asDiagonal();
  const Eigen::RowVectorXd y_mean = Y.colwise().mean();
  const Eigen::MatrixXd Yc = Y.rowwise() - y_mean;

  Eigen::MatrixXd W;
  if (p == 0) {
    W.resize(0, Y.cols());
  } else if (ridge > 0.0) {
    Eigen::MatrixXd A(m + p, p);
    A.topRows(m) = Z;
    A.bottomRows(p) = Eigen::MatrixXd::Identity(p, p) * std::sqrt(ridge * static_cast<double>(m));
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m + p, Y.cols());
    B.topRows(m) = Yc;
    W = Eigen::HouseholderQR<Eigen::MatrixXd>(A).solve(B);
  } else {
    W = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(Z).solve(Yc);
  }

  std::vector<OlsModel> out;
  for (Eigen::Index c = 0; c < Y.cols(); ++c) {
    OlsModel model;
    model.weights = W.col(c).cwiseQuotient(scale);
    model.intercept = y_mean[c] - mu.dot(model.weights);
    out.push_back(std::move(model));
  }
  return out;
}

inline OlsModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge = kDefaultRidge) {
  return fit_ols(X, Eigen::MatrixXd(y), ridge).front();
}

inline double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  if (predicted.size() != actual.size() || actual.size() == 0) throw std::invalid_argument("rmse needs equal non-empty vectors");
  return std::sqrt((predicted - actual).squaredNorm() / static_cast<double>(actual.size()));
}

enum class Target : std::uint8_t { beta, q };

inline const char* to_string(Target t) noexcept { return t == Target::beta ? "beta" : "q"; }

inline Target parse_target(const std::string& s) {
  if (s == "beta") return Target::beta;
  if (s == "q") return Target::q;
  throw std::invalid_argument("unknown target '" + s + "' (expected beta|q)");
}

struct EstimatorReport {
  Target target{Target::beta};
  Regime regime{Regime::linear};
  FeatureSpec spec;
  std::size_t train_size{0};
  std::size_t test_size{0};
  double rmse_train{0.0};
  double rmse_test{0.0};
};

/// Train/test design matrices for one feature spec, targets in columns (beta, q).
struct DesignMatrices {
  Eigen::MatrixXd x_train, x_test;
  Eigen::MatrixXd y_train, y_test;  // columns: beta, q
};

/// Builds design matrices for several specs in one pass over the dataset.
inline std::vector<DesignMatrices> build_design(const Dataset& ds, std::span<const FeatureSpec> specs, const Split& split) {
  const auto& cfg = ds.config();
  if (split.num_betas != ds.num_betas() || split.num_qs != ds.num_qs() || split.reps != cfg.runs_per_cell)
    throw std::invalid_argument("split does not match the dataset layout");
  const std::size_t cells = cfg.num_cells();
  const std::size_t n_train = cells * split.train_per_cell();
  const std::size_t n_test = cells * cfg.runs_per_cell - n_train;
  std::vector<DesignMatrices> out(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto p = static_cast<Eigen::Index>(specs[s].feature_count());
    out[s].x_train.resize(static_cast<Eigen::Index>(n_train), p);
    out[s].x_test.resize(static_cast<Eigen::Index>(n_test), p);
    out[s].y_train.resize(static_cast<Eigen::Index>(n_train), 2);
    out[s].y_test.resize(static_cast<Eigen::Index>(n_test), 2);
  }
  Eigen::Index row_train = 0, row_test = 0;
  std::vector<double> buf;
  for (std::size_t bi = 0; bi < ds.num_betas(); ++bi)
    for (std::size_t qi = 0; qi < ds.num_qs(); ++qi) {
      const auto cell = ds.load_cell(bi, qi);
      for (const auto& run : cell.runs) {
        const bool test = split.test(bi, qi, run.rep);
        const Eigen::Index row = test ? row_test++ : row_train++;
        for (std::size_t s = 0; s < specs.size(); ++s) {
          if (specs[s].horizon > run.num_records())
            throw std::invalid_argument("horizon " + std::to_string(specs[s].horizon) + " exceeds stored trajectory length");
          buf.clear();
          append_features(buf, run.prefix(specs[s].horizon), specs[s]);
          auto& X = test ? out[s].x_test : out[s].x_train;
          auto& Y = test ? out[s].y_test : out[s].y_train;
          X.row(row) = Eigen::Map<const Eigen::RowVectorXd>(buf.data(), static_cast<Eigen::Index>(buf.size()));
          Y(row, 0) = cell.beta;
          Y(row, 1) = cell.q;
        }
      }
    }
  return out;
}

/// Fits one pooled model per (spec, target) on the training runs of every
/// cell and scores it on the held-out runs. Reports are ordered spec-major,
/// then beta before q.
inline std::vector<EstimatorReport> evaluate_many(const Dataset& ds, std::span<const FeatureSpec> specs,
                                                  const Split& split, double ridge = kDefaultRidge) {
  const auto design = build_design(ds, specs, split);
  std::vector<EstimatorReport> out;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& d = design[s];
    const auto models = fit_ols(d.x_train, d.y_train, ridge);
    for (Target t : {Target::beta, Target::q}) {
      const int c = t == Target::beta ? 0 : 1;
      EstimatorReport r;
      r.target = t;
      r.regime = ds.config().regime;
      r.spec = specs[s];
      r.train_size = static_cast<std::size_t>(d.x_train.rows());
      r.test_size = static_cast<std::size_t>(d.x_test.rows());
      r.rmse_train = rmse(models[c].predict(d.x_train), d.y_train.col(c));
      r.rmse_test = rmse(models[c].predict(d.x_test), d.y_test.col(c));
      out.push_back(r);
    }
  }
  return out;
}

inline EstimatorReport evaluate(const Dataset& ds, Target target, const FeatureSpec& spec, std::uint64_t split_seed,
                                double ridge = kDefaultRidge) {
  if (ds.config().runs_per_cell < 2) throw std::invalid_argument("need at least 2 repetitions per cell");
  const Split split = make_split(ds.num_betas(), ds.num_qs(), ds.config().runs_per_cell, split_seed);
  const auto reports = evaluate_many(ds, std::span(&spec, 1), split, ridge);
  return reports[target == Target::beta ? 0 : 1];
}

}  // namespace hyperop
