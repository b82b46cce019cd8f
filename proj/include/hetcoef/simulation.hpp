#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hetcoef/algebra.hpp"
#include "hetcoef/error.hpp"
#include "hetcoef/estimation.hpp"
#include "hetcoef/rng.hpp"

namespace hetcoef {

// Synthetic data generators for the heterogeneous-coefficients model
// Y = p(X)'eps. Treatments are drawn from the cell's propensity scores using a
// draw that is independent of eps given V, so the control-variable premise
// E[eps|X,V] = E[eps|V] holds exactly by construction and the true average
// treatment effects are known.

struct DiscreteControlSpec {
  std::vector<std::string> labels;
  std::vector<double> weights;
};

struct ContinuousControlSpec {
  int dim = 1;  // V uniform on [0,1)^dim
};

using ControlSpec = std::variant<DiscreteControlSpec, ContinuousControlSpec>;

struct DgpSpec {
  int num_treatments = 1;
  std::size_t n = 0;
  ControlSpec control;
  std::function<GpsVector(const ControlValue&)> gps_fn;
  std::function<Vector(const ControlValue&)> coef_mean_fn;  // alpha(v) = E[eps|V=v]
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
};

struct SimulationResult {
  Dataset data;
  Vector true_ate;                            // component t is E[alpha(V)]_{t+1}
  Matrix coef_draws;                          // realized eps per row, diagnostic
  std::optional<std::uint64_t> true_ate_seed;  // set for continuous controls
};

namespace detail {

inline constexpr std::uint64_t kTrueAteStream = 0x7472756561746531ULL;
inline constexpr std::size_t kContinuousProbePoints = 10000;
inline constexpr std::size_t kTrueAteDraws = 1000000;

inline ControlValue draw_control(const ControlSpec& control, Xoshiro256PlusPlus& rng) {
  if (const auto* d = std::get_if<DiscreteControlSpec>(&control)) {
    std::size_t k = categorical(rng, d->weights);
    if (k >= d->labels.size()) k = d->labels.size() - 1;  // guards fp edge at u ~ 1
    return d->labels[k];
  }
  const auto& c = std::get<ContinuousControlSpec>(control);
  std::vector<double> v(static_cast<std::size_t>(c.dim));
  for (auto& x : v) x = rng.uniform01();
  return v;
}

inline void check_support_point(const DgpSpec& spec, const ControlValue& v) {
  const GpsVector g = spec.gps_fn(v);  // constructor validates the invariants
  if (g.num_treatments() != spec.num_treatments)
    throw Error("INVALID_SPEC", "gps_fn output has wrong number of treatments");
  const Vector alpha = spec.coef_mean_fn(v);
  if (alpha.size() != spec.num_treatments + 1)
    throw Error("INVALID_SPEC", "coef_mean_fn output must have length T+1");
  if (!alpha.allFinite())
    throw Error("INVALID_SPEC", "coef_mean_fn output must be finite");
}

inline void validate_spec(const DgpSpec& spec) {
  if (spec.num_treatments < 1)
    throw Error("INVALID_SPEC", "model requires at least one treatment");
  if (spec.n < 1) throw Error("INVALID_SPEC", "sample size must be positive");
  if (!(spec.noise_scale >= 0.0))
    throw Error("INVALID_SPEC", "noise_scale must be nonnegative");
  if (!spec.gps_fn || !spec.coef_mean_fn)
    throw Error("INVALID_SPEC", "gps_fn and coef_mean_fn must both be set");
  if (const auto* d = std::get_if<DiscreteControlSpec>(&spec.control)) {
    if (d->labels.empty() || d->labels.size() != d->weights.size())
      throw Error("INVALID_SPEC", "discrete control needs matching labels and weights");
    double wsum = 0.0;
    for (double w : d->weights) {
      if (!(w >= 0.0)) throw Error("INVALID_SPEC", "cell weights must be nonnegative");
      wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-10)
      throw Error("INVALID_SPEC", "cell weights must sum to 1");
    for (std::size_t i = 0; i < d->labels.size(); ++i)
      for (std::size_t j = i + 1; j < d->labels.size(); ++j)
        if (d->labels[i] == d->labels[j])
          throw Error("INVALID_SPEC", "duplicate control label " + d->labels[i]);
    for (const auto& label : d->labels) check_support_point(spec, label);
  } else {
    const auto& c = std::get<ContinuousControlSpec>(spec.control);
    if (c.dim < 1) throw Error("INVALID_SPEC", "continuous control needs dim >= 1");
    Xoshiro256PlusPlus probe(derive_stream(spec.seed, kTrueAteStream ^ 1));
    for (std::size_t i = 0; i < kContinuousProbePoints; ++i)
      check_support_point(spec, draw_control(spec.control, probe));
  }
}

/// E[alpha(V)]: closed form over discrete cells, Monte Carlo over continuous
/// controls with a dedicated recorded substream.
inline std::pair<Vector, std::optional<std::uint64_t>> true_coef_mean(
    const DgpSpec& spec) {
  const int dim = spec.num_treatments + 1;
  Vector mean = Vector::Zero(dim);
  if (const auto* d = std::get_if<DiscreteControlSpec>(&spec.control)) {
    for (std::size_t k = 0; k < d->labels.size(); ++k)
      mean += d->weights[k] * spec.coef_mean_fn(d->labels[k]);
    return {mean, std::nullopt};
  }
  const std::uint64_t ate_seed = derive_stream(spec.seed, kTrueAteStream);
  Xoshiro256PlusPlus rng(ate_seed);
  for (std::size_t i = 0; i < kTrueAteDraws; ++i)
    mean += spec.coef_mean_fn(draw_control(spec.control, rng));
  mean /= static_cast<double>(kTrueAteDraws);
  return {mean, ate_seed};
}

}  // namespace detail

/// True average treatment effect vector implied by a spec, component t being
/// E[alpha(V)]_{t+1}.
inline Vector true_ate_of(const DgpSpec& spec) {
  detail::validate_spec(spec);
  return detail::true_coef_mean(spec).first.tail(spec.num_treatments);
}

/// Draws the dataset. Row i uses substream i of the master seed: first the
/// control value, then one uniform for the treatment draw, then (for positive
/// noise_scale) T+1 normals for the coefficient noise. Bit-reproducible for a
/// given spec regardless of generation order.
inline SimulationResult simulate(const DgpSpec& spec) {
  detail::validate_spec(spec);
  auto [coef_mean, ate_seed] = detail::true_coef_mean(spec);

  const int T = spec.num_treatments;
  std::vector<Observation> rows;
  rows.reserve(spec.n);
  Matrix coef_draws(static_cast<Eigen::Index>(spec.n), T + 1);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Xoshiro256PlusPlus rng(derive_stream(spec.seed, i));
    ControlValue v = detail::draw_control(spec.control, rng);
    const GpsVector gps = spec.gps_fn(v);
    const std::size_t drawn = categorical(rng, gps.probs());
    TreatmentProfile x = drawn < static_cast<std::size_t>(T)
                             ? TreatmentProfile::single(T, static_cast<int>(drawn))
                             : TreatmentProfile::none(T);
    Vector eps = spec.coef_mean_fn(v);
    if (spec.noise_scale > 0.0)
      for (int j = 0; j <= T; ++j) eps(j) += spec.noise_scale * rng.normal();
    coef_draws.row(static_cast<Eigen::Index>(i)) = eps.transpose();
    const double y = eps.dot(x.design());
    rows.push_back(Observation{y, std::move(x), std::move(v)});
  }

  return SimulationResult{Dataset(T, Mode::kExclusive, std::move(rows)),
                          coef_mean.tail(T), std::move(coef_draws), ate_seed};
}

struct SweepOptions {
  EstimateOptions estimate;
  int quantile_bins = 4;  // used when the control is continuous
};

struct SweepPoint {
  double target_sum = 0.0;
  bool identified = false;
  std::size_t n_cells = 0;
  std::size_t n_failing = 0;
  std::optional<double> ate_error;  // |ate_hat - true_ate|_2 when estimable
};

/// Rescales the propensity scores so each cell's sum hits the target, then
/// simulates, audits and (when some cell survives) records the ATE error.
/// Demonstrates estimation degrading as the sum approaches one.
inline std::vector<SweepPoint> failure_sweep(const DgpSpec& base,
                                             const std::vector<double>& sums,
                                             const SweepOptions& options = {}) {
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (!(sums[i] > 0.0 && sums[i] <= 1.0))
      throw Error("INVALID_ARGUMENT", "sweep sums must lie in (0, 1]");
    if (i > 0 && sums[i] < sums[i - 1])
      throw Error("INVALID_ARGUMENT", "sweep sums must be sorted ascending");
  }

  std::vector<SweepPoint> points;
  points.reserve(sums.size());
  for (double target : sums) {
    DgpSpec spec = base;
    auto base_gps = base.gps_fn;
    spec.gps_fn = [base_gps, target](const ControlValue& v) {
      const GpsVector g = base_gps(v);
      if (g.sum() <= 0.0)
        throw Error("INVALID_SPEC", "cannot rescale a zero gps vector");
      std::vector<double> probs = g.probs();
      const double scale = target / g.sum();
      for (double& p : probs) p = std::min(p * scale, 1.0);
      return GpsVector(std::move(probs));
    };

    const SimulationResult sim = simulate(spec);
    const PartitionScheme scheme =
        sim.data.discrete_controls()
            ? PartitionScheme(DiscreteScheme{})
            : PartitionScheme(QuantileScheme{options.quantile_bins});
    const IdentificationReport report = audit(sim.data, scheme, options.estimate);

    SweepPoint point;
    point.target_sum = target;
    point.identified = report.identified;
    point.n_cells = report.n_cells;
    point.n_failing = report.n_failing;
    try {
      const AsfEstimate est = estimate_asf(sim.data, scheme, options.estimate);
      point.ate_error = (est.ate - sim.true_ate).norm();
    } catch (const Error& e) {
      if (e.code() != "NOT_IDENTIFIED_EVERYWHERE") throw;
    }
    points.push_back(point);
  }
  return points;
}

}  // namespace hetcoef
