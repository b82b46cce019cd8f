#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "hetcoef/algebra.hpp"
#include "hetcoef/error.hpp"

namespace hetcoef {

// Identification criteria over a collection of control cells. Each criterion
// quantifies over the cells with positive probability mass; zero-weight cells
// are diagnosed but never fail a verdict.

enum class FailureReason {
  kSingularMomentMatrix,
  kZeroGps,
  kGpsSumAtOne,
  kInsufficientData,
};

inline std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::kSingularMomentMatrix: return "SINGULAR_MOMENT_MATRIX";
    case FailureReason::kZeroGps: return "ZERO_GPS";
    case FailureReason::kGpsSumAtOne: return "GPS_SUM_AT_ONE";
    case FailureReason::kInsufficientData: return "INSUFFICIENT_DATA";
  }
  return "UNKNOWN";
}

/// Conditional treatment distribution in one control cell. Exclusive mode
/// carries the generalized propensity scores; general mode a joint
/// distribution over {0,1}^T; a cell may also be given directly by its
/// conditional moment matrix when only second moments are known.
class CellDistribution {
 public:
  CellDistribution(std::string cell_id, double weight, GpsVector gps)
      : CellDistribution(std::move(cell_id), weight, Dist(std::move(gps))) {}
  CellDistribution(std::string cell_id, double weight, JointDistribution joint)
      : CellDistribution(std::move(cell_id), weight, Dist(std::move(joint))) {}
  CellDistribution(std::string cell_id, double weight, MomentMatrix moment)
      : CellDistribution(std::move(cell_id), weight, Dist(std::move(moment))) {}

  const std::string& cell_id() const { return cell_id_; }
  double weight() const { return weight_; }

  bool exclusive() const { return std::holds_alternative<GpsVector>(dist_); }

  const GpsVector& gps() const {
    if (!exclusive())
      throw Error("INVALID_ARGUMENT",
                  "cell " + cell_id_ + " is not in exclusive (gps) mode");
    return std::get<GpsVector>(dist_);
  }

  int num_treatments() const {
    if (const auto* g = std::get_if<GpsVector>(&dist_)) return g->num_treatments();
    if (const auto* j = std::get_if<JointDistribution>(&dist_)) return j->num_treatments();
    return std::get<MomentMatrix>(dist_).num_treatments();
  }

  MomentMatrix moment() const {
    if (const auto* g = std::get_if<GpsVector>(&dist_)) return moment_matrix_from_gps(*g);
    if (const auto* j = std::get_if<JointDistribution>(&dist_))
      return moment_matrix_from_joint(*j);
    return std::get<MomentMatrix>(dist_);
  }

 private:
  using Dist = std::variant<GpsVector, JointDistribution, MomentMatrix>;

  CellDistribution(std::string cell_id, double weight, Dist dist)
      : cell_id_(std::move(cell_id)), weight_(weight), dist_(std::move(dist)) {
    if (cell_id_.empty()) throw Error("INVALID_ARGUMENT", "cell_id must be nonempty");
    if (!(weight_ >= 0.0 && weight_ <= 1.0))
      throw Error("INVALID_ARGUMENT", "cell weight must lie in [0,1]");
  }

  std::string cell_id_;
  double weight_;
  Dist dist_;
};

struct CellDiagnostics {
  double lambda_min = 0.0;
  std::optional<double> gps_sum;  // exclusive cells only
  std::optional<double> min_gps;  // exclusive cells only
};

struct IdentificationVerdict {
  bool identified = false;
  std::vector<std::pair<std::string, FailureReason>> failing_cells;  // sorted by id
  std::map<std::string, CellDiagnostics> per_cell;
};

/// Per-cell mean coefficient function: cell_id -> vector of length T+1.
struct QFunction {
  std::map<std::string, Vector> values;

  const Vector& at(const std::string& cell_id) const {
    auto it = values.find(cell_id);
    if (it == values.end())
      throw Error("INVALID_ARGUMENT", "q function has no entry for cell " + cell_id);
    return it->second;
  }
};

namespace detail {

inline constexpr double kWeightSumSlack = 1e-10;

inline std::vector<const CellDistribution*> validate_cells(
    const std::vector<CellDistribution>& cells) {
  if (cells.empty()) throw Error("INVALID_ARGUMENT", "empty cell collection");
  const int T = cells.front().num_treatments();
  double wsum = 0.0;
  std::vector<const CellDistribution*> sorted;
  sorted.reserve(cells.size());
  for (const auto& c : cells) {
    if (c.num_treatments() != T)
      throw Error("INVALID_ARGUMENT", "cells disagree on the number of treatments");
    wsum += c.weight();
    sorted.push_back(&c);
  }
  if (std::abs(wsum - 1.0) > kWeightSumSlack)
    throw Error("INVALID_ARGUMENT",
                "cell weights sum to " + std::to_string(wsum) + ", not 1");
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->cell_id() < b->cell_id(); });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i]->cell_id() == sorted[i - 1]->cell_id())
      throw Error("INVALID_ARGUMENT", "duplicate cell_id " + sorted[i]->cell_id());
  return sorted;
}

/// Overlap test on one gps vector. delta > 0 demands a margin; delta == 0
/// falls back to the strict-inequality reading with numeric slack
/// (all scores > 0, sum < 1 - 1e-12).
inline std::optional<FailureReason> gps_overlap_failure(const GpsVector& g,
                                                        double delta) {
  const bool min_ok = delta > 0.0 ? g.min() >= delta : g.min() > 0.0;
  if (!min_ok) return FailureReason::kZeroGps;
  const bool sum_ok =
      delta > 0.0 ? g.sum() <= 1.0 - delta : g.sum() < 1.0 - kUnitMassSlack;
  if (!sum_ok) return FailureReason::kGpsSumAtOne;
  return std::nullopt;
}

}  // namespace detail

/// Criterion: the conditional moment matrix is nonsingular in every
/// positive-weight cell. `overlap_delta` adds an absolute lambda_min margin on
/// top of the numeric singularity threshold; 0 uses the numeric rule alone.
inline IdentificationVerdict verdict_theorem1(const std::vector<CellDistribution>& cells,
                                              double overlap_delta = 0.0) {
  if (overlap_delta < 0.0) throw Error("INVALID_ARGUMENT", "overlap_delta must be >= 0");
  IdentificationVerdict verdict;
  for (const auto* cell : detail::validate_cells(cells)) {
    const MomentMatrix m = cell->moment();
    const auto [lmin, lmax] = eigenvalue_range(m);
    CellDiagnostics diag;
    diag.lambda_min = lmin;
    if (cell->exclusive()) {
      diag.gps_sum = cell->gps().sum();
      diag.min_gps = cell->gps().min();
    }
    verdict.per_cell.emplace(cell->cell_id(), diag);
    const double threshold =
        std::max(singularity_threshold(m.dim(), lmax), overlap_delta);
    if (cell->weight() > 0.0 && lmin <= threshold)
      verdict.failing_cells.emplace_back(cell->cell_id(),
                                         FailureReason::kSingularMomentMatrix);
  }
  verdict.identified = verdict.failing_cells.empty();
  return verdict;
}

/// Criterion for mutually exclusive treatments: in every positive-weight cell
/// all scores clear `overlap_delta` and their sum stays below 1 by the same
/// margin. Records gps_sum and min_gps (and lambda_min) per cell.
inline IdentificationVerdict verdict_theorem3(const std::vector<CellDistribution>& cells,
                                              double overlap_delta = 0.0) {
  if (overlap_delta < 0.0) throw Error("INVALID_ARGUMENT", "overlap_delta must be >= 0");
  IdentificationVerdict verdict;
  for (const auto* cell : detail::validate_cells(cells)) {
    const GpsVector& g = cell->gps();  // throws on non-exclusive cells
    CellDiagnostics diag;
    diag.lambda_min = smallest_eigenvalue(cell->moment());
    diag.gps_sum = g.sum();
    diag.min_gps = g.min();
    verdict.per_cell.emplace(cell->cell_id(), diag);
    if (cell->weight() > 0.0) {
      if (auto failure = detail::gps_overlap_failure(g, overlap_delta))
        verdict.failing_cells.emplace_back(cell->cell_id(), *failure);
    }
  }
  verdict.identified = verdict.failing_cells.empty();
  return verdict;
}

/// Checks that the three identification criteria coincide on an exclusive
/// collection with strictly positive scores: the lambda_min test on the moment
/// matrix, nonsingularity of var(X|V), and the gps-sum test. All three use
/// numeric thresholds (overlap_delta = 0 semantics).
inline bool verdicts_agree(const std::vector<CellDistribution>& cells) {
  bool t1 = true, t2 = true, t3 = true;
  for (const auto* cell : detail::validate_cells(cells)) {
    const GpsVector& g = cell->gps();
    if (g.min() <= 0.0)
      throw Error("INVALID_ARGUMENT",
                  "verdicts_agree requires strictly positive propensity scores");
    if (cell->weight() <= 0.0) continue;
    const MomentMatrix m = cell->moment();
    const auto [lmin, lmax] = eigenvalue_range(m);
    if (lmin <= singularity_threshold(m.dim(), lmax)) t1 = false;
    const Matrix var = conditional_variance(m);
    const double vmin = smallest_eigenvalue_sym(var);
    const double vmax = largest_eigenvalue_sym(var);
    if (vmin <= singularity_threshold(static_cast<int>(var.rows()), vmax)) t2 = false;
    if (!(g.sum() < 1.0 - kUnitMassSlack)) t3 = false;
  }
  return t1 == t2 && t2 == t3;
}

/// Weighted mean of a q function over the cells, E[q(V)].
inline Vector q_mean(const std::vector<CellDistribution>& cells, const QFunction& q) {
  const auto sorted = detail::validate_cells(cells);
  Vector mean = Vector::Zero(sorted.front()->num_treatments() + 1);
  for (const auto* cell : sorted) mean += cell->weight() * q.at(cell->cell_id());
  return mean;
}

/// Builds an observationally equivalent alternative to q0 whenever some
/// positive-weight cell has a singular moment matrix; nothing otherwise.
///
/// In each singular cell take the unit null-space direction Delta(v). Pick
/// j* as the smallest coordinate index that is nonzero in some positive-weight
/// singular cell, keep Delta only on cells where Delta_{j*}(v) != 0, flip each
/// kept cell's sign so component j* is positive, and add to q0. The result
/// leaves p(X)'q(V) unchanged while shifting the mean: component j* of
/// E[q_bar - q0] is a sum of strictly positive terms.
inline std::optional<QFunction> construct_equivalent_q(
    const std::vector<CellDistribution>& cells, const QFunction& q0) {
  const auto sorted = detail::validate_cells(cells);
  const int dim = sorted.front()->num_treatments() + 1;

  struct SingularCell {
    const CellDistribution* cell;
    Vector direction;
  };
  std::vector<SingularCell> singular;
  for (const auto* cell : sorted) {
    q0.at(cell->cell_id());  // q0 must cover every cell
    if (cell->weight() <= 0.0) continue;
    if (auto delta = null_space_direction(cell->moment()))
      singular.push_back({cell, std::move(*delta)});
  }
  if (singular.empty()) return std::nullopt;

  int pivot = -1;
  for (int j = 0; j < dim && pivot < 0; ++j)
    for (const auto& s : singular)
      if (std::abs(s.direction(j)) > kNullComponentTol) {
        pivot = j;
        break;
      }

  QFunction qbar = q0;
  for (const auto& s : singular) {
    const double component = s.direction(pivot);
    if (std::abs(component) <= kNullComponentTol) continue;
    const double sign = component > 0.0 ? 1.0 : -1.0;
    qbar.values[s.cell->cell_id()] = q0.at(s.cell->cell_id()) + sign * s.direction;
  }
  return qbar;
}

/// Mean squared difference of the control regressions two q functions imply:
/// sum over cells of weight * (qa - qb)' M(v) (qa - qb).
inline double observational_distance(const std::vector<CellDistribution>& cells,
                                     const QFunction& qa, const QFunction& qb) {
  double total = 0.0;
  for (const auto* cell : detail::validate_cells(cells)) {
    const Vector d = qa.at(cell->cell_id()) - qb.at(cell->cell_id());
    total += cell->weight() * d.dot(cell->moment().values() * d);
  }
  return total;
}

struct Lemma1Gap {
  double lhs;  // observational distance
  double rhs;  // sum of weight * |qa - qb|^2 * max(lambda_min, 0)
};

/// Both sides of the Rayleigh-quotient bound
/// E[(p(X)'d(V))^2] >= E[|d(V)|^2 lambda_min(V)]; lhs >= rhs always.
inline Lemma1Gap lemma1_inequality_gap(const std::vector<CellDistribution>& cells,
                                       const QFunction& qa, const QFunction& qb) {
  double lhs = 0.0, rhs = 0.0;
  for (const auto* cell : detail::validate_cells(cells)) {
    const Vector d = qa.at(cell->cell_id()) - qb.at(cell->cell_id());
    const MomentMatrix m = cell->moment();
    lhs += cell->weight() * d.dot(m.values() * d);
    rhs += cell->weight() * d.squaredNorm() * std::max(smallest_eigenvalue(m), 0.0);
  }
  return {lhs, rhs};
}

}  // namespace hetcoef
