#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hetcoef/algebra.hpp"
#include "hetcoef/error.hpp"
#include "hetcoef/identification.hpp"

namespace hetcoef {

// Estimation of q0(V), the average structural function and average treatment
// effects by per-cell least squares on the control regression
// E[Y|X,V] = p(X)'q0(V). Conditioning on V is implemented by exact cells over
// discrete controls or by per-coordinate quantile bins over continuous ones;
// no smoothing. Cells that fail the identification checks are trimmed from the
// aggregate and their observation mass reported.

enum class Mode { kExclusive, kGeneral };

inline std::string_view to_string(Mode m) {
  return m == Mode::kExclusive ? "exclusive" : "general";
}

/// Control value: a discrete label or a real vector.
using ControlValue = std::variant<std::string, std::vector<double>>;

struct Observation {
  double y;
  TreatmentProfile x;
  ControlValue v;
};

class Dataset {
 public:
  Dataset(int num_treatments, Mode mode, std::vector<Observation> rows)
      : num_treatments_(num_treatments), mode_(mode), rows_(std::move(rows)) {
    if (num_treatments_ < 1)
      throw Error("INVALID_ARGUMENT", "model requires at least one treatment");
    if (rows_.empty()) throw Error("EMPTY_DATASET", "dataset has no rows");
    discrete_controls_ = std::holds_alternative<std::string>(rows_.front().v);
    control_dim_ =
        discrete_controls_
            ? 0
            : static_cast<int>(std::get<std::vector<double>>(rows_.front().v).size());
    if (!discrete_controls_ && control_dim_ < 1)
      throw Error("INVALID_ARGUMENT", "continuous control must have dimension >= 1");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const Observation& row = rows_[i];
      const std::string where = " at row " + std::to_string(i);
      if (row.x.num_treatments() != num_treatments_)
        throw Error("INVALID_ARGUMENT", "treatment profile of wrong length" + where);
      if (!std::isfinite(row.y)) throw Error("BAD_VALUE", "non-finite outcome" + where);
      if (mode_ == Mode::kExclusive && !row.x.exclusive())
        throw Error("EXCLUSIVITY_VIOLATION",
                    "more than one treatment indicator set" + where);
      if (discrete_controls_) {
        const auto* label = std::get_if<std::string>(&row.v);
        if (label == nullptr)
          throw Error("INVALID_ARGUMENT", "mixed control kinds" + where);
        if (label->empty()) throw Error("BAD_VALUE", "empty control label" + where);
      } else {
        const auto* vec = std::get_if<std::vector<double>>(&row.v);
        if (vec == nullptr)
          throw Error("INVALID_ARGUMENT", "mixed control kinds" + where);
        if (static_cast<int>(vec->size()) != control_dim_)
          throw Error("INVALID_ARGUMENT", "control vector of wrong dimension" + where);
        for (double x : *vec)
          if (!std::isfinite(x))
            throw Error("BAD_VALUE", "non-finite control value" + where);
      }
    }
  }

  int num_treatments() const { return num_treatments_; }
  Mode mode() const { return mode_; }
  const std::vector<Observation>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool discrete_controls() const { return discrete_controls_; }
  int control_dim() const { return control_dim_; }

 private:
  int num_treatments_;
  Mode mode_;
  std::vector<Observation> rows_;
  bool discrete_controls_;
  int control_dim_;
};

struct DiscreteScheme {};
struct QuantileScheme {
  int bins_per_dim;
};
using PartitionScheme = std::variant<DiscreteScheme, QuantileScheme>;

namespace detail {

/// Quantile bin edges for one coordinate: edge i is the empirical i/k quantile
/// sorted[ceil(n*i/k) - 1]. A value lands in the bin counting the edges
/// strictly below it, so ties at an edge go to the lower bin.
inline std::vector<double> quantile_edges(std::vector<double> values, int k,
                                          int coordinate) {
  std::sort(values.begin(), values.end());
  const std::size_t distinct =
      static_cast<std::size_t>(std::unique(values.begin(), values.end()) -
                               values.begin());
  if (distinct < static_cast<std::size_t>(k))
    throw Error("BIN_COUNT", "coordinate v" + std::to_string(coordinate + 1) + " has " +
                                 std::to_string(distinct) +
                                 " distinct values, fewer than bins=" + std::to_string(k));
  const std::size_t n = values.size();
  std::vector<double> edges;
  edges.reserve(static_cast<std::size_t>(k) - 1);
  for (int i = 1; i < k; ++i) {
    const std::size_t idx = (n * static_cast<std::size_t>(i) + k - 1) / k;  // ceil
    edges.push_back(values[idx - 1]);
  }
  return edges;
}

inline int bin_of(double x, const std::vector<double>& edges) {
  int bin = 0;
  for (double e : edges)
    if (e < x) ++bin;
  return bin;
}

inline std::string padded(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace detail

/// Assigns every row to exactly one cell. Discrete controls map each label to
/// its own cell; quantile binning forms k bins per coordinate on empirical
/// quantiles and encodes the bin tuple in the cell id.
inline std::map<std::string, std::vector<std::size_t>> partition_controls(
    const Dataset& data, const PartitionScheme& scheme) {
  std::map<std::string, std::vector<std::size_t>> cells;
  if (std::holds_alternative<DiscreteScheme>(scheme)) {
    if (!data.discrete_controls())
      throw Error("INVALID_ARGUMENT",
                  "discrete partition scheme requires label-valued controls");
    for (std::size_t i = 0; i < data.size(); ++i)
      cells[std::get<std::string>(data.rows()[i].v)].push_back(i);
    return cells;
  }

  const int k = std::get<QuantileScheme>(scheme).bins_per_dim;
  if (data.discrete_controls())
    throw Error("INVALID_ARGUMENT",
                "quantile partition scheme requires real-vector controls");
  if (k < 2) throw Error("INVALID_ARGUMENT", "quantile scheme requires bins >= 2");

  const int d = data.control_dim();
  std::vector<std::vector<double>> edges(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    std::vector<double> column;
    column.reserve(data.size());
    for (const auto& row : data.rows())
      column.push_back(std::get<std::vector<double>>(row.v)[static_cast<std::size_t>(j)]);
    edges[static_cast<std::size_t>(j)] = detail::quantile_edges(std::move(column), k, j);
  }
  const int width = static_cast<int>(std::to_string(k - 1).size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& v = std::get<std::vector<double>>(data.rows()[i].v);
    std::string id = "b";
    for (int j = 0; j < d; ++j) {
      if (j > 0) id += '_';
      id += detail::padded(detail::bin_of(v[static_cast<std::size_t>(j)],
                                          edges[static_cast<std::size_t>(j)]),
                           width);
    }
    cells[id].push_back(i);
  }
  return cells;
}

struct CellEstimate {
  std::string cell_id;
  std::size_t n_obs = 0;
  std::optional<MomentMatrix> moment_hat;  // sample analog of E[p(X)p(X)'|v]
  Vector cross_moment_hat;                 // sample analog of E[p(X)Y|v]
  std::optional<Vector> q_hat;
  double lambda_min_hat = 0.0;
  std::optional<GpsVector> gps_hat;  // exclusive mode only
  std::optional<FailureReason> failure;
};

inline std::size_t default_min_cell_size(int num_treatments) {
  // Fewer than T+2 rows cannot give a full-rank regression plus one residual
  // degree of freedom.
  return static_cast<std::size_t>(num_treatments) + 2;
}

struct EstimateOptions {
  double lambda_threshold = 1e-6;  // relative to lambda_max of moment_hat
  std::size_t min_cell_size = 0;   // 0 = num_treatments + 2
  double overlap_delta = 0.01;

  std::size_t resolved_min_cell_size(int num_treatments) const {
    return min_cell_size > 0 ? min_cell_size : default_min_cell_size(num_treatments);
  }
};

/// Per-cell sample moments and least squares. q_hat = moment_hat^{-1} cross
/// when the sample moment matrix clears the relative lambda threshold and the
/// cell is large enough; degenerate cells get an absent q_hat with the reason
/// recorded instead of an error.
inline CellEstimate estimate_cell(const Dataset& data, std::string cell_id,
                                  std::span<const std::size_t> row_indices,
                                  double lambda_threshold,
                                  std::size_t min_cell_size) {
  if (row_indices.empty())
    throw Error("INVALID_ARGUMENT", "estimate_cell requires a nonempty cell");
  const int dim = data.num_treatments() + 1;
  const double n = static_cast<double>(row_indices.size());

  Matrix moment = Matrix::Zero(dim, dim);
  Vector cross = Vector::Zero(dim);
  for (std::size_t idx : row_indices) {
    const Observation& row = data.rows()[idx];
    const Vector p = row.x.design();
    for (int i = 0; i < dim; ++i) {
      for (int j = i; j < dim; ++j) moment(i, j) += p(i) * p(j);
      cross(i) += p(i) * row.y;
    }
  }
  moment /= n;
  cross /= n;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < i; ++j) moment(i, j) = moment(j, i);
  moment(0, 0) = 1.0;  // n/n, kept exact

  CellEstimate est;
  est.cell_id = std::move(cell_id);
  est.n_obs = row_indices.size();
  est.cross_moment_hat = cross;
  est.moment_hat = MomentMatrix::from_matrix(moment);
  const auto [lmin, lmax] = eigenvalue_range(*est.moment_hat);
  est.lambda_min_hat = lmin;

  if (data.mode() == Mode::kExclusive) {
    std::vector<double> probs(static_cast<std::size_t>(data.num_treatments()));
    for (int t = 0; t < data.num_treatments(); ++t)
      probs[static_cast<std::size_t>(t)] = moment(0, t + 1);  // column mean of x_t
    est.gps_hat = GpsVector(std::move(probs));
  }

  if (est.n_obs < min_cell_size) {
    est.failure = FailureReason::kInsufficientData;
  } else if (lmin <= lambda_threshold * std::max(lmax, 0.0)) {
    est.failure = FailureReason::kSingularMomentMatrix;
  } else {
    est.q_hat = est.moment_hat->values().ldlt().solve(cross);
  }
  return est;
}

namespace detail {

/// Reason cascade shared by audit and estimate_asf so a trimmed cell always
/// fails the audit with the same reason: cell size, then the overlap margins
/// (exclusive mode), then the lambda_min rule.
inline std::optional<FailureReason> classify_cell(const CellEstimate& est, Mode mode,
                                                  double overlap_delta) {
  if (est.failure == FailureReason::kInsufficientData) return est.failure;
  if (mode == Mode::kExclusive) {
    if (auto failure = gps_overlap_failure(*est.gps_hat, overlap_delta)) return failure;
  }
  if (est.failure == FailureReason::kSingularMomentMatrix) return est.failure;
  return std::nullopt;
}

}  // namespace detail

struct AsfEstimate {
  Vector eq_mean;       // estimate of E[q0(V)], length T+1
  Vector ate;           // component t is mu(e_t) - mu(0_T) = eq_mean[t+1]
  double trimmed_mass;  // fraction of observations in cells without q_hat
  std::vector<CellEstimate> cells;  // sorted by cell_id
};

/// Average structural function and treatment effects: observation-weighted
/// mean of q_hat over the cells that keep one. Cells failing the reason
/// cascade are trimmed and their mass reported; estimation errors out only
/// when nothing survives.
inline AsfEstimate estimate_asf(const Dataset& data, const PartitionScheme& scheme,
                                const EstimateOptions& options = {}) {
  const auto cells = partition_controls(data, scheme);
  const std::size_t min_cell = options.resolved_min_cell_size(data.num_treatments());
  const int dim = data.num_treatments() + 1;

  AsfEstimate out;
  out.cells.reserve(cells.size());
  Vector weighted_sum = Vector::Zero(dim);
  std::size_t retained_rows = 0;
  for (const auto& [cell_id, rows] : cells) {
    CellEstimate est =
        estimate_cell(data, cell_id, rows, options.lambda_threshold, min_cell);
    if (auto reason = detail::classify_cell(est, data.mode(), options.overlap_delta)) {
      est.failure = reason;
      est.q_hat.reset();
    }
    if (est.q_hat) {
      weighted_sum += static_cast<double>(est.n_obs) * (*est.q_hat);
      retained_rows += est.n_obs;
    }
    out.cells.push_back(std::move(est));
  }
  if (retained_rows == 0)
    throw Error("NOT_IDENTIFIED_EVERYWHERE",
                "every control cell was trimmed; no identified cell remains");

  out.eq_mean = weighted_sum / static_cast<double>(retained_rows);
  out.ate = out.eq_mean.tail(data.num_treatments());
  out.trimmed_mass =
      static_cast<double>(data.size() - retained_rows) / static_cast<double>(data.size());
  return out;
}

struct CellAudit {
  std::string cell_id;
  std::size_t n_obs = 0;
  std::optional<GpsVector> gps_hat;
  std::optional<double> gps_sum;
  std::optional<double> min_gps;
  double lambda_min = 0.0;
  bool identified = false;
  std::optional<FailureReason> reason;
};

struct IdentificationReport {
  bool identified = false;
  std::size_t n_cells = 0;
  std::size_t n_failing = 0;
  std::vector<CellAudit> cells;  // sorted by cell_id
};

/// Identification diagnostics over the sample: per-cell scores, moment-matrix
/// eigenvalue and verdict with reason, plus the aggregate verdict. Pure
/// reporting; identical inputs give identical reports.
inline IdentificationReport audit(const Dataset& data, const PartitionScheme& scheme,
                                  const EstimateOptions& options = {}) {
  const auto cells = partition_controls(data, scheme);
  const std::size_t min_cell = options.resolved_min_cell_size(data.num_treatments());

  IdentificationReport report;
  report.cells.reserve(cells.size());
  for (const auto& [cell_id, rows] : cells) {
    const CellEstimate est =
        estimate_cell(data, cell_id, rows, options.lambda_threshold, min_cell);
    CellAudit audit_row;
    audit_row.cell_id = cell_id;
    audit_row.n_obs = est.n_obs;
    audit_row.lambda_min = est.lambda_min_hat;
    if (est.gps_hat) {
      audit_row.gps_hat = est.gps_hat;
      audit_row.gps_sum = est.gps_hat->sum();
      audit_row.min_gps = est.gps_hat->min();
    }
    audit_row.reason = detail::classify_cell(est, data.mode(), options.overlap_delta);
    audit_row.identified = !audit_row.reason.has_value();
    if (!audit_row.identified) ++report.n_failing;
    report.cells.push_back(std::move(audit_row));
  }
  report.n_cells = report.cells.size();
  report.identified = report.n_failing == 0;
  return report;
}

}  // namespace hetcoef
