#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hetcoef/error.hpp"

namespace hetcoef {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Relative thresholds, all scale-free. A distribution-derived moment matrix is
// treated as singular when lambda_min <= dim * lambda_max * kSingularRelTol;
// that is far above eigensolver noise for the tiny matrices used here.
inline constexpr double kSingularRelTol = 1e-10;
inline constexpr double kPsdRelTol = 1e-12;
inline constexpr double kNullResidualRelTol = 1e-8;
inline constexpr double kNullComponentTol = 1e-9;
inline constexpr double kUnitMassSlack = 1e-12;

/// Binary treatment profile x in {0,1}^T. The design vector it induces is
/// p(x) = (1, x(1), ..., x(T)) with the intercept always first.
class TreatmentProfile {
 public:
  explicit TreatmentProfile(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.empty())
      throw Error("INVALID_ARGUMENT", "treatment profile needs at least one treatment");
    for (auto b : bits_)
      if (b > 1) throw Error("INVALID_ARGUMENT", "treatment indicators must be 0 or 1");
  }

  /// All-off profile (the untreated state).
  static TreatmentProfile none(int num_treatments) {
    return TreatmentProfile(std::vector<std::uint8_t>(check_count(num_treatments), 0));
  }

  /// Profile with only treatment `t` on, t in [0, T).
  static TreatmentProfile single(int num_treatments, int t) {
    std::vector<std::uint8_t> bits(check_count(num_treatments), 0);
    if (t < 0 || t >= num_treatments)
      throw Error("INVALID_ARGUMENT", "treatment index out of range");
    bits[static_cast<std::size_t>(t)] = 1;
    return TreatmentProfile(std::move(bits));
  }

  int num_treatments() const { return static_cast<int>(bits_.size()); }
  std::uint8_t operator[](int t) const { return bits_[static_cast<std::size_t>(t)]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  int treated_count() const {
    int s = 0;
    for (auto b : bits_) s += b;
    return s;
  }

  /// At most one treatment on.
  bool exclusive() const { return treated_count() <= 1; }

  /// p(x) = (1, x(1), ..., x(T)).
  Vector design() const {
    Vector p(bits_.size() + 1);
    p(0) = 1.0;
    for (std::size_t t = 0; t < bits_.size(); ++t) p(static_cast<int>(t) + 1) = bits_[t];
    return p;
  }

  auto operator<=>(const TreatmentProfile&) const = default;

 private:
  static std::size_t check_count(int num_treatments) {
    if (num_treatments < 1)
      throw Error("INVALID_ARGUMENT", "model requires at least one treatment");
    return static_cast<std::size_t>(num_treatments);
  }

  std::vector<std::uint8_t> bits_;
};

/// Generalized propensity scores (Pr[X(1)=1|v], ..., Pr[X(T)=1|v]) for
/// mutually exclusive treatments. The residual mass 1 - sum is the untreated
/// state, so the sum may not exceed one.
class GpsVector {
 public:
  explicit GpsVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty())
      throw Error("INVALID_ARGUMENT", "gps vector needs at least one treatment");
    double s = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0))
        throw Error("INVALID_ARGUMENT", "propensity score outside [0,1]");
      s += p;
    }
    if (s > 1.0 + kUnitMassSlack)
      throw Error("INVALID_ARGUMENT",
                  "propensity scores sum to " + std::to_string(s) +
                      " > 1; treatments are not mutually exclusive");
    sum_ = s;
  }

  int num_treatments() const { return static_cast<int>(probs_.size()); }
  const std::vector<double>& probs() const { return probs_; }
  double operator[](int t) const { return probs_[static_cast<std::size_t>(t)]; }
  double sum() const { return sum_; }
  double min() const { return *std::min_element(probs_.begin(), probs_.end()); }

 private:
  std::vector<double> probs_;
  double sum_;
};

/// Joint distribution over treatment profiles {0,1}^T; the general-treatments
/// counterpart of GpsVector (profiles need not be mutually exclusive).
class JointDistribution {
 public:
  JointDistribution(int num_treatments,
                    const std::vector<std::pair<TreatmentProfile, double>>& mass) {
    if (num_treatments < 1)
      throw Error("INVALID_ARGUMENT", "model requires at least one treatment");
    double total = 0.0;
    for (const auto& [profile, prob] : mass) {
      if (profile.num_treatments() != num_treatments)
        throw Error("INVALID_ARGUMENT", "treatment profile has wrong length");
      if (!(prob >= 0.0))
        throw Error("INVALID_ARGUMENT", "profile probability must be nonnegative");
      mass_[profile] += prob;  // duplicates accumulate
      total += prob;
    }
    if (std::abs(total - 1.0) > kUnitMassSlack)
      throw Error("INVALID_ARGUMENT",
                  "profile probabilities sum to " + std::to_string(total) + ", not 1");
    num_treatments_ = num_treatments;
  }

  /// The exclusive distribution a GpsVector induces: mass p_t on e_t, residual
  /// on the all-off profile.
  static JointDistribution from_gps(const GpsVector& gps) {
    const int T = gps.num_treatments();
    std::vector<std::pair<TreatmentProfile, double>> mass;
    mass.reserve(static_cast<std::size_t>(T) + 1);
    double residual = 1.0;
    for (int t = 0; t < T; ++t) {
      mass.emplace_back(TreatmentProfile::single(T, t), gps[t]);
      residual -= gps[t];
    }
    mass.emplace_back(TreatmentProfile::none(T), std::max(residual, 0.0));
    return JointDistribution(T, mass);
  }

  int num_treatments() const { return num_treatments_; }
  const std::map<TreatmentProfile, double>& mass() const { return mass_; }

 private:
  int num_treatments_;
  std::map<TreatmentProfile, double> mass_;
};

/// The (T+1)x(T+1) symmetric matrix E[p(X)p(X)'|V=v]. Row/column 0 is the
/// intercept block. Construction enforces exact symmetry, entries in [0,1]
/// (all entries are moments of binary variables) and numerical positive
/// semidefiniteness.
class MomentMatrix {
 public:
  static MomentMatrix from_matrix(Matrix m) {
    if (m.rows() != m.cols() || m.rows() < 2)
      throw Error("INVALID_ARGUMENT", "moment matrix must be square with dim >= 2");
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m(i, j) != m(j, i))
          throw Error("INVALID_ARGUMENT", "moment matrix must be exactly symmetric");
        if (!(m(i, j) >= 0.0 && m(i, j) <= 1.0))
          throw Error("INVALID_ARGUMENT",
                      "moment matrix entries must lie in [0,1] (binary moments)");
      }
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues()(0);
    const double lmax = es.eigenvalues()(m.rows() - 1);
    if (lmin < -static_cast<double>(m.rows()) * std::max(lmax, 0.0) * kPsdRelTol)
      throw Error("INVALID_ARGUMENT", "moment matrix is not positive semidefinite");
    return MomentMatrix(std::move(m));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  int num_treatments() const { return dim() - 1; }
  const Matrix& values() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  explicit MomentMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

/// [[1, p'], [p, diag(p)]] with p the propensity scores: the form E[p(X)p(X)'|V]
/// takes under mutually exclusive treatments (E[X(s)X(t)|V] = 0 for s != t).
/// Exact arithmetic on the inputs, no estimation.
inline MomentMatrix moment_matrix_from_gps(const GpsVector& gps) {
  const int T = gps.num_treatments();
  Matrix m = Matrix::Zero(T + 1, T + 1);
  m(0, 0) = 1.0;
  for (int t = 0; t < T; ++t) {
    m(0, t + 1) = gps[t];
    m(t + 1, 0) = gps[t];
    m(t + 1, t + 1) = gps[t];
  }
  return MomentMatrix::from_matrix(std::move(m));
}

/// sum over profiles of prob(x) * p(x)p(x)' for general treatments.
inline MomentMatrix moment_matrix_from_joint(const JointDistribution& dist) {
  const int dim = dist.num_treatments() + 1;
  Matrix m = Matrix::Zero(dim, dim);
  for (const auto& [profile, prob] : dist.mass()) {
    const Vector p = profile.design();
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) m(i, j) += prob * p(i) * p(j);
  }
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < i; ++j) m(i, j) = m(j, i);
  return MomentMatrix::from_matrix(std::move(m));
}

struct EigenRange {
  double min;
  double max;
};

inline EigenRange eigenvalue_range(const MomentMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.values(), Eigen::EigenvaluesOnly);
  return {es.eigenvalues()(0), es.eigenvalues()(m.dim() - 1)};
}

inline double smallest_eigenvalue(const MomentMatrix& m) {
  return eigenvalue_range(m).min;
}

inline double largest_eigenvalue(const MomentMatrix& m) {
  return eigenvalue_range(m).max;
}

/// Smallest eigenvalue of a general symmetric matrix (used on conditional
/// variance matrices, which are not MomentMatrix instances).
inline double smallest_eigenvalue_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double largest_eigenvalue_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(m.rows() - 1);
}

/// Singularity rule for distribution-derived matrices:
/// lambda_min <= dim * lambda_max * 1e-10.
inline double singularity_threshold(int dim, double lambda_max) {
  return static_cast<double>(dim) * std::max(lambda_max, 0.0) * kSingularRelTol;
}

inline bool is_singular(const MomentMatrix& m) {
  const auto [lmin, lmax] = eigenvalue_range(m);
  return lmin <= singularity_threshold(m.dim(), lmax);
}

/// Schur complement of the (0,0) intercept entry: the lower-right T x T block
/// minus the outer product of the remainder of the first column. For a moment
/// matrix of (1, X) this is E[XX'|V] - E[X|V]E[X'|V] = var(X|V).
inline Matrix conditional_variance(const MomentMatrix& m) {
  if (std::abs(m(0, 0) - 1.0) > kUnitMassSlack)
    throw Error("INVALID_ARGUMENT", "conditional_variance requires m[0][0] == 1");
  const int T = m.num_treatments();
  const Matrix block = m.values().bottomRightCorner(T, T);
  const Vector first = m.values().col(0).tail(T);
  Matrix var(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = i; j < T; ++j) {
      var(i, j) = block(i, j) - first(i) * first(j);
      var(j, i) = var(i, j);
    }
  return var;
}

/// Scalar Schur complement of the treatment diagonal block diag(E[X|V]) in an
/// exclusive-treatments moment matrix: 1 - sum_t E[X(t)|V]. Requires the
/// exclusive block structure and strictly positive diagonal entries (the
/// complement is undefined when some Pr[X(t)=1|V] is zero).
inline double schur_complement_of_diag_block(const MomentMatrix& m) {
  const int T = m.num_treatments();
  for (int i = 1; i <= T; ++i)
    for (int j = i + 1; j <= T; ++j)
      if (std::abs(m(i, j)) > kUnitMassSlack)
        throw Error("INVALID_ARGUMENT",
                    "matrix was not built from mutually exclusive treatments "
                    "(nonzero treatment cross moment)");
  double sum = 0.0;
  for (int t = 1; t <= T; ++t) {
    if (m(t, t) <= 0.0)
      throw Error("INVALID_ARGUMENT",
                  "treatment diagonal has a zero entry; Schur complement of "
                  "diag(E[X|V]) is undefined");
    if (std::abs(m(0, t) - m(t, t)) > kUnitMassSlack)
      throw Error("INVALID_ARGUMENT",
                  "matrix was not built from mutually exclusive treatments "
                  "(E[X(t)^2] != E[X(t)])");
    sum += m(t, t);
  }
  return 1.0 - sum;
}

/// A unit-norm direction Delta with M Delta = 0 when M is singular at the
/// numeric threshold, nothing otherwise. Sign convention: the first component
/// that is meaningfully nonzero is made positive, so output is deterministic.
inline std::optional<Vector> null_space_direction(const MomentMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.values());
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(m.dim() - 1);
  if (lmin > singularity_threshold(m.dim(), lmax)) return std::nullopt;
  Vector v = es.eigenvectors().col(0);
  const double scale = v.cwiseAbs().maxCoeff();
  for (int i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > kNullComponentTol * scale) {
      if (v(i) < 0.0) v = -v;
      break;
    }
  }
  v.normalize();
  return v;
}

}  // namespace hetcoef
