#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nnsparse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative singular-value cutoff below which a direction counts as null.
inline constexpr double kDefaultRankTol = 1e-10;

class InvalidSupportError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense dictionary of column atoms: rows are measurement bands, columns are
/// atoms. Entries must be finite and no atom may be identically zero.
class Dictionary {
 public:
  explicit Dictionary(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() < 1 || entries_.cols() < 1)
      throw std::invalid_argument("dictionary needs at least one row and one column");
    if (!entries_.allFinite())
      throw std::invalid_argument("dictionary entries must be finite");
    for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
      if (entries_.col(j).norm() == 0.0)
        throw std::invalid_argument("dictionary column " + std::to_string(j) +
                                    " is identically zero");
    }
  }

  const Matrix& entries() const { return entries_; }
  int num_rows() const { return static_cast<int>(entries_.rows()); }  // L, bands
  int num_cols() const { return static_cast<int>(entries_.cols()); }  // N, atoms
  auto atom(int j) const { return entries_.col(j); }

 private:
  Matrix entries_;
};

/// Strictly increasing set of atom indices. The constructor sorts its input
/// and rejects duplicates and negative indices; bounds are checked against a
/// dictionary via validate_for().
class Support {
 public:
  Support() = default;

  explicit Support(std::vector<int> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
      throw InvalidSupportError("support contains duplicate indices");
    if (!indices_.empty() && indices_.front() < 0)
      throw InvalidSupportError("support contains a negative index");
  }

  /// All indices in [0, num_atoms) that are not in `s`.
  static Support complement(const Support& s, int num_atoms) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(num_atoms) - s.indices_.size());
    size_t k = 0;
    for (int j = 0; j < num_atoms; ++j) {
      if (k < s.indices_.size() && s.indices_[k] == j) {
        ++k;
      } else {
        out.push_back(j);
      }
    }
    return Support(std::move(out));
  }

  const std::vector<int>& indices() const& { return indices_; }
  std::vector<int> indices() && { return std::move(indices_); }
  int size() const { return static_cast<int>(indices_.size()); }
  bool empty() const { return indices_.empty(); }

  bool contains(int j) const {
    return std::binary_search(indices_.begin(), indices_.end(), j);
  }

  void validate_for(int num_atoms) const {
    if (!indices_.empty() && indices_.back() >= num_atoms)
      throw InvalidSupportError("support index " + std::to_string(indices_.back()) +
                                " out of range for " + std::to_string(num_atoms) +
                                " atoms");
  }

  bool operator==(const Support&) const = default;

 private:
  std::vector<int> indices_;
};

/// Measured signal, one value per band.
struct Observation {
  Vector values;

  explicit Observation(Vector v) : values(std::move(v)) {
    if (values.size() < 1)
      throw std::invalid_argument("observation must have at least one entry");
    if (!values.allFinite())
      throw std::invalid_argument("observation contains non-finite entries");
  }
};

/// Generating coefficients and additive distortion behind a synthetic
/// observation: y = A x + e with x elementwise non-negative.
struct GroundTruth {
  Vector coefficients;  // length N
  Vector distortion;    // length L

  GroundTruth(Vector coeffs, Vector e)
      : coefficients(std::move(coeffs)), distortion(std::move(e)) {
    if (!coefficients.allFinite() || !distortion.allFinite())
      throw std::invalid_argument("ground truth contains non-finite entries");
    if (coefficients.size() > 0 && coefficients.minCoeff() < 0.0)
      throw std::invalid_argument("ground-truth coefficients must be non-negative");
  }

  Support support() const {
    std::vector<int> idx;
    for (Eigen::Index i = 0; i < coefficients.size(); ++i)
      if (coefficients(i) > 0.0) idx.push_back(static_cast<int>(i));
    return Support(std::move(idx));
  }
};

/// Columns of `dict` at the support indices, order preserved.
inline Matrix subdictionary(const Dictionary& dict, const Support& support) {
  support.validate_for(dict.num_cols());
  Matrix out(dict.num_rows(), support.size());
  for (int c = 0; c < support.size(); ++c)
    out.col(c) = dict.entries().col(support.indices()[static_cast<size_t>(c)]);
  return out;
}

/// Pseudoinverse, Gram inverse, and orthogonal-complement projector of one
/// subdictionary. The pseudoinverse comes from an SVD with singular values
/// below rank_tol times the largest treated as zero. The projector is never
/// materialized; it is applied as v - A (A† v), which stays correct in the
/// rank-deficient case because A A† projects onto the column range.
///
/// Immutable after construction and safe to share across threads.
class SubdictionaryCache {
 public:
  explicit SubdictionaryCache(Matrix subdict, double rank_tol = kDefaultRankTol)
      : subdict_(std::move(subdict)) {
    if (subdict_.cols() < 1)
      throw std::invalid_argument("subdictionary cache needs at least one atom");
    if (!subdict_.allFinite())
      throw std::invalid_argument("subdictionary contains non-finite entries");
    Eigen::JacobiSVD<Matrix> svd(subdict_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rank_tol * sv(0) : 0.0;
    Vector inv_sv = Vector::Zero(sv.size());
    rank_ = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > cutoff && sv(i) > 0.0) {
        inv_sv(i) = 1.0 / sv(i);
        ++rank_;
      }
    }
    pinv_ = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    if (rank_ == subdict_.cols()) {
      gram_inverse_ = svd.matrixV() * inv_sv.cwiseProduct(inv_sv).asDiagonal() *
                      svd.matrixV().transpose();
    }
  }

  const Matrix& subdictionary() const { return subdict_; }
  const Matrix& pseudoinverse() const { return pinv_; }

  int rank() const { return rank_; }
  int size() const { return static_cast<int>(subdict_.cols()); }  // J
  bool full_rank() const { return rank_ == subdict_.cols(); }

  /// (AᵀA)⁻¹ of the subdictionary; only defined at full column rank.
  const Matrix& gram_inverse() const {
    if (!full_rank())
      throw RankDeficientError("gram inverse undefined: subdictionary rank " +
                               std::to_string(rank_) + " < " + std::to_string(size()));
    return gram_inverse_;
  }

  /// P⊥ v: the residual of v after projection onto the subdictionary span.
  Vector apply_complement_projector(const Vector& v) const {
    return v - subdict_ * (pinv_ * v);
  }

 private:
  Matrix subdict_;
  Matrix pinv_;          // J x L
  Matrix gram_inverse_;  // J x J, empty unless full rank
  int rank_ = 0;
};

inline SubdictionaryCache build_cache(const Dictionary& dict, const Support& support,
                                      double rank_tol = kDefaultRankTol) {
  if (support.empty())
    throw std::invalid_argument("build_cache requires a nonempty support");
  return SubdictionaryCache(subdictionary(dict, support), rank_tol);
}

/// Maximum l1 norm over the rows: the (inf, inf) operator norm.
inline double inf_inf_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (!m.allFinite())
    throw std::invalid_argument("inf_inf_norm requires finite entries");
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace nnsparse
