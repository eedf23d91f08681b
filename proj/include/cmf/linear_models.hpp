#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cmf/constraint.hpp"

namespace cmf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// User embeddings U (m x k), item embeddings P (n x k) and user bias B (m).
struct EmbeddingModel {
  RowMatrix U;
  RowMatrix P;
  Vector B;

  EmbeddingModel() = default;
  EmbeddingModel(std::size_t num_users, std::size_t num_items, std::size_t k);

  std::size_t k() const { return static_cast<std::size_t>(U.cols()); }
  std::size_t num_users() const { return static_cast<std::size_t>(U.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(P.rows()); }

  void check_ids(std::size_t user, std::size_t item) const;
  bool all_finite() const;
};

/// Diagonal slices of A: column j of D is the diagonal of [A]_j (k x d).
struct DiagonalTransform {
  RowMatrix D;

  DiagonalTransform() = default;
  /// All-ones slices, i.e. T(c) = I_k for every c.
  DiagonalTransform(std::size_t k, std::size_t dim);

  std::size_t k() const { return static_cast<std::size_t>(D.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(D.cols()); }
};

/// Scalar slices [A]_j = alpha_j I_k.
struct WeightedTransform {
  Vector alpha;

  WeightedTransform() = default;
  explicit WeightedTransform(std::size_t dim) : alpha(Vector::Ones(static_cast<Eigen::Index>(dim))) {}

  std::size_t dim() const { return static_cast<std::size_t>(alpha.size()); }
  /// The equivalent DC-MF slices: every row of D equals alpha.
  DiagonalTransform as_diagonal(std::size_t k) const;
};

/// CAMF-CI's per-(feature, item) offsets. Only compatible entries (f_{i,j} = 1)
/// are stored; every other entry reads as zero and cannot be written.
class ContextItemTable {
 public:
  ContextItemTable() = default;
  explicit ContextItemTable(FeatureMap compat);

  std::size_t dim() const { return compat_.dim(); }
  std::size_t num_items() const { return compat_.size(); }
  const FeatureMap& compatibility() const { return compat_; }

  double value(std::size_t feature, std::size_t item) const;
  void set(std::size_t feature, std::size_t item, double value);

  /// Stored values of item i, aligned with compatibility().row(i).active().
  std::vector<double>& item_values(std::size_t item) { return values_.at(item); }
  const std::vector<double>& item_values(std::size_t item) const { return values_.at(item); }

  /// Slots of item i's storage selected by c (the compatible active bits).
  std::vector<std::size_t> compatible_slots(const ConstraintVector& c, std::size_t item) const;

  double squared_norm() const;

 private:
  FeatureMap compat_;
  std::vector<std::vector<double>> values_;
};

/// U_u . P_i + B_u
double score_mf(const EmbeddingModel& model, std::size_t user, std::size_t item);

/// B_u + U_u . P_i + mean of C[j][i] over active bits of c compatible with item i.
double score_camf(const EmbeddingModel& model, const ContextItemTable& table, std::size_t user,
                  std::size_t item, const ConstraintVector& c);

/// Diagonal of T(c) = D c / ||c||_1.
Vector transform_linear(const DiagonalTransform& transform, const ConstraintVector& c);

/// sum_k U[u][k] t[k] P[i][k] + B_u
double score_constrained(const EmbeddingModel& model, const Vector& t_diag, std::size_t user,
                         std::size_t item);

/// (sum_{j in c} alpha_j / ||c||_1) (U_u . P_i) + B_u
double score_weighted(const EmbeddingModel& model, const WeightedTransform& weights,
                      std::size_t user, std::size_t item, const ConstraintVector& c);

/// Mean of alpha over the active bits of c.
double weighted_scale(const WeightedTransform& weights, const ConstraintVector& c);

}  // namespace cmf
