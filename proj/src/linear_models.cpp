#include "cmf/linear_models.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "cmf/errors.hpp"

namespace cmf {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Sequential accumulation so that score_constrained with t = 1 reproduces it exactly.
double row_dot(const RowMatrix& a, std::size_t ra, const RowMatrix& b, std::size_t rb) {
  double s = 0.0;
  for (Eigen::Index q = 0; q < a.cols(); ++q) s += a(idx(ra), q) * b(idx(rb), q);
  return s;
}

}  // namespace

EmbeddingModel::EmbeddingModel(std::size_t num_users, std::size_t num_items, std::size_t k)
    : U(RowMatrix::Zero(idx(num_users), idx(k))),
      P(RowMatrix::Zero(idx(num_items), idx(k))),
      B(Vector::Zero(idx(num_users))) {}

void EmbeddingModel::check_ids(std::size_t user, std::size_t item) const {
  if (user >= num_users()) throw DimensionError("user id out of range: " + std::to_string(user));
  if (item >= num_items()) throw DimensionError("item id out of range: " + std::to_string(item));
}

bool EmbeddingModel::all_finite() const {
  return U.allFinite() && P.allFinite() && B.allFinite();
}

DiagonalTransform::DiagonalTransform(std::size_t k, std::size_t dim)
    : D(RowMatrix::Ones(idx(k), idx(dim))) {}

DiagonalTransform WeightedTransform::as_diagonal(std::size_t k) const {
  DiagonalTransform out(k, dim());
  for (Eigen::Index r = 0; r < out.D.rows(); ++r) out.D.row(r) = alpha.transpose();
  return out;
}

ContextItemTable::ContextItemTable(FeatureMap compat) : compat_(std::move(compat)) {
  values_.reserve(compat_.size());
  for (const auto& row : compat_.rows()) values_.emplace_back(row.count(), 0.0);
}

double ContextItemTable::value(std::size_t feature, std::size_t item) const {
  const auto& act = compat_.row(item).active();
  auto it = std::lower_bound(act.begin(), act.end(), static_cast<std::uint32_t>(feature));
  if (it == act.end() || *it != feature) return 0.0;
  return values_[item][static_cast<std::size_t>(it - act.begin())];
}

void ContextItemTable::set(std::size_t feature, std::size_t item, double value) {
  const auto& act = compat_.row(item).active();
  auto it = std::lower_bound(act.begin(), act.end(), static_cast<std::uint32_t>(feature));
  if (it == act.end() || *it != feature) {
    throw DataError("context entry (" + std::to_string(feature) + "," + std::to_string(item) +
                    ") is structurally zero");
  }
  values_[item][static_cast<std::size_t>(it - act.begin())] = value;
}

std::vector<std::size_t> ContextItemTable::compatible_slots(const ConstraintVector& c,
                                                            std::size_t item) const {
  if (c.dim() != dim()) throw DimensionError("constraint dimension does not match context table");
  const auto& act = compat_.row(item).active();
  std::vector<std::size_t> slots;
  auto it = act.begin();
  for (auto j : c.active()) {
    it = std::lower_bound(it, act.end(), j);
    if (it == act.end()) break;
    if (*it == j) slots.push_back(static_cast<std::size_t>(it - act.begin()));
  }
  return slots;
}

double ContextItemTable::squared_norm() const {
  double total = 0.0;
  for (const auto& row : values_) {
    for (double v : row) total += v * v;
  }
  return total;
}

double score_mf(const EmbeddingModel& model, std::size_t user, std::size_t item) {
  model.check_ids(user, item);
  return row_dot(model.U, user, model.P, item) + model.B(idx(user));
}

double score_camf(const EmbeddingModel& model, const ContextItemTable& table, std::size_t user,
                  std::size_t item, const ConstraintVector& c) {
  const double base = score_mf(model, user, item);
  const auto slots = table.compatible_slots(c, item);
  if (slots.empty()) return base;
  const auto& values = table.item_values(item);
  double sum = 0.0;
  for (auto s : slots) sum += values[s];
  return base + sum / static_cast<double>(slots.size());
}

Vector transform_linear(const DiagonalTransform& transform, const ConstraintVector& c) {
  if (c.dim() != transform.dim()) {
    throw DimensionError("constraint dimension does not match transform");
  }
  Vector t = Vector::Zero(transform.D.rows());
  for (auto j : c.active()) t += transform.D.col(j);
  return t / static_cast<double>(c.l1_norm());
}

double score_constrained(const EmbeddingModel& model, const Vector& t_diag, std::size_t user,
                         std::size_t item) {
  model.check_ids(user, item);
  if (static_cast<std::size_t>(t_diag.size()) != model.k()) {
    throw DimensionError("transform diagonal length does not match k");
  }
  double s = 0.0;
  for (Eigen::Index q = 0; q < t_diag.size(); ++q) {
    s += model.U(idx(user), q) * t_diag(q) * model.P(idx(item), q);
  }
  return s + model.B(idx(user));
}

double weighted_scale(const WeightedTransform& weights, const ConstraintVector& c) {
  if (c.dim() != weights.dim()) throw DimensionError("constraint dimension does not match alpha");
  double sum = 0.0;
  for (auto j : c.active()) sum += weights.alpha(j);
  return sum / static_cast<double>(c.l1_norm());
}

double score_weighted(const EmbeddingModel& model, const WeightedTransform& weights,
                      std::size_t user, std::size_t item, const ConstraintVector& c) {
  model.check_ids(user, item);
  return weighted_scale(weights, c) * row_dot(model.U, user, model.P, item) + model.B(idx(user));
}

}  // namespace cmf
