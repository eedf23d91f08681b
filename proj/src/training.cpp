#include "cmf/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <unordered_set>
#include <utility>

#include "cmf/errors.hpp"

namespace cmf {

using nlohmann::json;

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

/// Ridge solve: Cholesky when the system is known to be positive definite,
/// minimum-norm least squares otherwise.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& lower, const Eigen::VectorXd& rhs,
                                       bool positive_definite) {
  if (positive_definite) {
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(lower);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
  }
  Eigen::MatrixXd full = lower.selfadjointView<Eigen::Lower>();
  return full.completeOrthogonalDecomposition().solve(rhs);
}

/// Diagonal of T(c) for linear variants; ones for MF / CAMF-CI.
Eigen::VectorXd linear_diag(const Model& model, const ConstraintVector& c) {
  switch (model.variant) {
    case Variant::kDcMf:
      return transform_linear(model.diagonal, c);
    case Variant::kWcMf:
      return Eigen::VectorXd::Constant(idx(model.k()), weighted_scale(model.weighted, c));
    default:
      return Eigen::VectorXd::Ones(idx(model.k()));
  }
}

/// CAMF-CI context term; zero for the other variants.
double context_offset(const Model& model, const Interaction& rec) {
  if (model.variant != Variant::kCamfCi) return 0.0;
  const auto slots = model.context.compatible_slots(rec.constraint, rec.item);
  if (slots.empty()) return 0.0;
  const auto& values = model.context.item_values(rec.item);
  double sum = 0.0;
  for (auto s : slots) sum += values[s];
  return sum / static_cast<double>(slots.size());
}

struct LinearTerms {
  RowMatrix diag;               // N x k
  std::vector<double> offset;   // N
};

LinearTerms linear_terms(const Model& model, const InteractionTensor& data) {
  LinearTerms terms;
  terms.diag.resize(idx(data.size()), idx(model.k()));
  terms.offset.resize(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    terms.diag.row(idx(r)) = linear_diag(model, data[r].constraint).transpose();
    terms.offset[r] = context_offset(model, data[r]);
  }
  return terms;
}

std::vector<std::vector<std::uint32_t>> neighbors(const CooccurrenceStats& stats) {
  std::vector<std::vector<std::uint32_t>> out(stats.dim());
  for (const auto& p : stats.active_pairs()) {
    out[p.a].push_back(p.b);
    out[p.b].push_back(p.a);
  }
  return out;
}

bool reg_active(const TrainConfig& config, const CooccurrenceStats* stats) {
  return stats != nullptr && config.cooccurrence_reg_strength > 0.0;
}

void solve_users(Model& model, const InteractionTensor& data, const TrainConfig& config) {
  const auto terms = linear_terms(model, data);
  const auto by_user = data.index_by_user();
  const auto k = idx(model.k());
  auto& emb = model.embedding;
  Eigen::MatrixXd A(k + 1, k + 1);
  Eigen::VectorXd b(k + 1);
  Eigen::VectorXd x(k + 1);
  for (std::size_t u = 0; u < by_user.size(); ++u) {
    if (by_user[u].empty()) {
      emb.U.row(idx(u)).setZero();
      emb.B(idx(u)) = 0.0;
      continue;
    }
    A.setZero();
    b.setZero();
    double mass = 0.0;
    for (auto r : by_user[u]) {
      const auto& rec = data[r];
      x(0) = 1.0;
      x.tail(k) = terms.diag.row(idx(r)).transpose().cwiseProduct(emb.P.row(rec.item).transpose());
      A.selfadjointView<Eigen::Lower>().rankUpdate(x, rec.weight);
      b += rec.weight * (rec.reward - terms.offset[r]) * x;
      mass += rec.weight;
    }
    A.diagonal().tail(k).array() += config.lambda / 2.0;
    const auto theta = solve_normal_equations(A, b, config.lambda > 0.0 && mass > 0.0);
    emb.B(idx(u)) = theta(0);
    emb.U.row(idx(u)) = theta.tail(k).transpose();
  }
}

void solve_items(Model& model, const InteractionTensor& data, const TrainConfig& config) {
  const auto terms = linear_terms(model, data);
  const auto by_item = data.index_by_item();
  const auto k = idx(model.k());
  auto& emb = model.embedding;
  Eigen::MatrixXd A(k, k);
  Eigen::VectorXd b(k);
  Eigen::VectorXd x(k);
  for (std::size_t i = 0; i < by_item.size(); ++i) {
    if (by_item[i].empty()) {
      emb.P.row(idx(i)).setZero();
      continue;
    }
    A.setZero();
    b.setZero();
    for (auto r : by_item[i]) {
      const auto& rec = data[r];
      x = terms.diag.row(idx(r)).transpose().cwiseProduct(emb.U.row(rec.user).transpose());
      A.selfadjointView<Eigen::Lower>().rankUpdate(x, rec.weight);
      b += rec.weight * (rec.reward - emb.B(rec.user) - terms.offset[r]) * x;
    }
    A.diagonal().array() += config.lambda / 2.0;
    emb.P.row(idx(i)) = solve_normal_equations(A, b, config.lambda > 0.0).transpose();
  }
}

void solve_context_table(Model& model, const InteractionTensor& data, const TrainConfig& config) {
  const auto by_item = data.index_by_item();
  const auto& emb = model.embedding;
  for (std::size_t i = 0; i < by_item.size(); ++i) {
    auto& values = model.context.item_values(i);
    const auto q = idx(values.size());
    if (q == 0) continue;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd x(q);
    for (auto r : by_item[i]) {
      const auto& rec = data[r];
      const auto slots = model.context.compatible_slots(rec.constraint, i);
      if (slots.empty()) continue;
      x.setZero();
      for (auto s : slots) x(idx(s)) = 1.0 / static_cast<double>(slots.size());
      A.selfadjointView<Eigen::Lower>().rankUpdate(x, rec.weight);
      const double y = rec.reward - emb.B(rec.user) - emb.U.row(rec.user).dot(emb.P.row(idx(i)));
      b += rec.weight * y * x;
    }
    A.diagonal().array() += config.lambda / 2.0;
    const auto theta = solve_normal_equations(A, b, config.lambda > 0.0);
    for (Eigen::Index s = 0; s < q; ++s) values[static_cast<std::size_t>(s)] = theta(s);
  }
}

/// Coordinate sweeps over the entries of D (DC-MF) or alpha (WC-MF). Every
/// coordinate is set to the exact minimizer of data loss + identity pull +
/// co-occurrence regularizer with all other parameters fixed.
std::pair<std::size_t, bool> sweep_transform(Model& model, const InteractionTensor& data,
                                             const TrainConfig& config,
                                             const CooccurrenceStats* stats) {
  const std::size_t n = data.size();
  const std::size_t d = model.dim();
  const auto k = idx(model.k());
  const auto& emb = model.embedding;
  const bool weighted = model.variant == Variant::kWcMf;
  const double kscale = weighted ? static_cast<double>(k) : 1.0;
  const double strength = reg_active(config, stats) ? config.cooccurrence_reg_strength : 0.0;
  const auto nbr = strength > 0.0 ? neighbors(*stats) : std::vector<std::vector<std::uint32_t>>(d);

  std::vector<std::vector<std::size_t>> by_bit(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto j : data[r].constraint.active()) by_bit[j].push_back(r);
  }
  std::vector<double> residual(n);
  std::vector<double> inv_norm(n);
  std::vector<double> dots(weighted ? n : 0);
  for (std::size_t r = 0; r < n; ++r) {
    residual[r] = data[r].reward - model.score(data[r]);
    inv_norm[r] = 1.0 / static_cast<double>(data[r].constraint.l1_norm());
    if (weighted) dots[r] = emb.U.row(data[r].user).dot(emb.P.row(data[r].item));
  }

  auto objective = [&]() {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) total += data[r].weight * residual[r] * residual[r];
    if (weighted) {
      total += kscale * config.transform_lambda / 2.0 * (model.weighted.alpha.array() - 1.0).square().sum();
      if (strength > 0.0) total += cooccurrence_regularizer(model.weighted.as_diagonal(model.k()), *stats, strength);
    } else {
      total += config.transform_lambda / 2.0 * (model.diagonal.D.array() - 1.0).square().sum();
      if (strength > 0.0) total += cooccurrence_regularizer(model.diagonal, *stats, strength);
    }
    return total;
  };

  // Minimizes a*v^2 - 2*b*v over v given the accumulated quadratic terms.
  auto update = [&](double& value, const auto& x_of, const std::vector<std::size_t>& rows,
                    const std::vector<std::uint32_t>& nb, const auto& neighbor_value) {
    double a = kscale * config.transform_lambda / 2.0;
    double b = kscale * config.transform_lambda / 2.0;
    for (auto r : rows) {
      const double x = x_of(r);
      a += data[r].weight * x * x;
      b += data[r].weight * x * (residual[r] + x * value);
    }
    for (auto jj : nb) {
      const double other = neighbor_value(jj);
      a += kscale * strength * other * other;
      b += kscale * strength * other;
    }
    if (!(a > 0.0)) return;
    const double next = b / a;
    const double delta = next - value;
    if (delta == 0.0) return;
    for (auto r : rows) residual[r] -= x_of(r) * delta;
    value = next;
  };

  double before = objective();
  std::size_t steps = 0;
  bool early = false;
  const std::size_t max_sweeps = std::max<std::size_t>(config.steps_per_block, 1);
  while (steps < max_sweeps) {
    for (std::size_t j = 0; j < d; ++j) {
      if (weighted) {
        auto& alpha = model.weighted.alpha;
        update(alpha(idx(j)), [&](std::size_t r) { return dots[r] * inv_norm[r]; }, by_bit[j],
               nbr[j], [&](std::uint32_t jj) { return alpha(jj); });
      } else {
        auto& D = model.diagonal.D;
        for (Eigen::Index q = 0; q < k; ++q) {
          update(D(q, idx(j)),
                 [&](std::size_t r) {
                   return emb.U(data[r].user, q) * emb.P(data[r].item, q) * inv_norm[r];
                 },
                 by_bit[j], nbr[j], [&](std::uint32_t jj) { return D(q, jj); });
        }
      }
    }
    ++steps;
    const double after = objective();
    if (before - after <= config.early_stop_tolerance * std::max(std::abs(before), 1e-300)) {
      early = steps < max_sweeps;
      break;
    }
    before = after;
  }
  return {steps, early};
}

/// Gradients of U T P^T with respect to U, P and the flattened T.
struct BilinearGrad {
  Eigen::VectorXd user;
  Eigen::VectorXd item;
  Eigen::VectorXd transform;
};

BilinearGrad bilinear_grad(TransformMode mode, const Eigen::VectorXd& t_out, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b, double g) {
  BilinearGrad out;
  if (mode == TransformMode::kDiagonal) {
    out.user = g * t_out.cwiseProduct(b);
    out.item = g * t_out.cwiseProduct(a);
    out.transform = g * a.cwiseProduct(b);
    return out;
  }
  const auto k = a.size();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> T(
      t_out.data(), k, k);
  out.user = g * (T * b);
  out.item = g * (T.transpose() * a);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dT = g * a * b.transpose();
  out.transform = Eigen::Map<const Eigen::VectorXd>(dT.data(), k * k);
  return out;
}

double bilinear_value(TransformMode mode, const Eigen::VectorXd& t_out, const Eigen::VectorXd& a,
                      const Eigen::VectorXd& b) {
  if (mode == TransformMode::kDiagonal) {
    double s = 0.0;
    for (Eigen::Index q = 0; q < a.size(); ++q) s += a(q) * t_out(q) * b(q);
    return s;
  }
  const auto k = a.size();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> T(
      t_out.data(), k, k);
  return a.dot(T * b);
}

/// Sparse row gradients for one minibatch.
class RowGrad {
 public:
  RowGrad(std::size_t rows, Eigen::Index width) : slot_(rows, -1), width_(width) {}

  void add(std::uint32_t row, const Eigen::VectorXd& g) {
    if (slot_[row] < 0) {
      slot_[row] = static_cast<long>(rows_.size());
      rows_.push_back(row);
      grads_.push_back(Eigen::VectorXd::Zero(width_));
    }
    grads_[static_cast<std::size_t>(slot_[row])] += g;
  }

  template <typename F>
  void for_each(F&& f) const {
    for (std::size_t s = 0; s < rows_.size(); ++s) f(rows_[s], grads_[s]);
  }

  void clear() {
    for (auto r : rows_) slot_[r] = -1;
    rows_.clear();
    grads_.clear();
  }

 private:
  std::vector<long> slot_;
  std::vector<std::uint32_t> rows_;
  std::vector<Eigen::VectorXd> grads_;
  Eigen::Index width_;
};

bool all_finite(const NetGradients& g) {
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    if (!g.weight[l].allFinite() || !g.bias[l].allFinite()) return false;
  }
  return true;
}

void scale(NetGradients& g, double s) {
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    g.weight[l] *= s;
    g.bias[l] *= s;
  }
}

}  // namespace

std::string to_string(WarmStart w) {
  switch (w) {
    case WarmStart::kNone:
      return "none";
    case WarmStart::kFeatureOverlap:
      return "feature_overlap";
    case WarmStart::kCooccurrence:
      return "cooccurrence";
  }
  return "none";
}

WarmStart warm_start_from_string(const std::string& name) {
  if (name == "none") return WarmStart::kNone;
  if (name == "feature_overlap") return WarmStart::kFeatureOverlap;
  if (name == "cooccurrence") return WarmStart::kCooccurrence;
  throw ConfigError("unknown warm start: " + name);
}

std::string to_string(Block b) {
  switch (b) {
    case Block::kItems:
      return "items";
    case Block::kUsers:
      return "users";
    case Block::kTransform:
      return "transform";
  }
  return "?";
}

std::string to_string(NegativeStrategy s) {
  return s == NegativeStrategy::kTimeBucket ? "time_bucket" : "uniform";
}

NegativeStrategy negative_strategy_from_string(const std::string& name) {
  if (name == "time_bucket") return NegativeStrategy::kTimeBucket;
  if (name == "uniform") return NegativeStrategy::kUniform;
  throw ConfigError("unknown negative sampling strategy: " + name);
}

json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"lambda", c.lambda},
          {"transform_lambda", c.transform_lambda},
          {"steps_per_block", c.steps_per_block},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"positive_weight", c.positive_weight},
          {"negative_weight", c.negative_weight},
          {"warm_start", to_string(c.warm_start)},
          {"cooccurrence_reg_strength", c.cooccurrence_reg_strength},
          {"early_stop_tolerance", c.early_stop_tolerance},
          {"warm_start_learning_rate", c.warm_start_learning_rate},
          {"warm_start_max_steps", c.warm_start_max_steps}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  json model = j.value("model", json::object());
  if (j.contains("variant")) model["variant"] = j.at("variant");
  if (j.contains("k")) model["k"] = j.at("k");
  if (!model.contains("variant")) model["variant"] = "MF";
  c.model = model_spec_from_json(model);
  c.lambda = j.value("lambda", c.lambda);
  c.transform_lambda = j.value("transform_lambda", c.transform_lambda);
  c.steps_per_block = j.value("steps_per_block", c.steps_per_block);
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.positive_weight = j.value("positive_weight", c.positive_weight);
  c.negative_weight = j.value("negative_weight", c.negative_weight);
  c.warm_start = warm_start_from_string(j.value("warm_start", std::string("none")));
  c.cooccurrence_reg_strength = j.value("cooccurrence_reg_strength", c.cooccurrence_reg_strength);
  c.early_stop_tolerance = j.value("early_stop_tolerance", c.early_stop_tolerance);
  c.warm_start_learning_rate = j.value("warm_start_learning_rate", c.warm_start_learning_rate);
  c.warm_start_max_steps = j.value("warm_start_max_steps", c.warm_start_max_steps);
  if (c.lambda < 0.0 || c.transform_lambda < 0.0 || c.cooccurrence_reg_strength < 0.0) {
    throw ConfigError("penalty coefficients must be non-negative");
  }
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
  return c;
}

void TrainTrace::write_csv(std::ostream& out) const {
  out << "iteration,block,loss_before,loss_after\n";
  out.precision(17);
  for (const auto& row : rows) {
    out << row.iteration << ',' << row.block << ',' << row.loss_before << ',' << row.loss_after
        << '\n';
  }
}

double cooccurrence_regularizer(const DiagonalTransform& transform, const CooccurrenceStats& stats,
                                double strength) {
  if (stats.dim() != transform.dim()) throw DimensionError("co-occurrence stats dimension mismatch");
  double total = 0.0;
  for (const auto& p : stats.active_pairs()) {
    const double per_user =
        (1.0 - transform.D.col(p.a).array() * transform.D.col(p.b).array()).square().sum();
    total += (static_cast<double>(p.users) * per_user) / static_cast<double>(p.users);
  }
  return strength * total;
}

LossBreakdown penalized_loss(const Model& model, const InteractionTensor& data,
                             const TrainConfig& config, const CooccurrenceStats* stats) {
  LossBreakdown loss;
  for (const auto& rec : data.records()) {
    const double e = rec.reward - model.score(rec);
    loss.data += rec.weight * e * e;
  }
  loss.embedding_penalty =
      config.lambda / 2.0 * (model.embedding.U.squaredNorm() + model.embedding.P.squaredNorm());
  if (model.variant == Variant::kCamfCi) {
    loss.embedding_penalty += config.lambda / 2.0 * model.context.squared_norm();
  }
  if (model.variant == Variant::kDcMf) {
    loss.transform_penalty =
        config.transform_lambda / 2.0 * (model.diagonal.D.array() - 1.0).square().sum();
    if (reg_active(config, stats)) {
      loss.regularizer =
          cooccurrence_regularizer(model.diagonal, *stats, config.cooccurrence_reg_strength);
    }
  } else if (model.variant == Variant::kWcMf) {
    loss.transform_penalty = static_cast<double>(model.k()) * config.transform_lambda / 2.0 *
                             (model.weighted.alpha.array() - 1.0).square().sum();
    if (reg_active(config, stats)) {
      loss.regularizer = cooccurrence_regularizer(model.weighted.as_diagonal(model.k()), *stats,
                                                  config.cooccurrence_reg_strength);
    }
  }
  return loss;
}

BlockResult als_block_update(Model& model, const InteractionTensor& data, Block block,
                             const TrainConfig& config, const CooccurrenceStats* stats) {
  if (!is_linear(model.variant)) {
    throw ConfigError(to_string(model.variant) + " is trained by SGD, not block updates");
  }
  BlockResult result;
  result.loss_before = penalized_loss(model, data, config, stats).total();
  switch (block) {
    case Block::kUsers:
      solve_users(model, data, config);
      result.steps = 1;
      break;
    case Block::kItems:
      solve_items(model, data, config);
      result.steps = 1;
      break;
    case Block::kTransform:
      if (model.variant == Variant::kCamfCi) {
        solve_context_table(model, data, config);
        result.steps = 1;
      } else if (model.variant == Variant::kDcMf || model.variant == Variant::kWcMf) {
        std::tie(result.steps, result.early_stopped) = sweep_transform(model, data, config, stats);
      }
      break;
  }
  result.loss_after = penalized_loss(model, data, config, stats).total();
  return result;
}

double sgd_epoch(Model& model, const InteractionTensor& data, const TrainConfig& config,
                 std::uint64_t epoch_seed) {
  if (is_linear(model.variant)) {
    throw ConfigError("sgd_epoch expects a neural variant, got " + to_string(model.variant));
  }
  const std::size_t n = data.size();
  if (n == 0) return penalized_loss(model, data, config).total();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto& emb = model.embedding;
  const auto k = idx(model.k());
  const double lr = config.learning_rate;
  RowGrad grad_u(model.num_users(), k);
  RowGrad grad_p(model.num_items(), k);
  std::vector<std::pair<std::uint32_t, double>> grad_b;
  const bool has_transform = uses_transform_net(model.variant);
  const bool has_towers = uses_towers(model.variant);

  for (std::size_t start = 0; start < n; start += config.batch_size) {
    const std::size_t stop = std::min(n, start + config.batch_size);
    const double inv_batch = 1.0 / static_cast<double>(stop - start);
    NetGradients g_transform = has_transform ? model.transform_net.zero_gradients() : NetGradients{};
    NetGradients g_user = has_towers ? model.user_tower.zero_gradients() : NetGradients{};
    NetGradients g_item = has_towers ? model.item_tower.zero_gradients() : NetGradients{};
    grad_u.clear();
    grad_p.clear();
    grad_b.clear();

    for (std::size_t pos = start; pos < stop; ++pos) {
      const auto& rec = data[order[pos]];
      const Eigen::VectorXd g_c = model.g(rec.constraint, rec.descriptors);
      ForwardPass t_pass;
      ForwardPass a_pass;
      ForwardPass b_pass;
      Eigen::VectorXd a;
      Eigen::VectorXd b;
      if (has_towers) {
        a_pass = model.user_tower.forward_cached(model.user_tower_input(rec.user, g_c));
        b_pass = model.item_tower.forward_cached(model.item_tower_input(rec.item, g_c));
        a = a_pass.output;
        b = b_pass.output;
      } else {
        a = emb.U.row(rec.user).transpose();
        b = emb.P.row(rec.item).transpose();
      }
      double s = 0.0;
      if (has_transform) {
        t_pass = model.transform_net.forward_cached(g_c);
        s = bilinear_value(model.transform_mode, t_pass.output, a, b) + emb.B(rec.user);
      } else {
        s = a.dot(b);
      }
      const double g = 2.0 * rec.weight * (s - rec.reward);
      Eigen::VectorXd ga;
      Eigen::VectorXd gb;
      if (has_transform) {
        auto bg = bilinear_grad(model.transform_mode, t_pass.output, a, b, g);
        g_transform += model.transform_net.backward(t_pass, bg.transform);
        ga = std::move(bg.user);
        gb = std::move(bg.item);
        grad_b.emplace_back(rec.user, g);
      } else {
        ga = g * b;
        gb = g * a;
      }
      if (has_towers) {
        auto gu = model.user_tower.backward(a_pass, ga);
        auto gi = model.item_tower.backward(b_pass, gb);
        grad_u.add(rec.user, gu.input.head(k));
        grad_p.add(rec.item, gi.input.head(k));
        g_user += gu;
        g_item += gi;
      } else {
        grad_u.add(rec.user, ga);
        grad_p.add(rec.item, gb);
      }
    }

    bool finite = true;
    grad_u.for_each([&](std::uint32_t, const Eigen::VectorXd& v) { finite = finite && v.allFinite(); });
    grad_p.for_each([&](std::uint32_t, const Eigen::VectorXd& v) { finite = finite && v.allFinite(); });
    for (const auto& [u, v] : grad_b) finite = finite && std::isfinite(v);
    if (has_transform) finite = finite && all_finite(g_transform);
    if (has_towers) finite = finite && all_finite(g_user) && all_finite(g_item);
    if (!finite) {
      throw NumericError("non-finite gradient in minibatch starting at position " +
                         std::to_string(start) + " (learning_rate=" + std::to_string(lr) + ")");
    }

    // Embedding rows take per-record steps; shared network weights take batch means.
    const double decay = 1.0 - lr * config.lambda * static_cast<double>(stop - start) / static_cast<double>(n);
    if (decay != 1.0) {
      emb.U *= decay;
      emb.P *= decay;
    }
    grad_u.for_each([&](std::uint32_t r, const Eigen::VectorXd& v) { emb.U.row(r) -= lr * v.transpose(); });
    grad_p.for_each([&](std::uint32_t r, const Eigen::VectorXd& v) { emb.P.row(r) -= lr * v.transpose(); });
    for (const auto& [u, v] : grad_b) emb.B(u) -= lr * v;
    if (has_transform) {
      scale(g_transform, inv_batch);
      model.transform_net.apply(g_transform, lr);
    }
    if (has_towers) {
      scale(g_user, inv_batch);
      scale(g_item, inv_batch);
      model.user_tower.apply(g_user, lr);
      model.item_tower.apply(g_item, lr);
    }
  }
  return penalized_loss(model, data, config).total();
}

namespace {

/// Distinct constraints with their multiplicities.
std::vector<std::pair<ConstraintVector, double>> weighted_catalog(
    std::span<const ConstraintVector> constraints) {
  std::map<ConstraintVector, double> counts;
  for (const auto& c : constraints) counts[c] += 1.0;
  return {counts.begin(), counts.end()};
}

Eigen::ArrayXd overlap_terms(const DiagonalTransform& transform,
                             const std::vector<std::pair<ConstraintVector, double>>& catalog) {
  Eigen::ArrayXd terms(idx(catalog.size()));
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    const Eigen::ArrayXd t = transform_linear(transform, catalog[c].first).array();
    terms(idx(c)) = (1.0 - t * t).square().sum();
  }
  return terms;
}

}  // namespace

double feature_overlap_objective(const DiagonalTransform& transform,
                                 std::span<const ConstraintVector> constraints) {
  if (constraints.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : constraints) {
    const Eigen::ArrayXd t = transform_linear(transform, c).array();
    total += (1.0 - t * t).square().sum();
  }
  return total / static_cast<double>(constraints.size());
}

double feature_overlap_max_term(const DiagonalTransform& transform,
                                std::span<const ConstraintVector> constraints) {
  if (constraints.empty()) return 0.0;
  return overlap_terms(transform, weighted_catalog(constraints)).maxCoeff();
}

WarmStartResult warm_start_feature_overlap(std::span<const ConstraintVector> constraints,
                                           std::size_t k, std::size_t dim,
                                           const DiagonalTransform* init, double learning_rate,
                                           std::size_t max_steps) {
  WarmStartResult result;
  result.transform = init ? *init : DiagonalTransform(k, dim);
  if (result.transform.k() != k || result.transform.dim() != dim) {
    throw DimensionError("warm start initialization has the wrong shape");
  }
  if (constraints.empty()) throw DataError("feature-overlap warm start needs observed constraints");
  const auto catalog = weighted_catalog(constraints);
  const double total = static_cast<double>(constraints.size());
  auto& D = result.transform.D;
  result.objective_before = feature_overlap_objective(result.transform, constraints);
  constexpr double kTarget = 1e-4;
  for (; result.steps < max_steps; ++result.steps) {
    if (overlap_terms(result.transform, catalog).maxCoeff() < kTarget) break;
    RowMatrix grad = RowMatrix::Zero(D.rows(), D.cols());
    for (const auto& [c, count] : catalog) {
      const Eigen::ArrayXd t = transform_linear(result.transform, c).array();
      // d/dt ||1 - t*t||^2 = -4 (1 - t*t) t, then dt/dD[:,j] = 1/||c||_1.
      const Eigen::VectorXd dt =
          (-4.0 * (1.0 - t * t) * t * (count / total / static_cast<double>(c.l1_norm()))).matrix();
      for (auto j : c.active()) grad.col(j) += dt;
    }
    D -= learning_rate * grad;
  }
  result.objective_after = feature_overlap_objective(result.transform, constraints);
  return result;
}

WarmStartResult warm_start_cooccurrence(const CooccurrenceStats& stats, std::size_t k,
                                        std::size_t dim, const DiagonalTransform* init,
                                        std::size_t sweeps) {
  WarmStartResult result;
  result.transform = init ? *init : DiagonalTransform(k, dim);
  if (result.transform.k() != k || result.transform.dim() != dim || stats.dim() != dim) {
    throw DimensionError("warm start initialization has the wrong shape");
  }
  auto& D = result.transform.D;
  const auto nbr = neighbors(stats);
  result.objective_before = cooccurrence_regularizer(result.transform, stats, 1.0);
  double previous = result.objective_before;
  for (; result.steps < sweeps; ++result.steps) {
    for (std::size_t j = 0; j < dim; ++j) {
      if (nbr[j].empty()) continue;
      for (Eigen::Index q = 0; q < D.rows(); ++q) {
        double num = 0.0;
        double den = 0.0;
        for (auto jj : nbr[j]) {
          num += D(q, jj);
          den += D(q, jj) * D(q, jj);
        }
        if (den > 0.0) D(q, idx(j)) = num / den;
      }
    }
    const double current = cooccurrence_regularizer(result.transform, stats, 1.0);
    if (previous - current <= 1e-12 * std::max(previous, 1e-300)) {
      ++result.steps;
      break;
    }
    previous = current;
  }
  result.objective_after = cooccurrence_regularizer(result.transform, stats, 1.0);
  return result;
}

InteractionTensor sample_training_negatives(const InteractionTensor& data, NegativeStrategy strategy,
                                            std::size_t ratio, std::uint64_t seed,
                                            NegativeSamplingReport* report) {
  NegativeSamplingReport local;
  InteractionTensor out = data;
  if (ratio == 0 || data.empty()) {
    if (report) *report = local;
    return out;
  }
  const auto user_bits = user_observed_bits(data);
  const auto item_bits = feature_map_from_observations(data);
  std::unordered_set<std::uint64_t> observed;
  for (const auto& rec : data.records()) {
    observed.insert((static_cast<std::uint64_t>(rec.user) << 32) | rec.item);
  }
  std::mt19937_64 rng(seed);
  std::map<ConstraintVector, std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> eligible;
  std::set<ConstraintVector> warned;

  auto uniform_pair = [&]() {
    std::uniform_int_distribution<std::uint32_t> pick_user(0, static_cast<std::uint32_t>(data.num_users() - 1));
    std::uniform_int_distribution<std::uint32_t> pick_item(0, static_cast<std::uint32_t>(data.num_items() - 1));
    std::uint32_t u = 0;
    std::uint32_t i = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      u = pick_user(rng);
      i = pick_item(rng);
      if (!observed.contains((static_cast<std::uint64_t>(u) << 32) | i)) break;
    }
    return std::pair{u, i};
  };

  for (const auto& rec : data.records()) {
    if (rec.reward <= 0.0) continue;
    for (std::size_t q = 0; q < ratio; ++q) {
      std::pair<std::uint32_t, std::uint32_t> pick;
      bool done = false;
      if (strategy == NegativeStrategy::kTimeBucket) {
        auto it = eligible.find(rec.constraint);
        if (it == eligible.end()) {
          std::vector<std::uint32_t> users;
          std::vector<std::uint32_t> items;
          for (std::size_t u = 0; u < data.num_users(); ++u) {
            if (overlap(rec.constraint, user_bits[u]) == 0) users.push_back(static_cast<std::uint32_t>(u));
          }
          for (std::size_t i = 0; i < data.num_items(); ++i) {
            if (overlap(rec.constraint, item_bits.row(i)) == 0) items.push_back(static_cast<std::uint32_t>(i));
          }
          it = eligible.emplace(rec.constraint, std::pair{std::move(users), std::move(items)}).first;
        }
        const auto& [users, items] = it->second;
        if (!users.empty() && !items.empty()) {
          std::uniform_int_distribution<std::size_t> pu(0, users.size() - 1);
          std::uniform_int_distribution<std::size_t> pi(0, items.size() - 1);
          pick = {users[pu(rng)], items[pi(rng)]};
          done = true;
        } else {
          ++local.fallbacks;
          if (warned.insert(rec.constraint).second) {
            local.warnings.push_back("no eligible time-bucket negative for constraint " +
                                     to_string(rec.constraint.bits()) + "; using uniform sampling");
          }
        }
      }
      if (!done) pick = uniform_pair();
      out.add({pick.first, pick.second, rec.constraint, 0.0, 1.0, rec.descriptors});
      ++local.added;
    }
  }
  if (report) *report = local;
  return out;
}

InteractionTensor reweight_classes(const InteractionTensor& data, double positive_weight,
                                   double negative_weight) {
  if (positive_weight < 0.0 || negative_weight < 0.0) throw ConfigError("class weights must be >= 0");
  std::size_t positives = 0;
  std::size_t negatives = 0;
  for (const auto& rec : data.records()) {
    if (rec.reward == 1.0) {
      ++positives;
    } else if (rec.reward == 0.0) {
      ++negatives;
    } else {
      throw DataError("class reweighting needs rewards in {0,1}");
    }
  }
  if (positives == 0 || negatives == 0) {
    throw ConfigError("class reweighting needs both positive and negative records");
  }
  InteractionTensor out = data;
  for (std::size_t r = 0; r < out.size(); ++r) {
    out.set_weight(r, out[r].reward == 1.0 ? positive_weight : negative_weight);
  }
  return out;
}

std::pair<double, double> inverse_frequency_weights(const InteractionTensor& data) {
  double positives = 0.0;
  for (const auto& rec : data.records()) positives += rec.reward == 1.0 ? 1.0 : 0.0;
  const double negatives = static_cast<double>(data.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw ConfigError("inverse-frequency weights need both classes");
  }
  const double total = static_cast<double>(data.size());
  return {total / (2.0 * positives), total / (2.0 * negatives)};
}

TrainTrace train(Model& model, const InteractionTensor& input, const TrainConfig& config,
                 const IterationCallback& on_iteration) {
  TrainTrace trace;
  const InteractionTensor* data = &input;
  InteractionTensor reweighted;
  if (config.positive_weight != 1.0 || config.negative_weight != 1.0) {
    reweighted = reweight_classes(input, config.positive_weight, config.negative_weight);
    data = &reweighted;
  }

  CooccurrenceStats stats;
  const bool need_stats =
      config.cooccurrence_reg_strength > 0.0 || config.warm_start == WarmStart::kCooccurrence;
  if (need_stats) stats = build_cooccurrence(*data);
  const CooccurrenceStats* stats_ptr = need_stats ? &stats : nullptr;

  if (config.warm_start != WarmStart::kNone) {
    if (model.variant != Variant::kDcMf) {
      throw ConfigError("warm starts initialize DC-MF transforms; variant is " + to_string(model.variant));
    }
    WarmStartResult ws;
    if (config.warm_start == WarmStart::kFeatureOverlap) {
      std::vector<ConstraintVector> observed;
      observed.reserve(data->size());
      for (const auto& rec : data->records()) observed.push_back(rec.constraint);
      ws = warm_start_feature_overlap(observed, model.k(), model.dim(), &model.diagonal,
                                      config.warm_start_learning_rate, config.warm_start_max_steps);
    } else {
      ws = warm_start_cooccurrence(stats, model.k(), model.dim(), &model.diagonal,
                                   config.steps_per_block);
    }
    model.diagonal = std::move(ws.transform);
    trace.warm_start_objective_before = ws.objective_before;
    trace.warm_start_objective_after = ws.objective_after;
    trace.warm_start_steps = ws.steps;
  }

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (is_linear(model.variant)) {
      std::vector<Block> blocks{Block::kItems, Block::kUsers};
      if (model.variant != Variant::kMF) blocks.push_back(Block::kTransform);
      for (auto block : blocks) {
        const auto res = als_block_update(model, *data, block, config, stats_ptr);
        trace.rows.push_back({it, to_string(block), res.loss_before, res.loss_after, res.steps,
                              res.early_stopped});
      }
      trace.iteration_loss.push_back(trace.rows.back().loss_after);
    } else {
      const double before = trace.iteration_loss.empty()
                                ? penalized_loss(model, *data, config).total()
                                : trace.iteration_loss.back();
      const double after = sgd_epoch(model, *data, config, config.seed * 1000003ULL + it);
      trace.rows.push_back({it, "sgd", before, after, (data->size() + config.batch_size - 1) / config.batch_size, false});
      trace.iteration_loss.push_back(after);
    }
    if (on_iteration) on_iteration(it, model);
  }
  return trace;
}

}  // namespace cmf
