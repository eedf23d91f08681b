#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmf/constraint.hpp"
#include "cmf/linear_models.hpp"
#include "cmf/model.hpp"

namespace cmf {

enum class WarmStart { kNone, kFeatureOverlap, kCooccurrence };
enum class Block { kItems, kUsers, kTransform };

std::string to_string(WarmStart w);
WarmStart warm_start_from_string(const std::string& name);
std::string to_string(Block b);

struct TrainConfig {
  ModelSpec model;
  /// L2 coefficient on U and P (and CAMF-CI's C).
  double lambda = 0.1;
  /// Pull of the linear transform toward the identity: (lambda_T / 2) ||A - I||^2.
  double transform_lambda = 0.1;
  std::size_t steps_per_block = 100;
  std::size_t iterations = 10;
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double positive_weight = 1.0;
  double negative_weight = 1.0;
  WarmStart warm_start = WarmStart::kNone;
  double cooccurrence_reg_strength = 0.0;
  /// Per-block early stop on relative loss improvement.
  double early_stop_tolerance = 1e-6;
  double warm_start_learning_rate = 0.05;
  std::size_t warm_start_max_steps = 5000;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; `k` and `variant` may sit at the top level.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TraceRow {
  std::size_t iteration = 0;
  std::string block;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  /// Penalized loss after each iteration.
  std::vector<double> iteration_loss;
  double warm_start_objective_before = 0.0;
  double warm_start_objective_after = 0.0;
  std::size_t warm_start_steps = 0;

  void write_csv(std::ostream& out) const;
};

struct LossBreakdown {
  double data = 0.0;
  double embedding_penalty = 0.0;
  double transform_penalty = 0.0;
  double regularizer = 0.0;

  double total() const { return data + embedding_penalty + transform_penalty + regularizer; }
};

/// Weighted squared residuals plus every penalty the variant carries.
/// `stats` enables the co-occurrence term when config.cooccurrence_reg_strength > 0.
LossBreakdown penalized_loss(const Model& model, const InteractionTensor& data,
                             const TrainConfig& config, const CooccurrenceStats* stats = nullptr);

/// strength * sum over co-occurring bit pairs of ||1 - D[:,a] * D[:,b]||^2.
/// Each pair's per-user sum is divided by its user count, so every pair weighs once.
double cooccurrence_regularizer(const DiagonalTransform& transform, const CooccurrenceStats& stats,
                                double strength);

struct BlockResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

/// Sets one block of a linear model to its exact minimizer with the others fixed.
/// Users and items solve independent ridge systems per row; the transform of
/// WC-MF / DC-MF is swept coordinate by coordinate (each coordinate exact) for
/// up to steps_per_block sweeps; CAMF-CI's table solves one system per item.
BlockResult als_block_update(Model& model, const InteractionTensor& data, Block block,
                             const TrainConfig& config, const CooccurrenceStats* stats = nullptr);

/// One shuffled pass of minibatch gradient steps. Embedding rows and user
/// biases step on their per-record gradients; network weights step on the
/// minibatch mean. L2 decay on U and P is spread evenly over the pass.
/// Returns the penalized loss after the pass. Throws NumericError on a
/// non-finite gradient.
double sgd_epoch(Model& model, const InteractionTensor& data, const TrainConfig& config,
                 std::uint64_t epoch_seed);

/// (1/t) sum_c ||1 - t(c) * t(c)||^2 with t(c) = D c / ||c||_1.
double feature_overlap_objective(const DiagonalTransform& transform,
                                 std::span<const ConstraintVector> constraints);
/// Largest single-constraint term of feature_overlap_objective.
double feature_overlap_max_term(const DiagonalTransform& transform,
                                std::span<const ConstraintVector> constraints);

struct WarmStartResult {
  DiagonalTransform transform;
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::size_t steps = 0;
};

/// Gradient descent on feature_overlap_objective from `init` (all-ones when null).
WarmStartResult warm_start_feature_overlap(std::span<const ConstraintVector> constraints,
                                           std::size_t k, std::size_t dim,
                                           const DiagonalTransform* init = nullptr,
                                           double learning_rate = 0.05,
                                           std::size_t max_steps = 5000);

/// Exact coordinate sweeps on the co-occurrence regularizer from `init`.
WarmStartResult warm_start_cooccurrence(const CooccurrenceStats& stats, std::size_t k,
                                        std::size_t dim, const DiagonalTransform* init = nullptr,
                                        std::size_t sweeps = 100);

enum class NegativeStrategy { kTimeBucket, kUniform };

std::string to_string(NegativeStrategy s);
NegativeStrategy negative_strategy_from_string(const std::string& name);

struct NegativeSamplingReport {
  std::size_t added = 0;
  std::size_t fallbacks = 0;
  std::vector<std::string> warnings;
};

/// Adds `ratio` zero-reward records per positive. Time-bucket negatives pair a
/// user never observed on any bit of c with an item never observed under c,
/// keeping c; when no such pair exists the record falls back to a uniform
/// draw and a warning is logged.
InteractionTensor sample_training_negatives(const InteractionTensor& data, NegativeStrategy strategy,
                                            std::size_t ratio, std::uint64_t seed,
                                            NegativeSamplingReport* report = nullptr);

/// Sets weights by class; rewards must be 0 or 1 and both classes present.
InteractionTensor reweight_classes(const InteractionTensor& data, double positive_weight,
                                   double negative_weight);

/// (positive_weight, negative_weight) that equalize the weighted class masses.
std::pair<double, double> inverse_frequency_weights(const InteractionTensor& data);

using IterationCallback = std::function<void(std::size_t iteration, const Model& model)>;

/// Warm start (per config), then `iterations` rounds of items/users/transform
/// block updates (linear variants) or SGD epochs (neural variants).
TrainTrace train(Model& model, const InteractionTensor& data, const TrainConfig& config,
                 const IterationCallback& on_iteration = {});

}  // namespace cmf
