#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmf/constraint.hpp"
#include "cmf/linear_models.hpp"
#include "cmf/neural_net.hpp"

namespace cmf {

enum class Variant { kMF, kCamfCi, kWcMf, kDcMf, kNcMf, kNnMf, kNcNnMf };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);
bool is_linear(Variant v);
bool uses_transform_net(Variant v);
bool uses_towers(Variant v);

/// Per-user and per-item metadata fed to the NN-MF towers.
struct SideFeatures {
  RowMatrix user;  // m x su
  RowMatrix item;  // n x si
};

/// Architecture and initialization of a model.
struct ModelSpec {
  Variant variant = Variant::kMF;
  std::size_t k = 100;
  std::vector<std::size_t> hidden = {64};
  TransformMode transform_mode = TransformMode::kDiagonal;
  /// Bits of c fed to g(c); empty means all bits.
  std::vector<std::uint32_t> g_bits;
  std::size_t num_descriptors = 0;
  /// Standard deviation of the initial U / P entries.
  double init_scale = 0.1;
  /// Standard deviation of the initial D / alpha entries around 1.
  double transform_init_noise = 0.0;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Every variant's parameters; only the blocks of `variant` are populated.
class Model {
 public:
  Variant variant = Variant::kMF;
  EmbeddingModel embedding;
  DiagonalTransform diagonal;
  WeightedTransform weighted;
  ContextItemTable context;
  FeedForwardNet transform_net;
  TransformMode transform_mode = TransformMode::kDiagonal;
  ConstraintFeatureMapG g;
  FeedForwardNet user_tower;
  FeedForwardNet item_tower;
  SideFeatures side;

  std::size_t k() const { return embedding.k(); }
  std::size_t num_users() const { return embedding.num_users(); }
  std::size_t num_items() const { return embedding.num_items(); }
  std::size_t dim() const { return dim_; }
  void set_dim(std::size_t d) { dim_ = d; }

  double score(std::size_t user, std::size_t item, const ConstraintVector& c,
               std::span<const double> descriptors = {}) const;
  double score(const Interaction& rec) const;

  Eigen::VectorXd user_tower_input(std::size_t user, const Eigen::VectorXd& g_c) const;
  Eigen::VectorXd item_tower_input(std::size_t item, const Eigen::VectorXd& g_c) const;

  bool all_finite() const;

 private:
  std::size_t dim_ = 0;
};

/// Builds a freshly initialized model. `features` is used by CAMF-CI (the
/// compatibility pattern of its context table); `side` by the towers.
Model initialize_model(const ModelSpec& spec, std::size_t num_users, std::size_t num_items,
                       std::size_t dim, const FeatureMap& features, const SideFeatures& side,
                       std::uint64_t seed);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace cmf
