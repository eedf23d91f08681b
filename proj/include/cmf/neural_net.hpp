#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmf/constraint.hpp"

namespace cmf {

enum class Activation { kRelu, kIdentity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

/// Activations recorded by a forward pass; consumed by backward().
struct ForwardPass {
  std::vector<Eigen::VectorXd> inputs;  // input of each layer
  std::vector<Eigen::VectorXd> pre;     // affine output of each layer
  Eigen::VectorXd output;

  bool valid() const { return !inputs.empty(); }
};

struct NetGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::VectorXd input;

  /// Accumulate another gradient of the same shape.
  NetGradients& operator+=(const NetGradients& other);
};

/// Affine + activation layers; the last layer is always linear.
class FeedForwardNet {
 public:
  FeedForwardNet() = default;
  explicit FeedForwardNet(std::vector<DenseLayer> layers);

  /// Hidden layers use relu, the output layer identity. Weights are uniform in
  /// +-sqrt(6/(fan_in+fan_out)), biases zero.
  static FeedForwardNet glorot(const std::vector<std::size_t>& widths, std::mt19937_64& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  bool empty() const { return layers_.empty(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  ForwardPass forward_cached(const Eigen::VectorXd& x) const;
  /// Gradients of a scalar loss given dLoss/dOutput. Throws StateError when
  /// `pass` was not produced by forward_cached().
  NetGradients backward(const ForwardPass& pass, const Eigen::VectorXd& upstream) const;

  NetGradients zero_gradients() const;
  /// theta -= step * grad
  void apply(const NetGradients& grad, double step);

  std::size_t num_parameters() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  static std::vector<double> flatten(const NetGradients& grad);

 private:
  std::vector<DenseLayer> layers_;
};

/// g(c): selected bits of c followed by continuous descriptors.
class ConstraintFeatureMapG {
 public:
  ConstraintFeatureMapG() = default;
  /// Uses every bit of a dim-dimensional constraint.
  ConstraintFeatureMapG(std::size_t dim, std::size_t num_descriptors);
  ConstraintFeatureMapG(std::size_t dim, std::vector<std::uint32_t> bits,
                        std::size_t num_descriptors);

  std::size_t dim() const { return dim_; }
  std::size_t output_dim() const { return bits_.size() + num_descriptors_; }
  const std::vector<std::uint32_t>& bits() const { return bits_; }
  std::size_t num_descriptors() const { return num_descriptors_; }

  Eigen::VectorXd operator()(const ConstraintVector& c, std::span<const double> descriptors) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> bits_;
  std::size_t num_descriptors_ = 0;
};

enum class TransformMode { kDiagonal, kFull };

std::string to_string(TransformMode mode);
TransformMode transform_mode_from_string(const std::string& name);

/// T(c) produced by h_theta: a diagonal (k) or a full row-major k x k matrix.
struct NeuralTransform {
  TransformMode mode = TransformMode::kDiagonal;
  Eigen::VectorXd diagonal;
  Eigen::MatrixXd full;

  /// U_u T P_i^T
  double bilinear(const Eigen::VectorXd& user, const Eigen::VectorXd& item) const;
};

/// Runs h_theta on g(c). Throws ConfigError when the output size is not k / k^2.
NeuralTransform nc_transform(const FeedForwardNet& net, const Eigen::VectorXd& g_c,
                             TransformMode mode, std::size_t k);

/// Tower embedding from [id_embedding, side_features].
Eigen::VectorXd tower_embed(const FeedForwardNet& net, const Eigen::VectorXd& id_embedding,
                            const Eigen::VectorXd& side_features);

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace cmf
