#include "cmf/neural_net.hpp"

#include <cmath>
#include <utility>

#include "cmf/errors.hpp"

namespace cmf {

std::string to_string(Activation act) {
  return act == Activation::kRelu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation: " + name);
}

std::string to_string(TransformMode mode) {
  return mode == TransformMode::kDiagonal ? "diagonal" : "full";
}

TransformMode transform_mode_from_string(const std::string& name) {
  if (name == "diagonal") return TransformMode::kDiagonal;
  if (name == "full") return TransformMode::kFull;
  throw ConfigError("unknown transform mode: " + name);
}

NetGradients& NetGradients::operator+=(const NetGradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  if (input.size() == other.input.size()) input += other.input;
  return *this;
}

FeedForwardNet::FeedForwardNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw DimensionError("layer " + std::to_string(l) + ": bias length != output size");
    }
    if (l > 0 && layers_[l].in_dim() != layers_[l - 1].out_dim()) {
      throw DimensionError("layer " + std::to_string(l) + " input does not chain");
    }
  }
  if (!layers_.empty() && layers_.back().activation != Activation::kIdentity) {
    throw ConfigError("final layer activation must be identity");
  }
}

FeedForwardNet FeedForwardNet::glorot(const std::vector<std::size_t>& widths,
                                      std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("network needs at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = (l + 2 == widths.size()) ? Activation::kIdentity : Activation::kRelu;
    layers.push_back(std::move(layer));
  }
  return FeedForwardNet(std::move(layers));
}

std::size_t FeedForwardNet::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in_dim();
}

std::size_t FeedForwardNet::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

Eigen::VectorXd FeedForwardNet::forward(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw DimensionError("network input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(input_dim()));
  }
  Eigen::VectorXd h = x;
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weight * h + layer.bias;
    if (layer.activation == Activation::kRelu) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

ForwardPass FeedForwardNet::forward_cached(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw DimensionError("network input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(input_dim()));
  }
  ForwardPass pass;
  Eigen::VectorXd h = x;
  for (const auto& layer : layers_) {
    pass.inputs.push_back(h);
    Eigen::VectorXd z = layer.weight * h + layer.bias;
    pass.pre.push_back(z);
    h = layer.activation == Activation::kRelu ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  pass.output = std::move(h);
  return pass;
}

NetGradients FeedForwardNet::backward(const ForwardPass& pass,
                                      const Eigen::VectorXd& upstream) const {
  if (!pass.valid() || pass.inputs.size() != layers_.size()) {
    throw StateError("backward() requires a cached forward pass of this network");
  }
  if (static_cast<std::size_t>(upstream.size()) != output_dim()) {
    throw DimensionError("upstream gradient length does not match network output");
  }
  NetGradients grad;
  grad.weight.resize(layers_.size());
  grad.bias.resize(layers_.size());
  Eigen::VectorXd delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (layer.activation == Activation::kRelu) {
      for (Eigen::Index r = 0; r < delta.size(); ++r) {
        if (pass.pre[l](r) <= 0.0) delta(r) = 0.0;
      }
    }
    grad.weight[l] = delta * pass.inputs[l].transpose();
    grad.bias[l] = delta;
    delta = layer.weight.transpose() * delta;
  }
  grad.input = std::move(delta);
  return grad;
}

NetGradients FeedForwardNet::zero_gradients() const {
  NetGradients grad;
  for (const auto& layer : layers_) {
    grad.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    grad.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  grad.input = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(input_dim()));
  return grad;
}

void FeedForwardNet::apply(const NetGradients& grad, double step) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weight -= step * grad.weight[l];
    layers_[l].bias -= step * grad.bias[l];
  }
}

std::size_t FeedForwardNet::num_parameters() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) total += layer.weight.size() + layer.bias.size();
  return total;
}

std::vector<double> FeedForwardNet::parameters() const {
  std::vector<double> flat;
  flat.reserve(num_parameters());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) flat.push_back(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) flat.push_back(layer.bias(r));
  }
  return flat;
}

void FeedForwardNet::set_parameters(std::span<const double> flat) {
  if (flat.size() != num_parameters()) throw DimensionError("parameter vector size mismatch");
  std::size_t pos = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[pos++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = flat[pos++];
  }
}

std::vector<double> FeedForwardNet::flatten(const NetGradients& grad) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < grad.weight.size(); ++l) {
    for (Eigen::Index r = 0; r < grad.weight[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < grad.weight[l].cols(); ++c) flat.push_back(grad.weight[l](r, c));
    }
    for (Eigen::Index r = 0; r < grad.bias[l].size(); ++r) flat.push_back(grad.bias[l](r));
  }
  return flat;
}

ConstraintFeatureMapG::ConstraintFeatureMapG(std::size_t dim, std::size_t num_descriptors)
    : dim_(dim), num_descriptors_(num_descriptors) {
  for (std::size_t j = 0; j < dim; ++j) bits_.push_back(static_cast<std::uint32_t>(j));
}

ConstraintFeatureMapG::ConstraintFeatureMapG(std::size_t dim, std::vector<std::uint32_t> bits,
                                             std::size_t num_descriptors)
    : dim_(dim), bits_(std::move(bits)), num_descriptors_(num_descriptors) {
  for (auto b : bits_) {
    if (b >= dim_) throw DimensionError("g(c) bit index out of range");
  }
}

Eigen::VectorXd ConstraintFeatureMapG::operator()(const ConstraintVector& c,
                                                  std::span<const double> descriptors) const {
  if (c.dim() != dim_) throw DimensionError("constraint dimension does not match g");
  if (descriptors.size() != num_descriptors_) {
    throw DimensionError("expected " + std::to_string(num_descriptors_) +
                         " constraint descriptors, got " + std::to_string(descriptors.size()));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(output_dim()));
  Eigen::Index pos = 0;
  for (auto b : bits_) out(pos++) = c.test(b) ? 1.0 : 0.0;
  for (double v : descriptors) out(pos++) = v;
  return out;
}

double NeuralTransform::bilinear(const Eigen::VectorXd& user, const Eigen::VectorXd& item) const {
  if (mode == TransformMode::kDiagonal) {
    double s = 0.0;
    for (Eigen::Index q = 0; q < diagonal.size(); ++q) s += user(q) * diagonal(q) * item(q);
    return s;
  }
  return user.dot(full * item);
}

NeuralTransform nc_transform(const FeedForwardNet& net, const Eigen::VectorXd& g_c,
                             TransformMode mode, std::size_t k) {
  const std::size_t expected = mode == TransformMode::kDiagonal ? k : k * k;
  if (net.output_dim() != expected) {
    throw ConfigError("transform network outputs " + std::to_string(net.output_dim()) +
                      " values, " + to_string(mode) + " mode needs " + std::to_string(expected));
  }
  NeuralTransform t;
  t.mode = mode;
  Eigen::VectorXd out = net.forward(g_c);
  if (mode == TransformMode::kDiagonal) {
    t.diagonal = std::move(out);
  } else {
    const auto kk = static_cast<Eigen::Index>(k);
    t.full = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.data(), kk, kk);
  }
  return t;
}

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

Eigen::VectorXd tower_embed(const FeedForwardNet& net, const Eigen::VectorXd& id_embedding,
                            const Eigen::VectorXd& side_features) {
  return net.forward(concat(id_embedding, side_features));
}

}  // namespace cmf
