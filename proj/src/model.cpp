#include "cmf/model.hpp"

#include <fstream>
#include <utility>

#include "cmf/errors.hpp"

namespace cmf {

using nlohmann::json;

namespace {

struct VariantName {
  Variant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::kMF, "MF"},         {Variant::kCamfCi, "CAMF-CI"}, {Variant::kWcMf, "WC-MF"},
    {Variant::kDcMf, "DC-MF"},    {Variant::kNcMf, "NC-MF"},     {Variant::kNnMf, "NN-MF"},
    {Variant::kNcNnMf, "NC-NN-MF"},
};

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

json matrix_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

template <typename MatrixT>
MatrixT matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (data.size() != static_cast<std::size_t>(rows * cols)) {
    throw DataError("matrix payload size does not match its shape");
  }
  MatrixT m(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[pos++].get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), idx(values.size()));
}

json net_json(const FeedForwardNet& net) {
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({{"in", layer.in_dim()},
                      {"out", layer.out_dim()},
                      {"activation", to_string(layer.activation)},
                      {"weight", matrix_json(layer.weight)},
                      {"bias", vector_json(layer.bias)}});
  }
  return layers;
}

FeedForwardNet net_from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& lj : j) {
    DenseLayer layer;
    layer.weight = matrix_from_json<Eigen::MatrixXd>(lj.at("weight"));
    layer.bias = vector_from_json(lj.at("bias"));
    layer.activation = activation_from_string(lj.at("activation").get<std::string>());
    layers.push_back(std::move(layer));
  }
  return FeedForwardNet(std::move(layers));
}

void fill_normal(RowMatrix& m, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * dist(rng);
  }
}

}  // namespace

std::string to_string(Variant v) {
  for (const auto& entry : kVariantNames) {
    if (entry.variant == v) return entry.name;
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (const auto& entry : kVariantNames) {
    if (name == entry.name) return entry.variant;
  }
  throw ConfigError("unknown model variant: " + name);
}

bool is_linear(Variant v) {
  return v == Variant::kMF || v == Variant::kCamfCi || v == Variant::kWcMf || v == Variant::kDcMf;
}

bool uses_transform_net(Variant v) { return v == Variant::kNcMf || v == Variant::kNcNnMf; }

bool uses_towers(Variant v) { return v == Variant::kNnMf || v == Variant::kNcNnMf; }

json to_json(const ModelSpec& spec) {
  return {{"variant", to_string(spec.variant)},
          {"k", spec.k},
          {"hidden", spec.hidden},
          {"transform_mode", to_string(spec.transform_mode)},
          {"g_bits", spec.g_bits},
          {"num_descriptors", spec.num_descriptors},
          {"init_scale", spec.init_scale},
          {"transform_init_noise", spec.transform_init_noise}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.variant = variant_from_string(j.at("variant").get<std::string>());
  spec.k = j.value("k", spec.k);
  spec.hidden = j.value("hidden", spec.hidden);
  spec.transform_mode = transform_mode_from_string(j.value("transform_mode", std::string("diagonal")));
  spec.g_bits = j.value("g_bits", spec.g_bits);
  spec.num_descriptors = j.value("num_descriptors", spec.num_descriptors);
  spec.init_scale = j.value("init_scale", spec.init_scale);
  spec.transform_init_noise = j.value("transform_init_noise", spec.transform_init_noise);
  return spec;
}

Eigen::VectorXd Model::user_tower_input(std::size_t user, const Eigen::VectorXd& g_c) const {
  Eigen::VectorXd side_u = side.user.cols() > 0 ? Eigen::VectorXd(side.user.row(idx(user)).transpose())
                                                 : Eigen::VectorXd();
  Eigen::VectorXd x = concat(embedding.U.row(idx(user)).transpose(), side_u);
  return variant == Variant::kNnMf ? concat(x, g_c) : x;
}

Eigen::VectorXd Model::item_tower_input(std::size_t item, const Eigen::VectorXd& g_c) const {
  Eigen::VectorXd side_i = side.item.cols() > 0 ? Eigen::VectorXd(side.item.row(idx(item)).transpose())
                                                 : Eigen::VectorXd();
  Eigen::VectorXd x = concat(embedding.P.row(idx(item)).transpose(), side_i);
  return variant == Variant::kNnMf ? concat(x, g_c) : x;
}

double Model::score(std::size_t user, std::size_t item, const ConstraintVector& c,
                    std::span<const double> descriptors) const {
  switch (variant) {
    case Variant::kMF:
      return score_mf(embedding, user, item);
    case Variant::kCamfCi:
      return score_camf(embedding, context, user, item, c);
    case Variant::kWcMf:
      return score_weighted(embedding, weighted, user, item, c);
    case Variant::kDcMf:
      return score_constrained(embedding, transform_linear(diagonal, c), user, item);
    case Variant::kNcMf: {
      embedding.check_ids(user, item);
      const auto t = nc_transform(transform_net, g(c, descriptors), transform_mode, k());
      return t.bilinear(embedding.U.row(idx(user)).transpose(),
                        embedding.P.row(idx(item)).transpose()) +
             embedding.B(idx(user));
    }
    case Variant::kNnMf: {
      embedding.check_ids(user, item);
      const auto g_c = g(c, descriptors);
      return user_tower.forward(user_tower_input(user, g_c))
          .dot(item_tower.forward(item_tower_input(item, g_c)));
    }
    case Variant::kNcNnMf: {
      embedding.check_ids(user, item);
      const auto g_c = g(c, descriptors);
      const auto t = nc_transform(transform_net, g_c, transform_mode, k());
      return t.bilinear(user_tower.forward(user_tower_input(user, g_c)),
                        item_tower.forward(item_tower_input(item, g_c))) +
             embedding.B(idx(user));
    }
  }
  throw ConfigError("unhandled variant");
}

double Model::score(const Interaction& rec) const {
  return score(rec.user, rec.item, rec.constraint, rec.descriptors);
}

bool Model::all_finite() const {
  if (!embedding.all_finite()) return false;
  if (variant == Variant::kDcMf && !diagonal.D.allFinite()) return false;
  if (variant == Variant::kWcMf && !weighted.alpha.allFinite()) return false;
  for (const auto* net : {&transform_net, &user_tower, &item_tower}) {
    for (const auto& layer : net->layers()) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
  }
  return true;
}

Model initialize_model(const ModelSpec& spec, std::size_t num_users, std::size_t num_items,
                       std::size_t dim, const FeatureMap& features, const SideFeatures& side,
                       std::uint64_t seed) {
  if (spec.k == 0) throw ConfigError("embedding size k must be positive");
  std::mt19937_64 rng(seed);
  Model model;
  model.variant = spec.variant;
  model.set_dim(dim);
  model.embedding = EmbeddingModel(num_users, num_items, spec.k);
  fill_normal(model.embedding.U, spec.init_scale, rng);
  fill_normal(model.embedding.P, spec.init_scale, rng);
  model.transform_mode = spec.transform_mode;
  model.g = spec.g_bits.empty() ? ConstraintFeatureMapG(dim, spec.num_descriptors)
                                : ConstraintFeatureMapG(dim, spec.g_bits, spec.num_descriptors);

  switch (spec.variant) {
    case Variant::kMF:
      break;
    case Variant::kCamfCi:
      if (features.size() != num_items || features.dim() != dim) {
        throw DimensionError("CAMF-CI needs an n x d feature map");
      }
      model.context = ContextItemTable(features);
      break;
    case Variant::kWcMf: {
      model.weighted = WeightedTransform(dim);
      std::normal_distribution<double> noise(0.0, spec.transform_init_noise);
      if (spec.transform_init_noise > 0.0) {
        for (Eigen::Index j = 0; j < model.weighted.alpha.size(); ++j) model.weighted.alpha(j) += noise(rng);
      }
      break;
    }
    case Variant::kDcMf: {
      model.diagonal = DiagonalTransform(spec.k, dim);
      if (spec.transform_init_noise > 0.0) {
        RowMatrix noise(model.diagonal.D.rows(), model.diagonal.D.cols());
        fill_normal(noise, spec.transform_init_noise, rng);
        model.diagonal.D += noise;
      }
      break;
    }
    case Variant::kNcMf:
    case Variant::kNnMf:
    case Variant::kNcNnMf:
      break;
  }

  const std::size_t p = model.g.output_dim();
  auto widths = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), spec.hidden.begin(), spec.hidden.end());
    w.push_back(out);
    return w;
  };
  if (uses_transform_net(spec.variant)) {
    const std::size_t out = spec.transform_mode == TransformMode::kDiagonal ? spec.k : spec.k * spec.k;
    model.transform_net = FeedForwardNet::glorot(widths(p, out), rng);
    // Output starts near the identity transform.
    auto& head = model.transform_net.layers().back().bias;
    if (spec.transform_mode == TransformMode::kDiagonal) {
      head.setOnes();
    } else {
      for (std::size_t q = 0; q < spec.k; ++q) head(static_cast<Eigen::Index>(q * spec.k + q)) = 1.0;
    }
  }
  if (uses_towers(spec.variant)) {
    if (side.user.rows() != static_cast<Eigen::Index>(num_users) && side.user.cols() > 0) {
      throw DimensionError("user side features need one row per user");
    }
    if (side.item.rows() != static_cast<Eigen::Index>(num_items) && side.item.cols() > 0) {
      throw DimensionError("item side features need one row per item");
    }
    model.side = side;
    if (model.side.user.cols() == 0) model.side.user.resize(0, 0);
    if (model.side.item.cols() == 0) model.side.item.resize(0, 0);
    const std::size_t ctx = spec.variant == Variant::kNnMf ? p : 0;
    model.user_tower = FeedForwardNet::glorot(
        widths(spec.k + static_cast<std::size_t>(side.user.cols()) + ctx, spec.k), rng);
    model.item_tower = FeedForwardNet::glorot(
        widths(spec.k + static_cast<std::size_t>(side.item.cols()) + ctx, spec.k), rng);
  }
  return model;
}

json to_json(const Model& model) {
  json j{{"format", "cmf-model"},
         {"version", kModelFormatVersion},
         {"variant", to_string(model.variant)},
         {"k", model.k()},
         {"m", model.num_users()},
         {"n", model.num_items()},
         {"d", model.dim()},
         {"U", matrix_json(model.embedding.U)},
         {"P", matrix_json(model.embedding.P)},
         {"B", vector_json(model.embedding.B)}};
  switch (model.variant) {
    case Variant::kDcMf:
      j["D"] = matrix_json(model.diagonal.D);
      break;
    case Variant::kWcMf:
      j["alpha"] = vector_json(model.weighted.alpha);
      break;
    case Variant::kCamfCi: {
      json rows = json::array();
      json values = json::array();
      const auto& compat = model.context.compatibility();
      for (std::size_t i = 0; i < compat.size(); ++i) {
        rows.push_back(compat.row(i).active());
        values.push_back(model.context.item_values(i));
      }
      j["context"] = {{"compatible", std::move(rows)}, {"values", std::move(values)}};
      break;
    }
    default:
      break;
  }
  if (uses_transform_net(model.variant) || uses_towers(model.variant)) {
    j["g"] = {{"bits", model.g.bits()}, {"num_descriptors", model.g.num_descriptors()}};
  }
  if (uses_transform_net(model.variant)) {
    j["transform_mode"] = to_string(model.transform_mode);
    j["transform_net"] = net_json(model.transform_net);
  }
  if (uses_towers(model.variant)) {
    j["user_tower"] = net_json(model.user_tower);
    j["item_tower"] = net_json(model.item_tower);
    j["user_side"] = matrix_json(model.side.user);
    j["item_side"] = matrix_json(model.side.item);
  }
  return j;
}

Model model_from_json(const json& j) {
  if (j.value("format", std::string()) != "cmf-model") throw DataError("not a cmf-model document");
  if (j.at("version").get<int>() != kModelFormatVersion) {
    throw DataError("unsupported model format version " + j.at("version").dump());
  }
  Model model;
  model.variant = variant_from_string(j.at("variant").get<std::string>());
  const auto d = j.at("d").get<std::size_t>();
  model.set_dim(d);
  model.embedding.U = matrix_from_json<RowMatrix>(j.at("U"));
  model.embedding.P = matrix_from_json<RowMatrix>(j.at("P"));
  model.embedding.B = vector_from_json(j.at("B"));
  if (model.k() != j.at("k").get<std::size_t>() || model.num_users() != j.at("m").get<std::size_t>() ||
      model.num_items() != j.at("n").get<std::size_t>() || model.embedding.P.cols() != model.embedding.U.cols() ||
      static_cast<std::size_t>(model.embedding.B.size()) != model.num_users()) {
    throw DimensionError("model document shapes are inconsistent");
  }
  if (j.contains("D")) model.diagonal.D = matrix_from_json<RowMatrix>(j.at("D"));
  if (j.contains("alpha")) model.weighted.alpha = vector_from_json(j.at("alpha"));
  if (j.contains("context")) {
    const auto& ctx = j.at("context");
    std::vector<BitSet> rows;
    for (const auto& r : ctx.at("compatible")) rows.emplace_back(d, r.get<std::vector<std::uint32_t>>());
    model.context = ContextItemTable(FeatureMap(d, std::move(rows)));
    const auto& values = ctx.at("values");
    for (std::size_t i = 0; i < model.context.num_items(); ++i) {
      auto v = values.at(i).get<std::vector<double>>();
      if (v.size() != model.context.item_values(i).size()) throw DataError("context values misaligned");
      model.context.item_values(i) = std::move(v);
    }
  }
  if (j.contains("g")) {
    model.g = ConstraintFeatureMapG(d, j["g"].at("bits").get<std::vector<std::uint32_t>>(),
                                    j["g"].at("num_descriptors").get<std::size_t>());
  }
  if (j.contains("transform_net")) {
    model.transform_mode = transform_mode_from_string(j.at("transform_mode").get<std::string>());
    model.transform_net = net_from_json(j.at("transform_net"));
  }
  if (j.contains("user_tower")) {
    model.user_tower = net_from_json(j.at("user_tower"));
    model.item_tower = net_from_json(j.at("item_tower"));
    model.side.user = matrix_from_json<RowMatrix>(j.at("user_side"));
    model.side.item = matrix_from_json<RowMatrix>(j.at("item_side"));
  }
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << to_json(model).dump() << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  return model_from_json(json::parse(in));
}

}  // namespace cmf
