#include "gradcheck.hpp"

#include <random>
#include <vector>

#include "oracles.hpp"

namespace cmf::gradcheck {

namespace {

struct Layout {
  std::size_t transform = 0;
  std::size_t user_tower = 0;
  std::size_t item_tower = 0;
  std::size_t k = 0;
};

std::vector<double> gather(const Model& m, const Layout& l, std::uint32_t u, std::uint32_t i) {
  std::vector<double> x;
  auto append = [&](const std::vector<double>& v) { x.insert(x.end(), v.begin(), v.end()); };
  if (l.transform) append(m.transform_net.parameters());
  if (l.user_tower) append(m.user_tower.parameters());
  if (l.item_tower) append(m.item_tower.parameters());
  for (std::size_t q = 0; q < l.k; ++q) x.push_back(m.embedding.U(u, static_cast<Eigen::Index>(q)));
  for (std::size_t q = 0; q < l.k; ++q) x.push_back(m.embedding.P(i, static_cast<Eigen::Index>(q)));
  return x;
}

void scatter(Model& m, const Layout& l, std::uint32_t u, std::uint32_t i, const std::vector<double>& x) {
  std::size_t pos = 0;
  auto take = [&](FeedForwardNet& net, std::size_t count) {
    net.set_parameters(std::span<const double>(x.data() + pos, count));
    pos += count;
  };
  if (l.transform) take(m.transform_net, l.transform);
  if (l.user_tower) take(m.user_tower, l.user_tower);
  if (l.item_tower) take(m.item_tower, l.item_tower);
  for (std::size_t q = 0; q < l.k; ++q) m.embedding.U(u, static_cast<Eigen::Index>(q)) = x[pos++];
  for (std::size_t q = 0; q < l.k; ++q) m.embedding.P(i, static_cast<Eigen::Index>(q)) = x[pos++];
}

}  // namespace

ProbeResult probe(Variant variant, std::uint64_t seed, TransformMode mode) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr std::size_t m = 4, n = 5, d = 3, k = 6;

  ModelSpec spec;
  spec.variant = variant;
  spec.k = k;
  spec.transform_mode = mode;
  spec.num_descriptors = 1;
  spec.init_scale = 0.5;
  SideFeatures side{RowMatrix(m, 1), RowMatrix(n, 2)};
  for (Eigen::Index r = 0; r < side.user.rows(); ++r) side.user(r, 0) = unit(rng);
  for (Eigen::Index r = 0; r < side.item.rows(); ++r)
    for (Eigen::Index c = 0; c < side.item.cols(); ++c) side.item(r, c) = unit(rng) < 0.5 ? 0.0 : 1.0;
  std::vector<BitSet> rows(n, BitSet(d, {0, 1, 2}));
  Model model = initialize_model(spec, m, n, d, FeatureMap(d, rows), side, seed);
  // Move the output layers off their structured start so every gradient path is exercised.
  for (auto* net : {&model.transform_net, &model.user_tower, &model.item_tower}) {
    if (net->empty()) continue;
    auto& bias = net->layers().back().bias;
    for (Eigen::Index r = 0; r < bias.size(); ++r) bias(r) += 0.3 * normal(rng);
  }
  model.embedding.B(0) = 0.2;

  const auto u = static_cast<std::uint32_t>(rng() % m);
  const auto i = static_cast<std::uint32_t>(rng() % n);
  std::vector<std::uint32_t> active;
  for (std::uint32_t j = 0; j < d; ++j) {
    if (unit(rng) < 0.5) active.push_back(j);
  }
  if (active.empty()) active.push_back(0);
  const Interaction rec{u, i, ConstraintVector(d, active), unit(rng), 1.0, {unit(rng)}};

  Layout layout;
  layout.k = k;
  if (uses_transform_net(variant)) layout.transform = model.transform_net.num_parameters();
  if (uses_towers(variant)) {
    layout.user_tower = model.user_tower.num_parameters();
    layout.item_tower = model.item_tower.num_parameters();
  }

  // Analytic gradient by the chain rule through the public pieces.
  const Eigen::VectorXd g_c = model.g(rec.constraint, rec.descriptors);
  ForwardPass a_pass, b_pass, t_pass;
  Eigen::VectorXd a, b;
  if (uses_towers(variant)) {
    a_pass = model.user_tower.forward_cached(model.user_tower_input(u, g_c));
    b_pass = model.item_tower.forward_cached(model.item_tower_input(i, g_c));
    a = a_pass.output;
    b = b_pass.output;
  } else {
    a = model.embedding.U.row(u).transpose();
    b = model.embedding.P.row(i).transpose();
  }
  const double s = model.score(rec);
  const double dl = -2.0 * (rec.reward - s);
  Eigen::VectorXd da, db;
  std::vector<double> analytic;
  if (uses_transform_net(variant)) {
    t_pass = model.transform_net.forward_cached(g_c);
    Eigen::VectorXd dt;
    if (mode == TransformMode::kDiagonal) {
      const Eigen::VectorXd h = t_pass.output;
      dt = dl * a.cwiseProduct(b);
      da = dl * h.cwiseProduct(b);
      db = dl * h.cwiseProduct(a);
    } else {
      Eigen::MatrixXd T(k, k);
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) T(r, c) = t_pass.output(r * k + c);
      dt.resize(k * k);
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) dt(r * k + c) = dl * a(r) * b(c);
      da = dl * T * b;
      db = dl * T.transpose() * a;
    }
    const auto g = FeedForwardNet::flatten(model.transform_net.backward(t_pass, dt));
    analytic.insert(analytic.end(), g.begin(), g.end());
  } else {
    da = dl * b;
    db = dl * a;
  }
  Eigen::VectorXd du = da, dp = db;
  if (uses_towers(variant)) {
    const auto gu = model.user_tower.backward(a_pass, da);
    const auto gi = model.item_tower.backward(b_pass, db);
    const auto fu = FeedForwardNet::flatten(gu);
    const auto fi = FeedForwardNet::flatten(gi);
    analytic.insert(analytic.end(), fu.begin(), fu.end());
    analytic.insert(analytic.end(), fi.begin(), fi.end());
    du = gu.input.head(k);
    dp = gi.input.head(k);
  }
  for (std::size_t q = 0; q < k; ++q) analytic.push_back(du(static_cast<Eigen::Index>(q)));
  for (std::size_t q = 0; q < k; ++q) analytic.push_back(dp(static_cast<Eigen::Index>(q)));

  Model work = model;
  const auto x0 = gather(model, layout, u, i);
  auto loss = [&](const std::vector<double>& x) {
    scatter(work, layout, u, i, x);
    const double e = rec.reward - work.score(rec);
    return e * e;
  };
  const auto numeric = oracle::central_differences(loss, x0, 1e-5);
  ProbeResult out;
  out.parameters = analytic.size();
  out.max_relative_error = oracle::max_relative_error(analytic, numeric, 1e-4);
  return out;
}

}  // namespace cmf::gradcheck
