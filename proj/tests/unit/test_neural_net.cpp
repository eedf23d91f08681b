#include <cmath>
#include <random>

#include "doctest.h"

#include "cmf/errors.hpp"
#include "cmf/model.hpp"
#include "cmf/neural_net.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"

using namespace cmf;

namespace {

DenseLayer layer(Eigen::MatrixXd w, Eigen::VectorXd b, Activation act) {
  DenseLayer l;
  l.weight = std::move(w);
  l.bias = std::move(b);
  l.activation = act;
  return l;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_SUITE("neural_net") {
  TEST_CASE("identity layer passes input through") {
    FeedForwardNet net({layer(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::kIdentity)});
    const auto x = vec({1.5, -2.0, 0.25});
    CHECK(net.forward(x) == x);
    CHECK_THROWS_AS(net.forward(vec({1.0})), DimensionError);
  }

  TEST_CASE("relu zeroes negative inputs") {
    FeedForwardNet net({layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::kRelu),
                        layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::kIdentity)});
    CHECK(net.forward(vec({-1.0, -3.0})) == Eigen::VectorXd::Zero(2));
  }

  TEST_CASE("hand-set two-layer network") {
    Eigen::MatrixXd w1(2, 2), w2(1, 2);
    w1 << 1.0, -1.0, 0.5, 2.0;
    w2 << 3.0, -2.0;
    FeedForwardNet net({layer(w1, vec({0.1, -0.5}), Activation::kRelu), layer(w2, vec({0.25}), Activation::kIdentity)});
    // x = (2, 1): h1 = relu(2 - 1 + 0.1) = 1.1, h2 = relu(1 + 2 - 0.5) = 2.5
    // y = 3 * 1.1 - 2 * 2.5 + 0.25 = -1.45
    CHECK(net.forward(vec({2.0, 1.0}))(0) == doctest::Approx(-1.45).epsilon(1e-14));
    // x = (0, 0): h1 = 0.1, h2 = relu(-0.5) = 0 -> y = 0.3 + 0.25
    CHECK(net.forward(vec({0.0, 0.0}))(0) == doctest::Approx(0.55).epsilon(1e-14));
  }

  TEST_CASE("rejects bad layer chains") {
    CHECK_THROWS(FeedForwardNet({layer(Eigen::MatrixXd::Identity(2, 3), Eigen::VectorXd::Zero(2), Activation::kRelu),
                                 layer(Eigen::MatrixXd::Identity(2, 3), Eigen::VectorXd::Zero(2), Activation::kIdentity)}));
    CHECK_THROWS(FeedForwardNet({layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::kRelu)}));
  }

  TEST_CASE("backward examples") {
    FeedForwardNet net({layer(Eigen::MatrixXd::Identity(2, 3), Eigen::VectorXd::Zero(2), Activation::kIdentity)});
    const auto x = vec({1.0, 2.0, 3.0});
    const auto pass = net.forward_cached(x);
    const auto g = net.backward(pass, Eigen::VectorXd::Ones(2));
    Eigen::MatrixXd expected(2, 3);
    expected << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
    CHECK(g.weight[0] == expected);
    CHECK(g.bias[0] == Eigen::VectorXd::Ones(2));

    Eigen::MatrixXd w1(2, 1), w2(1, 2);
    w1 << 1.0, -1.0;
    w2 << 1.0, 1.0;
    FeedForwardNet relu_net({layer(w1, Eigen::VectorXd::Zero(2), Activation::kRelu),
                             layer(w2, Eigen::VectorXd::Zero(1), Activation::kIdentity)});
    const auto p2 = relu_net.forward_cached(vec({2.0}));
    const auto g2 = relu_net.backward(p2, vec({1.0}));
    CHECK(g2.weight[0](1, 0) == 0.0);  // second hidden unit is inactive
    CHECK(g2.bias[0](1) == 0.0);
    CHECK(g2.weight[0](0, 0) == 2.0);

    CHECK_THROWS_AS(net.backward(ForwardPass{}, Eigen::VectorXd::Ones(2)), StateError);
  }

  TEST_CASE("backward matches finite differences on random two-layer nets") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      auto net = FeedForwardNet::glorot({4, 7, 3}, rng);
      std::normal_distribution<double> N(0.0, 1.0);
      Eigen::VectorXd x(4), up(3);
      for (int i = 0; i < 4; ++i) x(i) = N(rng);
      for (int i = 0; i < 3; ++i) up(i) = N(rng);
      const auto analytic = FeedForwardNet::flatten(net.backward(net.forward_cached(x), up));
      FeedForwardNet work = net;
      auto f = [&](const std::vector<double>& theta) {
        work.set_parameters(theta);
        return work.forward(x).dot(up);
      };
      const auto numeric = oracle::central_differences(f, net.parameters(), 1e-5);
      CHECK(oracle::max_relative_error(analytic, numeric, 1e-4) < 1e-5);

      const auto input_grad = net.backward(net.forward_cached(x), up).input;
      auto fx = [&](const std::vector<double>& v) {
        return net.forward(Eigen::Map<const Eigen::VectorXd>(v.data(), 4)).dot(up);
      };
      const auto num_in = oracle::central_differences(fx, std::vector<double>(x.data(), x.data() + 4), 1e-5);
      CHECK(oracle::max_relative_error(std::vector<double>(input_grad.data(), input_grad.data() + 4), num_in, 1e-4) <
            1e-5);
    }
  }

  TEST_CASE("glorot initialization is seeded and bounded") {
    std::mt19937_64 a(5), b(5);
    const auto n1 = FeedForwardNet::glorot({3, 64, 8}, a);
    const auto n2 = FeedForwardNet::glorot({3, 64, 8}, b);
    CHECK(n1.parameters() == n2.parameters());
    const double limit = std::sqrt(6.0 / (3.0 + 64.0));
    CHECK(n1.layers()[0].weight.cwiseAbs().maxCoeff() <= limit);
    CHECK(n1.layers().back().activation == Activation::kIdentity);
    CHECK(n1.layers()[0].activation == Activation::kRelu);
  }

  TEST_CASE("nc_transform modes") {
    FeedForwardNet diag({layer(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Ones(3), Activation::kIdentity)});
    const auto t = nc_transform(diag, vec({0.3, 0.7}), TransformMode::kDiagonal, 3);
    CHECK(t.diagonal == Eigen::VectorXd::Ones(3));
    CHECK(t.bilinear(vec({1, 2, 3}), vec({4, 5, 6})) == 32.0);

    Eigen::VectorXd eye(9);
    eye << 1, 0, 0, 0, 1, 0, 0, 0, 1;
    FeedForwardNet full({layer(Eigen::MatrixXd::Zero(9, 2), eye, Activation::kIdentity)});
    const auto tf = nc_transform(full, vec({0.3, 0.7}), TransformMode::kFull, 3);
    CHECK(tf.full == Eigen::MatrixXd::Identity(3, 3));
    CHECK(tf.bilinear(vec({1, 2, 3}), vec({4, 5, 6})) == 32.0);

    CHECK_THROWS_AS(nc_transform(diag, vec({0.3, 0.7}), TransformMode::kDiagonal, 4), ConfigError);
    CHECK_THROWS_AS(nc_transform(diag, vec({0.3, 0.7}), TransformMode::kFull, 3), ConfigError);
  }

  TEST_CASE("NC-MF diagonal pipeline equals score_constrained") {
    std::vector<BitSet> rows(4, BitSet(3, {0, 1, 2}));
    ModelSpec spec;
    spec.variant = Variant::kNcMf;
    spec.k = 5;
    spec.hidden = {8};
    SideFeatures side{RowMatrix(3, 0), RowMatrix(4, 0)};
    auto model = initialize_model(spec, 3, 4, 3, FeatureMap(3, rows), side, 13);
    const ConstraintVector c(3, {0, 2});
    const auto t = nc_transform(model.transform_net, model.g(c, {}), TransformMode::kDiagonal, 5);
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t i = 0; i < 4; ++i)
        CHECK(model.score(u, i, c) == doctest::Approx(score_constrained(model.embedding, t.diagonal, u, i)));
  }

  TEST_CASE("tower_embed examples") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 3);
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;
    FeedForwardNet id({layer(w, Eigen::VectorXd::Zero(2), Activation::kIdentity)});
    CHECK(tower_embed(id, vec({0.4, -0.9}), vec({7.0})) == vec({0.4, -0.9}));
    FeedForwardNet zero({layer(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2), Activation::kIdentity)});
    CHECK(tower_embed(zero, vec({0.4, -0.9}), vec({7.0})) == Eigen::VectorXd::Zero(2));
    CHECK_THROWS_AS(tower_embed(id, vec({0.4}), vec({7.0})), DimensionError);
  }

  TEST_CASE("NN-MF score is the dot product of the tower outputs") {
    ModelSpec spec;
    spec.variant = Variant::kNnMf;
    spec.k = 4;
    spec.hidden = {6};
    spec.num_descriptors = 1;
    SideFeatures side{RowMatrix::Constant(2, 1, 0.3), RowMatrix::Constant(3, 2, 1.0)};
    std::vector<BitSet> rows(3, BitSet(2, {0, 1}));
    auto model = initialize_model(spec, 2, 3, 2, FeatureMap(2, rows), side, 21);
    const ConstraintVector c(2, {1});
    const std::vector<double> desc{0.42};
    const Eigen::VectorXd g = model.g(c, desc);
    CHECK(g.size() == 3);
    CHECK(g(2) == 0.42);
    const auto a = model.user_tower.forward(concat(concat(model.embedding.U.row(1).transpose(), vec({0.3})), g));
    const auto b = model.item_tower.forward(concat(concat(model.embedding.P.row(2).transpose(), vec({1.0, 1.0})), g));
    CHECK(model.score(1, 2, c, desc) == doctest::Approx(a.dot(b)).epsilon(1e-14));
  }

  TEST_CASE("NC-NN-MF with identity towers reproduces NC-MF") {
    const std::size_t k = 3;
    std::vector<BitSet> rows(3, BitSet(2, {0, 1}));
    SideFeatures side{RowMatrix::Constant(2, 1, 0.5), RowMatrix::Constant(3, 1, 0.25)};
    ModelSpec nc;
    nc.variant = Variant::kNcMf;
    nc.k = k;
    nc.hidden = {5};
    auto a = initialize_model(nc, 2, 3, 2, FeatureMap(2, rows), side, 8);
    ModelSpec both = nc;
    both.variant = Variant::kNcNnMf;
    auto b = initialize_model(both, 2, 3, 2, FeatureMap(2, rows), side, 8);
    b.embedding = a.embedding;
    b.transform_net = a.transform_net;
    Eigen::MatrixXd pick = Eigen::MatrixXd::Zero(k, k + 1);
    pick.leftCols(k) = Eigen::MatrixXd::Identity(k, k);
    b.user_tower = FeedForwardNet({layer(pick, Eigen::VectorXd::Zero(k), Activation::kIdentity)});
    b.item_tower = FeedForwardNet({layer(pick, Eigen::VectorXd::Zero(k), Activation::kIdentity)});
    for (std::size_t u = 0; u < 2; ++u)
      for (std::size_t i = 0; i < 3; ++i)
        for (auto c : {ConstraintVector(2, {0}), ConstraintVector(2, {0, 1})})
          CHECK(b.score(u, i, c) == doctest::Approx(a.score(u, i, c)).epsilon(1e-14));
  }

  TEST_CASE("identical seeds give identical networks") {
    std::vector<BitSet> rows(3, BitSet(2, {0, 1}));
    SideFeatures side{RowMatrix(2, 0), RowMatrix(3, 0)};
    ModelSpec spec;
    spec.variant = Variant::kNcNnMf;
    spec.k = 4;
    const auto a = initialize_model(spec, 2, 3, 2, FeatureMap(2, rows), side, 99);
    const auto b = initialize_model(spec, 2, 3, 2, FeatureMap(2, rows), side, 99);
    CHECK(to_json(a).dump() == to_json(b).dump());
  }

  TEST_CASE("model gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      for (auto v : {Variant::kNcMf, Variant::kNnMf, Variant::kNcNnMf}) {
        const auto r = gradcheck::probe(v, seed);
        CHECK_MESSAGE(r.max_relative_error < 1e-5, to_string(v), " seed ", seed);
      }
      CHECK(gradcheck::probe(Variant::kNcMf, seed, TransformMode::kFull).max_relative_error < 1e-5);
    }
  }
}
