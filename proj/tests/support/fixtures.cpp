#include "fixtures.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "cmf/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cmf::fixtures {

BucketWorld bucket_world() {
  BucketWorld w;
  w.observations = InteractionTensor(3, 3, 2);
  w.observations.add({0, 0, ConstraintVector(2, {0}), 1.0, 1.0, {}});
  w.observations.add({1, 1, ConstraintVector(2, {1}), 1.0, 1.0, {}});
  w.observations.add({2, 2, ConstraintVector(2, {1}), 1.0, 1.0, {}});
  w.observations.add({2, 1, ConstraintVector(2, {1}), 1.0, 1.0, {}});
  w.positives.push_back({{0, 0, ConstraintVector(2, {0}), 1.0, 1.0, {}}, true, 0, ""});
  w.positives.push_back({{1, 2, ConstraintVector(2, {1}), 1.0, 1.0, {}}, true, 1, ""});
  return w;
}

RealizableFixture realizable_mf(std::uint64_t seed, std::size_t m, std::size_t n, std::size_t k) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> factor(-0.4, 0.4);
  std::uniform_real_distribution<double> bias(0.3, 0.7);
  std::vector<std::vector<double>> U(m, std::vector<double>(k)), P(n, std::vector<double>(k));
  std::vector<double> B(m);
  for (auto& row : U) for (auto& v : row) v = factor(rng);
  for (auto& row : P) for (auto& v : row) v = factor(rng);
  for (auto& b : B) b = bias(rng);
  RealizableFixture out;
  out.k = k;
  out.data = InteractionTensor(m, n, 1);
  for (std::uint32_t u = 0; u < m; ++u) {
    for (std::uint32_t i = 0; i < n; ++i) {
      double s = B[u];
      for (std::size_t q = 0; q < k; ++q) s += U[u][q] * P[i][q];
      out.data.add({u, i, ConstraintVector(1, {0}), s, 1.0, {}});
    }
  }
  out.features = FeatureMap(1, std::vector<BitSet>(n, BitSet(1, {0})));
  return out;
}

RandomFixture random_fixture(std::uint64_t seed, std::size_t max_users, std::size_t max_items, std::size_t dim) {
  std::mt19937_64 rng(seed);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(3, max_users)(rng);
  const std::size_t n = std::uniform_int_distribution<std::size_t>(3, max_items)(rng);
  const std::size_t records = std::uniform_int_distribution<std::size_t>(m + n, 4 * (m + n))(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution bit(0.35);
  RandomFixture out;
  out.data = InteractionTensor(m, n, dim);
  for (std::size_t r = 0; r < records; ++r) {
    std::vector<std::uint32_t> active;
    for (std::uint32_t j = 0; j < dim; ++j) {
      if (bit(rng)) active.push_back(j);
    }
    if (active.empty()) active.push_back(std::uniform_int_distribution<std::uint32_t>(0, dim - 1)(rng));
    out.data.add({std::uniform_int_distribution<std::uint32_t>(0, m - 1)(rng),
                  std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng),
                  ConstraintVector(dim, std::move(active)), unit(rng), 0.5 + unit(rng), {}});
  }
  out.features = feature_map_from_observations(out.data);
  return out;
}

Dataset folding_micro(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::vector<double> ages = {9, 12, 25, 31, 40, 22, 57, 35, 19, 44, 28, 63};
  const std::size_t m = ages.size();
  // Movies 0-2 horror (one also thriller), 3-6 thriller only, 7-13 other.
  std::vector<BitSet> rows;
  for (std::size_t i = 0; i < 14; ++i) {
    if (i == 0) {
      rows.emplace_back(kMovieLensDim, std::vector<std::uint32_t>{kThrillerBit, kHorrorBit});
    } else if (i < 3) {
      rows.emplace_back(kMovieLensDim, std::vector<std::uint32_t>{kHorrorBit});
    } else if (i < 7) {
      rows.emplace_back(kMovieLensDim, std::vector<std::uint32_t>{kThrillerBit});
    } else {
      rows.emplace_back(kMovieLensDim, std::vector<std::uint32_t>{kOtherBit});
    }
  }
  Dataset ds;
  ds.features = FeatureMap(kMovieLensDim, rows);
  ds.user_age = ages;
  ds.data = InteractionTensor(m, rows.size(), kMovieLensDim);
  for (std::uint32_t u = 0; u < m; ++u) {
    const bool kid = ages[u] < kKidAge;
    for (std::uint32_t i = 0; i < rows.size(); ++i) {
      if (kid && i < 7) continue;
      if (unit(rng) > 0.7) continue;
      const int rating = 1 + static_cast<int>(unit(rng) * 5.0) % 5;
      ds.data.add({u, i, ConstraintVector(rows[i]), (rating - 1) / 4.0, 1.0, {ages[u] / 100.0}});
    }
  }
  ds.manifest.dataset = "movielens";
  ds.manifest.m = m;
  ds.manifest.n = rows.size();
  ds.manifest.d = kMovieLensDim;
  for (std::size_t u = 0; u < m; ++u) ds.manifest.user_ids.push_back(std::to_string(u + 1));
  for (std::size_t i = 0; i < rows.size(); ++i) ds.manifest.item_ids.push_back(std::to_string(i + 1));
  ds.manifest.hash = content_hash(ds.data, ds.features);
  return ds;
}

Model make_model(Variant variant, std::size_t k, const InteractionTensor& data, const FeatureMap& features,
                 std::uint64_t seed, double transform_noise) {
  ModelSpec spec;
  spec.variant = variant;
  spec.k = k;
  spec.init_scale = 0.3;
  spec.transform_init_noise = transform_noise;
  SideFeatures side{RowMatrix(data.num_users(), 0), RowMatrix(data.num_items(), 0)};
  return initialize_model(spec, data.num_users(), data.num_items(), data.dim(), features, side, seed);
}

namespace {

void write_records(const fs::path& path, const InteractionTensor& data) {
  std::ofstream out(path);
  write_records_jsonl(out, data);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

json expectation(const json& value, const std::string& basis) {
  return {{"value", value}, {"basis", basis}};
}

}  // namespace

void generate_fixtures(std::uint64_t seed, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);

  {
    const auto w = bucket_world();
    const fs::path d = root / "bucket_world";
    fs::create_directories(d);
    write_records(d / "observations.jsonl", w.observations);
    std::ofstream pos(d / "positives.jsonl");
    write_labeled_jsonl(pos, w.positives);
    const auto negatives = make_test_negatives_timebucket(w.positives, w.observations, 3, seed);
    std::ofstream neg(d / "negatives.jsonl");
    write_labeled_jsonl(neg, negatives);
    std::size_t eligible = 0;
    for (const auto& n : negatives) eligible += oracle::negative_is_eligible(n.record, w.observations);
    write_json(d / "expected.json",
               {{"negatives", expectation(negatives.size(), "ratio 3 times two positives")},
                {"eligible_negatives", expectation(eligible, "oracle: exhaustive eligibility scan")}});
  }

  {
    const auto fx = realizable_mf(seed);
    const fs::path d = root / "als_realizable";
    fs::create_directories(d);
    write_records(d / "records.jsonl", fx.data);
    TrainConfig cfg;
    cfg.model.variant = Variant::kMF;
    cfg.model.k = fx.k;
    cfg.model.init_scale = 0.3;
    cfg.lambda = 0.0;
    cfg.iterations = 300;
    cfg.steps_per_block = 1;
    cfg.seed = seed;
    Model model = make_model(Variant::kMF, fx.k, fx.data, fx.features, seed);
    const auto trace = train(model, fx.data, cfg);
    write_json(d / "expected.json",
               {{"k", expectation(fx.k, "rank used to build the rewards")},
                {"final_loss", expectation(trace.iteration_loss.back(),
                                           "oracle: rewards built from known rank-k factors, lambda 0")},
                {"loss_bound", expectation(1e-8, "realizable by construction")}});
  }

  {
    const auto ds = folding_micro(seed);
    FoldingOptions opts;
    opts.seed = seed;
    const auto split = build_folding_split(ds, opts);
    const fs::path d = root / "folding_micro";
    save_dataset((d / "dataset").string(), ds);
    write_records(d / "train.jsonl", split.train);
    std::ofstream h(d / "horror_test.jsonl");
    write_labeled_jsonl(h, split.horror_test);
    std::ofstream t(d / "thriller_test.jsonl");
    write_labeled_jsonl(t, split.thriller_test);
    write_json(d / "expected.json",
               {{"clashing_users", expectation(oracle::folding_clashes(split.train, ds.features).size(),
                                               "oracle: exhaustive disjointness scan")},
                {"horror_users", expectation(split.horror_users, "seeded split")}});
  }
}

}  // namespace cmf::fixtures
