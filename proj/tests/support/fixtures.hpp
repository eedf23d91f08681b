#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cmf/constraint.hpp"
#include "cmf/evaluation.hpp"
#include "cmf/ingestion.hpp"
#include "cmf/model.hpp"

namespace cmf::fixtures {

/// Three users, three items, two one-bit buckets, with held-out positives that
/// each admit at least one eligible negative.
struct BucketWorld {
  InteractionTensor observations;
  std::vector<LabeledRecord> positives;
};
BucketWorld bucket_world();

/// Rewards produced exactly by an MF model of rank k (every cell observed).
struct RealizableFixture {
  InteractionTensor data;
  FeatureMap features;
  std::size_t k = 0;
};
RealizableFixture realizable_mf(std::uint64_t seed, std::size_t m = 8, std::size_t n = 8, std::size_t k = 2);

/// Random rewards in [0,1] on random constraints; m, n <= 30.
struct RandomFixture {
  InteractionTensor data;
  FeatureMap features;
};
RandomFixture random_fixture(std::uint64_t seed, std::size_t max_users = 30, std::size_t max_items = 30,
                             std::size_t dim = 6);

/// A MovieLens-shaped world: adults and kids, horror / thriller / other movies.
Dataset folding_micro(std::uint64_t seed);

/// Writes the three toy worlds and their expected values under `dir`.
void generate_fixtures(std::uint64_t seed, const std::string& dir);

/// Fresh model of `variant` on a fixture, with features for CAMF-CI.
Model make_model(Variant variant, std::size_t k, const InteractionTensor& data, const FeatureMap& features,
                 std::uint64_t seed, double transform_noise = 0.0);

}  // namespace cmf::fixtures
