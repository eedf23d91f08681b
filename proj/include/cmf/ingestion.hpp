#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmf/constraint.hpp"
#include "cmf/evaluation.hpp"
#include "cmf/linear_models.hpp"

namespace cmf {

/// Day discretization for check-in times: a check-in activates the
/// `buckets_per_window` buckets centered on its own bucket (wrapping at midnight).
struct TimeBucketScheme {
  int bucket_minutes = 12;
  int buckets_per_window = 5;

  int buckets_per_day() const { return 24 * 60 / bucket_minutes; }
  int bucket_of(int minute_of_day) const;
  ConstraintVector window(int minute_of_day) const;
  /// Center bucket of a window produced by window().
  int center(const ConstraintVector& c) const;
};

struct DatasetManifest {
  std::string dataset;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  /// Contiguous id -> original id.
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  /// Split name -> records file, relative to the dataset directory.
  std::map<std::string, std::string> splits;
  std::map<std::string, double> stats;
  std::vector<std::string> notes;
  std::string hash;

  std::size_t user_index(const std::string& original) const;
  std::size_t item_index(const std::string& original) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

struct Dataset {
  InteractionTensor data;
  FeatureMap features;
  DatasetManifest manifest;
  /// MovieLens only: age per contiguous user id.
  std::vector<double> user_age;
};

/// FNV-1a over the canonical serialization of records and features.
std::string content_hash(const InteractionTensor& data, const FeatureMap& features);

/// Canonical split format: one record per line with user, item,
/// constraint_bits (sorted active indices), reward, weight.
void write_records_jsonl(std::ostream& out, const InteractionTensor& data);
InteractionTensor read_records_jsonl(std::istream& in, std::size_t m, std::size_t n, std::size_t d);

/// Directory layout: manifest.json, records.jsonl, features.json (+ users.json).
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

struct FoursquareSubset {
  /// Venue category names must contain this substring (empty keeps all).
  std::string category_filter = "Restaurant";
  std::size_t min_user_checkins = 1;
  std::size_t min_venue_checkins = 1;
  /// Keep the most active users / venues (0 = no cap).
  std::size_t max_users = 0;
  std::size_t max_venues = 0;
};

nlohmann::json to_json(const FoursquareSubset& s);
FoursquareSubset foursquare_subset_from_json(const nlohmann::json& j);

/// Parses "Tue Apr 03 18:00:09 +0000 2012" plus a timezone offset in minutes
/// into the local minute of the day. Throws DataError when unparseable.
int local_minute_of_day(const std::string& utc_time, int offset_minutes);

/// Positives-only tensor (r = 1) from the tab-separated NYC check-in file.
/// Every record's constraint is the hour window around its check-in and every
/// item row is the union of its windows, so c^T f_i = 5 for all records.
Dataset load_foursquare(const std::string& path, const FoursquareSubset& subset = {},
                        const TimeBucketScheme& scheme = {});

/// MovieLens bit layout: thriller, horror, neither.
inline constexpr std::uint32_t kThrillerBit = 0;
inline constexpr std::uint32_t kHorrorBit = 1;
inline constexpr std::uint32_t kOtherBit = 2;
inline constexpr std::size_t kMovieLensDim = 3;
inline constexpr std::size_t kMovieLensGenres = 19;
inline constexpr std::size_t kHorrorGenre = 11;
inline constexpr std::size_t kThrillerGenre = 16;
/// Kids are users strictly younger than this.
inline constexpr double kKidAge = 14.0;

/// Loads u.data / u.item / u.user from `dir`. Ratings are min-max normalized
/// to [0,1]; each record's constraint is its movie's bit row and its
/// descriptor is the user's age / 100.
Dataset load_movielens(const std::string& dir);

struct FoldingOptions {
  /// Share of adults with horror ratings who keep only their horror ratings.
  double horror_user_fraction = 0.5;
  /// Share of retained ratings held out for testing.
  double test_fraction = 0.2;
  /// Kid negatives per test positive.
  std::size_t kid_negative_ratio = 1;
  std::uint64_t seed = 0;
};

struct FoldingSplit {
  InteractionTensor train;
  std::vector<LabeledRecord> horror_test;
  std::vector<LabeledRecord> thriller_test;
  std::vector<std::uint32_t> horror_users;
};

/// Train set in which horror ratings come only from users with no retained
/// non-horror rating; test sets pair held-out adult ratings (positive) with
/// kid x movie pairs (negative, target -1).
FoldingSplit build_folding_split(const Dataset& movielens, const FoldingOptions& options);

struct LowOverlapConfig {
  std::size_t m = 11655;
  std::size_t n = 2564;
  std::size_t d = 363;
  double overlap_prob = 0.05;
  /// Distinct constraints in the catalog.
  std::size_t catalog_size = 200;
  std::size_t max_constraint_bits = 4;
  std::size_t brand_clusters = 20;
  std::size_t latent_dim = 8;
  double sessions_per_user = 3.0;
  std::size_t items_per_session = 4;
  double noise = 0.3;
  double context_effect = 0.8;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const LowOverlapConfig& c);
LowOverlapConfig low_overlap_config_from_json(const nlohmann::json& j);

struct LowOverlapDataset {
  Dataset dataset;
  std::vector<ConstraintVector> catalog;
  RowMatrix true_user;
  RowMatrix true_item;
  /// Per-bit multiplicative effects (k x d).
  RowMatrix true_context;
};

/// Binary click data over brand-filter constraints whose distinct pairs
/// overlap with probability overlap_prob. Throws ConfigError when the catalog
/// cannot be built for the requested d.
LowOverlapDataset synth_low_overlap(const LowOverlapConfig& config);

/// Fraction of distinct catalog pairs that share a bit, over `samples` draws.
double sampled_overlap_rate(const std::vector<ConstraintVector>& catalog, std::size_t samples,
                            std::uint64_t seed);

struct FoursquareSimConfig {
  std::size_t users = 300;
  std::size_t venues = 1100;
  double checkins_per_user = 60.0;
  std::size_t latent_dim = 8;
  /// Softmax sharpness of venue choice.
  double choice_temperature = 3.0;
  /// Standard deviation of venue popularity logits.
  double popularity_spread = 1.0;
  /// Lower end of the per-kind chance of being open in a meal slot.
  double min_open_rate = 0.05;
  std::uint64_t seed = 0;
};

/// Writes a check-in file in the NYC Foursquare layout (8 tab-separated
/// columns) from a generative model in which meal time reshapes taste.
void simulate_foursquare_file(const std::string& path, const FoursquareSimConfig& config);

struct MovieLensSimConfig {
  std::size_t users = 943;
  std::size_t movies = 1682;
  std::size_t min_ratings = 20;
  double mean_extra_ratings = 80.0;
  double kid_fraction = 0.06;
  std::size_t latent_dim = 8;
  std::uint64_t seed = 0;
};

/// Writes u.data, u.item and u.user in the MovieLens 100K layout.
void simulate_movielens_files(const std::string& dir, const MovieLensSimConfig& config);

}  // namespace cmf
