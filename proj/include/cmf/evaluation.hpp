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
#include "cmf/model.hpp"

namespace cmf {

struct ScoredPair {
  double score = 0.0;
  bool positive = false;
  /// Context tag used by slices (e.g. the center time bucket); -1 when untagged.
  std::int32_t context = -1;
  std::string category;
};

/// P(score(pos) > score(neg)) + 0.5 P(tie), from mid-ranks. Exact: the
/// statistic is accumulated in integers before the single final division.
/// Throws MetricError when either class is missing.
double auc(std::span<const ScoredPair> pairs);

using SlicePredicate = std::function<bool(const ScoredPair&)>;

/// AUC over the pairs accepted by `predicate`; errors name the slice.
double sliced_auc(std::span<const ScoredPair> pairs, const SlicePredicate& predicate,
                  const std::string& slice_name = "slice");

struct SliceDef {
  std::string name;
  SlicePredicate predicate;
};

/// Pairs whose context tag (center bucket) falls in [start_minute, end_minute).
SliceDef time_window_slice(const std::string& name, int start_minute, int end_minute,
                           int bucket_minutes = 12);

/// The three check-in windows: [8am,9am], [12pm,1pm] and [10pm,11pm].
std::vector<SliceDef> standard_time_slices();

SliceDef category_slice(const std::string& category);

/// An evaluation example: a (user, item, constraint) triple with a binary label.
struct LabeledRecord {
  Interaction record;
  bool positive = false;
  std::int32_t context = -1;
  std::string category;
};

/// For every test positive, `ratio` negatives keeping its constraint c and
/// pairing a random item never observed under c with a random user never
/// observed on any bit of c, where "observed" is read from `observations`.
/// Throws DataError (with the offending constraint) when no such pair exists,
/// unless `skipped` is given: such positives are then listed there instead.
std::vector<LabeledRecord> make_test_negatives_timebucket(const std::vector<LabeledRecord>& positives,
                                                          const InteractionTensor& observations,
                                                          std::size_t ratio, std::uint64_t seed,
                                                          std::vector<std::size_t>* skipped = nullptr);

std::vector<ScoredPair> score_records(const Model& model, std::span<const LabeledRecord> records);

struct SeedSummary {
  std::vector<double> values;
  double mean = 0.0;
  /// Sample standard deviation (n - 1).
  double stddev = 0.0;
  /// Fraction of seeds at AUC <= 0.5.
  double fraction_low = 0.0;
};

/// Requires at least two seeds.
SeedSummary folding_report(std::span<const double> per_seed_auc);

struct MetricRow {
  std::string dataset;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  std::string slice;
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Columns: dataset, model, seed, slice, auc, n_pos, n_neg.
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
/// Same columns plus the training iteration.
void write_curves_csv(std::ostream& out, std::span<const MetricRow> rows);
/// Reads either layout.
std::vector<MetricRow> read_metrics_csv(std::istream& in);

/// "global" comes first and throws MetricError when single-class; other slices need both classes or are skipped.
std::vector<MetricRow> evaluate_slices(const std::vector<ScoredPair>& pairs,
                                       const std::vector<SliceDef>& slices,
                                       const std::string& dataset, const std::string& model,
                                       std::uint64_t seed, std::size_t iteration);

/// JSON-lines persistence of labeled evaluation sets.
void write_labeled_jsonl(std::ostream& out, std::span<const LabeledRecord> records);
std::vector<LabeledRecord> read_labeled_jsonl(std::istream& in, std::size_t dim);

}  // namespace cmf
