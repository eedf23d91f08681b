#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmf/evaluation.hpp"
#include "cmf/ingestion.hpp"
#include "cmf/training.hpp"

namespace cmf {

/// One model of a sweep. `name` is the label used in reports; "MF+data-enlargement"
/// is MF trained with time-bucket negatives.
struct ModelEntry {
  std::string name;
  Variant variant = Variant::kMF;
  /// Merged over the experiment's base training config.
  nlohmann::json overrides = nlohmann::json::object();
  std::optional<NegativeStrategy> train_negatives;
  std::optional<WarmStart> warm_start;
};

ModelEntry model_entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelEntry& e);

struct SplitOptions {
  /// Per-user share of records held out (Foursquare, synthetic).
  double test_fraction = 0.2;
  /// Time-bucket negatives per held-out positive (Foursquare).
  std::size_t test_negative_ratio = 1;
  /// Zero-reward records added per training positive (Foursquare).
  std::size_t train_negative_ratio = 1;
  NegativeStrategy train_negatives = NegativeStrategy::kUniform;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::string dataset = "synthetic";
  /// Ingested dataset directory; unused when `synthetic` is set.
  std::string data_dir;
  std::optional<LowOverlapConfig> synthetic;
  std::vector<ModelEntry> models;
  std::vector<std::uint64_t> seeds = {0};
  nlohmann::json train = nlohmann::json::object();
  SplitOptions split;
  FoldingOptions folding;
  bool evaluate_every_iteration = true;
  bool save_models = true;
  std::vector<std::string> rare_slices;
  std::vector<std::string> popular_slices;
};

/// Rejects unknown datasets / models and unsupported model-dataset pairs.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);

/// The training config a model entry runs with for `seed` on `dataset`.
TrainConfig resolve_train_config(const ExperimentSpec& spec, const ModelEntry& entry,
                                 std::uint64_t seed);

struct SeedFailure {
  std::string model;
  std::uint64_t seed = 0;
  std::string kind;
  std::string message;
};

struct WarmStartLog {
  std::string model;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

struct ExperimentReport {
  std::string name;
  std::string dataset;
  /// Metrics of the final iteration.
  std::vector<MetricRow> metrics;
  /// Metrics of every evaluated iteration.
  std::vector<MetricRow> curves;
  /// model -> slice -> summary over seeds.
  std::map<std::string, std::map<std::string, SeedSummary>> summaries;
  std::vector<std::string> model_order;
  std::vector<std::string> rare_slices;
  std::vector<std::string> popular_slices;
  std::vector<SeedFailure> failures;
  std::vector<WarmStartLog> warm_starts;
  /// seed -> held-out positives without any eligible time-bucket negative.
  std::map<std::uint64_t, std::size_t> dropped_test_positives;
  nlohmann::json config;
  std::string data_hash;
  std::string inputs_hash;

  bool partial() const { return !failures.empty(); }
};

/// Mean and sample std over per-seed values (std = 0 for a single seed).
SeedSummary summarize_seeds(const std::vector<double>& values);

/// Groups final metric rows by model and slice.
std::map<std::string, std::map<std::string, SeedSummary>> summarize_metrics(
    const std::vector<MetricRow>& rows);

/// Trains every (model, seed), evaluating after each iteration, and writes
/// metrics.csv, curves.csv, report.json and per-seed splits under `out_dir`.
/// A failing (model, seed) is recorded and the sweep continues.
ExperimentReport run_experiment(const ExperimentSpec& spec, const Dataset& dataset,
                                const std::string& out_dir);
/// Loads `spec.data_dir` or generates `spec.synthetic` first.
ExperimentReport run_experiment(const ExperimentSpec& spec, const std::string& out_dir);

struct ComparisonRow {
  std::string model;
  std::size_t seeds = 0;
  /// slice -> (mean, std)
  std::map<std::string, std::pair<double, double>> slices;
  /// Mean AUC over rare slices minus mean over popular ones (when both are set).
  std::optional<double> rare_minus_popular;
};

struct ComparisonTable {
  /// Sorted by mean global AUC, descending; equal means keep name order.
  std::vector<ComparisonRow> rows;
  /// Groups of models whose mean global AUC is identical.
  std::vector<std::vector<std::string>> ties;
  std::vector<std::string> slice_order;
};

/// Requires at least two models.
ComparisonTable compare_models(const ExperimentReport& report);

nlohmann::json to_json(const ComparisonTable& table);
std::string comparison_csv(const ComparisonTable& table);

nlohmann::json report_json(const ExperimentReport& report);
/// Rebuilds a report from a run directory (metrics.csv + report.json).
ExperimentReport load_report(const std::string& dir);

}  // namespace cmf
