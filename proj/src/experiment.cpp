#include "cmf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cmf/errors.hpp"

namespace cmf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kDatasets = {"foursquare", "movielens", "synthetic"};
constexpr const char* kEnlarged = "MF+data-enlargement";

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string file_safe(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::optional<WarmStart> default_warm_start(const std::string& dataset, Variant v) {
  if (v != Variant::kDcMf) return WarmStart::kNone;
  if (dataset == "foursquare") return WarmStart::kFeatureOverlap;
  if (dataset == "synthetic") return WarmStart::kCooccurrence;
  return WarmStart::kNone;
}

// Per-user holdout: round(fraction * n) records of each user, keeping one in train.
std::pair<InteractionTensor, std::vector<std::size_t>> holdout_split(const InteractionTensor& data,
                                                                     double fraction,
                                                                     std::mt19937_64& rng) {
  InteractionTensor train(data.num_users(), data.num_items(), data.dim());
  std::vector<char> is_test(data.size(), 0);
  for (auto idx : data.index_by_user()) {
    if (idx.size() < 2) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    n_test = std::min(n_test, idx.size() - 1);
    for (std::size_t q = 0; q < n_test; ++q) is_test[idx[q]] = 1;
  }
  std::vector<std::size_t> test;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (is_test[r]) {
      test.push_back(r);
    } else {
      train.add(data[r]);
    }
  }
  return {std::move(train), std::move(test)};
}

struct SeedData {
  InteractionTensor train;
  std::vector<LabeledRecord> test;
  FeatureMap features;
  std::vector<SliceDef> slices;
  std::size_t dropped_positives = 0;
};

SeedData prepare_seed(const ExperimentSpec& spec, const Dataset& ds, std::uint64_t seed) {
  SeedData sd;
  std::mt19937_64 rng(seed * 2654435761ULL + 11);
  if (spec.dataset == "movielens") {
    FoldingOptions fo = spec.folding;
    fo.seed = seed;
    auto split = build_folding_split(ds, fo);
    sd.train = std::move(split.train);
    sd.test = std::move(split.horror_test);
    sd.test.insert(sd.test.end(), split.thriller_test.begin(), split.thriller_test.end());
    sd.features = ds.features;
    sd.slices = {category_slice("horror"), category_slice("thriller")};
    return sd;
  }

  auto [train, test_idx] = holdout_split(ds.data, spec.split.test_fraction, rng);
  sd.train = std::move(train);
  if (spec.dataset == "foursquare") {
    const TimeBucketScheme scheme;
    std::vector<LabeledRecord> positives;
    for (auto r : test_idx) {
      positives.push_back({ds.data[r], true, scheme.center(ds.data[r].constraint), ""});
    }
    std::vector<std::size_t> skipped;
    auto negatives = make_test_negatives_timebucket(positives, ds.data, spec.split.test_negative_ratio,
                                                    seed * 31 + 7, &skipped);
    sd.dropped_positives = skipped.size();
    for (auto it = skipped.rbegin(); it != skipped.rend(); ++it) {
      positives.erase(positives.begin() + static_cast<std::ptrdiff_t>(*it));
    }
    sd.test = std::move(positives);
    sd.test.insert(sd.test.end(), negatives.begin(), negatives.end());
    sd.features = feature_map_from_observations(sd.train);
    sd.slices = standard_time_slices();
    return sd;
  }

  // Synthetic: held-out clicks and non-clicks, tagged by constraint shape.
  const auto stats = build_cooccurrence(sd.train);
  auto co_occurs = [&](std::uint32_t bit) {
    for (std::size_t b = 0; b < stats.dim(); ++b) {
      if (b != bit && stats.count(bit, b) > 0) return true;
    }
    return false;
  };
  for (auto r : test_idx) {
    const auto& rec = ds.data[r];
    std::string tag;
    if (rec.constraint.l1_norm() >= 2) {
      tag = "multi_brand";
    } else if (co_occurs(rec.constraint.active().front())) {
      tag = "feature_similarity";
    }
    sd.test.push_back({rec, rec.reward > 0.5, -1, tag});
  }
  sd.features = ds.features;
  sd.slices = {category_slice("multi_brand"), category_slice("feature_similarity")};
  return sd;
}

SideFeatures side_features(const ExperimentSpec& spec, const Dataset& ds, Variant v) {
  SideFeatures side;
  side.user = RowMatrix(ds.data.num_users(), 0);
  side.item = RowMatrix(ds.data.num_items(), 0);
  if (spec.dataset != "movielens" || !uses_towers(v)) return side;
  // Age enters NC-NN-MF only through the transform.
  if (v == Variant::kNnMf) {
    side.user = RowMatrix(ds.data.num_users(), 1);
    for (std::size_t u = 0; u < ds.data.num_users(); ++u) side.user(u, 0) = ds.user_age[u] / 100.0;
  }
  side.item = RowMatrix(ds.data.num_items(), 2);
  for (std::size_t i = 0; i < ds.data.num_items(); ++i) {
    side.item(i, 0) = ds.features.row(i).test(kThrillerBit) ? 1.0 : 0.0;
    side.item(i, 1) = ds.features.row(i).test(kHorrorBit) ? 1.0 : 0.0;
  }
  return side;
}

json summary_json(const SeedSummary& s) {
  return json{{"mean", s.mean}, {"stddev", s.stddev}, {"fraction_low", s.fraction_low}, {"values", s.values}};
}

}  // namespace

ModelEntry model_entry_from_json(const json& j) {
  ModelEntry e;
  if (j.is_string()) {
    e.name = j.get<std::string>();
  } else {
    e.name = j.at("name").get<std::string>();
    e.overrides = j.value("overrides", json::object());
    if (j.contains("train_negatives")) {
      e.train_negatives = negative_strategy_from_string(j.at("train_negatives").get<std::string>());
    }
    if (j.contains("warm_start")) e.warm_start = warm_start_from_string(j.at("warm_start").get<std::string>());
  }
  if (e.name == kEnlarged) {
    e.variant = Variant::kMF;
    if (!e.train_negatives) e.train_negatives = NegativeStrategy::kTimeBucket;
  } else {
    const std::string variant = j.is_object() ? j.value("variant", e.name) : e.name;
    e.variant = variant_from_string(variant);
  }
  return e;
}

json to_json(const ModelEntry& e) {
  json j{{"name", e.name}, {"variant", to_string(e.variant)}, {"overrides", e.overrides}};
  if (e.train_negatives) j["train_negatives"] = to_string(*e.train_negatives);
  if (e.warm_start) j["warm_start"] = to_string(*e.warm_start);
  return j;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
  ExperimentSpec s;
  try {
    s.name = j.value("name", s.name);
    s.dataset = j.at("dataset").get<std::string>();
    s.data_dir = j.value("data_dir", std::string());
    if (j.contains("synthetic")) s.synthetic = low_overlap_config_from_json(j.at("synthetic"));
    for (const auto& m : j.at("models")) s.models.push_back(model_entry_from_json(m));
    s.seeds = j.value("seeds", s.seeds);
    s.train = j.value("train", json::object());
    if (j.contains("split")) {
      const auto& sp = j.at("split");
      s.split.test_fraction = sp.value("test_fraction", s.split.test_fraction);
      s.split.test_negative_ratio = sp.value("test_negative_ratio", s.split.test_negative_ratio);
      s.split.train_negative_ratio = sp.value("train_negative_ratio", s.split.train_negative_ratio);
      if (sp.contains("train_negatives")) {
        s.split.train_negatives = negative_strategy_from_string(sp.at("train_negatives").get<std::string>());
      }
    }
    if (j.contains("folding")) {
      const auto& f = j.at("folding");
      s.folding.horror_user_fraction = f.value("horror_user_fraction", s.folding.horror_user_fraction);
      s.folding.test_fraction = f.value("test_fraction", s.folding.test_fraction);
      s.folding.kid_negative_ratio = f.value("kid_negative_ratio", s.folding.kid_negative_ratio);
    }
    s.evaluate_every_iteration = j.value("evaluate_every_iteration", s.evaluate_every_iteration);
    s.save_models = j.value("save_models", s.save_models);
    s.rare_slices = j.value("rare_slices", s.rare_slices);
    s.popular_slices = j.value("popular_slices", s.popular_slices);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment spec: ") + e.what());
  }
  if (!kDatasets.count(s.dataset)) throw ConfigError("unknown dataset '" + s.dataset + "'");
  if (s.models.empty()) throw ConfigError("experiment lists no models");
  if (s.seeds.empty()) throw ConfigError("experiment lists no seeds");
  if (s.dataset == "foursquare" && s.rare_slices.empty() && s.popular_slices.empty()) {
    s.rare_slices = {"08-09", "12-13"};
    s.popular_slices = {"22-23"};
  }
  std::set<std::string> names;
  for (const auto& m : s.models) {
    if (!names.insert(m.name).second) throw ConfigError("duplicate model '" + m.name + "'");
    if (m.name == kEnlarged && s.dataset != "foursquare") {
      throw ConfigError(std::string(kEnlarged) + " needs the positives-only foursquare regime");
    }
    if (m.warm_start && *m.warm_start != WarmStart::kNone && m.variant != Variant::kDcMf) {
      throw ConfigError("model '" + m.name + "': warm starts apply to DC-MF only");
    }
    if (s.dataset == "movielens" && m.train_negatives) {
      throw ConfigError("model '" + m.name + "': movielens ratings take no sampled negatives");
    }
    resolve_train_config(s, m, s.seeds.front());
  }
  if (s.dataset != "synthetic" && s.synthetic) throw ConfigError("'synthetic' block needs dataset synthetic");
  if (s.data_dir.empty() && !s.synthetic) throw ConfigError("spec needs data_dir or a synthetic block");
  return s;
}

json to_json(const ExperimentSpec& s) {
  json models = json::array();
  for (const auto& m : s.models) models.push_back(to_json(m));
  json j{{"name", s.name},
         {"dataset", s.dataset},
         {"data_dir", s.data_dir},
         {"models", models},
         {"seeds", s.seeds},
         {"train", s.train},
         {"split",
          {{"test_fraction", s.split.test_fraction},
           {"test_negative_ratio", s.split.test_negative_ratio},
           {"train_negative_ratio", s.split.train_negative_ratio},
           {"train_negatives", to_string(s.split.train_negatives)}}},
         {"folding",
          {{"horror_user_fraction", s.folding.horror_user_fraction},
           {"test_fraction", s.folding.test_fraction},
           {"kid_negative_ratio", s.folding.kid_negative_ratio}}},
         {"evaluate_every_iteration", s.evaluate_every_iteration},
         {"save_models", s.save_models},
         {"rare_slices", s.rare_slices},
         {"popular_slices", s.popular_slices}};
  if (s.synthetic) j["synthetic"] = to_json(*s.synthetic);
  return j;
}

TrainConfig resolve_train_config(const ExperimentSpec& spec, const ModelEntry& entry,
                                 std::uint64_t seed) {
  json merged = spec.train;
  merged.merge_patch(entry.overrides);
  json model = merged.value("model", json::object());
  if (merged.contains("k")) model["k"] = merged.at("k");
  merged.erase("k");
  merged.erase("variant");
  model["variant"] = to_string(entry.variant);
  if (spec.dataset == "movielens" && uses_transform_net(entry.variant)) {
    if (!model.contains("g_bits")) model["g_bits"] = {kThrillerBit, kHorrorBit};
    if (!model.contains("num_descriptors")) model["num_descriptors"] = 1;
  }
  merged["model"] = model;
  TrainConfig cfg = train_config_from_json(merged);
  cfg.seed = seed;
  if (entry.warm_start) {
    cfg.warm_start = *entry.warm_start;
  } else if (!merged.contains("warm_start")) {
    cfg.warm_start = *default_warm_start(spec.dataset, entry.variant);
  }
  if (cfg.warm_start != WarmStart::kNone && entry.variant != Variant::kDcMf) cfg.warm_start = WarmStart::kNone;
  return cfg;
}

SeedSummary summarize_seeds(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("no values to summarize");
  if (values.size() >= 2) return folding_report(values);
  SeedSummary s;
  s.values = values;
  s.mean = values.front();
  s.fraction_low = values.front() <= 0.5 ? 1.0 : 0.0;
  return s;
}

std::map<std::string, std::map<std::string, SeedSummary>> summarize_metrics(const std::vector<MetricRow>& rows) {
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  for (const auto& r : rows) grouped[r.model][r.slice].push_back(r.auc);
  std::map<std::string, std::map<std::string, SeedSummary>> out;
  for (const auto& [model, slices] : grouped) {
    for (const auto& [slice, values] : slices) out[model][slice] = summarize_seeds(values);
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const Dataset& ds, const std::string& out_dir) {
  if (ds.manifest.dataset != spec.dataset) {
    throw ConfigError("spec expects " + spec.dataset + " data, got " + ds.manifest.dataset);
  }
  const fs::path root(out_dir);
  fs::create_directories(root);

  ExperimentReport report;
  report.name = spec.name;
  report.dataset = spec.dataset;
  report.config = to_json(spec);
  report.data_hash = content_hash(ds.data, ds.features);
  report.inputs_hash = fnv_hex(report.data_hash + "\n" + report.config.dump());
  report.rare_slices = spec.rare_slices;
  report.popular_slices = spec.popular_slices;
  for (const auto& m : spec.models) report.model_order.push_back(m.name);

  for (std::uint64_t seed : spec.seeds) {
    const fs::path seed_dir = root / "seeds" / std::to_string(seed);
    fs::create_directories(seed_dir);
    SeedData sd;
    try {
      sd = prepare_seed(spec, ds, seed);
    } catch (const Error& e) {
      for (const auto& m : spec.models) report.failures.push_back({m.name, seed, e.kind(), e.what()});
      continue;
    }
    report.dropped_test_positives[seed] = sd.dropped_positives;
    {
      auto out = open_output(seed_dir / "train.jsonl");
      write_records_jsonl(out, sd.train);
      auto test = open_output(seed_dir / "test.jsonl");
      write_labeled_jsonl(test, sd.test);
    }
    std::map<NegativeStrategy, InteractionTensor> enlarged;

    for (const auto& entry : spec.models) {
      std::vector<MetricRow> curve;
      try {
        const TrainConfig cfg = resolve_train_config(spec, entry, seed);
        const InteractionTensor* data = &sd.train;
        std::optional<NegativeStrategy> strategy = entry.train_negatives;
        if (!strategy && spec.dataset == "foursquare") strategy = spec.split.train_negatives;
        if (strategy && spec.split.train_negative_ratio > 0) {
          auto it = enlarged.find(*strategy);
          if (it == enlarged.end()) {
            NegativeSamplingReport nr;
            auto with_neg = sample_training_negatives(sd.train, *strategy, spec.split.train_negative_ratio,
                                                      seed * 31 + 3, &nr);
            auto out = open_output(seed_dir / ("train_negatives_" + to_string(*strategy) + ".jsonl"));
            write_records_jsonl(out, with_neg);
            it = enlarged.emplace(*strategy, std::move(with_neg)).first;
          }
          data = &it->second;
        }
        Model model = initialize_model(cfg.model, ds.data.num_users(), ds.data.num_items(), ds.data.dim(),
                                       sd.features, side_features(spec, ds, entry.variant), seed);
        auto evaluate = [&](std::size_t iteration, const Model& m) {
          const auto pairs = score_records(m, sd.test);
          auto rows = evaluate_slices(pairs, sd.slices, spec.dataset, entry.name, seed, iteration);
          curve.insert(curve.end(), rows.begin(), rows.end());
        };
        IterationCallback cb;
        if (spec.evaluate_every_iteration) {
          cb = [&](std::size_t it, const Model& m) {
            if (it < cfg.iterations) evaluate(it, m);
          };
        }
        const TrainTrace trace = train(model, *data, cfg, cb);
        evaluate(cfg.iterations, model);
        if (!model.all_finite()) throw NumericError("trained model has non-finite parameters");
        if (cfg.warm_start != WarmStart::kNone) {
          report.warm_starts.push_back({entry.name, seed, trace.warm_start_steps,
                                        trace.warm_start_objective_before, trace.warm_start_objective_after});
        }
        if (spec.save_models) {
          fs::create_directories(root / "models");
          save_model(model, (root / "models" / (file_safe(entry.name) + "_seed" + std::to_string(seed) + ".json")).string());
        }
      } catch (const Error& e) {
        report.failures.push_back({entry.name, seed, e.kind(), e.what()});
        continue;
      } catch (const std::exception& e) {
        report.failures.push_back({entry.name, seed, "error", e.what()});
        continue;
      }
      for (const auto& row : curve) {
        report.curves.push_back(row);
        if (row.iteration == curve.back().iteration) report.metrics.push_back(row);
      }
    }
  }

  report.summaries = summarize_metrics(report.metrics);
  {
    auto out = open_output(root / "metrics.csv");
    write_metrics_csv(out, report.metrics);
  }
  {
    auto out = open_output(root / "curves.csv");
    write_curves_csv(out, report.curves);
  }
  {
    auto out = open_output(root / "report.json");
    out << report_json(report).dump(2) << '\n';
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::string& out_dir) {
  if (spec.synthetic) {
    return run_experiment(spec, synth_low_overlap(*spec.synthetic).dataset, out_dir);
  }
  return run_experiment(spec, load_dataset(spec.data_dir), out_dir);
}

ComparisonTable compare_models(const ExperimentReport& report) {
  if (report.summaries.size() < 2) throw ConfigError("comparison needs at least two models with results");
  ComparisonTable table;
  std::set<std::string> seen;
  table.slice_order.push_back("global");
  seen.insert("global");
  for (const auto& r : report.metrics) {
    if (seen.insert(r.slice).second) table.slice_order.push_back(r.slice);
  }
  std::vector<std::string> order = report.model_order;
  for (const auto& [model, _] : report.summaries) {
    if (std::find(order.begin(), order.end(), model) == order.end()) order.push_back(model);
  }
  for (const auto& model : order) {
    auto it = report.summaries.find(model);
    if (it == report.summaries.end()) continue;
    ComparisonRow row;
    row.model = model;
    for (const auto& [slice, s] : it->second) {
      row.slices[slice] = {s.mean, s.stddev};
      if (slice == "global") row.seeds = s.values.size();
    }
    auto mean_of = [&](const std::vector<std::string>& names) -> std::optional<double> {
      double sum = 0.0;
      for (const auto& n : names) {
        auto f = row.slices.find(n);
        if (f == row.slices.end()) return std::nullopt;
        sum += f->second.first;
      }
      return sum / static_cast<double>(names.size());
    };
    if (!report.rare_slices.empty() && !report.popular_slices.empty()) {
      auto rare = mean_of(report.rare_slices);
      auto popular = mean_of(report.popular_slices);
      if (rare && popular) row.rare_minus_popular = *rare - *popular;
    }
    table.rows.push_back(std::move(row));
  }
  auto global = [](const ComparisonRow& r) {
    auto f = r.slices.find("global");
    return f == r.slices.end() ? -1.0 : f->second.first;
  };
  std::stable_sort(table.rows.begin(), table.rows.end(), [&](const auto& a, const auto& b) {
    return global(a) > global(b);
  });
  for (std::size_t i = 0; i < table.rows.size();) {
    std::size_t j = i + 1;
    while (j < table.rows.size() && global(table.rows[j]) == global(table.rows[i])) ++j;
    if (j - i > 1) {
      std::vector<std::string> group;
      for (std::size_t q = i; q < j; ++q) group.push_back(table.rows[q].model);
      table.ties.push_back(std::move(group));
    }
    i = j;
  }
  return table;
}

json to_json(const ComparisonTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json slices = json::object();
    for (const auto& [slice, ms] : r.slices) slices[slice] = {{"mean", ms.first}, {"stddev", ms.second}};
    json row{{"model", r.model}, {"seeds", r.seeds}, {"slices", slices}};
    if (r.rare_minus_popular) row["rare_minus_popular"] = *r.rare_minus_popular;
    rows.push_back(std::move(row));
  }
  return json{{"rows", rows}, {"ties", t.ties}, {"slice_order", t.slice_order}};
}

std::string comparison_csv(const ComparisonTable& t) {
  std::ostringstream out;
  out.precision(17);
  out << "rank,model,seeds";
  for (const auto& s : t.slice_order) out << ',' << s << "_mean," << s << "_std";
  out << ",rare_minus_popular,tied_with\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out << (i + 1) << ',' << r.model << ',' << r.seeds;
    for (const auto& s : t.slice_order) {
      auto f = r.slices.find(s);
      if (f == r.slices.end()) {
        out << ",,";
      } else {
        out << ',' << f->second.first << ',' << f->second.second;
      }
    }
    out << ',';
    if (r.rare_minus_popular) out << *r.rare_minus_popular;
    out << ',';
    std::string tied;
    for (const auto& group : t.ties) {
      if (std::find(group.begin(), group.end(), r.model) == group.end()) continue;
      for (const auto& other : group) {
        if (other != r.model) tied += (tied.empty() ? "" : ";") + other;
      }
    }
    out << tied << '\n';
  }
  return out.str();
}

json report_json(const ExperimentReport& r) {
  json summaries = json::object();
  for (const auto& [model, slices] : r.summaries) {
    for (const auto& [slice, s] : slices) summaries[model][slice] = summary_json(s);
  }
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"model", f.model}, {"seed", f.seed}, {"kind", f.kind}, {"message", f.message}});
  }
  json warm = json::array();
  for (const auto& w : r.warm_starts) {
    warm.push_back({{"model", w.model},
                    {"seed", w.seed},
                    {"steps", w.steps},
                    {"objective_before", w.objective_before},
                    {"objective_after", w.objective_after}});
  }
  json j{{"name", r.name},
         {"dataset", r.dataset},
         {"data_hash", r.data_hash},
         {"inputs_hash", r.inputs_hash},
         {"config", r.config},
         {"models", r.model_order},
         {"rare_slices", r.rare_slices},
         {"popular_slices", r.popular_slices},
         {"summaries", summaries},
         {"failures", failures},
         {"partial", r.partial()},
         {"warm_starts", warm}};
  json dropped = json::object();
  for (const auto& [seed, n] : r.dropped_test_positives) dropped[std::to_string(seed)] = n;
  j["dropped_test_positives"] = dropped;
  if (r.summaries.size() >= 2) j["comparison"] = to_json(compare_models(r));
  return j;
}

ExperimentReport load_report(const std::string& dir) {
  const fs::path root(dir);
  ExperimentReport r;
  {
    std::ifstream in(root / "metrics.csv");
    if (!in) throw DataError("no metrics.csv in " + dir);
    r.metrics = read_metrics_csv(in);
  }
  std::ifstream in(root / "report.json");
  if (in) {
    const json j = json::parse(in);
    r.name = j.value("name", std::string());
    r.dataset = j.value("dataset", std::string());
    r.data_hash = j.value("data_hash", std::string());
    r.inputs_hash = j.value("inputs_hash", std::string());
    r.config = j.value("config", json::object());
    r.model_order = j.value("models", std::vector<std::string>{});
    r.rare_slices = j.value("rare_slices", std::vector<std::string>{});
    r.popular_slices = j.value("popular_slices", std::vector<std::string>{});
    const json failures = j.value("failures", json::array());
    for (const auto& f : failures) {
      r.failures.push_back({f.at("model"), f.at("seed"), f.at("kind"), f.at("message")});
    }
    const json dropped = j.value("dropped_test_positives", json::object());
    for (const auto& [seed, n] : dropped.items()) {
      r.dropped_test_positives[std::stoull(seed)] = n.get<std::size_t>();
    }
    const json warm = j.value("warm_starts", json::array());
    for (const auto& w : warm) {
      r.warm_starts.push_back({w.at("model"), w.at("seed"), w.at("steps"), w.at("objective_before"),
                               w.at("objective_after")});
    }
  }
  {
    std::ifstream curves(root / "curves.csv");
    if (curves) r.curves = read_metrics_csv(curves);
  }
  if (r.model_order.empty()) {
    for (const auto& m : r.metrics) {
      if (std::find(r.model_order.begin(), r.model_order.end(), m.model) == r.model_order.end()) {
        r.model_order.push_back(m.model);
      }
    }
  }
  r.summaries = summarize_metrics(r.metrics);
  return r;
}

}  // namespace cmf
