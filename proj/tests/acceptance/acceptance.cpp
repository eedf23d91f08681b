// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any fails.
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmf/errors.hpp"
#include "cmf/evaluation.hpp"
#include "cmf/experiment.hpp"
#include "cmf/ingestion.hpp"
#include "cmf/training.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cmf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

double pooled_se(const SeedSummary& a, const SeedSummary& b) {
  return std::sqrt(a.stddev * a.stddev / static_cast<double>(a.values.size()) +
                   b.stddev * b.stddev / static_cast<double>(b.values.size()));
}

const SeedSummary& summary(const ExperimentReport& r, const std::string& model, const std::string& slice) {
  const auto m = r.summaries.find(model);
  if (m == r.summaries.end()) throw StateError("no results for model " + model);
  const auto s = m->second.find(slice);
  if (s == m->second.end()) throw StateError("no results for " + model + " on slice " + slice);
  return s->second;
}

std::vector<std::uint64_t> seed_list(std::size_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t mismatches = 0, total_pairs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    const bool coarse = trial % 2 == 0;
    std::vector<ScoredPair> pairs(n);
    for (auto& p : pairs) {
      p.score = coarse ? std::floor(unit(rng) * 6.0) / 6.0 : unit(rng);
      p.positive = unit(rng) < 0.5;
    }
    pairs[0].positive = true;
    pairs[1].positive = false;
    total_pairs += n;
    if (auc(pairs) != oracle::pairwise_auc(pairs)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 100 instances (" +
                               std::to_string(total_pairs) + " pairs)"};
}

Outcome gradient_correctness() {
  double worst = 0.0;
  std::size_t probes = 0;
  const std::vector<Variant> nets{Variant::kNcMf, Variant::kNnMf, Variant::kNcNnMf};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = gradcheck::probe(nets[seed % nets.size()], 1000 + seed);
    worst = std::max(worst, r.max_relative_error);
    ++probes;
  }
  return {worst < 1e-5, std::to_string(probes) + " probes, max relative error " + fmt(worst * 1e9, 3) + "e-9"};
}

Outcome als_monotonicity() {
  std::size_t blocks = 0, violations = 0;
  double worst = 0.0;
  const std::vector<Variant> variants{Variant::kMF, Variant::kCamfCi, Variant::kWcMf, Variant::kDcMf};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto fx = fixtures::random_fixture(500 + seed, 30, 30, 6);
    const std::size_t k = 1 + seed % 8;
    for (auto v : variants) {
      TrainConfig cfg;
      cfg.model.variant = v;
      cfg.model.k = k;
      cfg.lambda = 0.05 + 0.1 * static_cast<double>(seed % 5);
      cfg.transform_lambda = 0.5;
      cfg.iterations = 5;
      cfg.steps_per_block = 5;
      cfg.cooccurrence_reg_strength = seed % 4 == 0 ? 0.3 : 0.0;
      auto model = fixtures::make_model(v, k, fx.data, fx.features, seed, 0.3);
      const auto trace = train(model, fx.data, cfg);
      for (const auto& row : trace.rows) {
        ++blocks;
        const double rise = row.loss_after - row.loss_before;
        worst = std::max(worst, rise);
        if (rise > 1e-10) ++violations;
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(blocks) +
                               " block updates (largest rise " + fmt(worst * 1e12, 3) + "e-12)"};
}

Outcome expressivity_nesting() {
  std::size_t failures = 0;
  double worst_gap = -1e300;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto fx = fixtures::random_fixture(900 + seed, 30, 30, 6);
    const std::size_t k = 1 + seed % 8;
    TrainConfig cfg;
    cfg.model.k = k;
    cfg.lambda = 0.2;
    cfg.transform_lambda = 0.5;
    cfg.iterations = 8;
    cfg.steps_per_block = 10;

    cfg.model.variant = Variant::kMF;
    auto mf = fixtures::make_model(Variant::kMF, k, fx.data, fx.features, seed);
    const double mf_loss = train(mf, fx.data, cfg).iteration_loss.back();

    cfg.model.variant = Variant::kWcMf;
    auto wc = fixtures::make_model(Variant::kWcMf, k, fx.data, fx.features, seed);
    wc.embedding = mf.embedding;
    const double wc_loss = train(wc, fx.data, cfg).iteration_loss.back();

    cfg.model.variant = Variant::kDcMf;
    auto dc = fixtures::make_model(Variant::kDcMf, k, fx.data, fx.features, seed);
    dc.embedding = wc.embedding;
    dc.diagonal = wc.weighted.as_diagonal(k);
    const double dc_loss = train(dc, fx.data, cfg).iteration_loss.back();

    worst_gap = std::max({worst_gap, dc_loss - wc_loss, wc_loss - mf_loss});
    if (dc_loss > wc_loss + 1e-8 || wc_loss > mf_loss + 1e-8) ++failures;
  }
  return {failures == 0, std::to_string(failures) + " of 20 fixtures out of order (largest step up " +
                             fmt(worst_gap, 10) + ")"};
}

// ---------------------------------------------------------------------------

struct FoursquareRun {
  Dataset data;
  ExperimentReport report;
  std::string source;
};

// Real files win when the environment points at them.
std::string env_path(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

FoursquareRun foursquare_run(const fs::path& work) {
  FoursquareRun out;
  fs::path raw = env_path("CMF_FOURSQUARE");
  fs::create_directories(work / "foursquare");
  if (raw.empty()) {
    FoursquareSimConfig sim;
    sim.seed = 11;
    raw = work / "foursquare" / "checkins.tsv";
    simulate_foursquare_file(raw.string(), sim);
    out.source = "simulated";
  } else {
    out.source = "real";
  }
  out.data = load_foursquare(raw.string());
  save_dataset((work / "foursquare" / "dataset").string(), out.data);
  const json spec{{"name", "foursquare"},
                  {"dataset", "foursquare"},
                  {"data_dir", (work / "foursquare" / "dataset").string()},
                  {"seeds", seed_list(10)},
                  {"models", {"MF", "CAMF-CI", "WC-MF", "DC-MF", "MF+data-enlargement"}},
                  {"train",
                   {{"k", 32},
                    {"lambda", 2.0},
                    {"transform_lambda", 5.0},
                    {"iterations", 10},
                    {"steps_per_block", 20},
                    {"model", {{"transform_init_noise", 0.3}}}}},
                  {"save_models", false},
                  {"evaluate_every_iteration", false}};
  out.report = run_experiment(experiment_spec_from_json(spec), out.data, (work / "foursquare" / "run").string());
  return out;
}

Outcome foursquare_ordering(const ExperimentReport& r) {
  if (r.partial()) return {false, "run has failed seeds: " + r.failures.front().message};
  const auto& dc = summary(r, "DC-MF", "global");
  const auto& camf = summary(r, "CAMF-CI", "global");
  const auto& mf = summary(r, "MF", "global");
  const double gap_camf = dc.mean - camf.mean, gap_mf = dc.mean - mf.mean;
  const double se_camf = pooled_se(dc, camf), se_mf = pooled_se(dc, mf);
  std::string detail = "DC-MF " + fmt(dc.mean) + " CAMF-CI " + fmt(camf.mean) + " MF " + fmt(mf.mean) +
                       " | gaps " + fmt(gap_camf) + " (se " + fmt(se_camf) + "), " + fmt(gap_mf) + " (se " +
                       fmt(se_mf) + ") over " + std::to_string(dc.values.size()) + " seeds";
  return {gap_camf > se_camf && gap_mf > se_mf, detail};
}

Outcome rare_context_effect(const ExperimentReport& r) {
  auto advantage = [&](const std::string& slice) {
    return summary(r, "DC-MF", slice).mean - summary(r, "CAMF-CI", slice).mean;
  };
  double rare = 0.0;
  for (const auto& s : r.rare_slices) rare += advantage(s);
  rare /= static_cast<double>(r.rare_slices.size());
  double popular = 0.0;
  for (const auto& s : r.popular_slices) popular += advantage(s);
  popular /= static_cast<double>(r.popular_slices.size());
  return {rare > popular,
          "DC-MF minus CAMF-CI: rare slices " + fmt(rare, 5) + ", popular slice " + fmt(popular, 5)};
}

Outcome foursquare_contract(const Dataset& ds) {
  std::size_t bad = 0;
  for (const auto& rec : ds.data.records()) bad += overlap(rec.constraint, ds.features.row(rec.item)) != 5;
  return {bad == 0, std::to_string(bad) + " of " + std::to_string(ds.data.size()) + " records break c^T f_i = 5"};
}

// ---------------------------------------------------------------------------

ExperimentReport low_overlap_run(const fs::path& work) {
  const json spec{{"name", "low_overlap"},
                  {"dataset", "synthetic"},
                  {"synthetic",
                   {{"m", 1500}, {"n", 600}, {"d", 120}, {"overlap_prob", 0.05}, {"catalog_size", 60}, {"seed", 7}}},
                  {"seeds", seed_list(10)},
                  {"models",
                   {"MF",
                    "CAMF-CI",
                    {{"name", "DC-MF"}, {"variant", "DC-MF"}, {"overrides", {{"cooccurrence_reg_strength", 1.0}}}}}},
                  {"train",
                   {{"k", 16},
                    {"lambda", 1.0},
                    {"transform_lambda", 1.0},
                    {"iterations", 8},
                    {"steps_per_block", 20},
                    {"model", {{"transform_init_noise", 0.1}}}}},
                  {"save_models", false},
                  {"evaluate_every_iteration", false}};
  return run_experiment(experiment_spec_from_json(spec), (work / "low_overlap").string());
}

Outcome low_overlap_tradeoff(const ExperimentReport& r) {
  if (r.partial()) return {false, "run has failed seeds: " + r.failures.front().message};
  const double dc_multi = summary(r, "DC-MF", "multi_brand").mean;
  const double camf_multi = summary(r, "CAMF-CI", "multi_brand").mean;
  const double dc_sim = summary(r, "DC-MF", "feature_similarity").mean;
  const double mf_sim = summary(r, "MF", "feature_similarity").mean;
  return {dc_multi >= camf_multi && dc_sim >= mf_sim,
          "multi_brand DC-MF " + fmt(dc_multi) + " vs CAMF-CI " + fmt(camf_multi) + "; feature_similarity DC-MF " +
              fmt(dc_sim, 5) + " vs MF " + fmt(mf_sim, 5)};
}

// ---------------------------------------------------------------------------

struct MovieLensRun {
  Dataset data;
  ExperimentReport report;
  std::string source;
};

MovieLensRun movielens_run(const fs::path& work) {
  MovieLensRun out;
  fs::path raw = env_path("CMF_MOVIELENS_DIR");
  if (raw.empty()) {
    MovieLensSimConfig sim;
    sim.seed = 5;
    raw = work / "movielens" / "raw";
    simulate_movielens_files(raw.string(), sim);
    out.source = "simulated";
  } else {
    out.source = "real";
  }
  out.data = load_movielens(raw.string());
  save_dataset((work / "movielens" / "dataset").string(), out.data);
  const json spec{{"name", "folding"},
                  {"dataset", "movielens"},
                  {"data_dir", (work / "movielens" / "dataset").string()},
                  {"seeds", seed_list(10)},
                  {"models", {"MF", "NC-MF"}},
                  {"train", {{"k", 16}, {"lambda", 0.1}, {"iterations", 20}, {"learning_rate", 0.1}}},
                  {"save_models", false},
                  {"evaluate_every_iteration", false}};
  out.report = run_experiment(experiment_spec_from_json(spec), out.data, (work / "movielens" / "run").string());
  return out;
}

Outcome folding_reduction(const ExperimentReport& r) {
  if (r.partial()) return {false, "run has failed seeds: " + r.failures.front().message};
  const auto& mf_h = summary(r, "MF", "horror");
  const auto& nc_h = summary(r, "NC-MF", "horror");
  const auto& mf_t = summary(r, "MF", "thriller");
  const auto& nc_t = summary(r, "NC-MF", "thriller");
  const bool pass = nc_h.fraction_low < mf_h.fraction_low && mf_t.mean > 0.5 && nc_t.mean > 0.5;
  return {pass, "horror AUC <= 0.5 in " + fmt(mf_h.fraction_low, 1) + " (MF) vs " + fmt(nc_h.fraction_low, 1) +
                    " (NC-MF) of seeds, horror means " + fmt(mf_h.mean) + " / " + fmt(nc_h.mean) +
                    "; thriller means " + fmt(mf_t.mean) + " / " + fmt(nc_t.mean)};
}

Outcome folding_contract(const Dataset& ml) {
  std::size_t clashes = 0, seeds = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FoldingOptions fo;
    fo.seed = seed;
    const auto split = build_folding_split(ml, fo);
    clashes += oracle::folding_clashes(split.train, ml.features).size();
    ++seeds;
  }
  return {clashes == 0, std::to_string(clashes) + " users rate both sides across " + std::to_string(seeds) + " splits"};
}

// ---------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  const json spec{{"name", "determinism"},
                  {"dataset", "synthetic"},
                  {"synthetic", {{"m", 300}, {"n", 120}, {"d", 60}, {"catalog_size", 30}, {"seed", 3}}},
                  {"seeds", {0, 1}},
                  {"models", {"MF", "CAMF-CI", "WC-MF", "DC-MF", "NC-MF", "NN-MF"}},
                  {"train", {{"k", 6}, {"iterations", 3}, {"steps_per_block", 5}, {"learning_rate", 0.05}}}};
  const auto parsed = experiment_spec_from_json(spec);
  run_experiment(parsed, (work / "determinism" / "a").string());
  run_experiment(parsed, (work / "determinism" / "b").string());
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "determinism" / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(entry.path(), work / "determinism" / "a");
    if (slurp(entry.path()) != slurp(work / "determinism" / "b" / rel)) ++differing;
  }
  return {files > 0 && differing == 0,
          std::to_string(differing) + " of " + std::to_string(files) + " output files differ between reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(work);
  fs::remove_all(root);
  fs::create_directories(root);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](std::initializer_list<int> ids) {
    if (selected.empty()) return true;
    for (int id : ids) {
      if (selected.count(id)) return true;
    }
    return false;
  };

  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << "  " << o.detail << "  ["
              << fmt(secs, 1) << " s]" << std::endl;
  };

  if (wanted({1})) report(1, "oracle-equivalence", oracle_equivalence);
  if (wanted({2})) report(2, "gradient-correctness", gradient_correctness);
  if (wanted({3})) report(3, "als-monotonicity", als_monotonicity);
  if (wanted({4})) report(4, "expressivity-nesting", expressivity_nesting);

  FoursquareRun fsq;
  bool have_fsq = false;
  if (wanted({5, 6, 10})) {
    try {
      fsq = foursquare_run(root);
      have_fsq = true;
    } catch (const std::exception& e) {
      std::cout << "foursquare run failed: " << e.what() << std::endl;
    }
  }
  auto need_fsq = [&]() {
    if (!have_fsq) throw StateError("foursquare run unavailable");
  };
  if (wanted({5})) report(5, "foursquare-ordering", [&] { need_fsq(); auto o = foursquare_ordering(fsq.report); o.detail += " [" + fsq.source + " data]"; return o; });
  if (wanted({6})) report(6, "rare-context-effect", [&] { need_fsq(); auto o = rare_context_effect(fsq.report); o.detail += " [" + fsq.source + " data]"; return o; });
  if (wanted({7})) report(7, "low-overlap-tradeoff", [&] { return low_overlap_tradeoff(low_overlap_run(root)); });

  MovieLensRun ml;
  bool have_ml = false;
  if (wanted({8, 10})) {
    try {
      ml = movielens_run(root);
      have_ml = true;
    } catch (const std::exception& e) {
      std::cout << "movielens run failed: " << e.what() << std::endl;
    }
  }
  if (wanted({8})) report(8, "folding-reduction", [&] {
    if (!have_ml) throw StateError("movielens run unavailable");
    auto o = folding_reduction(ml.report);
    o.detail += " [" + ml.source + " data]";
    return o;
  });
  if (wanted({9})) report(9, "determinism", [&] { return determinism(root); });
  if (wanted({10})) report(10, "data-contracts", [&] {
    need_fsq();
    if (!have_ml) throw StateError("movielens run unavailable");
    const auto a = foursquare_contract(fsq.data);
    const auto b = folding_contract(ml.data);
    return Outcome{a.pass && b.pass, a.detail + "; " + b.detail + " [" + fsq.source + " / " + ml.source + " data]"};
  });

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
