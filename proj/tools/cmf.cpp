// Command-line front end: ingest, simulate, train, evaluate, experiment, report.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cmf/errors.hpp"
#include "cmf/evaluation.hpp"
#include "cmf/experiment.hpp"
#include "cmf/ingestion.hpp"
#include "cmf/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Accepts inline JSON or a path to a JSON file.
json read_json_arg(const std::string& text) {
  if (text.empty()) return json::object();
  if (!text.empty() && (text.front() == '{' || text.front() == '[')) return json::parse(text);
  std::ifstream in(text);
  if (!in) throw cmf::DataError("cannot open " + text);
  return json::parse(in);
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

std::vector<cmf::SliceDef> parse_slices(const std::string& arg) {
  if (arg.empty() || arg == "none") return {};
  if (arg == "time") return cmf::standard_time_slices();
  if (arg == "synthetic") return {cmf::category_slice("multi_brand"), cmf::category_slice("feature_similarity")};
  if (arg == "movielens") return {cmf::category_slice("horror"), cmf::category_slice("thriller")};
  std::vector<cmf::SliceDef> out;
  for (const auto& s : read_json_arg(arg)) {
    const auto type = s.at("type").get<std::string>();
    const auto name = s.at("name").get<std::string>();
    if (type == "time") {
      out.push_back(cmf::time_window_slice(name, s.at("start_minute"), s.at("end_minute")));
    } else if (type == "category") {
      out.push_back(cmf::category_slice(s.value("category", name)));
      out.back().name = name;
    } else {
      throw cmf::ConfigError("unknown slice type '" + type + "'");
    }
  }
  return out;
}

int run_ingest(const std::string& dataset, const std::string& input, const std::string& out,
               const std::string& subset) {
  cmf::Dataset ds;
  if (dataset == "foursquare") {
    ds = cmf::load_foursquare(input, cmf::foursquare_subset_from_json(read_json_arg(subset)));
  } else if (dataset == "movielens") {
    ds = cmf::load_movielens(input);
  } else if (dataset == "synthetic") {
    auto cfg = cmf::low_overlap_config_from_json(read_json_arg(input));
    ds = cmf::synth_low_overlap(cfg).dataset;
  } else {
    throw cmf::ConfigError("unknown dataset '" + dataset + "'");
  }
  cmf::save_dataset(out, ds);
  std::cout << json{{"dataset", dataset},
                    {"out", out},
                    {"m", ds.data.num_users()},
                    {"n", ds.data.num_items()},
                    {"d", ds.data.dim()},
                    {"records", ds.data.size()},
                    {"hash", cmf::content_hash(ds.data, ds.features)},
                    {"stats", ds.manifest.stats}}
                   .dump()
            << '\n';
  return 0;
}

int run_simulate(const std::string& dataset, const std::string& out, const std::string& config) {
  const json cfg = read_json_arg(config);
  if (dataset == "foursquare") {
    cmf::FoursquareSimConfig c;
    c.users = cfg.value("users", c.users);
    c.venues = cfg.value("venues", c.venues);
    c.checkins_per_user = cfg.value("checkins_per_user", c.checkins_per_user);
    c.latent_dim = cfg.value("latent_dim", c.latent_dim);
    c.choice_temperature = cfg.value("choice_temperature", c.choice_temperature);
    c.popularity_spread = cfg.value("popularity_spread", c.popularity_spread);
    c.min_open_rate = cfg.value("min_open_rate", c.min_open_rate);
    c.seed = cfg.value("seed", c.seed);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    cmf::simulate_foursquare_file(out, c);
  } else if (dataset == "movielens") {
    cmf::MovieLensSimConfig c;
    c.users = cfg.value("users", c.users);
    c.movies = cfg.value("movies", c.movies);
    c.min_ratings = cfg.value("min_ratings", c.min_ratings);
    c.mean_extra_ratings = cfg.value("mean_extra_ratings", c.mean_extra_ratings);
    c.kid_fraction = cfg.value("kid_fraction", c.kid_fraction);
    c.latent_dim = cfg.value("latent_dim", c.latent_dim);
    c.seed = cfg.value("seed", c.seed);
    cmf::simulate_movielens_files(out, c);
  } else {
    throw cmf::ConfigError("simulate supports foursquare and movielens");
  }
  std::cout << json{{"dataset", dataset}, {"out", out}}.dump() << '\n';
  return 0;
}

int run_train(const std::string& spec_path, const std::string& out) {
  const json spec = read_json_arg(spec_path);
  const auto ds = cmf::load_dataset(spec.at("data_dir").get<std::string>());
  cmf::TrainConfig cfg = cmf::train_config_from_json(spec.value("train", json::object()));
  cmf::InteractionTensor data = ds.data;
  if (spec.contains("train_negatives")) {
    cmf::NegativeSamplingReport nr;
    data = cmf::sample_training_negatives(
        ds.data, cmf::negative_strategy_from_string(spec.at("train_negatives").get<std::string>()),
        spec.value("negative_ratio", std::size_t{1}), cfg.seed, &nr);
    for (const auto& w : nr.warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
  }
  cmf::SideFeatures side{cmf::RowMatrix(ds.data.num_users(), 0), cmf::RowMatrix(ds.data.num_items(), 0)};
  cmf::Model model = cmf::initialize_model(cfg.model, ds.data.num_users(), ds.data.num_items(),
                                           ds.data.dim(), ds.features, side, cfg.seed);
  const auto trace = cmf::train(model, data, cfg);
  fs::create_directories(out);
  cmf::save_model(model, (fs::path(out) / "model.json").string());
  std::ofstream trace_out(fs::path(out) / "trace.csv");
  trace.write_csv(trace_out);
  std::cout << json{{"model", (fs::path(out) / "model.json").string()},
                    {"final_loss", trace.iteration_loss.empty() ? 0.0 : trace.iteration_loss.back()}}
                   .dump()
            << '\n';
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& data, const std::string& slices,
                 const std::string& out) {
  const cmf::Model model = cmf::load_model(model_path);
  std::vector<cmf::LabeledRecord> records;
  std::string dataset = "cli";
  if (fs::is_directory(data)) {
    const auto ds = cmf::load_dataset(data);
    dataset = ds.manifest.dataset;
    for (const auto& r : ds.data.records()) records.push_back({r, r.reward > 0.5, -1, ""});
  } else {
    std::ifstream in(data);
    if (!in) throw cmf::DataError("cannot open " + data);
    records = cmf::read_labeled_jsonl(in, model.dim());
  }
  const auto pairs = cmf::score_records(model, records);
  const auto rows = cmf::evaluate_slices(pairs, parse_slices(slices), dataset,
                                         cmf::to_string(model.variant), 0, 0);
  if (out.empty() || out == "-") {
    cmf::write_metrics_csv(std::cout, rows);
  } else {
    std::ofstream o(out);
    if (!o) throw cmf::DataError("cannot write " + out);
    cmf::write_metrics_csv(o, rows);
  }
  return 0;
}

int run_experiment_cmd(const std::string& spec_path, const std::string& out) {
  const auto spec = cmf::experiment_spec_from_json(read_json_arg(spec_path));
  const auto report = cmf::run_experiment(spec, out);
  std::cout << json{{"out", out},
                    {"metrics_rows", report.metrics.size()},
                    {"failures", report.failures.size()},
                    {"partial", report.partial()}}
                   .dump()
            << '\n';
  return report.metrics.empty() ? 3 : 0;
}

int run_report(const std::string& in, const std::string& format) {
  const auto report = cmf::load_report(in);
  if (format == "json") {
    std::cout << cmf::report_json(report).dump(2) << '\n';
  } else if (format == "csv") {
    std::cout << cmf::comparison_csv(cmf::compare_models(report));
  } else {
    throw cmf::ConfigError("unknown report format '" + format + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained matrix factorization toolkit"};
  app.require_subcommand(1);

  std::string dataset, input, out, subset, spec, model, data, slices, in, format = "csv", config;

  auto* ingest = app.add_subcommand("ingest", "Parse a dataset into the canonical format");
  ingest->add_option("--dataset", dataset, "foursquare | movielens | synthetic")->required();
  ingest->add_option("--input", input, "Source file/dir (synthetic: generator config JSON)");
  ingest->add_option("--out", out, "Output dataset directory")->required();
  ingest->add_option("--subset", subset, "Foursquare subset filter (JSON or file)");

  auto* simulate = app.add_subcommand("simulate", "Write simulated raw files in a public layout");
  simulate->add_option("--dataset", dataset, "foursquare | movielens")->required();
  simulate->add_option("--out", out, "Output file (foursquare) or directory (movielens)")->required();
  simulate->add_option("--config", config, "Simulator config (JSON or file)");

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--spec", spec, "Training spec JSON")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score a labeled set and write sliced AUCs");
  evaluate->add_option("--model", model, "Model JSON")->required();
  evaluate->add_option("--data", data, "Labeled JSONL file or dataset directory")->required();
  evaluate->add_option("--slices", slices, "time | synthetic | movielens | none | slice JSON");
  evaluate->add_option("--out", out, "Metrics CSV (default stdout)");

  auto* experiment = app.add_subcommand("experiment", "Run a multi-seed sweep");
  experiment->add_option("--spec", spec, "Experiment spec JSON")->required();
  experiment->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Summarize an experiment directory");
  report->add_option("--in", in, "Experiment output directory")->required();
  report->add_option("--format", format, "csv | json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*ingest) return run_ingest(dataset, input, out, subset);
    if (*simulate) return run_simulate(dataset, out, config);
    if (*train) return run_train(spec, out);
    if (*evaluate) return run_evaluate(model, data, slices, out);
    if (*experiment) return run_experiment_cmd(spec, out);
    if (*report) return run_report(in, format);
  } catch (const cmf::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const json::exception& e) {
    print_error("config_error", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("error", e.what());
    return 1;
  }
  return 0;
}
