#include "cmf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "cmf/errors.hpp"

namespace cmf {

using nlohmann::json;

double auc(std::span<const ScoredPair> pairs) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (const auto& p : pairs) {
    if (!std::isfinite(p.score)) throw MetricError("AUC input contains a non-finite score");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pairs[a].score < pairs[b].score; });
  // Twice the positive rank sum, with tied groups sharing their mid-rank.
  std::uint64_t twice_rank_sum = 0;
  std::uint64_t positives = 0;
  std::size_t pos = 0;
  while (pos < order.size()) {
    std::size_t end = pos;
    std::uint64_t group_pos = 0;
    while (end < order.size() && pairs[order[end]].score == pairs[order[pos]].score) {
      group_pos += pairs[order[end]].positive ? 1 : 0;
      ++end;
    }
    // Ranks pos+1 .. end; twice the mid-rank is pos+1+end.
    twice_rank_sum += group_pos * (pos + 1 + end);
    positives += group_pos;
    pos = end;
  }
  const std::uint64_t negatives = pairs.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("AUC is undefined without both positive and negative examples");
  }
  const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

double sliced_auc(std::span<const ScoredPair> pairs, const SlicePredicate& predicate,
                  const std::string& slice_name) {
  std::vector<ScoredPair> subset;
  for (const auto& p : pairs) {
    if (predicate(p)) subset.push_back(p);
  }
  try {
    return auc(subset);
  } catch (const MetricError&) {
    throw MetricError("slice '" + slice_name + "' is empty or single-class (" +
                      std::to_string(subset.size()) + " pairs)");
  }
}

SliceDef time_window_slice(const std::string& name, int start_minute, int end_minute,
                           int bucket_minutes) {
  return {name, [=](const ScoredPair& p) {
            if (p.context < 0) return false;
            const int minute = p.context * bucket_minutes;
            return minute >= start_minute && minute < end_minute;
          }};
}

std::vector<SliceDef> standard_time_slices() {
  return {time_window_slice("08-09", 8 * 60, 9 * 60), time_window_slice("12-13", 12 * 60, 13 * 60),
          time_window_slice("22-23", 22 * 60, 23 * 60)};
}

SliceDef category_slice(const std::string& category) {
  return {category, [category](const ScoredPair& p) { return p.category == category; }};
}

std::vector<LabeledRecord> make_test_negatives_timebucket(const std::vector<LabeledRecord>& positives,
                                                          const InteractionTensor& observations,
                                                          std::size_t ratio, std::uint64_t seed,
                                                          std::vector<std::size_t>* skipped) {
  const auto user_bits = user_observed_bits(observations);
  const auto item_bits = feature_map_from_observations(observations);
  std::map<ConstraintVector, std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> eligible;
  std::mt19937_64 rng(seed);
  std::vector<LabeledRecord> out;
  out.reserve(positives.size() * ratio);
  for (std::size_t p = 0; p < positives.size(); ++p) {
    const auto& pos = positives[p];
    const auto& c = pos.record.constraint;
    auto it = eligible.find(c);
    if (it == eligible.end()) {
      std::vector<std::uint32_t> users;
      std::vector<std::uint32_t> items;
      for (std::size_t u = 0; u < observations.num_users(); ++u) {
        if (overlap(c, user_bits[u]) == 0) users.push_back(static_cast<std::uint32_t>(u));
      }
      for (std::size_t i = 0; i < observations.num_items(); ++i) {
        if (overlap(c, item_bits.row(i)) == 0) items.push_back(static_cast<std::uint32_t>(i));
      }
      it = eligible.emplace(c, std::pair{std::move(users), std::move(items)}).first;
    }
    const auto& [users, items] = it->second;
    if (ratio > 0 && (users.empty() || items.empty())) {
      if (skipped) {
        skipped->push_back(p);
        continue;
      }
      throw DataError("no eligible test negative for constraint " + to_string(c.bits()) + ": " +
                      std::to_string(users.size()) + " users and " + std::to_string(items.size()) +
                      " items unobserved under it");
    }
    for (std::size_t q = 0; q < ratio; ++q) {
      std::uniform_int_distribution<std::size_t> pu(0, users.size() - 1);
      std::uniform_int_distribution<std::size_t> pi(0, items.size() - 1);
      LabeledRecord neg;
      neg.record = Interaction{users[pu(rng)], items[pi(rng)], c, 0.0, 1.0, pos.record.descriptors};
      neg.positive = false;
      neg.context = pos.context;
      neg.category = pos.category;
      out.push_back(std::move(neg));
    }
  }
  return out;
}

std::vector<ScoredPair> score_records(const Model& model, std::span<const LabeledRecord> records) {
  std::vector<ScoredPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({model.score(r.record), r.positive, r.context, r.category});
  }
  return out;
}

SeedSummary folding_report(std::span<const double> per_seed_auc) {
  if (per_seed_auc.size() < 2) throw ConfigError("a seed summary needs at least two seeds");
  SeedSummary s;
  s.values.assign(per_seed_auc.begin(), per_seed_auc.end());
  const double n = static_cast<double>(s.values.size());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  double ss = 0.0;
  std::size_t low = 0;
  for (double v : s.values) {
    ss += (v - s.mean) * (v - s.mean);
    if (v <= 0.5) ++low;
  }
  s.stddev = std::sqrt(ss / (n - 1.0));
  s.fraction_low = static_cast<double>(low) / n;
  return s;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "dataset,model,seed,slice,auc,n_pos,n_neg\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : rows) {
    line.str("");
    line << r.dataset << ',' << r.model << ',' << r.seed << ',' << r.slice << ',' << r.auc << ','
         << r.n_pos << ',' << r.n_neg << '\n';
    out << line.str();
  }
}

void write_curves_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "dataset,model,seed,iteration,slice,auc,n_pos,n_neg\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : rows) {
    line.str("");
    line << r.dataset << ',' << r.model << ',' << r.seed << ',' << r.iteration << ',' << r.slice
         << ',' << r.auc << ',' << r.n_pos << ',' << r.n_neg << '\n';
    out << line.str();
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(in, line);
  const bool with_iteration = line.find(",iteration,") != std::string::npos;
  const std::size_t width = with_iteration ? 8 : 7;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != width) throw DataError("malformed metrics row: " + line);
    std::size_t c = 0;
    MetricRow r;
    r.dataset = cells[c++];
    r.model = cells[c++];
    r.seed = std::stoull(cells[c++]);
    if (with_iteration) r.iteration = std::stoull(cells[c++]);
    r.slice = cells[c++];
    r.auc = std::stod(cells[c++]);
    r.n_pos = std::stoull(cells[c++]);
    r.n_neg = std::stoull(cells[c++]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricRow> evaluate_slices(const std::vector<ScoredPair>& pairs,
                                       const std::vector<SliceDef>& slices,
                                       const std::string& dataset, const std::string& model,
                                       std::uint64_t seed, std::size_t iteration) {
  std::vector<MetricRow> rows;
  auto add = [&](const std::string& name, const SlicePredicate& pred, bool required) {
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    for (const auto& p : pairs) {
      if (!pred(p)) continue;
      (p.positive ? n_pos : n_neg)++;
    }
    if (!required && (n_pos == 0 || n_neg == 0)) return;
    rows.push_back({dataset, model, seed, iteration, name, sliced_auc(pairs, pred, name), n_pos, n_neg});
  };
  add("global", [](const ScoredPair&) { return true; }, true);
  for (const auto& s : slices) add(s.name, s.predicate, false);
  return rows;
}

void write_labeled_jsonl(std::ostream& out, std::span<const LabeledRecord> records) {
  for (const auto& r : records) {
    json j{{"user", r.record.user},
           {"item", r.record.item},
           {"constraint_bits", r.record.constraint.active()},
           {"reward", r.record.reward},
           {"weight", r.record.weight},
           {"label", r.positive ? 1 : 0},
           {"context", r.context}};
    if (!r.record.descriptors.empty()) j["descriptors"] = r.record.descriptors;
    if (!r.category.empty()) j["category"] = r.category;
    out << j.dump() << '\n';
  }
}

std::vector<LabeledRecord> read_labeled_jsonl(std::istream& in, std::size_t dim) {
  std::vector<LabeledRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    LabeledRecord r;
    r.record.user = j.at("user").get<std::uint32_t>();
    r.record.item = j.at("item").get<std::uint32_t>();
    r.record.constraint = ConstraintVector(dim, j.at("constraint_bits").get<std::vector<std::uint32_t>>());
    r.record.reward = j.value("reward", 0.0);
    r.record.weight = j.value("weight", 1.0);
    r.record.descriptors = j.value("descriptors", std::vector<double>{});
    r.positive = j.at("label").get<int>() == 1;
    r.context = j.value("context", -1);
    r.category = j.value("category", std::string());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cmf
