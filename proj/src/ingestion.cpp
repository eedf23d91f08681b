#include "cmf/ingestion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cmf/errors.hpp"

namespace cmf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool parse_int(const std::string& text, long long& value) {
  if (text.empty()) return false;
  std::size_t pos = 0;
  try {
    value = std::stoll(text, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == text.size();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

// Remaps first-seen original ids to contiguous ones.
class IdRemap {
 public:
  std::uint32_t get(const std::string& original) {
    auto [it, inserted] = index_.try_emplace(original, static_cast<std::uint32_t>(ids_.size()));
    if (inserted) ids_.push_back(original);
    return it->second;
  }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> ids_;
};

std::size_t find_index(const std::vector<std::string>& ids, const std::string& original,
                       const char* what) {
  auto it = std::find(ids.begin(), ids.end(), original);
  if (it == ids.end()) throw DataError(std::string("unknown ") + what + " id " + original);
  return static_cast<std::size_t>(it - ids.begin());
}

void append_double(std::string& buf, double v) {
  char tmp[32];
  std::snprintf(tmp, sizeof tmp, "%.17g", v);
  buf += tmp;
}

}  // namespace

int TimeBucketScheme::bucket_of(int minute_of_day) const {
  if (minute_of_day < 0 || minute_of_day >= 24 * 60) {
    throw DataError("minute of day out of range: " + std::to_string(minute_of_day));
  }
  return minute_of_day / bucket_minutes;
}

ConstraintVector TimeBucketScheme::window(int minute_of_day) const {
  if (bucket_minutes <= 0 || buckets_per_window <= 0 || buckets_per_window % 2 == 0 ||
      (24 * 60) % bucket_minutes != 0) {
    throw ConfigError("time buckets must tile the day with an odd window");
  }
  const int day = buckets_per_day();
  const int center = bucket_of(minute_of_day);
  const int half = buckets_per_window / 2;
  std::vector<std::uint32_t> bits;
  for (int off = -half; off <= half; ++off) {
    bits.push_back(static_cast<std::uint32_t>(((center + off) % day + day) % day));
  }
  return ConstraintVector(static_cast<std::size_t>(day), std::move(bits));
}

int TimeBucketScheme::center(const ConstraintVector& c) const {
  const int day = buckets_per_day();
  const int half = buckets_per_window / 2;
  for (std::uint32_t b : c.active()) {
    bool all = true;
    for (int off = -half; off <= half && all; ++off) {
      all = c.test(static_cast<std::size_t>(((static_cast<int>(b) + off) % day + day) % day));
    }
    if (all && static_cast<int>(c.l1_norm()) == buckets_per_window) return static_cast<int>(b);
  }
  throw DataError("constraint is not a time window: " + to_string(c.bits()));
}

std::size_t DatasetManifest::user_index(const std::string& original) const {
  return find_index(user_ids, original, "user");
}

std::size_t DatasetManifest::item_index(const std::string& original) const {
  return find_index(item_ids, original, "item");
}

json to_json(const DatasetManifest& m) {
  return json{{"dataset", m.dataset}, {"m", m.m},         {"n", m.n},
              {"d", m.d},             {"user_ids", m.user_ids}, {"item_ids", m.item_ids},
              {"splits", m.splits},   {"stats", m.stats}, {"notes", m.notes},
              {"hash", m.hash}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.dataset = j.at("dataset").get<std::string>();
    m.m = j.at("m").get<std::size_t>();
    m.n = j.at("n").get<std::size_t>();
    m.d = j.at("d").get<std::size_t>();
    m.user_ids = j.at("user_ids").get<std::vector<std::string>>();
    m.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    if (j.contains("splits")) m.splits = j.at("splits").get<std::map<std::string, std::string>>();
    if (j.contains("stats")) m.stats = j.at("stats").get<std::map<std::string, double>>();
    if (j.contains("notes")) m.notes = j.at("notes").get<std::vector<std::string>>();
    m.hash = j.value("hash", std::string());
  } catch (const json::exception& e) {
    throw DataError(std::string("bad manifest: ") + e.what());
  }
  if (m.user_ids.size() != m.m || m.item_ids.size() != m.n) {
    throw DataError("manifest id tables do not match m / n");
  }
  return m;
}

std::string content_hash(const InteractionTensor& data, const FeatureMap& features) {
  std::string buf;
  buf.reserve(data.size() * 48);
  for (const auto& r : data.records()) {
    buf += std::to_string(r.user);
    buf += ' ';
    buf += std::to_string(r.item);
    for (auto b : r.constraint.active()) {
      buf += ',';
      buf += std::to_string(b);
    }
    buf += ' ';
    append_double(buf, r.reward);
    buf += ' ';
    append_double(buf, r.weight);
    for (double x : r.descriptors) {
      buf += ';';
      append_double(buf, x);
    }
    buf += '\n';
  }
  buf += "features " + std::to_string(features.dim()) + '\n';
  for (const auto& row : features.rows()) buf += to_string(row) + '\n';

  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : buf) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_records_jsonl(std::ostream& out, const InteractionTensor& data) {
  for (const auto& r : data.records()) {
    json j{{"user", r.user},
           {"item", r.item},
           {"constraint_bits", r.constraint.active()},
           {"reward", r.reward},
           {"weight", r.weight}};
    if (!r.descriptors.empty()) j["descriptors"] = r.descriptors;
    out << j.dump() << '\n';
  }
}

InteractionTensor read_records_jsonl(std::istream& in, std::size_t m, std::size_t n, std::size_t d) {
  InteractionTensor data(m, n, d);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Interaction r;
      r.user = j.at("user").get<std::uint32_t>();
      r.item = j.at("item").get<std::uint32_t>();
      r.constraint = ConstraintVector(d, j.at("constraint_bits").get<std::vector<std::uint32_t>>());
      r.reward = j.at("reward").get<double>();
      r.weight = j.value("weight", 1.0);
      if (j.contains("descriptors")) r.descriptors = j.at("descriptors").get<std::vector<double>>();
      data.add(std::move(r));
    } catch (const json::exception& e) {
      throw DataError("records line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return data;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  DatasetManifest manifest = ds.manifest;
  manifest.m = ds.data.num_users();
  manifest.n = ds.data.num_items();
  manifest.d = ds.data.dim();
  manifest.hash = content_hash(ds.data, ds.features);
  if (!manifest.splits.count("all")) manifest.splits["all"] = "records.jsonl";
  {
    auto out = open_output((fs::path(dir) / "manifest.json").string());
    out << to_json(manifest).dump(2) << '\n';
  }
  {
    auto out = open_output((fs::path(dir) / manifest.splits.at("all")).string());
    write_records_jsonl(out, ds.data);
  }
  {
    json rows = json::array();
    for (const auto& row : ds.features.rows()) rows.push_back(row.active());
    auto out = open_output((fs::path(dir) / "features.json").string());
    out << json{{"dim", ds.features.dim()}, {"rows", rows}}.dump() << '\n';
  }
  if (!ds.user_age.empty()) {
    auto out = open_output((fs::path(dir) / "users.json").string());
    out << json{{"age", ds.user_age}}.dump() << '\n';
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  {
    auto in = open_input((fs::path(dir) / "manifest.json").string());
    try {
      ds.manifest = manifest_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw DataError(std::string("bad manifest: ") + e.what());
    }
  }
  const auto& mf = ds.manifest;
  const std::string records = mf.splits.count("all") ? mf.splits.at("all") : "records.jsonl";
  {
    auto in = open_input((fs::path(dir) / records).string());
    ds.data = read_records_jsonl(in, mf.m, mf.n, mf.d);
  }
  {
    auto in = open_input((fs::path(dir) / "features.json").string());
    try {
      const json j = json::parse(in);
      const auto dim = j.at("dim").get<std::size_t>();
      std::vector<BitSet> rows;
      for (const auto& r : j.at("rows")) rows.emplace_back(dim, r.get<std::vector<std::uint32_t>>());
      ds.features = FeatureMap(dim, std::move(rows));
    } catch (const json::exception& e) {
      throw DataError(std::string("bad features file: ") + e.what());
    }
  }
  const auto users = fs::path(dir) / "users.json";
  if (fs::exists(users)) {
    auto in = open_input(users.string());
    ds.user_age = json::parse(in).at("age").get<std::vector<double>>();
  }
  if (!mf.hash.empty() && content_hash(ds.data, ds.features) != mf.hash) {
    throw DataError("dataset in " + dir + " does not match its manifest hash");
  }
  return ds;
}

json to_json(const FoursquareSubset& s) {
  return json{{"category_filter", s.category_filter},
              {"min_user_checkins", s.min_user_checkins},
              {"min_venue_checkins", s.min_venue_checkins},
              {"max_users", s.max_users},
              {"max_venues", s.max_venues}};
}

FoursquareSubset foursquare_subset_from_json(const json& j) {
  FoursquareSubset s;
  s.category_filter = j.value("category_filter", s.category_filter);
  s.min_user_checkins = j.value("min_user_checkins", s.min_user_checkins);
  s.min_venue_checkins = j.value("min_venue_checkins", s.min_venue_checkins);
  s.max_users = j.value("max_users", s.max_users);
  s.max_venues = j.value("max_venues", s.max_venues);
  return s;
}

int local_minute_of_day(const std::string& utc_time, int offset_minutes) {
  static const std::array<const char*, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  std::istringstream in(utc_time);
  std::string dow, mon, clock, zone;
  int day = 0, year = 0;
  if (!(in >> dow >> mon >> day >> clock >> zone >> year)) {
    throw DataError("unparseable timestamp: '" + utc_time + "'");
  }
  std::string rest;
  if (in >> rest) throw DataError("unparseable timestamp: '" + utc_time + "'");
  if (std::find_if(kMonths.begin(), kMonths.end(), [&](const char* m) { return mon == m; }) ==
          kMonths.end() ||
      day < 1 || day > 31) {
    throw DataError("unparseable timestamp: '" + utc_time + "'");
  }
  int hh = 0, mm = 0, ss = 0;
  char c1 = 0, c2 = 0;
  std::istringstream cl(clock);
  if (!(cl >> hh >> c1 >> mm >> c2 >> ss) || c1 != ':' || c2 != ':' || hh < 0 || hh > 23 ||
      mm < 0 || mm > 59 || ss < 0 || ss > 60 || cl.peek() != std::char_traits<char>::eof()) {
    throw DataError("unparseable timestamp: '" + utc_time + "'");
  }
  long long zone_value = 0;
  if (zone.size() != 5 || (zone[0] != '+' && zone[0] != '-') ||
      !parse_int(zone.substr(1), zone_value)) {
    throw DataError("unparseable timestamp zone: '" + utc_time + "'");
  }
  const int zone_minutes =
      (zone[0] == '-' ? -1 : 1) * static_cast<int>(zone_value / 100 * 60 + zone_value % 100);
  const int utc_minute = hh * 60 + mm - zone_minutes;
  const int local = utc_minute + offset_minutes;
  return ((local % 1440) + 1440) % 1440;
}

Dataset load_foursquare(const std::string& path, const FoursquareSubset& subset,
                        const TimeBucketScheme& scheme) {
  if (scheme.bucket_minutes * scheme.buckets_per_window != 60) {
    throw ConfigError("a time window must cover one hour");
  }
  auto in = open_input(path);

  struct Row {
    std::string user, venue;
    int minute;
  };
  std::vector<Row> rows;
  std::size_t total = 0, malformed = 0, filtered = 0;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    ++total;
    const auto f = split(line, '\t');
    long long offset = 0;
    if (f.size() != 8 || f[0].empty() || f[1].empty() || !parse_int(f[6], offset)) {
      ++malformed;
      continue;
    }
    const int minute = local_minute_of_day(f[7], static_cast<int>(offset));
    if (!subset.category_filter.empty() && f[3].find(subset.category_filter) == std::string::npos) {
      ++filtered;
      continue;
    }
    rows.push_back({f[0], f[1], minute});
  }

  auto count_by = [&](auto key) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : rows) ++counts[key(r)];
    return counts;
  };
  auto user_key = [](const Row& r) -> const std::string& { return r.user; };
  auto venue_key = [](const Row& r) -> const std::string& { return r.venue; };

  auto apply_minimums = [&] {
    for (bool changed = true; changed;) {
      const auto uc = count_by(user_key);
      const auto vc = count_by(venue_key);
      const std::size_t before = rows.size();
      std::erase_if(rows, [&](const Row& r) {
        return uc.at(r.user) < subset.min_user_checkins || vc.at(r.venue) < subset.min_venue_checkins;
      });
      changed = rows.size() != before;
    }
  };
  auto cap = [&](std::size_t limit, auto key) {
    if (limit == 0) return;
    const auto counts = count_by(key);
    if (counts.size() <= limit) return;
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::set<std::string> keep;
    for (std::size_t i = 0; i < limit; ++i) keep.insert(ranked[i].first);
    std::erase_if(rows, [&](const Row& r) { return !keep.count(key(r)); });
  };

  apply_minimums();
  cap(subset.max_users, user_key);
  cap(subset.max_venues, venue_key);
  apply_minimums();
  if (rows.empty()) throw DataError("no check-ins left after subset filtering in " + path);

  IdRemap users, venues;
  for (const auto& r : rows) {
    users.get(r.user);
    venues.get(r.venue);
  }
  const auto d = static_cast<std::size_t>(scheme.buckets_per_day());
  Dataset ds;
  ds.data = InteractionTensor(users.ids().size(), venues.ids().size(), d);
  std::vector<BitSet> feature_rows(venues.ids().size(), BitSet(d, {}));
  std::set<int> buckets;
  for (const auto& r : rows) {
    Interaction rec;
    rec.user = users.get(r.user);
    rec.item = venues.get(r.venue);
    rec.constraint = scheme.window(r.minute);
    rec.reward = 1.0;
    feature_rows[rec.item] = feature_rows[rec.item] | rec.constraint.bits();
    buckets.insert(scheme.bucket_of(r.minute));
    ds.data.add(std::move(rec));
  }
  ds.features = FeatureMap(d, std::move(feature_rows));

  auto& mf = ds.manifest;
  mf.dataset = "foursquare";
  mf.user_ids = users.ids();
  mf.item_ids = venues.ids();
  mf.m = mf.user_ids.size();
  mf.n = mf.item_ids.size();
  mf.d = d;
  mf.stats = {{"rows_total", double(total)},
              {"rows_malformed", double(malformed)},
              {"rows_category_filtered", double(filtered)},
              {"records", double(ds.data.size())},
              {"users", double(mf.m)},
              {"items", double(mf.n)},
              {"observed_buckets", double(buckets.size())}};
  mf.notes.push_back("source: " + fs::path(path).filename().string());
  mf.notes.push_back("subset: " + to_json(subset).dump());
  mf.hash = content_hash(ds.data, ds.features);
  return ds;
}

Dataset load_movielens(const std::string& dir) {
  const fs::path root(dir);
  for (const char* name : {"u.data", "u.item", "u.user"}) {
    if (!fs::exists(root / name)) throw DataError("missing MovieLens file " + (root / name).string());
  }
  std::string line;

  IdRemap users;
  std::vector<double> ages;
  {
    auto in = open_input((root / "u.user").string());
    while (std::getline(in, line)) {
      strip_cr(line);
      if (line.empty()) continue;
      const auto f = split(line, '|');
      long long age = 0;
      if (f.size() < 2 || !parse_int(f[1], age) || age <= 0) {
        throw DataError("bad u.user row: " + line);
      }
      const auto id = users.get(f[0]);
      if (id != ages.size()) throw DataError("duplicate user id " + f[0]);
      ages.push_back(static_cast<double>(age));
    }
  }

  IdRemap movies;
  std::vector<BitSet> feature_rows;
  std::size_t horror = 0, thriller = 0;
  {
    auto in = open_input((root / "u.item").string());
    while (std::getline(in, line)) {
      strip_cr(line);
      if (line.empty()) continue;
      const auto f = split(line, '|');
      if (f.size() < 5 || f.size() - 5 != kMovieLensGenres) {
        throw DataError("u.item schema error: expected " + std::to_string(kMovieLensGenres) +
                        " genre flags, row has " + std::to_string(f.size() < 5 ? 0 : f.size() - 5));
      }
      auto flag = [&](std::size_t genre) { return f[5 + genre] == "1"; };
      const bool is_thriller = flag(kThrillerGenre);
      const bool is_horror = flag(kHorrorGenre);
      std::vector<std::uint32_t> bits;
      if (is_thriller) bits.push_back(kThrillerBit);
      if (is_horror) bits.push_back(kHorrorBit);
      if (bits.empty()) bits.push_back(kOtherBit);
      horror += is_horror;
      thriller += is_thriller;
      const auto id = movies.get(f[0]);
      if (id != feature_rows.size()) throw DataError("duplicate movie id " + f[0]);
      feature_rows.emplace_back(kMovieLensDim, std::move(bits));
    }
  }

  Dataset ds;
  ds.data = InteractionTensor(ages.size(), feature_rows.size(), kMovieLensDim);
  std::vector<std::size_t> per_user(ages.size(), 0);
  std::size_t malformed = 0;
  {
    auto in = open_input((root / "u.data").string());
    std::unordered_map<std::string, std::uint32_t> user_index, movie_index;
    for (std::uint32_t i = 0; i < users.ids().size(); ++i) user_index[users.ids()[i]] = i;
    for (std::uint32_t i = 0; i < movies.ids().size(); ++i) movie_index[movies.ids()[i]] = i;
    while (std::getline(in, line)) {
      strip_cr(line);
      if (line.empty()) continue;
      const auto f = split(line, '\t');
      long long rating = 0;
      if (f.size() != 4 || !parse_int(f[2], rating) || !user_index.count(f[0]) ||
          !movie_index.count(f[1])) {
        ++malformed;
        continue;
      }
      if (rating < 1 || rating > 5) throw DataError("rating out of range: " + line);
      Interaction rec;
      rec.user = user_index.at(f[0]);
      rec.item = movie_index.at(f[1]);
      rec.constraint = ConstraintVector(feature_rows[rec.item]);
      rec.reward = static_cast<double>(rating - 1) / 4.0;
      rec.descriptors = {ages[rec.user] / 100.0};
      ++per_user[rec.user];
      ds.data.add(std::move(rec));
    }
  }
  ds.features = FeatureMap(kMovieLensDim, std::move(feature_rows));
  ds.user_age = ages;

  auto& mf = ds.manifest;
  mf.dataset = "movielens";
  mf.user_ids = users.ids();
  mf.item_ids = movies.ids();
  mf.m = mf.user_ids.size();
  mf.n = mf.item_ids.size();
  mf.d = kMovieLensDim;
  const auto kids = std::count_if(ages.begin(), ages.end(), [](double a) { return a < kKidAge; });
  mf.stats = {{"records", double(ds.data.size())},
              {"rows_malformed", double(malformed)},
              {"users", double(mf.m)},
              {"items", double(mf.n)},
              {"horror_movies", double(horror)},
              {"thriller_movies", double(thriller)},
              {"kids", double(kids)},
              {"min_ratings_per_user",
               per_user.empty() ? 0.0 : double(*std::min_element(per_user.begin(), per_user.end()))}};
  mf.notes.push_back("source: " + root.string());
  mf.notes.push_back("bits: thriller, horror, other; descriptor: age / 100");
  mf.hash = content_hash(ds.data, ds.features);
  return ds;
}

FoldingSplit build_folding_split(const Dataset& ml, const FoldingOptions& options) {
  if (options.horror_user_fraction < 0.0 || options.horror_user_fraction > 1.0 ||
      options.test_fraction < 0.0 || options.test_fraction >= 1.0) {
    throw ConfigError("folding fractions out of range");
  }
  const auto& data = ml.data;
  if (data.dim() != kMovieLensDim || ml.user_age.size() != data.num_users()) {
    throw DataError("folding split needs MovieLens data with user ages");
  }
  const auto& features = ml.features;
  auto is_horror = [&](std::uint32_t item) { return features.row(item).test(kHorrorBit); };
  auto is_thriller = [&](std::uint32_t item) {
    return features.row(item).test(kThrillerBit) && !is_horror(item);
  };
  auto is_kid = [&](std::uint32_t user) { return ml.user_age[user] < kKidAge; };

  std::mt19937_64 rng(options.seed);
  const auto by_user = data.index_by_user();

  std::vector<std::uint32_t> candidates;
  for (std::uint32_t u = 0; u < data.num_users(); ++u) {
    if (is_kid(u)) continue;
    if (std::any_of(by_user[u].begin(), by_user[u].end(),
                    [&](std::size_t idx) { return is_horror(data[idx].item); })) {
      candidates.push_back(u);
    }
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto n_horror = static_cast<std::size_t>(
      std::llround(options.horror_user_fraction * static_cast<double>(candidates.size())));
  std::vector<char> horror_side(data.num_users(), 0);
  FoldingSplit out;
  for (std::size_t i = 0; i < n_horror; ++i) {
    horror_side[candidates[i]] = 1;
    out.horror_users.push_back(candidates[i]);
  }
  std::sort(out.horror_users.begin(), out.horror_users.end());

  out.train = InteractionTensor(data.num_users(), data.num_items(), data.dim());
  std::vector<LabeledRecord> horror_pos, thriller_pos;
  for (std::uint32_t u = 0; u < data.num_users(); ++u) {
    std::vector<std::size_t> kept, heldout_pool;
    for (std::size_t idx : by_user[u]) {
      const bool h = is_horror(data[idx].item);
      if (horror_side[u] ? !h : h) continue;
      kept.push_back(idx);
      const bool testable = horror_side[u] ? true : (!is_kid(u) && is_thriller(data[idx].item));
      if (testable) heldout_pool.push_back(idx);
    }
    // Bernoulli holdout; each user keeps at least one training rating.
    std::bernoulli_distribution held(options.test_fraction);
    std::set<std::size_t> test;
    for (std::size_t idx : heldout_pool) {
      if (held(rng) && test.size() + 1 < kept.size()) test.insert(idx);
    }
    for (std::size_t idx : kept) {
      if (!test.count(idx)) {
        out.train.add(data[idx]);
        continue;
      }
      LabeledRecord lr{data[idx], true, -1, horror_side[u] ? "horror" : "thriller"};
      (horror_side[u] ? horror_pos : thriller_pos).push_back(std::move(lr));
    }
  }

  std::vector<std::uint32_t> kids, horror_movies, thriller_movies;
  for (std::uint32_t u = 0; u < data.num_users(); ++u) {
    if (is_kid(u)) kids.push_back(u);
  }
  for (std::uint32_t i = 0; i < data.num_items(); ++i) {
    if (is_horror(i)) horror_movies.push_back(i);
    if (is_thriller(i)) thriller_movies.push_back(i);
  }
  if (kids.empty()) throw DataError("folding split needs at least one user younger than 14");

  auto with_kid_negatives = [&](std::vector<LabeledRecord> positives,
                                const std::vector<std::uint32_t>& movies, const std::string& category) {
    if (movies.empty()) throw DataError("no " + category + " movies for kid negatives");
    std::uniform_int_distribution<std::size_t> pick_kid(0, kids.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_movie(0, movies.size() - 1);
    const std::size_t n_pos = positives.size();
    for (std::size_t p = 0; p < n_pos; ++p) {
      for (std::size_t k = 0; k < options.kid_negative_ratio; ++k) {
        Interaction rec;
        rec.user = kids[pick_kid(rng)];
        rec.item = movies[pick_movie(rng)];
        rec.constraint = ConstraintVector(features.row(rec.item));
        rec.reward = 0.0;
        rec.descriptors = {ml.user_age[rec.user] / 100.0};
        positives.push_back({std::move(rec), false, -1, category});
      }
    }
    return positives;
  };
  out.horror_test = with_kid_negatives(std::move(horror_pos), horror_movies, "horror");
  out.thriller_test = with_kid_negatives(std::move(thriller_pos), thriller_movies, "thriller");
  return out;
}

}  // namespace cmf
