#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "cmf/errors.hpp"
#include "cmf/ingestion.hpp"

namespace cmf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RowMatrix gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
  return m;
}

std::size_t poisson_at_least(double mean, std::size_t floor_value, std::mt19937_64& rng) {
  const double extra = std::max(0.0, mean - static_cast<double>(floor_value));
  if (extra == 0.0) return floor_value;
  std::poisson_distribution<std::size_t> dist(extra);
  return floor_value + dist(rng);
}

// Index drawn with probability proportional to exp(logits).
std::size_t sample_softmax(const std::vector<double>& logits, std::mt19937_64& rng) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp(logits[i] - top);
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  return dist(rng);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// Catalog of distinct constraints over d bits in which exactly `target` of the
// distinct pairs share a bit.
class CatalogBuilder {
 public:
  CatalogBuilder(const LowOverlapConfig& cfg, const std::vector<std::size_t>& cluster_of,
                 std::mt19937_64& rng)
      : cfg_(cfg), cluster_of_(cluster_of), rng_(rng), members_(cfg.d) {}

  std::vector<std::vector<std::uint32_t>> build() {
    const std::size_t L = cfg_.catalog_size;
    if (L > cfg_.d) {
      throw ConfigError("catalog of " + std::to_string(L) + " distinct constraints needs d >= " +
                        std::to_string(L));
    }
    seed_disjoint_blocks();
    const double pairs = 0.5 * static_cast<double>(L) * static_cast<double>(L - 1);
    const auto target = static_cast<std::size_t>(std::llround(cfg_.overlap_prob * pairs));
    overlapping_.assign(L, std::vector<char>(L, 0));
    grow_overlaps(target);
    for (auto& s : sets_) std::sort(s.begin(), s.end());
    return sets_;
  }

 private:
  void seed_disjoint_blocks() {
    const std::size_t L = cfg_.catalog_size;
    std::uniform_int_distribution<std::size_t> size_dist(2, std::max<std::size_t>(2, cfg_.max_constraint_bits));
    std::bernoulli_distribution singleton(0.5);
    std::vector<std::size_t> sizes(L);
    for (auto& s : sizes) s = (cfg_.max_constraint_bits <= 1 || singleton(rng_)) ? 1 : size_dist(rng_);
    std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    while (total > cfg_.d) {
      auto it = std::max_element(sizes.begin(), sizes.end());
      --*it;
      --total;
    }
    // Bits of one constraint come from the same cluster while that cluster lasts.
    std::vector<std::vector<std::uint32_t>> pool(cfg_.brand_clusters);
    for (std::uint32_t b = 0; b < cfg_.d; ++b) pool[cluster_of_[b]].push_back(b);
    for (auto& p : pool) std::shuffle(p.begin(), p.end(), rng_);
    std::uniform_int_distribution<std::size_t> pick_cluster(0, cfg_.brand_clusters - 1);
    sets_.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
      std::size_t g = pick_cluster(rng_);
      for (std::size_t tries = 0; pool[g].empty() && tries < cfg_.brand_clusters; ++tries) {
        g = (g + 1) % cfg_.brand_clusters;
      }
      for (std::size_t t = 0; t < sizes[l]; ++t) {
        std::size_t h = g;
        for (std::size_t tries = 0; pool[h].empty() && tries < cfg_.brand_clusters; ++tries) {
          h = (h + 1) % cfg_.brand_clusters;
        }
        const std::uint32_t b = pool[h].back();
        pool[h].pop_back();
        add(l, b);
      }
    }
  }

  void add(std::size_t l, std::uint32_t b) {
    sets_[l].push_back(b);
    members_[b].push_back(l);
  }

  std::size_t gain(std::size_t l, std::uint32_t b) const {
    std::size_t g = 0;
    for (std::size_t other : members_[b]) g += !overlapping_[l][other];
    return g;
  }

  bool contains(std::size_t l, std::uint32_t b) const {
    return std::find(sets_[l].begin(), sets_[l].end(), b) != sets_[l].end();
  }

  void grow_overlaps(std::size_t target) {
    const std::size_t L = sets_.size();
    const std::size_t cap = 2 * std::max<std::size_t>(1, cfg_.max_constraint_bits);
    std::uniform_int_distribution<std::size_t> pick(0, L - 1);
    std::size_t count = 0;
    const std::size_t max_attempts = 200 * (target + 1) + 10000;
    for (std::size_t attempt = 0; count < target; ++attempt) {
      if (attempt >= max_attempts) {
        throw ConfigError("overlap_prob " + std::to_string(cfg_.overlap_prob) +
                          " is infeasible for d=" + std::to_string(cfg_.d) + " with " +
                          std::to_string(L) + " constraints of at most " + std::to_string(cap) +
                          " bits");
      }
      const std::size_t l = pick(rng_);
      const std::size_t donor = pick(rng_);
      if (l == donor || sets_[l].size() >= cap) continue;
      const auto& dbits = sets_[donor];
      const std::uint32_t b = dbits[std::uniform_int_distribution<std::size_t>(0, dbits.size() - 1)(rng_)];
      if (contains(l, b)) continue;
      const std::size_t g = gain(l, b);
      if (g == 0 || count + g > target || would_duplicate(l, b)) continue;
      for (std::size_t other : members_[b]) {
        overlapping_[l][other] = overlapping_[other][l] = 1;
      }
      count += g;
      add(l, b);
    }
  }

  bool would_duplicate(std::size_t l, std::uint32_t b) const {
    auto grown = sets_[l];
    grown.push_back(b);
    std::sort(grown.begin(), grown.end());
    for (std::size_t o = 0; o < sets_.size(); ++o) {
      if (o == l || sets_[o].size() != grown.size()) continue;
      auto other = sets_[o];
      std::sort(other.begin(), other.end());
      if (other == grown) return true;
    }
    return false;
  }

  const LowOverlapConfig& cfg_;
  const std::vector<std::size_t>& cluster_of_;
  std::mt19937_64& rng_;
  std::vector<std::vector<std::uint32_t>> sets_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::vector<char>> overlapping_;
};

}  // namespace

json to_json(const LowOverlapConfig& c) {
  return json{{"m", c.m},
              {"n", c.n},
              {"d", c.d},
              {"overlap_prob", c.overlap_prob},
              {"catalog_size", c.catalog_size},
              {"max_constraint_bits", c.max_constraint_bits},
              {"brand_clusters", c.brand_clusters},
              {"latent_dim", c.latent_dim},
              {"sessions_per_user", c.sessions_per_user},
              {"items_per_session", c.items_per_session},
              {"noise", c.noise},
              {"context_effect", c.context_effect},
              {"seed", c.seed}};
}

LowOverlapConfig low_overlap_config_from_json(const json& j) {
  LowOverlapConfig c;
  c.m = j.value("m", c.m);
  c.n = j.value("n", c.n);
  c.d = j.value("d", c.d);
  c.overlap_prob = j.value("overlap_prob", c.overlap_prob);
  c.catalog_size = j.value("catalog_size", c.catalog_size);
  c.max_constraint_bits = j.value("max_constraint_bits", c.max_constraint_bits);
  c.brand_clusters = j.value("brand_clusters", c.brand_clusters);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.sessions_per_user = j.value("sessions_per_user", c.sessions_per_user);
  c.items_per_session = j.value("items_per_session", c.items_per_session);
  c.noise = j.value("noise", c.noise);
  c.context_effect = j.value("context_effect", c.context_effect);
  c.seed = j.value("seed", c.seed);
  return c;
}

LowOverlapDataset synth_low_overlap(const LowOverlapConfig& cfg) {
  if (!(cfg.overlap_prob >= 0.0 && cfg.overlap_prob <= 1.0)) {
    throw ConfigError("overlap_prob must lie in [0, 1]");
  }
  if (cfg.m == 0 || cfg.n == 0 || cfg.d == 0 || cfg.catalog_size < 2 || cfg.brand_clusters == 0 ||
      cfg.latent_dim == 0 || cfg.items_per_session == 0 || cfg.max_constraint_bits == 0) {
    throw ConfigError("synthetic generator sizes must be positive (catalog_size >= 2)");
  }
  if (cfg.n < cfg.d) throw ConfigError("need at least one item per brand (n >= d)");
  if (cfg.brand_clusters > cfg.d) throw ConfigError("more brand clusters than brands");

  std::mt19937_64 rng(cfg.seed);
  const std::size_t k = cfg.latent_dim;

  std::vector<std::size_t> cluster_of(cfg.d);
  {
    std::vector<std::uint32_t> perm(cfg.d);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < cfg.d; ++i) cluster_of[perm[i]] = i % cfg.brand_clusters;
  }

  CatalogBuilder builder(cfg, cluster_of, rng);
  const auto sets = builder.build();
  LowOverlapDataset out;
  for (const auto& s : sets) out.catalog.emplace_back(cfg.d, s);

  // Items: one brand each, every brand stocked.
  std::vector<std::uint32_t> brand_of(cfg.n);
  {
    std::vector<std::uint32_t> order(cfg.n);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < cfg.n; ++i) brand_of[order[i]] = static_cast<std::uint32_t>(i % cfg.d);
  }
  std::vector<std::vector<std::uint32_t>> items_of_brand(cfg.d);
  std::vector<BitSet> feature_rows;
  feature_rows.reserve(cfg.n);
  for (std::uint32_t i = 0; i < cfg.n; ++i) {
    items_of_brand[brand_of[i]].push_back(i);
    feature_rows.emplace_back(cfg.d, std::vector<std::uint32_t>{brand_of[i]});
  }

  out.true_user = gaussian(cfg.m, k, 1.0, rng);
  out.true_item = gaussian(cfg.n, k, 1.0, rng);
  // Effects share a per-cluster pattern so co-occurring brands behave alike.
  const RowMatrix cluster_effect = gaussian(k, cfg.brand_clusters, 1.0, rng);
  const RowMatrix own_effect = gaussian(k, cfg.d, 0.4, rng);
  out.true_context.resize(k, cfg.d);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    for (std::size_t r = 0; r < k; ++r) {
      out.true_context(r, j) =
          1.0 + cfg.context_effect * (cluster_effect(r, cluster_of[j]) + own_effect(r, j));
    }
  }
  std::vector<double> item_bias(cfg.n);
  {
    std::normal_distribution<double> nb(0.0, 0.5);
    for (auto& b : item_bias) b = nb(rng);
  }

  // Catalog entries grouped by the cluster of their first bit.
  std::vector<std::vector<std::size_t>> catalog_by_cluster(cfg.brand_clusters);
  for (std::size_t l = 0; l < sets.size(); ++l) {
    catalog_by_cluster[cluster_of[out.catalog[l].active().front()]].push_back(l);
  }
  std::vector<std::size_t> nonempty_clusters;
  for (std::size_t g = 0; g < cfg.brand_clusters; ++g) {
    if (!catalog_by_cluster[g].empty()) nonempty_clusters.push_back(g);
  }

  Dataset& ds = out.dataset;
  ds.data = InteractionTensor(cfg.m, cfg.n, cfg.d);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::uniform_int_distribution<std::size_t> any_entry(0, sets.size() - 1);
  std::uniform_int_distribution<std::size_t> any_fav(0, nonempty_clusters.size() - 1);
  std::bernoulli_distribution stay_in_taste(0.8);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  std::size_t clicks = 0;
  for (std::uint32_t u = 0; u < cfg.m; ++u) {
    const std::array<std::size_t, 2> favourites = {nonempty_clusters[any_fav(rng)],
                                                   nonempty_clusters[any_fav(rng)]};
    const std::size_t sessions = poisson_at_least(cfg.sessions_per_user, 1, rng);
    for (std::size_t s = 0; s < sessions; ++s) {
      std::size_t l;
      if (stay_in_taste(rng)) {
        const auto& pool = catalog_by_cluster[favourites[s % 2]];
        l = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      } else {
        l = any_entry(rng);
      }
      const ConstraintVector& c = out.catalog[l];
      std::vector<std::uint32_t> eligible;
      for (auto b : c.active()) eligible.insert(eligible.end(), items_of_brand[b].begin(), items_of_brand[b].end());
      Eigen::VectorXd effect = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
      for (auto b : c.active()) effect += out.true_context.col(b);
      effect /= static_cast<double>(c.l1_norm());
      std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
      for (std::size_t t = 0; t < cfg.items_per_session; ++t) {
        const std::uint32_t i = eligible[pick(rng)];
        double score = item_bias[i];
        for (std::size_t r = 0; r < k; ++r) {
          score += scale * out.true_user(u, r) * effect(r) * out.true_item(i, r);
        }
        const bool click = score + noise(rng) > 0.5;
        clicks += click;
        ds.data.add({u, i, c, click ? 1.0 : 0.0, 1.0, {}});
      }
    }
  }
  ds.features = FeatureMap(cfg.d, std::move(feature_rows));

  auto& mf = ds.manifest;
  mf.dataset = "synthetic";
  mf.m = cfg.m;
  mf.n = cfg.n;
  mf.d = cfg.d;
  for (std::size_t u = 0; u < cfg.m; ++u) mf.user_ids.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < cfg.n; ++i) mf.item_ids.push_back("i" + std::to_string(i));
  mf.stats = {{"records", double(ds.data.size())},
              {"positives", double(clicks)},
              {"catalog_size", double(out.catalog.size())},
              {"sampled_overlap_rate", sampled_overlap_rate(out.catalog, 10000, cfg.seed + 1)}};
  mf.notes.push_back("generator: " + to_json(cfg).dump());
  mf.hash = content_hash(ds.data, ds.features);
  return out;
}

double sampled_overlap_rate(const std::vector<ConstraintVector>& catalog, std::size_t samples,
                            std::uint64_t seed) {
  if (catalog.size() < 2) throw ConfigError("overlap rate needs at least two constraints");
  if (samples == 0) throw ConfigError("overlap rate needs at least one sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, catalog.size() - 1);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    hits += overlap(catalog[a], catalog[b]) > 0;
  }
  return static_cast<double>(hits) / static_cast<double>(samples);
}

namespace {

struct MealSlot {
  int start;   // local minute
  int length;  // minutes
  double weight;
};

// Breakfast, lunch, dinner, late night.
constexpr std::array<MealSlot, 4> kSlots = {{{6 * 60, 270, 0.12},
                                              {11 * 60, 240, 0.18},
                                              {17 * 60, 240, 0.32},
                                              {21 * 60, 300, 0.38}}};

const std::array<const char*, 12> kRestaurantKinds = {
    "American Restaurant", "Mexican Restaurant", "Italian Restaurant", "Chinese Restaurant",
    "Thai Restaurant",     "Pizza Restaurant",    "Diner Restaurant",    "Sushi Restaurant",
    "Indian Restaurant",   "Burger Restaurant",   "Fast Food Restaurant", "Korean Restaurant"};
const std::array<const char*, 4> kOtherKinds = {"Coffee Shop", "Bar", "Deli / Bodega", "Gym / Fitness Center"};

std::string format_utc(std::chrono::sys_seconds t) {
  using namespace std::chrono;
  static const std::array<const char*, 7> kDays = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
  static const std::array<const char*, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  const auto day = floor<days>(t);
  const year_month_day ymd(day);
  const weekday wd(day);
  const hh_mm_ss hms(t - day);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s %s %02u %02d:%02d:%02d +0000 %d", kDays[wd.c_encoding()],
                kMonths[static_cast<unsigned>(ymd.month()) - 1], static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), static_cast<int>(ymd.year()));
  return buf;
}

}  // namespace

void simulate_foursquare_file(const std::string& path, const FoursquareSimConfig& cfg) {
  if (cfg.users == 0 || cfg.venues == 0 || cfg.latent_dim == 0) {
    throw ConfigError("simulator sizes must be positive");
  }
  if (!(cfg.min_open_rate >= 0.0 && cfg.min_open_rate <= 0.95)) {
    throw ConfigError("min_open_rate must lie in [0, 0.95]");
  }
  std::mt19937_64 rng(cfg.seed);
  const std::size_t k = cfg.latent_dim;
  // Venues of one kind share a taste direction and typical opening hours.
  const std::size_t kinds = kRestaurantKinds.size() + kOtherKinds.size();
  const RowMatrix kind_taste = gaussian(kinds, k, 1.0, rng);
  std::uniform_real_distribution<double> open_rate(cfg.min_open_rate, 0.95);
  std::vector<std::array<double, kSlots.size()>> kind_open(kinds);
  for (auto& row : kind_open) {
    for (auto& p : row) p = open_rate(rng);
  }
  RowMatrix venue_taste = gaussian(cfg.venues, k, 0.6, rng);
  const RowMatrix user_taste = gaussian(cfg.users, k, 1.0, rng);
  RowMatrix slot_effect = gaussian(kSlots.size(), k, 0.9, rng);
  slot_effect.array() += 1.0;

  std::vector<double> venue_bias(cfg.venues);
  std::vector<std::string> venue_kind(cfg.venues), venue_id(cfg.venues);
  std::vector<std::vector<std::size_t>> open_at(kSlots.size());
  std::normal_distribution<double> bias(0.0, cfg.popularity_spread);
  std::bernoulli_distribution non_restaurant(0.1);
  std::uniform_int_distribution<std::size_t> any_slot(0, kSlots.size() - 1);
  for (std::size_t v = 0; v < cfg.venues; ++v) {
    venue_bias[v] = bias(rng);
    std::size_t kind;
    if (non_restaurant(rng)) {
      kind = kRestaurantKinds.size() + std::uniform_int_distribution<std::size_t>(0, kOtherKinds.size() - 1)(rng);
      venue_kind[v] = kOtherKinds[kind - kRestaurantKinds.size()];
    } else {
      kind = std::uniform_int_distribution<std::size_t>(0, kRestaurantKinds.size() - 1)(rng);
      venue_kind[v] = kRestaurantKinds[kind];
    }
    venue_taste.row(v) += kind_taste.row(kind);
    char id[32];
    std::snprintf(id, sizeof id, "4b%022zx", v * 2654435761u + 17);
    venue_id[v] = id;
    bool any = false;
    for (std::size_t s = 0; s < kSlots.size(); ++s) {
      if (std::bernoulli_distribution(kind_open[kind][s])(rng)) {
        open_at[s].push_back(v);
        any = true;
      }
    }
    if (!any) open_at[any_slot(rng)].push_back(v);
  }

  auto out = open_output(path);
  const auto first_day = std::chrono::sys_days(std::chrono::year{2012} / std::chrono::April / 3);
  std::uniform_int_distribution<int> day_offset(0, 318);
  std::uniform_int_distribution<int> second(0, 59);
  std::uniform_real_distribution<double> lat(40.55, 40.90), lon(-74.05, -73.75);
  constexpr int kOffset = -240;
  const double scale = cfg.choice_temperature / std::sqrt(static_cast<double>(k));
  for (std::size_t u = 0; u < cfg.users; ++u) {
    // Personal meal habits scattered around the population rates.
    std::vector<double> habit(kSlots.size());
    for (std::size_t s = 0; s < kSlots.size(); ++s) {
      habit[s] = std::gamma_distribution<double>(2.0 * kSlots[s].weight, 1.0)(rng);
    }
    std::discrete_distribution<std::size_t> pick_slot(habit.begin(), habit.end());
    const std::size_t checkins = static_cast<std::size_t>(
        std::max(5.0, std::lognormal_distribution<double>(std::log(cfg.checkins_per_user) - 0.5, 1.0)(rng)));
    for (std::size_t t = 0; t < checkins; ++t) {
      const std::size_t s = pick_slot(rng);
      const auto& venues = open_at[s];
      if (venues.empty()) continue;
      std::vector<double> logits(venues.size());
      for (std::size_t a = 0; a < venues.size(); ++a) {
        const std::size_t v = venues[a];
        double dot = 0.0;
        for (std::size_t r = 0; r < k; ++r) dot += user_taste(u, r) * slot_effect(s, r) * venue_taste(v, r);
        logits[a] = scale * dot + venue_bias[v];
      }
      const std::size_t v = venues[sample_softmax(logits, rng)];
      const int minute =
          (kSlots[s].start + std::uniform_int_distribution<int>(0, kSlots[s].length - 1)(rng)) % 1440;
      const auto local = first_day + std::chrono::days(day_offset(rng)) + std::chrono::minutes(minute) +
                         std::chrono::seconds(second(rng));
      const auto utc = std::chrono::sys_seconds(local) - std::chrono::minutes(kOffset);
      char coords[64];
      std::snprintf(coords, sizeof coords, "%.6f\t%.6f", lat(rng), lon(rng));
      out << (u + 1) << '\t' << venue_id[v] << '\t' << "4bf58dd8d48988d1c4941735" << '\t'
          << venue_kind[v] << '\t' << coords << '\t' << kOffset << '\t' << format_utc(utc) << '\n';
    }
  }
}

void simulate_movielens_files(const std::string& dir, const MovieLensSimConfig& cfg) {
  if (cfg.users == 0 || cfg.movies == 0 || cfg.latent_dim == 0) {
    throw ConfigError("simulator sizes must be positive");
  }
  static const std::array<double, kMovieLensGenres> kGenreRate = {
      0.002, 0.15, 0.08, 0.025, 0.07, 0.30, 0.065, 0.03, 0.43, 0.013,
      0.014, 0.055, 0.033, 0.036, 0.147, 0.06, 0.149, 0.042, 0.016};
  constexpr std::size_t kChildrens = 4, kAnimation = 3, kComedy = 5;

  std::mt19937_64 rng(cfg.seed);
  const std::size_t k = cfg.latent_dim;
  const RowMatrix genre_taste = gaussian(kMovieLensGenres, k, 1.0, rng);

  std::vector<std::array<char, kMovieLensGenres>> genres(cfg.movies);
  RowMatrix movie_taste = gaussian(cfg.movies, k, 0.5, rng);
  std::vector<double> popularity(cfg.movies), movie_bias(cfg.movies);
  std::normal_distribution<double> nb(0.0, 0.4);
  std::lognormal_distribution<double> pop(0.0, 1.0);
  for (std::size_t i = 0; i < cfg.movies; ++i) {
    auto& g = genres[i];
    g.fill(0);
    for (std::size_t x = 0; x < kMovieLensGenres; ++x) g[x] = std::bernoulli_distribution(kGenreRate[x])(rng);
    if (std::none_of(g.begin(), g.end(), [](char c) { return c; })) g[8] = 1;
    for (std::size_t x = 0; x < kMovieLensGenres; ++x) {
      if (g[x]) movie_taste.row(i) += genre_taste.row(x);
    }
    popularity[i] = pop(rng);
    movie_bias[i] = nb(rng);
  }

  std::vector<int> age(cfg.users);
  std::bernoulli_distribution is_kid(cfg.kid_fraction);
  std::uniform_int_distribution<int> kid_age(7, 13);
  std::normal_distribution<double> adult_age(33.0, 11.0);
  RowMatrix user_taste = gaussian(cfg.users, k, 0.7, rng);
  std::vector<double> user_bias(cfg.users);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    if (is_kid(rng)) {
      age[u] = kid_age(rng);
    } else {
      age[u] = std::clamp(static_cast<int>(std::lround(adult_age(rng))), 14, 73);
    }
    user_bias[u] = nb(rng);
  }

  const fs::path root(dir);
  fs::create_directories(root);
  {
    auto out = open_output(root / "u.user");
    static const std::array<const char*, 5> kJobs = {"student", "engineer", "educator", "writer", "other"};
    for (std::size_t u = 0; u < cfg.users; ++u) {
      out << (u + 1) << '|' << age[u] << '|' << ((u % 3) ? 'M' : 'F') << '|'
          << (age[u] < 14 ? "student" : kJobs[u % kJobs.size()]) << '|' << 10000 + (u * 37) % 89999
          << '\n';
    }
  }
  {
    auto out = open_output(root / "u.item");
    for (std::size_t i = 0; i < cfg.movies; ++i) {
      const int year = 1930 + static_cast<int>((i * 7919) % 68);
      out << (i + 1) << "|Movie " << (i + 1) << " (" << year << ")|01-Jan-" << year
          << "||http://us.imdb.com/M/title-exact?Movie%20" << (i + 1);
      for (char g : genres[i]) out << '|' << int(g);
      out << '\n';
    }
  }
  auto out = open_output(root / "u.data");
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  std::normal_distribution<double> rating_noise(0.0, 0.6);
  std::uniform_int_distribution<long> stamp(874724710, 893286638);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const bool kid = age[u] < kKidAge;
    std::vector<std::size_t> pool;
    std::vector<double> logits;
    for (std::size_t i = 0; i < cfg.movies; ++i) {
      if (kid && (genres[i][kHorrorGenre] || genres[i][kThrillerGenre])) continue;
      pool.push_back(i);
      double logit = std::log(popularity[i]) + 0.5 * scale * user_taste.row(u).dot(movie_taste.row(i));
      // Kids gravitate to family titles without rating them any higher.
      if (kid && (genres[i][kChildrens] || genres[i][kAnimation] || genres[i][kComedy])) logit += 1.5;
      logits.push_back(logit);
    }
    const std::size_t count =
        std::min(pool.size(), poisson_at_least(cfg.min_ratings + cfg.mean_extra_ratings, cfg.min_ratings, rng));
    std::set<std::size_t> chosen;
    // Gumbel top-k: sampling without replacement in proportion to exp(logit).
    std::vector<std::pair<double, std::size_t>> keys;
    std::extreme_value_distribution<double> gumbel(0.0, 1.0);
    for (std::size_t a = 0; a < pool.size(); ++a) keys.emplace_back(logits[a] + gumbel(rng), pool[a]);
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                      [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t a = 0; a < count; ++a) {
      const std::size_t i = keys[a].second;
      const double raw = 3.5 + user_bias[u] + movie_bias[i] +
                         0.6 * scale * user_taste.row(u).dot(movie_taste.row(i)) + rating_noise(rng);
      const int rating = std::clamp(static_cast<int>(std::lround(raw)), 1, 5);
      out << (u + 1) << '\t' << (i + 1) << '\t' << rating << '\t' << stamp(rng) << '\n';
    }
  }
}

}  // namespace cmf
