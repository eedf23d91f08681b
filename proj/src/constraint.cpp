#include "cmf/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "cmf/errors.hpp"

namespace cmf {

namespace {

void check_same_dim(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError("bit vector length mismatch: " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace

BitSet::BitSet(std::size_t dim, std::vector<std::uint32_t> active)
    : dim_(dim), active_(std::move(active)) {
  std::sort(active_.begin(), active_.end());
  active_.erase(std::unique(active_.begin(), active_.end()), active_.end());
  if (!active_.empty() && active_.back() >= dim_) {
    throw DimensionError("bit index " + std::to_string(active_.back()) +
                         " out of range for dimension " + std::to_string(dim_));
  }
}

BitSet BitSet::from_dense(std::span<const std::uint8_t> bits) {
  std::vector<std::uint32_t> active;
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (bits[j] != 0) active.push_back(static_cast<std::uint32_t>(j));
  }
  return BitSet(bits.size(), std::move(active));
}

bool BitSet::test(std::size_t j) const {
  return std::binary_search(active_.begin(), active_.end(), static_cast<std::uint32_t>(j));
}

std::vector<std::uint8_t> BitSet::to_dense() const {
  std::vector<std::uint8_t> out(dim_, 0);
  for (auto j : active_) out[j] = 1;
  return out;
}

BitSet BitSet::operator|(const BitSet& other) const {
  check_same_dim(dim_, other.dim_);
  std::vector<std::uint32_t> merged;
  std::set_union(active_.begin(), active_.end(), other.active_.begin(), other.active_.end(),
                 std::back_inserter(merged));
  return BitSet(dim_, std::move(merged));
}

ConstraintVector::ConstraintVector(std::size_t dim, std::vector<std::uint32_t> active)
    : ConstraintVector(BitSet(dim, std::move(active))) {}

ConstraintVector::ConstraintVector(BitSet bits) : bits_(std::move(bits)) {
  if (bits_.empty()) throw DataError("constraint vector must have at least one bit set");
}

ConstraintVector ConstraintVector::from_dense(std::span<const std::uint8_t> bits) {
  return ConstraintVector(BitSet::from_dense(bits));
}

std::string to_string(const BitSet& bits) {
  std::ostringstream out;
  out << '{';
  for (std::size_t k = 0; k < bits.active().size(); ++k) {
    if (k) out << ',';
    out << bits.active()[k];
  }
  out << '}';
  return out.str();
}

std::size_t overlap(const BitSet& a, const BitSet& b) {
  check_same_dim(a.dim(), b.dim());
  std::size_t shared = 0;
  auto ia = a.active().begin();
  auto ib = b.active().begin();
  while (ia != a.active().end() && ib != b.active().end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  return shared;
}

std::size_t overlap(const ConstraintVector& a, const ConstraintVector& b) {
  return overlap(a.bits(), b.bits());
}

std::size_t overlap(const ConstraintVector& c, const BitSet& f) { return overlap(c.bits(), f); }

bool satisfies(const ConstraintVector& c, const BitSet& f) { return overlap(c.bits(), f) > 0; }

bool satisfies(std::span<const std::uint8_t> c, std::span<const std::uint8_t> f) {
  check_same_dim(c.size(), f.size());
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (c[j] != 0 && f[j] != 0) return true;
  }
  return false;
}

FeatureMap::FeatureMap(std::size_t dim, std::vector<BitSet> rows)
    : dim_(dim), rows_(std::move(rows)) {
  for (const auto& row : rows_) check_same_dim(row.dim(), dim_);
}

const BitSet& FeatureMap::row(std::size_t item) const {
  if (item >= rows_.size()) throw DimensionError("item id out of range: " + std::to_string(item));
  return rows_[item];
}

InteractionTensor::InteractionTensor(std::size_t num_users, std::size_t num_items,
                                     std::size_t dim)
    : num_users_(num_users), num_items_(num_items), dim_(dim) {}

void InteractionTensor::add(Interaction record) {
  if (record.user >= num_users_) {
    throw DimensionError("user id out of range: " + std::to_string(record.user));
  }
  if (record.item >= num_items_) {
    throw DimensionError("item id out of range: " + std::to_string(record.item));
  }
  check_same_dim(record.constraint.dim(), dim_);
  if (!(record.reward >= 0.0 && record.reward <= 1.0)) {
    throw DataError("reward outside [0,1]: " + std::to_string(record.reward));
  }
  if (!(record.weight >= 0.0)) throw DataError("negative record weight");
  records_.push_back(std::move(record));
}

void InteractionTensor::set_weight(std::size_t idx, double weight) {
  if (!(weight >= 0.0)) throw DataError("negative record weight");
  records_.at(idx).weight = weight;
}

std::vector<std::vector<std::size_t>> InteractionTensor::index_by_user() const {
  std::vector<std::vector<std::size_t>> out(num_users_);
  for (std::size_t r = 0; r < records_.size(); ++r) out[records_[r].user].push_back(r);
  return out;
}

std::vector<std::vector<std::size_t>> InteractionTensor::index_by_item() const {
  std::vector<std::vector<std::size_t>> out(num_items_);
  for (std::size_t r = 0; r < records_.size(); ++r) out[records_[r].item].push_back(r);
  return out;
}

std::vector<ConstraintVector> InteractionTensor::constraint_catalog() const {
  std::vector<ConstraintVector> catalog;
  std::set<ConstraintVector> seen;
  for (const auto& rec : records_) {
    if (seen.insert(rec.constraint).second) catalog.push_back(rec.constraint);
  }
  return catalog;
}

CooccurrenceStats::CooccurrenceStats(std::size_t dim) : dim_(dim), counts_(dim * dim, 0) {}

void CooccurrenceStats::set(std::size_t a, std::size_t b, std::uint32_t value) {
  counts_[a * dim_ + b] = value;
  counts_[b * dim_ + a] = value;
}

std::vector<CooccurrenceStats::Pair> CooccurrenceStats::active_pairs() const {
  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < dim_; ++a) {
    for (std::size_t b = a + 1; b < dim_; ++b) {
      if (auto users = count(a, b); users > 0) {
        pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), users});
      }
    }
  }
  return pairs;
}

std::vector<BitSet> user_observed_bits(const InteractionTensor& data) {
  std::vector<std::vector<std::uint32_t>> bits(data.num_users());
  for (const auto& rec : data.records()) {
    auto& dst = bits[rec.user];
    dst.insert(dst.end(), rec.constraint.active().begin(), rec.constraint.active().end());
  }
  std::vector<BitSet> out;
  out.reserve(bits.size());
  for (auto& b : bits) out.emplace_back(data.dim(), std::move(b));
  return out;
}

CooccurrenceStats build_cooccurrence(const InteractionTensor& data) {
  CooccurrenceStats stats(data.dim());
  std::vector<std::uint32_t> counts(data.dim() * data.dim(), 0);
  for (const auto& bits : user_observed_bits(data)) {
    const auto& act = bits.active();
    for (std::size_t x = 0; x < act.size(); ++x) {
      for (std::size_t y = x; y < act.size(); ++y) ++counts[act[x] * data.dim() + act[y]];
    }
  }
  for (std::size_t a = 0; a < data.dim(); ++a) {
    for (std::size_t b = a; b < data.dim(); ++b) {
      if (counts[a * data.dim() + b]) stats.set(a, b, counts[a * data.dim() + b]);
    }
  }
  return stats;
}

FeatureMap feature_map_from_observations(const InteractionTensor& data) {
  std::vector<std::vector<std::uint32_t>> bits(data.num_items());
  for (const auto& rec : data.records()) {
    auto& dst = bits[rec.item];
    dst.insert(dst.end(), rec.constraint.active().begin(), rec.constraint.active().end());
  }
  std::vector<BitSet> rows;
  rows.reserve(bits.size());
  for (auto& b : bits) rows.emplace_back(data.dim(), std::move(b));
  return FeatureMap(data.dim(), std::move(rows));
}

std::size_t ProductEncoding::dim() const {
  return std::accumulate(cardinalities.begin(), cardinalities.end(), std::size_t{0});
}

std::size_t ProductEncoding::offset(std::size_t feature) const {
  if (feature >= cardinalities.size()) throw DimensionError("feature index out of range");
  return std::accumulate(cardinalities.begin(), cardinalities.begin() + feature, std::size_t{0});
}

ConstraintVector ProductEncoding::encode(
    const std::vector<std::vector<std::uint32_t>>& values_per_feature) const {
  if (values_per_feature.size() != cardinalities.size()) {
    throw DimensionError("expected one value list per feature");
  }
  std::vector<std::uint32_t> active;
  for (std::size_t f = 0; f < cardinalities.size(); ++f) {
    for (auto v : values_per_feature[f]) {
      if (v >= cardinalities[f]) throw DimensionError("feature value out of range");
      active.push_back(static_cast<std::uint32_t>(offset(f) + v));
    }
  }
  return ConstraintVector(dim(), std::move(active));
}

bool ProductEncoding::satisfies(const ConstraintVector& c, const BitSet& f) const {
  check_same_dim(c.dim(), dim());
  check_same_dim(f.dim(), dim());
  std::size_t lo = 0;
  for (auto card : cardinalities) {
    const std::size_t hi = lo + card;
    bool constrained = false;
    bool matched = false;
    for (auto j : c.active()) {
      if (j >= lo && j < hi) {
        constrained = true;
        if (f.test(j)) matched = true;
      }
    }
    if (constrained && !matched) return false;
    lo = hi;
  }
  return true;
}

std::uint32_t discretize(double value, double lo, double hi, std::uint32_t bins) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("discretize needs bins > 0 and hi > lo");
  const double t = (value - lo) / (hi - lo);
  const auto bin = static_cast<std::int64_t>(std::floor(t * bins));
  return static_cast<std::uint32_t>(std::clamp<std::int64_t>(bin, 0, bins - 1));
}

}  // namespace cmf
