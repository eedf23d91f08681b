#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cmf {

/// Sparse binary vector over [0, dim): the sorted indices of its set bits.
class BitSet {
 public:
  BitSet() = default;
  BitSet(std::size_t dim, std::vector<std::uint32_t> active);

  static BitSet from_dense(std::span<const std::uint8_t> bits);

  std::size_t dim() const { return dim_; }
  const std::vector<std::uint32_t>& active() const { return active_; }
  std::size_t count() const { return active_.size(); }
  bool empty() const { return active_.empty(); }
  bool test(std::size_t j) const;
  std::vector<std::uint8_t> to_dense() const;

  /// Union with another set of the same dimension.
  BitSet operator|(const BitSet& other) const;

  friend bool operator==(const BitSet&, const BitSet&) = default;
  friend auto operator<=>(const BitSet&, const BitSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> active_;
};

/// A contextual constraint: a disjunction over feature values. Never all-zero.
class ConstraintVector {
 public:
  ConstraintVector() = default;
  ConstraintVector(std::size_t dim, std::vector<std::uint32_t> active);
  explicit ConstraintVector(BitSet bits);

  static ConstraintVector from_dense(std::span<const std::uint8_t> bits);

  std::size_t dim() const { return bits_.dim(); }
  const std::vector<std::uint32_t>& active() const { return bits_.active(); }
  /// ||c||_1, always >= 1.
  std::size_t l1_norm() const { return bits_.count(); }
  bool test(std::size_t j) const { return bits_.test(j); }
  const BitSet& bits() const { return bits_; }

  friend bool operator==(const ConstraintVector&, const ConstraintVector&) = default;
  friend auto operator<=>(const ConstraintVector&, const ConstraintVector&) = default;

 private:
  BitSet bits_;
};

std::string to_string(const BitSet& bits);

/// c1^T c2. Throws DimensionError on length mismatch.
std::size_t overlap(const BitSet& a, const BitSet& b);
std::size_t overlap(const ConstraintVector& a, const ConstraintVector& b);
std::size_t overlap(const ConstraintVector& c, const BitSet& f);

/// True iff c^T f > 0.
bool satisfies(const ConstraintVector& c, const BitSet& f);
bool satisfies(std::span<const std::uint8_t> c, std::span<const std::uint8_t> f);

/// Item feature rows f_i. Rows may be empty.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t dim, std::vector<BitSet> rows);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }
  const BitSet& row(std::size_t item) const;
  const std::vector<BitSet>& rows() const { return rows_; }

 private:
  std::size_t dim_ = 0;
  std::vector<BitSet> rows_;
};

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  ConstraintVector constraint;
  double reward = 0.0;
  double weight = 1.0;
  /// Continuous constraint descriptors appended to g(c) (e.g. normalized age).
  std::vector<double> descriptors;
};

/// Sparse observations (u, i, c) -> r with per-record weights.
class InteractionTensor {
 public:
  InteractionTensor() = default;
  InteractionTensor(std::size_t num_users, std::size_t num_items, std::size_t dim);

  void add(Interaction record);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<Interaction>& records() const { return records_; }
  const Interaction& operator[](std::size_t idx) const { return records_[idx]; }
  /// Weight edits only; ids, constraints and rewards stay immutable.
  void set_weight(std::size_t idx, double weight);

  /// Record indices grouped by user / item, in record order.
  std::vector<std::vector<std::size_t>> index_by_user() const;
  std::vector<std::vector<std::size_t>> index_by_item() const;

  /// Distinct constraints in first-seen order.
  std::vector<ConstraintVector> constraint_catalog() const;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<Interaction> records_;
};

/// Per feature-bit pair: number of distinct users whose constraints activate
/// both bits (possibly in different records).
class CooccurrenceStats {
 public:
  CooccurrenceStats() = default;
  explicit CooccurrenceStats(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::uint32_t count(std::size_t a, std::size_t b) const { return counts_[a * dim_ + b]; }
  void set(std::size_t a, std::size_t b, std::uint32_t value);

  struct Pair {
    std::uint32_t a;
    std::uint32_t b;
    std::uint32_t users;
  };
  /// Off-diagonal pairs a < b with a nonzero count.
  std::vector<Pair> active_pairs() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> counts_;
};

CooccurrenceStats build_cooccurrence(const InteractionTensor& data);

/// Bits observed per user across all of that user's constraints.
std::vector<BitSet> user_observed_bits(const InteractionTensor& data);

/// Feature map whose row i is the union of the constraints observed with item i.
FeatureMap feature_map_from_observations(const InteractionTensor& data);

/// Cartesian encoding of several categorical features into one flat bit space:
/// offsets[f] is the first bit of feature f.
struct ProductEncoding {
  std::vector<std::size_t> cardinalities;

  std::size_t dim() const;
  std::size_t offset(std::size_t feature) const;
  /// One disjunction of values per feature, flattened into a single constraint.
  ConstraintVector encode(const std::vector<std::vector<std::uint32_t>>& values_per_feature) const;
  /// Conjunction over features: every feature block of c overlaps f.
  bool satisfies(const ConstraintVector& c, const BitSet& f) const;
};

/// Equal-width discretization of a continuous feature into `bins` buckets over [lo, hi].
std::uint32_t discretize(double value, double lo, double hi, std::uint32_t bins);

}  // namespace cmf
