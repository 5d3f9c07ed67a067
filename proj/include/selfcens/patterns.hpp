#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace selfcens {

class Dataset;

inline constexpr std::size_t kMaxOutcomes = 16;

// Missingness pattern r = (r_1, ..., r_p), 1 = observed. Bit i of the code holds r_{i+1}.
class Pattern {
 public:
  Pattern() = default;
  Pattern(std::uint32_t code, std::size_t p);

  static Pattern complete(std::size_t p);
  static Pattern from_bits(std::span<const int> bits);

  std::uint32_t code() const noexcept { return code_; }
  std::size_t size() const noexcept { return p_; }
  bool observed(std::size_t i) const;
  bool is_complete() const noexcept { return code_ == full_mask(p_); }
  // r_{<i} == (1, ..., 1); vacuously true for i == 0.
  bool prefix_complete(std::size_t i) const;
  std::uint32_t prefix_code(std::size_t i) const;
  std::size_t missing_count() const;
  Pattern with(std::size_t i, bool value) const;
  std::vector<std::size_t> observed_indices() const;
  std::vector<std::size_t> missing_indices() const;

  // "(1,0,1)"
  std::string to_string() const;

  static constexpr std::uint32_t full_mask(std::size_t p) {
    return p >= 32 ? 0xffffffffu : ((1u << p) - 1u);
  }

  friend bool operator==(const Pattern&, const Pattern&) = default;
  friend auto operator<=>(const Pattern& a, const Pattern& b) {
    if (auto c = a.p_ <=> b.p_; c != 0) return c;
    return a.code_ <=> b.code_;
  }

 private:
  std::uint32_t code_ = 0;
  std::size_t p_ = 0;
};

// Componentwise a <= b. Throws DimensionError on length mismatch.
bool pattern_leq(const Pattern& a, const Pattern& b);

// Pattern with only item i missing: (r_i = 0, r_{-i} = 1).
Pattern item_pattern(std::size_t p, std::size_t i);

class PatternSet {
 public:
  PatternSet() = default;
  explicit PatternSet(std::size_t p);

  // Every pattern of {0,1}^p with count 1.
  static PatternSet full_lattice(std::size_t p);
  static PatternSet from_patterns(std::size_t p, std::span<const std::uint32_t> codes);

  void add(const Pattern& r, std::size_t count = 1);

  std::size_t p() const noexcept { return p_; }
  bool empty() const noexcept { return counts_.empty(); }
  std::size_t size() const noexcept { return counts_.size(); }
  bool contains(const Pattern& r) const;
  bool contains(std::uint32_t code) const { return counts_.count(code) > 0; }
  std::size_t count(const Pattern& r) const;
  std::size_t total() const;
  // Sorted by code.
  std::vector<Pattern> patterns() const;
  std::vector<std::uint32_t> codes() const;
  const std::map<std::uint32_t, std::size_t>& counts() const noexcept { return counts_; }

 private:
  std::size_t p_ = 0;
  std::map<std::uint32_t, std::size_t> counts_;
};

// Errors: empty dataset -> InputError.
PatternSet enumerate_patterns(const Dataset& data);

struct ValidationReport {
  std::size_t p = 0;
  std::size_t min_count = 5;
  double min_propensity = 1e-3;
  bool has_complete_pattern = false;
  // Patterns above some observed pattern that never occur (upward-closure violations).
  std::vector<Pattern> missing_patterns;
  // Patterns observed fewer than min_count times.
  std::vector<std::pair<Pattern, std::size_t>> sparse_patterns;

  // Estimation refuses to run when false.
  bool valid() const { return has_complete_pattern && missing_patterns.empty(); }
  bool has_warnings() const { return !sparse_patterns.empty(); }
};

ValidationReport validate_positivity(const PatternSet& ps, std::size_t min_count = 5,
                                     double min_propensity = 1e-3);

}  // namespace selfcens
