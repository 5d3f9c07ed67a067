#include "selfcens/patterns.hpp"

#include <bit>
#include <set>

#include "selfcens/dataset.hpp"
#include "selfcens/errors.hpp"

namespace selfcens {

Pattern::Pattern(std::uint32_t code, std::size_t p) : code_(code), p_(p) {
  if (p == 0 || p > kMaxOutcomes) {
    throw DimensionError("pattern length must be in [1, " + std::to_string(kMaxOutcomes) +
                         "], got " + std::to_string(p));
  }
  if ((code & ~full_mask(p)) != 0) throw DimensionError("pattern code has bits beyond p");
}

Pattern Pattern::complete(std::size_t p) { return Pattern(full_mask(p), p); }

Pattern Pattern::from_bits(std::span<const int> bits) {
  std::uint32_t code = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0 && bits[i] != 1) throw InputError("pattern bits must be 0 or 1");
    if (bits[i]) code |= 1u << i;
  }
  return Pattern(code, bits.size());
}

bool Pattern::observed(std::size_t i) const {
  if (i >= p_) throw DimensionError("pattern index out of range");
  return (code_ >> i) & 1u;
}

bool Pattern::prefix_complete(std::size_t i) const {
  const std::uint32_t mask = full_mask(i);
  return (code_ & mask) == mask;
}

std::uint32_t Pattern::prefix_code(std::size_t i) const { return code_ & full_mask(i); }

std::size_t Pattern::missing_count() const {
  return p_ - static_cast<std::size_t>(std::popcount(code_));
}

Pattern Pattern::with(std::size_t i, bool value) const {
  if (i >= p_) throw DimensionError("pattern index out of range");
  return Pattern(value ? (code_ | (1u << i)) : (code_ & ~(1u << i)), p_);
}

std::vector<std::size_t> Pattern::observed_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < p_; ++i)
    if ((code_ >> i) & 1u) out.push_back(i);
  return out;
}

std::vector<std::size_t> Pattern::missing_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < p_; ++i)
    if (!((code_ >> i) & 1u)) out.push_back(i);
  return out;
}

std::string Pattern::to_string() const {
  std::string s = "(";
  for (std::size_t i = 0; i < p_; ++i) {
    if (i) s += ',';
    s += ((code_ >> i) & 1u) ? '1' : '0';
  }
  return s + ")";
}

bool pattern_leq(const Pattern& a, const Pattern& b) {
  if (a.size() != b.size()) throw DimensionError("pattern_leq: length mismatch");
  return (a.code() & ~b.code()) == 0;
}

Pattern item_pattern(std::size_t p, std::size_t i) { return Pattern::complete(p).with(i, false); }

PatternSet::PatternSet(std::size_t p) : p_(p) {
  if (p == 0 || p > kMaxOutcomes) throw DimensionError("pattern set dimension out of range");
}

PatternSet PatternSet::full_lattice(std::size_t p) {
  PatternSet ps(p);
  for (std::uint32_t c = 0; c <= Pattern::full_mask(p); ++c) ps.add(Pattern(c, p));
  return ps;
}

PatternSet PatternSet::from_patterns(std::size_t p, std::span<const std::uint32_t> codes) {
  PatternSet ps(p);
  for (auto c : codes) ps.add(Pattern(c, p));
  return ps;
}

void PatternSet::add(const Pattern& r, std::size_t count) {
  if (r.size() != p_) throw DimensionError("pattern length does not match pattern set");
  if (count == 0) return;
  counts_[r.code()] += count;
}

bool PatternSet::contains(const Pattern& r) const {
  return r.size() == p_ && counts_.count(r.code()) > 0;
}

std::size_t PatternSet::count(const Pattern& r) const {
  if (r.size() != p_) return 0;
  auto it = counts_.find(r.code());
  return it == counts_.end() ? 0 : it->second;
}

std::size_t PatternSet::total() const {
  std::size_t t = 0;
  for (const auto& [code, c] : counts_) t += c;
  return t;
}

std::vector<Pattern> PatternSet::patterns() const {
  std::vector<Pattern> out;
  out.reserve(counts_.size());
  for (const auto& [code, c] : counts_) out.emplace_back(code, p_);
  return out;
}

std::vector<std::uint32_t> PatternSet::codes() const {
  std::vector<std::uint32_t> out;
  out.reserve(counts_.size());
  for (const auto& [code, c] : counts_) out.push_back(code);
  return out;
}

PatternSet enumerate_patterns(const Dataset& data) {
  if (data.empty()) throw InputError("enumerate_patterns: dataset is empty");
  PatternSet ps(data.p());
  for (auto code : data.pattern_codes()) ps.add(Pattern(code, data.p()));
  return ps;
}

ValidationReport validate_positivity(const PatternSet& ps, std::size_t min_count,
                                     double min_propensity) {
  ValidationReport report;
  report.p = ps.p();
  report.min_count = min_count;
  report.min_propensity = min_propensity;
  if (ps.empty()) return report;

  const std::size_t p = ps.p();
  const std::uint32_t full = Pattern::full_mask(p);
  report.has_complete_pattern = ps.contains(full);

  std::set<std::uint32_t> missing;
  for (const auto& [code, c] : ps.counts()) {
    // Enumerate every superset code | s with s a submask of the complement.
    const std::uint32_t free = full & ~code;
    std::uint32_t s = free;
    while (true) {
      const std::uint32_t sup = code | s;
      if (!ps.contains(sup)) missing.insert(sup);
      if (s == 0) break;
      s = (s - 1) & free;
    }
  }
  for (auto code : missing) report.missing_patterns.emplace_back(code, p);

  for (const auto& [code, c] : ps.counts())
    if (c < min_count) report.sparse_patterns.emplace_back(Pattern(code, p), c);
  return report;
}

}  // namespace selfcens
