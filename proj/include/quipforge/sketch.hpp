#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "quipforge/hash.hpp"
#include "quipforge/text.hpp"

namespace quipforge {

struct SketchConfig {
  uint32_t n = 25;
  uint64_t num_bits = 1u << 16;
  uint32_t num_hashes = 7;
  uint32_t hash_scheme_id = static_cast<uint32_t>(HashScheme::murmur3_x64_128);
  NormalizationPolicy normalization;

  // Throws Error(invalid_argument) when n, num_bits or num_hashes are out of range
  // and Error(unknown_hash) for an unrecognised scheme.
  void validate() const;

  bool operator==(const SketchConfig&) const = default;
};

struct BloomSizing {
  uint64_t num_bits;
  uint32_t num_hashes;
};

// m = ceil(N ln(1/p) / ln(2)^2), k = ceil(ln(1/p) / ln 2), clamped to the
// config limits.
BloomSizing optimal_sizing(uint64_t expected_grams, double fpr);

struct CorpusStats {
  uint64_t documents_ingested = 0;
  uint64_t ngrams_inserted = 0;
  double set_bit_fraction = 0.0;
  double estimated_fpr = 0.0;
};

class NgramSketch {
 public:
  static constexpr uint32_t kFormatVersion = 1;
  static constexpr char kMagic[4] = {'N', 'G', 'S', 'K'};
  static constexpr size_t kHeaderBytes = 56;

  explicit NgramSketch(const SketchConfig& config);

  const SketchConfig& config() const { return config_; }
  uint64_t inserted_count() const { return inserted_count_; }
  uint64_t set_bits() const;
  double set_bit_fraction() const;

  // (X/m)^k for X set bits. Equal to (1 - e^{-k u/m})^k evaluated at the
  // cardinality estimate u = -(m/k) ln(1 - X/m); monotone in X.
  double estimated_fpr() const;

  // (1 - e^{-k N/m})^k for N insertions (duplicates included).
  double analytic_fpr(uint64_t insertions) const;
  double analytic_fpr() const { return analytic_fpr(inserted_count_); }

  // Normalizes with the sketch policy and inserts the n-grams starting at
  // character offsets 0, stride, 2*stride, ... Returns the number inserted.
  uint64_t insert_document(std::string_view text, uint32_t stride = 1);

  // Inserts one gram verbatim. Throws Error(contract) if it is not n characters.
  void insert_gram(std::string_view gram);

  // The gram is taken verbatim: no normalization. Throws Error(contract)
  // when its length in characters differs from n.
  bool contains(std::string_view gram) const;

  // No length check; used by the scorer, which slices exact windows.
  bool contains_unchecked(std::string_view gram_utf8) const;
  void insert_unchecked(std::string_view gram_utf8);

  // Throws Error(config_mismatch) when configs differ.
  void merge_from(const NgramSketch& other);

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static NgramSketch load(std::istream& in);
  static NgramSketch load(const std::string& path);

  std::vector<uint8_t> serialize() const;

  bool same_bits(const NgramSketch& other) const { return words_ == other.words_; }

  CorpusStats stats(uint64_t documents) const;

 private:
  struct ProbeStart {
    uint64_t index;
    uint64_t step;
  };
  ProbeStart probe_start(std::string_view gram_utf8) const;

  NgramSketch(const SketchConfig& config, std::vector<uint64_t>&& words, uint64_t inserted);

  SketchConfig config_;
  std::vector<uint64_t> words_;
  uint64_t inserted_count_ = 0;
};

NgramSketch merge(const NgramSketch& a, const NgramSketch& b);

}  // namespace quipforge
