#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace quipforge {

struct NormalizationPolicy {
  bool unicode_nfc = true;
  bool lowercase = true;
  bool collapse_whitespace = true;

  static constexpr uint32_t kNfcBit = 0x1;
  static constexpr uint32_t kLowercaseBit = 0x2;
  static constexpr uint32_t kCollapseBit = 0x4;
  static constexpr uint32_t kAllBits = kNfcBit | kLowercaseBit | kCollapseBit;

  static NormalizationPolicy none() { return {false, false, false}; }
  // Throws Error(format) on unknown bits.
  static NormalizationPolicy from_flags(uint32_t flags);
  uint32_t flags() const;

  bool operator==(const NormalizationPolicy&) const = default;
};

// Byte offsets of every code point in a UTF-8 string plus a final sentinel
// equal to the byte length, so code point i spans [offsets[i], offsets[i+1]).
// Throws Error(decode) on ill-formed UTF-8.
std::vector<size_t> code_point_offsets(std::string_view utf8);

size_t code_point_count(std::string_view utf8);

void validate_utf8(std::string_view utf8);

std::string normalize(std::string_view text, const NormalizationPolicy& policy);

// Normalized text plus, for each normalized code point, the half-open range
// of raw code points it came from.
struct NormalizedText {
  std::string text;
  std::vector<size_t> raw_begin;
  std::vector<size_t> raw_end;
};

NormalizedText normalize_with_offsets(std::string_view text, const NormalizationPolicy& policy);

// Stride-1 windows of n code points, in order. Empty when the text is shorter than n.
std::vector<std::string> extract_ngrams(std::string_view text, size_t n);

std::string to_lower(std::string_view text);

// Splits on Unicode whitespace; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

size_t count_whitespace_tokens(std::string_view text);

}  // namespace quipforge
