#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quipforge {

struct RougeLScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  uint64_t lcs_length = 0;
};

// Lowercase, then split on whitespace.
std::vector<std::string> rouge_tokenize(std::string_view text);

uint64_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// recall_weight_beta = 1 gives plain F1; other values give the weighted
// F = (1 + b^2) P R / (R + b^2 P).
RougeLScore rouge_l(std::string_view hypothesis, std::string_view reference,
                    double recall_weight_beta = 1.0);
RougeLScore rouge_l_tokens(std::span<const std::string> hyp, std::span<const std::string> ref,
                           double recall_weight_beta = 1.0);

struct LengthStats {
  double mean = 0.0;
  uint64_t median = 0;  // lower middle for even counts
  uint64_t p95 = 0;     // nearest rank
};

// Throws Error(empty_input) when empty.
LengthStats length_stats(std::span<const uint64_t> lengths);

}  // namespace quipforge
