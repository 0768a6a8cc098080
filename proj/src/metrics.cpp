#include "quipforge/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "quipforge/error.hpp"
#include "quipforge/text.hpp"

namespace quipforge {

std::vector<std::string> rouge_tokenize(std::string_view text) {
  return split_whitespace(to_lower(text));
}

uint64_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<uint64_t> prev(b.size() + 1, 0);
  std::vector<uint64_t> cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeLScore rouge_l_tokens(std::span<const std::string> hyp, std::span<const std::string> ref,
                           double recall_weight_beta) {
  RougeLScore s;
  if (hyp.empty() || ref.empty()) return s;
  s.lcs_length = lcs_length(hyp, ref);
  if (s.lcs_length == 0) return s;
  const double lcs = static_cast<double>(s.lcs_length);
  s.precision = lcs / static_cast<double>(hyp.size());
  s.recall = lcs / static_cast<double>(ref.size());
  if (recall_weight_beta == 1.0) {
    // Same value as 2PR/(P+R), without the intermediate rounding.
    s.f1 = 2.0 * lcs / static_cast<double>(hyp.size() + ref.size());
  } else {
    const double b2 = recall_weight_beta * recall_weight_beta;
    s.f1 = (1.0 + b2) * s.precision * s.recall / (s.recall + b2 * s.precision);
  }
  return s;
}

RougeLScore rouge_l(std::string_view hypothesis, std::string_view reference,
                    double recall_weight_beta) {
  if (!(recall_weight_beta > 0.0) || !std::isfinite(recall_weight_beta)) {
    throw Error(ErrorCode::invalid_argument, "rouge beta must be a positive finite number");
  }
  const auto hyp = rouge_tokenize(hypothesis);
  const auto ref = rouge_tokenize(reference);
  return rouge_l_tokens(hyp, ref, recall_weight_beta);
}

LengthStats length_stats(std::span<const uint64_t> lengths) {
  if (lengths.empty()) throw Error(ErrorCode::empty_input, "no lengths");
  std::vector<uint64_t> sorted(lengths.begin(), lengths.end());
  std::sort(sorted.begin(), sorted.end());
  LengthStats s;
  long double sum = 0;
  for (uint64_t v : sorted) sum += v;
  s.mean = static_cast<double>(sum / static_cast<long double>(sorted.size()));
  s.median = sorted[(sorted.size() - 1) / 2];
  const size_t rank = (95 * sorted.size() + 99) / 100;  // ceil(0.95 N), exact
  s.p95 = sorted[std::max<size_t>(rank, 1) - 1];
  return s;
}

}  // namespace quipforge
