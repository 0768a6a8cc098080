#include "quipforge/synthesizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "quipforge/error.hpp"
#include "quipforge/text.hpp"

namespace quipforge {

void SynthConfig::validate() const {
  if (!(delta_quip > 0.0) || !std::isfinite(delta_quip)) {
    throw Error(ErrorCode::invalid_argument, "delta_quip must be > 0");
  }
  if (!(delta_length > 0.0 && delta_length < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "delta_length must be in (0, 1)");
  }
}

uint64_t default_length(std::string_view text) { return count_whitespace_tokens(text); }

double length_ratio(uint64_t a, uint64_t b) {
  const uint64_t lo = std::min(a, b);
  const uint64_t hi = std::max(a, b);
  if (lo == 0) return hi == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return static_cast<double>(hi - lo) / static_cast<double>(lo);
}

bool satisfies_quip_constraint(double quip_w, double quip_l, double delta_quip) {
  return quip_w - quip_l > delta_quip;
}

bool satisfies_length_constraint(uint64_t len_w, uint64_t len_l, double delta_length) {
  return length_ratio(len_w, len_l) < delta_length;
}

std::vector<SampledResponse> sort_by_quip(std::span<const SampledResponse> responses) {
  for (const auto& r : responses) {
    if (!r.quip) throw Error(ErrorCode::contract, "response '" + r.response_id + "' is unscored");
    if (!(*r.quip >= 0.0 && *r.quip <= 1.0)) {
      throw Error(ErrorCode::contract, "response '" + r.response_id + "' has quip outside [0, 1]");
    }
  }
  std::vector<SampledResponse> sorted(responses.begin(), responses.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SampledResponse& a, const SampledResponse& b) { return *a.quip > *b.quip; });
  return sorted;
}

std::optional<PreferencePair> select_pair(std::span<const SampledResponse> sorted,
                                          const SynthConfig& config) {
  const size_t t = sorted.size();
  for (size_t w = 0; w + 1 < t; ++w) {
    for (size_t l = w + 1; l < t; ++l) {
      const SampledResponse& yw = sorted[w];
      const SampledResponse& yl = sorted[l];
      if (!yw.quip || !yl.quip) throw Error(ErrorCode::contract, "unscored response");
      if (!satisfies_quip_constraint(*yw.quip, *yl.quip, config.delta_quip)) continue;
      if (config.enforce_length &&
          !satisfies_length_constraint(yw.length, yl.length, config.delta_length)) {
        continue;
      }
      PreferencePair p;
      p.preferred = yw;
      p.dispreferred = yl;
      p.quip_gap = *yw.quip - *yl.quip;
      p.length_ratio = length_ratio(yw.length, yl.length);
      p.preferred_rank = w;
      p.dispreferred_rank = l;
      return p;
    }
  }
  return std::nullopt;
}

SynthOutput synthesize_dataset(std::span<const PromptResponses> prompts, const SynthConfig& config) {
  config.validate();
  std::unordered_set<std::string> seen;
  for (const auto& p : prompts) {
    if (!seen.insert(p.prompt_id).second) {
      throw Error(ErrorCode::invalid_input, "duplicate prompt_id '" + p.prompt_id + "'");
    }
  }
  SynthOutput out;
  out.stats.prompts_in = prompts.size();
  for (const auto& p : prompts) {
    if (p.responses.size() < 2) {
      ++out.stats.discarded_too_few_responses;
      continue;
    }
    const std::vector<SampledResponse> sorted = sort_by_quip(p.responses);
    std::optional<PreferencePair> pair = select_pair(sorted, config);
    if (!pair) {
      ++out.stats.discarded_no_pair;
      continue;
    }
    pair->prompt_id = p.prompt_id;
    pair->prompt = p.prompt;
    out.pairs.push_back(std::move(*pair));
  }
  out.stats.pairs_out = out.pairs.size();
  return out;
}

size_t rerank_best_of_n(std::span<const SampledResponse> responses) {
  if (responses.empty()) throw Error(ErrorCode::empty_input, "no responses to rerank");
  size_t best = 0;
  for (size_t i = 0; i < responses.size(); ++i) {
    if (!responses[i].quip) {
      throw Error(ErrorCode::contract, "response '" + responses[i].response_id + "' is unscored");
    }
    if (*responses[i].quip > *responses[best].quip) best = i;
  }
  return best;
}

}  // namespace quipforge
