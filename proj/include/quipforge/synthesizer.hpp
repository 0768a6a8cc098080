#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace quipforge {

struct SampledResponse {
  std::string response_id;
  std::string text;
  uint64_t length = 0;          // tokenized length
  std::optional<double> quip;   // filled by scoring
};

struct SynthConfig {
  double delta_quip = 0.1;
  double delta_length = 0.1;
  bool enforce_length = true;
  std::optional<uint32_t> num_samples_expected;

  // Throws Error(invalid_argument) unless delta_quip > 0 and 0 < delta_length < 1.
  void validate() const;
};

struct PreferencePair {
  std::string prompt_id;
  std::string prompt;
  SampledResponse preferred;
  SampledResponse dispreferred;
  double quip_gap = 0.0;
  double length_ratio = 0.0;
  // Positions in the sorted response list.
  size_t preferred_rank = 0;
  size_t dispreferred_rank = 0;
};

struct PromptResponses {
  std::string prompt_id;
  std::string prompt;
  std::vector<SampledResponse> responses;
};

struct SynthStats {
  uint64_t prompts_in = 0;
  uint64_t pairs_out = 0;
  uint64_t discarded_no_pair = 0;
  uint64_t discarded_too_few_responses = 0;
};

// Whitespace token count of the raw text.
uint64_t default_length(std::string_view text);

// |a - b| / min(a, b). Zero when both are zero, +inf when only one is.
double length_ratio(uint64_t a, uint64_t b);

bool satisfies_quip_constraint(double quip_w, double quip_l, double delta_quip);
bool satisfies_length_constraint(uint64_t len_w, uint64_t len_l, double delta_length);

// Stable sort by decreasing quip. Throws Error(contract) on an unscored response.
std::vector<SampledResponse> sort_by_quip(std::span<const SampledResponse> responses);

// First (w, l) in lexicographic order with w < l satisfying the constraints.
// `sorted` must be non-increasing by quip.
std::optional<PreferencePair> select_pair(std::span<const SampledResponse> sorted,
                                          const SynthConfig& config);

struct SynthOutput {
  std::vector<PreferencePair> pairs;
  SynthStats stats;
};

// At most one pair per prompt, in input order. Throws Error(invalid_input) on
// a duplicate prompt_id. Every response must already carry a quip.
SynthOutput synthesize_dataset(std::span<const PromptResponses> prompts, const SynthConfig& config);

// argmax by quip, lowest index on ties. Throws Error(empty_input) when empty.
size_t rerank_best_of_n(std::span<const SampledResponse> responses);

}  // namespace quipforge
