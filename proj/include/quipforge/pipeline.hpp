#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quipforge/scorer.hpp"
#include "quipforge/sketch.hpp"
#include "quipforge/synthesizer.hpp"

namespace quipforge {

enum class CorpusFormat { automatic, text, jsonl };

CorpusFormat resolve_format(CorpusFormat format, const std::string& path);

// Streams documents from newline-delimited text (one document per non-empty
// line) or JSONL (string field "text"). Never holds more than one line.
class CorpusReader {
 public:
  CorpusReader(std::vector<std::string> paths, CorpusFormat format);

  // False at end of input. Throws Error(io) / Error(invalid_input).
  bool next(std::string& document);

 private:
  bool open_next_file();

  std::vector<std::string> paths_;
  CorpusFormat format_;
  size_t file_index_ = 0;
  CorpusFormat current_format_ = CorpusFormat::text;
  std::unique_ptr<std::istream> in_;
  std::string current_path_;
  uint64_t line_no_ = 0;
};

struct BuildOptions {
  uint32_t n = 25;
  std::optional<uint64_t> num_bits;
  double fpr = 1e-3;
  std::optional<uint32_t> num_hashes;
  NormalizationPolicy normalization;
  uint32_t stride = 1;
  uint32_t shards = 1;
  uint32_t threads = 0;
  CorpusFormat format = CorpusFormat::automatic;
};

struct BuildResult {
  NgramSketch sketch;
  CorpusStats stats;
};

BuildResult build_sketch(const std::vector<std::string>& paths, const BuildOptions& options);

// Runs fn(i) for i in [0, count) on up to `threads` workers (0 = hardware).
void parallel_for(size_t count, uint32_t threads, const std::function<void(size_t)>& fn);

uint32_t resolve_threads(uint32_t threads);

struct ScoreSummary {
  uint64_t records = 0;
  uint64_t degenerate = 0;
  double macro = 0.0;
  double micro = 0.0;
};

// Input {id, text} per line; output {id, score, total_grams, matched_grams,
// [degenerate], [spans]}. Output is written to a temporary file and renamed,
// so nothing is left behind on failure.
ScoreSummary score_jsonl(const NgramSketch& sketch, const std::string& in_path,
                         const std::string& out_path, bool with_spans, uint32_t threads);

nlohmann::json spans_json(const std::vector<QuotedSpan>& spans);

// Parses one {prompt_id, prompt, responses: [{response_id, text, len?}]} record.
PromptResponses parse_prompt_record(const nlohmann::json& record);

// Fills quip (degenerate texts score 0) and missing lengths.
void score_responses(const NgramSketch& sketch, PromptResponses& prompt);

nlohmann::json pair_to_json(const PreferencePair& pair);
nlohmann::json synth_stats_json(const SynthStats& stats, const SynthConfig& config,
                                std::span<const PreferencePair> pairs);

// Returns the stats summary.
nlohmann::json pairs_jsonl(const NgramSketch& sketch, const std::string& in_path,
                           const std::string& out_path, const SynthConfig& config,
                           uint32_t threads);

nlohmann::json make_pairs(const NgramSketch& sketch, const nlohmann::json& prompts,
                          const SynthConfig& config);

nlohmann::json rerank_jsonl(const NgramSketch& sketch, const std::string& in_path,
                            const std::string& out_path, uint32_t threads);

nlohmann::json dpo_metrics_jsonl(const std::string& in_path, double beta);

nlohmann::json rouge_jsonl(const std::string& in_path, const std::string& out_path,
                           double recall_weight_beta);

}  // namespace quipforge
