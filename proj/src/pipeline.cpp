#include "quipforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "quipforge/dpo.hpp"
#include "quipforge/error.hpp"
#include "quipforge/metrics.hpp"

namespace quipforge {

using nlohmann::json;

namespace {

constexpr size_t kBatchRecords = 4096;

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

class JsonlReader {
 public:
  explicit JsonlReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw Error(ErrorCode::io, "cannot open " + path);
  }

  bool next(json& record) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (is_blank(line)) continue;
      try {
        record = json::parse(line);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::invalid_input, where() + ": " + e.what());
      }
      if (!record.is_object()) throw Error(ErrorCode::invalid_input, where() + ": not an object");
      return true;
    }
    if (in_.bad()) throw Error(ErrorCode::io, "read error on " + path_);
    return false;
  }

  std::string where() const { return path_ + ":" + std::to_string(line_no_); }

 private:
  std::string path_;
  std::ifstream in_;
  uint64_t line_no_ = 0;
};

// Writes to <path>.tmp and renames on commit; removes the temporary otherwise.
class AtomicOutput {
 public:
  explicit AtomicOutput(std::string path) : path_(std::move(path)), tmp_(path_ + ".tmp") {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::io, "cannot open " + tmp_ + " for writing");
  }
  AtomicOutput(const AtomicOutput&) = delete;
  AtomicOutput& operator=(const AtomicOutput&) = delete;
  ~AtomicOutput() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

  std::ofstream& stream() { return out_; }

  void commit() {
    out_.close();
    if (!out_) throw Error(ErrorCode::io, "failed writing " + tmp_);
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw Error(ErrorCode::io, "cannot rename " + tmp_ + ": " + ec.message());
    committed_ = true;
  }

 private:
  std::string path_;
  std::string tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

const json& require(const json& record, const char* field, const std::string& where) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw Error(ErrorCode::invalid_input, where + ": missing field '" + field + "'");
  }
  return *it;
}

std::string require_string(const json& record, const char* field, const std::string& where) {
  const json& v = require(record, field, where);
  if (!v.is_string()) {
    throw Error(ErrorCode::invalid_input, where + ": field '" + std::string(field) + "' must be a string");
  }
  return v.get<std::string>();
}

// Accepts string or numeric ids.
std::string id_string(const json& v, const char* field, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.dump();
  throw Error(ErrorCode::invalid_input,
              where + ": field '" + std::string(field) + "' must be a string or integer");
}

double require_number(const json& record, const char* field, const std::string& where) {
  const json& v = require(record, field, where);
  if (!v.is_number()) {
    throw Error(ErrorCode::invalid_input, where + ": field '" + std::string(field) + "' must be a number");
  }
  return v.get<double>();
}

uint64_t grams_for(size_t chars, size_t n, size_t stride) {
  return chars < n ? 0 : (chars - n) / stride + 1;
}

// Rethrows the first exception raised by a batch of workers.
class FirstError {
 public:
  void capture() {
    std::lock_guard lock(mu_);
    if (!error_) error_ = std::current_exception();
  }
  void rethrow() {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr error_;
};

json length_summary(const std::vector<uint64_t>& lengths) {
  if (lengths.empty()) return nullptr;
  const LengthStats s = length_stats(lengths);
  return {{"mean", s.mean}, {"median", s.median}, {"p95", s.p95}};
}

}  // namespace

uint32_t resolve_threads(uint32_t threads) {
  if (threads != 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(size_t count, uint32_t threads, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(resolve_threads(threads), count);
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  FirstError error;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          error.capture();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  error.rethrow();
}

CorpusFormat resolve_format(CorpusFormat format, const std::string& path) {
  if (format != CorpusFormat::automatic) return format;
  const std::string ext = std::filesystem::path(path).extension().string();
  return ext == ".jsonl" || ext == ".json" ? CorpusFormat::jsonl : CorpusFormat::text;
}

CorpusReader::CorpusReader(std::vector<std::string> paths, CorpusFormat format)
    : paths_(std::move(paths)), format_(format) {}

bool CorpusReader::open_next_file() {
  if (file_index_ >= paths_.size()) return false;
  current_path_ = paths_[file_index_++];
  auto file = std::make_unique<std::ifstream>(current_path_, std::ios::binary);
  if (!*file) throw Error(ErrorCode::io, "cannot open corpus file " + current_path_);
  in_ = std::move(file);
  current_format_ = resolve_format(format_, current_path_);
  line_no_ = 0;
  return true;
}

bool CorpusReader::next(std::string& document) {
  std::string line;
  for (;;) {
    if (!in_ && !open_next_file()) return false;
    if (!std::getline(*in_, line)) {
      if (in_->bad()) throw Error(ErrorCode::io, "read error on " + current_path_);
      in_.reset();
      continue;
    }
    ++line_no_;
    strip_cr(line);
    if (is_blank(line)) continue;
    if (current_format_ == CorpusFormat::text) {
      document = std::move(line);
      return true;
    }
    const std::string where = current_path_ + ":" + std::to_string(line_no_);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::invalid_input, where + ": " + e.what());
    }
    if (!record.is_object()) throw Error(ErrorCode::invalid_input, where + ": not an object");
    document = require_string(record, "text", where);
    return true;
  }
}

BuildResult build_sketch(const std::vector<std::string>& paths, const BuildOptions& options) {
  if (paths.empty()) throw Error(ErrorCode::invalid_argument, "no corpus files given");
  if (options.stride == 0) throw Error(ErrorCode::invalid_argument, "stride must be >= 1");
  if (options.shards == 0) throw Error(ErrorCode::invalid_argument, "shards must be >= 1");
  if (options.n == 0) throw Error(ErrorCode::invalid_argument, "n must be >= 1");

  SketchConfig config;
  config.n = options.n;
  config.normalization = options.normalization;

  const bool need_count = !options.num_bits || !options.num_hashes;
  uint64_t expected = 0;
  if (need_count) {
    CorpusReader counter(paths, options.format);
    std::string doc;
    while (counter.next(doc)) {
      expected += grams_for(code_point_count(normalize(doc, options.normalization)), options.n,
                            options.stride);
    }
  }
  if (options.num_bits) {
    config.num_bits = *options.num_bits;
    if (options.num_hashes) {
      config.num_hashes = *options.num_hashes;
    } else {
      const double k = std::round(static_cast<double>(config.num_bits) /
                                  static_cast<double>(std::max<uint64_t>(expected, 1)) *
                                  std::log(2.0));
      config.num_hashes = static_cast<uint32_t>(std::clamp(k, 1.0, 64.0));
    }
  } else {
    const BloomSizing sizing = optimal_sizing(expected, options.fpr);
    config.num_bits = sizing.num_bits;
    config.num_hashes = options.num_hashes.value_or(sizing.num_hashes);
  }
  config.validate();

  std::vector<NgramSketch> shards(options.shards, NgramSketch(config));
  CorpusReader reader(paths, options.format);
  uint64_t documents = 0;
  std::vector<std::string> batch;
  batch.reserve(kBatchRecords);
  std::string doc;
  bool more = true;
  while (more) {
    batch.clear();
    while (batch.size() < kBatchRecords && (more = reader.next(doc))) batch.push_back(std::move(doc));
    const uint64_t base = documents;
    // Shard s owns documents whose global index is congruent to s.
    parallel_for(shards.size(), options.threads, [&](size_t s) {
      for (size_t i = 0; i < batch.size(); ++i) {
        if ((base + i) % shards.size() == s) shards[s].insert_document(batch[i], options.stride);
      }
    });
    documents += batch.size();
  }

  if (documents == 0) throw Error(ErrorCode::empty_input, "corpus contains no documents");

  NgramSketch merged = std::move(shards[0]);
  for (size_t s = 1; s < shards.size(); ++s) merged.merge_from(shards[s]);
  CorpusStats stats = merged.stats(documents);
  return {std::move(merged), stats};
}

json spans_json(const std::vector<QuotedSpan>& spans) {
  json out = json::array();
  for (const auto& s : spans) {
    out.push_back({{"start", s.start}, {"end", s.end}, {"max_depth", s.max_depth}});
  }
  return out;
}

ScoreSummary score_jsonl(const NgramSketch& sketch, const std::string& in_path,
                         const std::string& out_path, bool with_spans, uint32_t threads) {
  JsonlReader reader(in_path);
  std::optional<AtomicOutput> out;
  ScoreSummary summary;
  double score_sum = 0.0;
  uint64_t matched = 0;
  uint64_t total = 0;

  struct Item {
    json id;
    std::string text;
    std::string where;
    json result;
  };
  std::vector<Item> batch;
  json record;
  bool more = true;
  while (more) {
    batch.clear();
    while (batch.size() < kBatchRecords && (more = reader.next(record))) {
      Item item;
      item.where = reader.where();
      item.id = require(record, "id", item.where);
      item.text = require_string(record, "text", item.where);
      batch.push_back(std::move(item));
    }
    parallel_for(batch.size(), threads, [&](size_t i) {
      Item& item = batch[i];
      QuipResult r;
      std::vector<QuotedSpan> spans;
      try {
        if (with_spans) {
          spans = annotate(sketch, item.text, &r).spans;
        } else {
          r = quip(sketch, item.text);
        }
      } catch (const Error& e) {
        throw Error(e.code(), item.where + ": " + e.what());
      }
      json j = {{"id", item.id},
                {"score", r.score},
                {"total_grams", r.total_grams},
                {"matched_grams", r.matched_grams}};
      if (r.degenerate) j["degenerate"] = true;
      if (with_spans) j["spans"] = spans_json(spans);
      item.result = std::move(j);
    });
    if (!batch.empty() && !out) out.emplace(out_path);
    for (const Item& item : batch) {
      out->stream() << item.result.dump() << '\n';
      ++summary.records;
      if (item.result.contains("degenerate")) {
        ++summary.degenerate;
      } else {
        score_sum += item.result["score"].get<double>();
      }
      matched += item.result["matched_grams"].get<uint64_t>();
      total += item.result["total_grams"].get<uint64_t>();
    }
  }
  if (summary.records == 0) throw Error(ErrorCode::empty_input, "no records in " + in_path);
  const uint64_t scorable = summary.records - summary.degenerate;
  summary.macro = scorable == 0 ? 0.0 : score_sum / static_cast<double>(scorable);
  summary.micro = total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
  out->commit();
  return summary;
}

PromptResponses parse_prompt_record(const json& record) {
  PromptResponses p;
  p.prompt_id = id_string(require(record, "prompt_id", "record"), "prompt_id", "record");
  const std::string where = "prompt '" + p.prompt_id + "'";
  if (auto it = record.find("prompt"); it != record.end()) {
    if (!it->is_string()) throw Error(ErrorCode::invalid_input, where + ": field 'prompt' must be a string");
    p.prompt = it->get<std::string>();
  }
  const json& responses = require(record, "responses", where);
  if (!responses.is_array()) {
    throw Error(ErrorCode::invalid_input, where + ": field 'responses' must be an array");
  }
  for (size_t i = 0; i < responses.size(); ++i) {
    const json& r = responses[i];
    const std::string rwhere = where + " responses[" + std::to_string(i) + "]";
    if (!r.is_object()) throw Error(ErrorCode::invalid_input, rwhere + ": not an object");
    SampledResponse s;
    if (auto it = r.find("response_id"); it != r.end()) {
      s.response_id = id_string(*it, "response_id", rwhere);
    } else {
      s.response_id = std::to_string(i);
    }
    s.text = require_string(r, "text", rwhere);
    if (auto it = r.find("len"); it != r.end() && !it->is_null()) {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<int64_t>() >= 0)) {
        throw Error(ErrorCode::invalid_input, rwhere + ": field 'len' must be a non-negative integer");
      }
      s.length = it->get<uint64_t>();
    } else {
      s.length = default_length(s.text);
    }
    p.responses.push_back(std::move(s));
  }
  return p;
}

void score_responses(const NgramSketch& sketch, PromptResponses& prompt) {
  for (auto& r : prompt.responses) {
    try {
      r.quip = quip(sketch, r.text).score;
    } catch (const Error& e) {
      throw Error(e.code(), "prompt '" + prompt.prompt_id + "' response '" + r.response_id +
                                "': " + e.what());
    }
  }
}

json pair_to_json(const PreferencePair& pair) {
  return {{"prompt_id", pair.prompt_id},
          {"prompt", pair.prompt},
          {"chosen", pair.preferred.text},
          {"rejected", pair.dispreferred.text},
          {"chosen_id", pair.preferred.response_id},
          {"rejected_id", pair.dispreferred.response_id},
          {"chosen_quip", *pair.preferred.quip},
          {"rejected_quip", *pair.dispreferred.quip},
          {"quip_gap", pair.quip_gap},
          {"length_ratio", pair.length_ratio}};
}

json synth_stats_json(const SynthStats& stats, const SynthConfig& config,
                      std::span<const PreferencePair> pairs) {
  std::vector<uint64_t> chosen_len;
  std::vector<uint64_t> rejected_len;
  double chosen_quip = 0.0;
  double rejected_quip = 0.0;
  for (const auto& p : pairs) {
    chosen_len.push_back(p.preferred.length);
    rejected_len.push_back(p.dispreferred.length);
    chosen_quip += *p.preferred.quip;
    rejected_quip += *p.dispreferred.quip;
  }
  const double count = pairs.empty() ? 1.0 : static_cast<double>(pairs.size());
  return {{"prompts_in", stats.prompts_in},
          {"pairs_out", stats.pairs_out},
          {"discarded",
           {{"no_pair", stats.discarded_no_pair},
            {"too_few_responses", stats.discarded_too_few_responses}}},
          {"config",
           {{"delta_quip", config.delta_quip},
            {"delta_length", config.delta_length},
            {"enforce_length", config.enforce_length}}},
          {"chosen_length", length_summary(chosen_len)},
          {"rejected_length", length_summary(rejected_len)},
          {"mean_chosen_quip", chosen_quip / count},
          {"mean_rejected_quip", rejected_quip / count}};
}

json pairs_jsonl(const NgramSketch& sketch, const std::string& in_path,
                 const std::string& out_path, const SynthConfig& config, uint32_t threads) {
  config.validate();
  JsonlReader reader(in_path);
  AtomicOutput out(out_path);
  std::unordered_set<std::string> seen;
  SynthStats stats;
  std::vector<PreferencePair> all_pairs;

  std::vector<PromptResponses> batch;
  std::vector<std::optional<PreferencePair>> selected;
  json record;
  bool more = true;
  while (more) {
    batch.clear();
    while (batch.size() < kBatchRecords && (more = reader.next(record))) {
      PromptResponses p;
      try {
        p = parse_prompt_record(record);
      } catch (const Error& e) {
        throw Error(e.code(), reader.where() + ": " + e.what());
      }
      if (!seen.insert(p.prompt_id).second) {
        throw Error(ErrorCode::invalid_input,
                    reader.where() + ": duplicate prompt_id '" + p.prompt_id + "'");
      }
      batch.push_back(std::move(p));
    }
    selected.assign(batch.size(), std::nullopt);
    parallel_for(batch.size(), threads, [&](size_t i) {
      if (batch[i].responses.size() < 2) return;
      score_responses(sketch, batch[i]);
      selected[i] = select_pair(sort_by_quip(batch[i].responses), config);
    });
    for (size_t i = 0; i < batch.size(); ++i) {
      ++stats.prompts_in;
      if (batch[i].responses.size() < 2) {
        ++stats.discarded_too_few_responses;
        continue;
      }
      if (!selected[i]) {
        ++stats.discarded_no_pair;
        continue;
      }
      PreferencePair& p = *selected[i];
      p.prompt_id = batch[i].prompt_id;
      p.prompt = batch[i].prompt;
      out.stream() << pair_to_json(p).dump() << '\n';
      ++stats.pairs_out;
      // Keep only what the summary needs.
      p.preferred.text.clear();
      p.dispreferred.text.clear();
      p.prompt.clear();
      all_pairs.push_back(std::move(p));
    }
  }
  if (stats.prompts_in == 0) throw Error(ErrorCode::empty_input, "no records in " + in_path);
  out.commit();
  return synth_stats_json(stats, config, all_pairs);
}

json make_pairs(const NgramSketch& sketch, const json& prompts, const SynthConfig& config) {
  if (!prompts.is_array()) throw Error(ErrorCode::invalid_input, "prompts payload must be an array");
  std::vector<PromptResponses> parsed;
  parsed.reserve(prompts.size());
  for (const json& record : prompts) {
    if (!record.is_object()) throw Error(ErrorCode::invalid_input, "prompt record must be an object");
    parsed.push_back(parse_prompt_record(record));
  }
  for (auto& p : parsed) {
    if (p.responses.size() >= 2) score_responses(sketch, p);
  }
  const SynthOutput result = synthesize_dataset(parsed, config);
  json pairs = json::array();
  for (const auto& p : result.pairs) pairs.push_back(pair_to_json(p));
  return {{"pairs", pairs}, {"stats", synth_stats_json(result.stats, config, result.pairs)}};
}

json rerank_jsonl(const NgramSketch& sketch, const std::string& in_path,
                  const std::string& out_path, uint32_t threads) {
  JsonlReader reader(in_path);
  AtomicOutput out(out_path);
  uint64_t prompts = 0;
  uint64_t skipped = 0;
  double best_sum = 0.0;
  std::vector<PromptResponses> batch;
  json record;
  bool more = true;
  while (more) {
    batch.clear();
    while (batch.size() < kBatchRecords && (more = reader.next(record))) {
      try {
        batch.push_back(parse_prompt_record(record));
      } catch (const Error& e) {
        throw Error(e.code(), reader.where() + ": " + e.what());
      }
    }
    parallel_for(batch.size(), threads, [&](size_t i) { score_responses(sketch, batch[i]); });
    for (const auto& p : batch) {
      ++prompts;
      if (p.responses.empty()) {
        ++skipped;
        continue;
      }
      const SampledResponse& best = p.responses[rerank_best_of_n(p.responses)];
      best_sum += *best.quip;
      const json j = {{"prompt_id", p.prompt_id},
                      {"prompt", p.prompt},
                      {"response_id", best.response_id},
                      {"text", best.text},
                      {"quip", *best.quip}};
      out.stream() << j.dump() << '\n';
    }
  }
  if (prompts == 0) throw Error(ErrorCode::empty_input, "no records in " + in_path);
  out.commit();
  const uint64_t kept = prompts - skipped;
  return {{"prompts_in", prompts},
          {"selected", kept},
          {"skipped_empty", skipped},
          {"mean_selected_quip", kept == 0 ? 0.0 : best_sum / static_cast<double>(kept)}};
}

json dpo_metrics_jsonl(const std::string& in_path, double beta) {
  JsonlReader reader(in_path);
  std::vector<double> margins;
  double loss_sum = 0.0;
  uint64_t correct = 0;
  json record;
  while (reader.next(record)) {
    const std::string where = reader.where();
    DpoExample ex;
    ex.logp_theta_w = require_number(record, "logp_theta_w", where);
    ex.logp_ref_w = require_number(record, "logp_ref_w", where);
    ex.logp_theta_l = require_number(record, "logp_theta_l", where);
    ex.logp_ref_l = require_number(record, "logp_ref_l", where);
    ex.beta = beta;
    double m = 0.0;
    try {
      m = margin(ex);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
    margins.push_back(m);
    loss_sum += softplus(-m);
    correct += m > 0.0 ? 1 : 0;
  }
  if (margins.empty()) throw Error(ErrorCode::empty_input, "no records in " + in_path);
  const double count = static_cast<double>(margins.size());
  double margin_sum = 0.0;
  for (double m : margins) margin_sum += m;
  const MarginHistogram h = margin_histogram(margins);
  return {{"count", margins.size()},
          {"beta", beta},
          {"mean_loss", loss_sum / count},
          {"reward_accuracy", static_cast<double>(correct) / count},
          {"mean_margin", margin_sum / count},
          {"margin_histogram", {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}}};
}

json rouge_jsonl(const std::string& in_path, const std::string& out_path,
                 double recall_weight_beta) {
  JsonlReader reader(in_path);
  AtomicOutput out(out_path);
  uint64_t count = 0;
  double p_sum = 0.0;
  double r_sum = 0.0;
  double f_sum = 0.0;
  json record;
  while (reader.next(record)) {
    const std::string where = reader.where();
    const json id = require(record, "id", where);
    RougeLScore s;
    try {
      s = rouge_l(require_string(record, "hypothesis", where),
                  require_string(record, "reference", where), recall_weight_beta);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
    const json j = {{"id", id},
                    {"precision", s.precision},
                    {"recall", s.recall},
                    {"f1", s.f1},
                    {"lcs_length", s.lcs_length}};
    out.stream() << j.dump() << '\n';
    ++count;
    p_sum += s.precision;
    r_sum += s.recall;
    f_sum += s.f1;
  }
  if (count == 0) throw Error(ErrorCode::empty_input, "no records in " + in_path);
  out.commit();
  const double c = static_cast<double>(count);
  return {{"count", count},
          {"mean_precision", p_sum / c},
          {"mean_recall", r_sum / c},
          {"mean_f1", f_sum / c},
          {"tokenization", "lowercase+whitespace"},
          {"f_beta", recall_weight_beta}};
}

}  // namespace quipforge
