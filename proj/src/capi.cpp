#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "quipforge/dpo.hpp"
#include "quipforge/error.hpp"
#include "quipforge/metrics.hpp"
#include "quipforge/pipeline.hpp"
#include "quipforge/quipforge.h"
#include "quipforge/scorer.hpp"
#include "quipforge/sketch.hpp"

#ifndef QUIPFORGE_VERSION
#define QUIPFORGE_VERSION "0.0.0"
#endif

using namespace quipforge;
using nlohmann::json;

struct qf_sketch {
  NgramSketch sketch;
};

namespace {

thread_local std::string g_last_error;

qf_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return QF_ERR_INVALID_ARGUMENT;
    case ErrorCode::decode: return QF_ERR_DECODE;
    case ErrorCode::invalid_input: return QF_ERR_INVALID_INPUT;
    case ErrorCode::empty_input: return QF_ERR_EMPTY_INPUT;
    case ErrorCode::io: return QF_ERR_IO;
    case ErrorCode::format: return QF_ERR_FORMAT;
    case ErrorCode::version: return QF_ERR_VERSION;
    case ErrorCode::truncated: return QF_ERR_TRUNCATED;
    case ErrorCode::checksum: return QF_ERR_CHECKSUM;
    case ErrorCode::unknown_hash: return QF_ERR_UNKNOWN_HASH;
    case ErrorCode::config_mismatch: return QF_ERR_CONFIG_MISMATCH;
    case ErrorCode::contract: return QF_ERR_CONTRACT;
    case ErrorCode::numeric: return QF_ERR_NUMERIC;
  }
  return QF_ERR_INTERNAL;
}

qf_status fail(qf_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
qf_status guarded(Fn&& fn) {
  try {
    fn();
    return QF_OK;
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(QF_ERR_INVALID_INPUT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(QF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(QF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(QF_ERR_INTERNAL, "unknown error");
  }
}

#define QF_REQUIRE(cond, what)                                      \
  do {                                                              \
    if (!(cond)) return fail(QF_ERR_INVALID_ARGUMENT, what);        \
  } while (0)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

std::string_view view(const char* text, size_t len) {
  return text == nullptr ? std::string_view() : std::string_view(text, len);
}

SketchConfig from_c(const qf_sketch_config& c) {
  SketchConfig config;
  config.n = c.n;
  config.num_bits = c.num_bits;
  config.num_hashes = c.num_hashes;
  config.hash_scheme_id = c.hash_scheme_id;
  config.normalization = NormalizationPolicy::from_flags(c.normalization_flags);
  return config;
}

qf_sketch_config to_c(const SketchConfig& config) {
  return {config.n, config.num_bits, config.num_hashes, config.hash_scheme_id,
          config.normalization.flags()};
}

SynthConfig from_c(const qf_synth_config* c) {
  SynthConfig config;
  if (c != nullptr) {
    config.delta_quip = c->delta_quip;
    config.delta_length = c->delta_length;
    config.enforce_length = c->enforce_length != 0;
  }
  config.validate();
  return config;
}

DpoExample from_c(const qf_dpo_example& c) {
  return {c.logp_theta_w, c.logp_ref_w, c.logp_theta_l, c.logp_ref_l, c.beta};
}

qf_quip_result to_c(const QuipResult& r) {
  return {r.score, r.total_grams, r.matched_grams, r.degenerate ? 1 : 0, QF_OK};
}

}  // namespace

extern "C" {

const char* qf_version(void) { return QUIPFORGE_VERSION; }

const char* qf_last_error(void) { return g_last_error.c_str(); }

const char* qf_status_name(qf_status status) {
  switch (status) {
    case QF_OK: return "ok";
    case QF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case QF_ERR_DECODE: return "decode";
    case QF_ERR_INVALID_INPUT: return "invalid_input";
    case QF_ERR_EMPTY_INPUT: return "empty_input";
    case QF_ERR_IO: return "io";
    case QF_ERR_FORMAT: return "format";
    case QF_ERR_VERSION: return "version";
    case QF_ERR_TRUNCATED: return "truncated";
    case QF_ERR_CHECKSUM: return "checksum";
    case QF_ERR_UNKNOWN_HASH: return "unknown_hash";
    case QF_ERR_CONFIG_MISMATCH: return "config_mismatch";
    case QF_ERR_CONTRACT: return "contract";
    case QF_ERR_NUMERIC: return "numeric";
    case QF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void qf_string_free(char* s) { std::free(s); }

void qf_sketch_config_default(qf_sketch_config* config) {
  if (config == nullptr) return;
  *config = to_c(SketchConfig{});
  config->normalization_flags = QF_NORM_DEFAULT;
}

void qf_build_options_default(qf_build_options* options) {
  if (options == nullptr) return;
  *options = {};
  options->n = QF_DEFAULT_N;
  options->fpr = QF_DEFAULT_FPR;
  options->normalization_flags = QF_NORM_DEFAULT;
  options->stride = 1;
  options->shards = 1;
  options->format = QF_CORPUS_AUTO;
}

void qf_synth_config_default(qf_synth_config* config) {
  if (config == nullptr) return;
  const SynthConfig defaults;
  config->delta_quip = defaults.delta_quip;
  config->delta_length = defaults.delta_length;
  config->enforce_length = defaults.enforce_length ? 1 : 0;
}

qf_status qf_sketch_size_for(uint64_t expected_grams, double fpr, uint64_t* num_bits,
                             uint32_t* num_hashes) {
  QF_REQUIRE(num_bits != nullptr && num_hashes != nullptr, "null output pointer");
  return guarded([&] {
    const BloomSizing s = optimal_sizing(expected_grams, fpr);
    *num_bits = s.num_bits;
    *num_hashes = s.num_hashes;
  });
}

qf_status qf_sketch_create(const qf_sketch_config* config, qf_sketch** out) {
  QF_REQUIRE(config != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new qf_sketch{NgramSketch(from_c(*config))}; });
}

void qf_sketch_free(qf_sketch* sketch) { delete sketch; }

qf_status qf_sketch_insert(qf_sketch* sketch, const char* text, size_t len, uint32_t stride,
                           uint64_t* grams_inserted) {
  QF_REQUIRE(sketch != nullptr && (text != nullptr || len == 0), "null argument");
  return guarded([&] {
    const uint64_t n = sketch->sketch.insert_document(view(text, len), stride == 0 ? 1 : stride);
    if (grams_inserted != nullptr) *grams_inserted = n;
  });
}

qf_status qf_sketch_contains(const qf_sketch* sketch, const char* gram, size_t len, int* out) {
  QF_REQUIRE(sketch != nullptr && out != nullptr && (gram != nullptr || len == 0), "null argument");
  return guarded([&] { *out = sketch->sketch.contains(view(gram, len)) ? 1 : 0; });
}

qf_status qf_sketch_merge(qf_sketch* into, const qf_sketch* other) {
  QF_REQUIRE(into != nullptr && other != nullptr, "null argument");
  return guarded([&] { into->sketch.merge_from(other->sketch); });
}

qf_status qf_sketch_save(const qf_sketch* sketch, const char* path) {
  QF_REQUIRE(sketch != nullptr && path != nullptr, "null argument");
  return guarded([&] { sketch->sketch.save(std::string(path)); });
}

qf_status qf_sketch_load(const char* path, qf_sketch** out) {
  QF_REQUIRE(path != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new qf_sketch{NgramSketch::load(std::string(path))}; });
}

qf_status qf_sketch_info_get(const qf_sketch* sketch, qf_sketch_info* out) {
  QF_REQUIRE(sketch != nullptr && out != nullptr, "null argument");
  return guarded([&] {
    const NgramSketch& s = sketch->sketch;
    out->config = to_c(s.config());
    out->format_version = NgramSketch::kFormatVersion;
    out->inserted_count = s.inserted_count();
    out->set_bits = s.set_bits();
    out->set_bit_fraction = s.set_bit_fraction();
    out->estimated_fpr = s.estimated_fpr();
  });
}

qf_status qf_normalize(const char* text, size_t len, uint32_t flags, char** out) {
  QF_REQUIRE(out != nullptr && (text != nullptr || len == 0), "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = dup_string(normalize(view(text, len), NormalizationPolicy::from_flags(flags)));
  });
}

qf_status qf_build_from_files(const char* const* paths, size_t num_paths,
                              const qf_build_options* options, qf_sketch** out,
                              qf_corpus_stats* stats) {
  QF_REQUIRE(paths != nullptr && options != nullptr && out != nullptr, "null argument");
  *out = nullptr;
  return guarded([&] {
    std::vector<std::string> files;
    for (size_t i = 0; i < num_paths; ++i) {
      if (paths[i] == nullptr) throw Error(ErrorCode::invalid_argument, "null corpus path");
      files.emplace_back(paths[i]);
    }
    BuildOptions opts;
    opts.n = options->n == 0 ? QF_DEFAULT_N : options->n;
    if (options->num_bits != 0) {
      opts.num_bits = options->num_bits;
    } else {
      opts.fpr = options->fpr > 0.0 ? options->fpr : QF_DEFAULT_FPR;
    }
    if (options->num_hashes != 0) opts.num_hashes = options->num_hashes;
    opts.normalization = NormalizationPolicy::from_flags(options->normalization_flags);
    opts.stride = options->stride == 0 ? 1 : options->stride;
    opts.shards = options->shards == 0 ? 1 : options->shards;
    opts.threads = options->threads;
    switch (options->format) {
      case QF_CORPUS_TEXT: opts.format = CorpusFormat::text; break;
      case QF_CORPUS_JSONL: opts.format = CorpusFormat::jsonl; break;
      default: opts.format = CorpusFormat::automatic; break;
    }
    BuildResult result = build_sketch(files, opts);
    if (stats != nullptr) {
      *stats = {result.stats.documents_ingested, result.stats.ngrams_inserted,
                result.stats.set_bit_fraction, result.stats.estimated_fpr};
    }
    *out = new qf_sketch{std::move(result.sketch)};
  });
}

qf_status qf_quip(const qf_sketch* sketch, const char* text, size_t len, qf_quip_result* out) {
  QF_REQUIRE(sketch != nullptr && out != nullptr && (text != nullptr || len == 0), "null argument");
  return guarded([&] { *out = to_c(quip(sketch->sketch, view(text, len))); });
}

qf_status qf_score_batch(const qf_sketch* sketch, const char* const* texts, const size_t* lens,
                         size_t count, uint32_t threads, qf_quip_result* results) {
  QF_REQUIRE(sketch != nullptr && (count == 0 || (texts != nullptr && lens != nullptr &&
                                                  results != nullptr)),
             "null argument");
  return guarded([&] {
    parallel_for(count, threads, [&](size_t i) {
      try {
        if (texts[i] == nullptr && lens[i] != 0) {
          throw Error(ErrorCode::invalid_argument, "null text");
        }
        results[i] = to_c(quip(sketch->sketch, view(texts[i], lens[i])));
      } catch (const Error& e) {
        results[i] = {0.0, 0, 0, 0, to_status(e.code())};
      }
    });
  });
}

qf_status qf_annotate_json(const qf_sketch* sketch, const char* text, size_t len, char** out_json) {
  QF_REQUIRE(sketch != nullptr && out_json != nullptr && (text != nullptr || len == 0),
             "null argument");
  *out_json = nullptr;
  return guarded([&] {
    *out_json = dup_string(annotation_to_json(annotate(sketch->sketch, view(text, len))));
  });
}

qf_status qf_highlight(const qf_sketch* sketch, const char* text, size_t len,
                       qf_render_format format, char** out) {
  QF_REQUIRE(sketch != nullptr && out != nullptr && (text != nullptr || len == 0), "null argument");
  *out = nullptr;
  return guarded([&] {
    RenderFormat f = RenderFormat::tty;
    switch (format) {
      case QF_RENDER_TTY: f = RenderFormat::tty; break;
      case QF_RENDER_HTML: f = RenderFormat::html; break;
      case QF_RENDER_JSON: f = RenderFormat::json; break;
      default: throw Error(ErrorCode::invalid_argument, "unknown render format");
    }
    const QuipAnnotation a = annotate(sketch->sketch, view(text, len));
    *out = dup_string(render_annotation(a, a.normalized_text, f));
  });
}

qf_status qf_score_jsonl(const qf_sketch* sketch, const char* in_path, const char* out_path,
                         const qf_score_options* options, qf_score_summary* summary) {
  QF_REQUIRE(sketch != nullptr && in_path != nullptr && out_path != nullptr, "null argument");
  return guarded([&] {
    const bool spans = options != nullptr && options->with_spans != 0;
    const uint32_t threads = options != nullptr ? options->threads : 0;
    const ScoreSummary s = score_jsonl(sketch->sketch, in_path, out_path, spans, threads);
    if (summary != nullptr) *summary = {s.records, s.degenerate, s.macro, s.micro};
  });
}

qf_status qf_make_pairs_json(const qf_sketch* sketch, const char* prompts_json,
                             const qf_synth_config* config, char** out_json) {
  QF_REQUIRE(sketch != nullptr && prompts_json != nullptr && out_json != nullptr, "null argument");
  *out_json = nullptr;
  return guarded([&] {
    const SynthConfig c = from_c(config);
    const json payload = json::parse(prompts_json);
    *out_json = dup_string(make_pairs(sketch->sketch, payload, c).dump());
  });
}

qf_status qf_pairs_jsonl(const qf_sketch* sketch, const char* in_path, const char* out_path,
                         const qf_synth_config* config, uint32_t threads, char** stats_json) {
  QF_REQUIRE(sketch != nullptr && in_path != nullptr && out_path != nullptr, "null argument");
  if (stats_json != nullptr) *stats_json = nullptr;
  return guarded([&] {
    const json stats = pairs_jsonl(sketch->sketch, in_path, out_path, from_c(config), threads);
    if (stats_json != nullptr) *stats_json = dup_string(stats.dump());
  });
}

qf_status qf_rerank_jsonl(const qf_sketch* sketch, const char* in_path, const char* out_path,
                          uint32_t threads, char** stats_json) {
  QF_REQUIRE(sketch != nullptr && in_path != nullptr && out_path != nullptr, "null argument");
  if (stats_json != nullptr) *stats_json = nullptr;
  return guarded([&] {
    const json stats = rerank_jsonl(sketch->sketch, in_path, out_path, threads);
    if (stats_json != nullptr) *stats_json = dup_string(stats.dump());
  });
}

qf_status qf_dpo_margin(const qf_dpo_example* ex, double* out) {
  QF_REQUIRE(ex != nullptr && out != nullptr, "null argument");
  return guarded([&] { *out = margin(from_c(*ex)); });
}

qf_status qf_dpo_loss(const qf_dpo_example* ex, double* out) {
  QF_REQUIRE(ex != nullptr && out != nullptr, "null argument");
  return guarded([&] { *out = dpo_loss(from_c(*ex)); });
}

qf_status qf_dpo_loss_grad(const qf_dpo_example* ex, qf_dpo_grad* out) {
  QF_REQUIRE(ex != nullptr && out != nullptr, "null argument");
  return guarded([&] {
    const DpoGradient g = dpo_loss_grad(from_c(*ex));
    *out = {g.d_logp_theta_w, g.d_logp_ref_w, g.d_logp_theta_l, g.d_logp_ref_l};
  });
}

qf_status qf_reward_accuracy(const qf_dpo_example* batch, size_t count, double* out) {
  QF_REQUIRE(out != nullptr && (batch != nullptr || count == 0), "null argument");
  return guarded([&] {
    std::vector<DpoExample> examples;
    examples.reserve(count);
    for (size_t i = 0; i < count; ++i) examples.push_back(from_c(batch[i]));
    *out = reward_accuracy(examples);
  });
}

qf_status qf_dpo_metrics_jsonl(const char* in_path, double beta, char** summary_json) {
  QF_REQUIRE(in_path != nullptr && summary_json != nullptr, "null argument");
  *summary_json = nullptr;
  return guarded([&] { *summary_json = dup_string(dpo_metrics_jsonl(in_path, beta).dump()); });
}

qf_status qf_rouge_l(const char* hypothesis, size_t hyp_len, const char* reference, size_t ref_len,
                     qf_rouge_score* out) {
  QF_REQUIRE(out != nullptr && (hypothesis != nullptr || hyp_len == 0) &&
                 (reference != nullptr || ref_len == 0),
             "null argument");
  return guarded([&] {
    const RougeLScore s = rouge_l(view(hypothesis, hyp_len), view(reference, ref_len));
    *out = {s.precision, s.recall, s.f1, s.lcs_length};
  });
}

qf_status qf_rouge_jsonl(const char* in_path, const char* out_path, double recall_weight_beta,
                         char** summary_json) {
  QF_REQUIRE(in_path != nullptr && out_path != nullptr && summary_json != nullptr, "null argument");
  *summary_json = nullptr;
  return guarded([&] {
    *summary_json = dup_string(rouge_jsonl(in_path, out_path, recall_weight_beta).dump());
  });
}

}  // extern "C"
