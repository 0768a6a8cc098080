#ifndef QUIPFORGE_H
#define QUIPFORGE_H

/*
 * quipforge C API.
 *
 * Every function returns a qf_status. On failure a human readable message
 * for the calling thread is available from qf_last_error() until the next
 * failing call on that thread. Strings returned through `char**` out
 * parameters are heap allocated and must be released with qf_string_free.
 *
 * A qf_sketch is immutable once built or loaded and may be queried from any
 * number of threads concurrently. Mutating calls (insert, merge) require
 * exclusive access.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(QUIPFORGE_BUILDING)
#    define QF_API __declspec(dllexport)
#  else
#    define QF_API __declspec(dllimport)
#  endif
#else
#  define QF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qf_status {
  QF_OK = 0,
  QF_ERR_INVALID_ARGUMENT = 1, /* bad flag value or combination */
  QF_ERR_DECODE = 2,           /* input text is not valid UTF-8 */
  QF_ERR_INVALID_INPUT = 3,    /* malformed or schema-violating record */
  QF_ERR_EMPTY_INPUT = 4,
  QF_ERR_IO = 5,
  QF_ERR_FORMAT = 6,           /* bad magic or malformed header */
  QF_ERR_VERSION = 7,
  QF_ERR_TRUNCATED = 8,
  QF_ERR_CHECKSUM = 9,
  QF_ERR_UNKNOWN_HASH = 10,
  QF_ERR_CONFIG_MISMATCH = 11,
  QF_ERR_CONTRACT = 12,        /* caller broke a precondition */
  QF_ERR_NUMERIC = 13,         /* non-finite value where a finite one is required */
  QF_ERR_INTERNAL = 14
} qf_status;

/* Normalization flag bits, identical to the sketch file header. */
#define QF_NORM_NFC 0x1u
#define QF_NORM_LOWERCASE 0x2u
#define QF_NORM_COLLAPSE_WS 0x4u
#define QF_NORM_DEFAULT (QF_NORM_NFC | QF_NORM_LOWERCASE | QF_NORM_COLLAPSE_WS)

#define QF_HASH_MURMUR3_X64_128 1u
#define QF_DEFAULT_N 25u
#define QF_DEFAULT_FPR 1e-3

typedef struct qf_sketch qf_sketch;

typedef struct qf_sketch_config {
  uint32_t n;
  uint64_t num_bits;
  uint32_t num_hashes;
  uint32_t hash_scheme_id;
  uint32_t normalization_flags;
} qf_sketch_config;

typedef struct qf_sketch_info {
  qf_sketch_config config;
  uint32_t format_version;
  uint64_t inserted_count;
  uint64_t set_bits;
  double set_bit_fraction;
  double estimated_fpr;
} qf_sketch_info;

typedef struct qf_corpus_stats {
  uint64_t documents_ingested;
  uint64_t ngrams_inserted;
  double set_bit_fraction;
  double estimated_fpr;
} qf_corpus_stats;

typedef enum qf_corpus_format {
  QF_CORPUS_AUTO = 0,
  QF_CORPUS_TEXT = 1,
  QF_CORPUS_JSONL = 2
} qf_corpus_format;

typedef struct qf_build_options {
  uint32_t n;                   /* 0 -> QF_DEFAULT_N */
  uint64_t num_bits;            /* 0 -> size from fpr with a counting pass */
  double fpr;                   /* <= 0 -> QF_DEFAULT_FPR; ignored when num_bits != 0 */
  uint32_t num_hashes;          /* 0 -> derived from fpr */
  uint32_t normalization_flags;
  uint32_t stride;              /* 0 -> 1 */
  uint32_t shards;              /* 0 -> 1 */
  uint32_t threads;             /* 0 -> hardware concurrency */
  qf_corpus_format format;
} qf_build_options;

typedef struct qf_quip_result {
  double score;
  uint64_t total_grams;
  uint64_t matched_grams;
  int degenerate;               /* nonzero when the text has fewer than n characters */
  qf_status status;             /* per-item status for batch calls */
} qf_quip_result;

typedef struct qf_synth_config {
  double delta_quip;            /* default 0.1 */
  double delta_length;          /* default 0.1 */
  int enforce_length;           /* default 1; 0 = length-constraint ablation */
} qf_synth_config;

typedef struct qf_dpo_example {
  double logp_theta_w;
  double logp_ref_w;
  double logp_theta_l;
  double logp_ref_l;
  double beta;
} qf_dpo_example;

typedef struct qf_dpo_grad {
  double d_logp_theta_w;
  double d_logp_ref_w;
  double d_logp_theta_l;
  double d_logp_ref_l;
} qf_dpo_grad;

typedef struct qf_rouge_score {
  double precision;
  double recall;
  double f1;
  uint64_t lcs_length;
} qf_rouge_score;

typedef enum qf_render_format {
  QF_RENDER_TTY = 0,
  QF_RENDER_HTML = 1,
  QF_RENDER_JSON = 2
} qf_render_format;

typedef struct qf_score_options {
  int with_spans;
  uint32_t threads;
} qf_score_options;

typedef struct qf_score_summary {
  uint64_t records;
  uint64_t degenerate;
  double macro;
  double micro;
} qf_score_summary;

QF_API const char* qf_version(void);
QF_API const char* qf_last_error(void);
QF_API const char* qf_status_name(qf_status status);
QF_API void qf_string_free(char* s);

QF_API void qf_sketch_config_default(qf_sketch_config* config);
QF_API void qf_build_options_default(qf_build_options* options);
QF_API void qf_synth_config_default(qf_synth_config* config);

/* Optimal Bloom sizing for an expected gram count and target FPR. */
QF_API qf_status qf_sketch_size_for(uint64_t expected_grams, double fpr,
                                    uint64_t* num_bits, uint32_t* num_hashes);

QF_API qf_status qf_sketch_create(const qf_sketch_config* config, qf_sketch** out);
QF_API void qf_sketch_free(qf_sketch* sketch);
QF_API qf_status qf_sketch_insert(qf_sketch* sketch, const char* text, size_t len,
                                  uint32_t stride, uint64_t* grams_inserted);
/* `gram` is taken verbatim (not normalized) and must hold exactly n characters. */
QF_API qf_status qf_sketch_contains(const qf_sketch* sketch, const char* gram,
                                    size_t len, int* out);
QF_API qf_status qf_sketch_merge(qf_sketch* into, const qf_sketch* other);
QF_API qf_status qf_sketch_save(const qf_sketch* sketch, const char* path);
QF_API qf_status qf_sketch_load(const char* path, qf_sketch** out);
QF_API qf_status qf_sketch_info_get(const qf_sketch* sketch, qf_sketch_info* out);

QF_API qf_status qf_normalize(const char* text, size_t len, uint32_t flags, char** out);

QF_API qf_status qf_build_from_files(const char* const* paths, size_t num_paths,
                                     const qf_build_options* options,
                                     qf_sketch** out, qf_corpus_stats* stats);

QF_API qf_status qf_quip(const qf_sketch* sketch, const char* text, size_t len,
                         qf_quip_result* out);
/* Scores texts[i] into results[i]; decode failures are reported per item. */
QF_API qf_status qf_score_batch(const qf_sketch* sketch, const char* const* texts,
                                const size_t* lens, size_t count, uint32_t threads,
                                qf_quip_result* results);
/* JSON object: {"text", "depths", "spans":[{"start","end","max_depth"}], "raw_spans"}. */
QF_API qf_status qf_annotate_json(const qf_sketch* sketch, const char* text, size_t len,
                                  char** out_json);
QF_API qf_status qf_highlight(const qf_sketch* sketch, const char* text, size_t len,
                              qf_render_format format, char** out);

QF_API qf_status qf_score_jsonl(const qf_sketch* sketch, const char* in_path,
                                const char* out_path, const qf_score_options* options,
                                qf_score_summary* summary);

/* prompts_json: array of {prompt_id, prompt, responses:[{response_id, text, len?}]}.
 * out_json: {"pairs": [...], "stats": {...}} using the pairs JSONL schema. */
QF_API qf_status qf_make_pairs_json(const qf_sketch* sketch, const char* prompts_json,
                                    const qf_synth_config* config, char** out_json);
QF_API qf_status qf_pairs_jsonl(const qf_sketch* sketch, const char* in_path,
                                const char* out_path, const qf_synth_config* config,
                                uint32_t threads, char** stats_json);
QF_API qf_status qf_rerank_jsonl(const qf_sketch* sketch, const char* in_path,
                                 const char* out_path, uint32_t threads, char** stats_json);

QF_API qf_status qf_dpo_margin(const qf_dpo_example* ex, double* out);
QF_API qf_status qf_dpo_loss(const qf_dpo_example* ex, double* out);
QF_API qf_status qf_dpo_loss_grad(const qf_dpo_example* ex, qf_dpo_grad* out);
QF_API qf_status qf_reward_accuracy(const qf_dpo_example* batch, size_t count, double* out);
/* Records {id, logp_theta_w, logp_ref_w, logp_theta_l, logp_ref_l}; summary JSON out. */
QF_API qf_status qf_dpo_metrics_jsonl(const char* in_path, double beta, char** summary_json);

QF_API qf_status qf_rouge_l(const char* hypothesis, size_t hyp_len, const char* reference,
                            size_t ref_len, qf_rouge_score* out);
/* Records {id, hypothesis, reference}; per-id scores to out_path, corpus means out. */
QF_API qf_status qf_rouge_jsonl(const char* in_path, const char* out_path,
                                double recall_weight_beta, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif
