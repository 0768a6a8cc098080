#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quipforge/sketch.hpp"

namespace quipforge {

struct QuipResult {
  double score = 0.0;
  uint64_t total_grams = 0;
  uint64_t matched_grams = 0;
  // matched_mask[i] refers to the gram starting at character i of the normalized text.
  std::vector<bool> matched_mask;
  // Set when the normalized text has fewer than n characters.
  bool degenerate = false;
};

struct QuotedSpan {
  size_t start;
  size_t end;  // exclusive
  uint32_t max_depth;

  bool operator==(const QuotedSpan&) const = default;
};

struct QuipAnnotation {
  std::string normalized_text;
  std::vector<uint32_t> depths;
  std::vector<QuotedSpan> spans;
  // Raw code-point range of each normalized character.
  std::vector<size_t> raw_begin;
  std::vector<size_t> raw_end;
};

// Membership over exact normalized n-gram bytes.
using GramMembership = std::function<bool(std::string_view)>;

QuipResult quip(const NgramSketch& sketch, std::string_view text);

// Scores already-normalized text with an arbitrary membership predicate.
QuipResult quip_normalized(std::string_view normalized, size_t n, const GramMembership& member);

// When `result` is non-null it receives the matching QuipResult.
QuipAnnotation annotate(const NgramSketch& sketch, std::string_view text,
                        QuipResult* result = nullptr);

// depths[c] = number of matched windows [i, i+n) covering c; spans are the
// maximal runs of non-zero depth.
std::vector<uint32_t> coverage_depths(const std::vector<bool>& matched_mask, size_t n,
                                      size_t num_chars);
std::vector<QuotedSpan> spans_from_depths(std::span<const uint32_t> depths);

enum class RenderFormat { tty, html, json };

RenderFormat parse_render_format(std::string_view name);

// `text` must be the normalized text the annotation was computed on; throws
// Error(invalid_input) on a character count mismatch.
std::string render_annotation(const QuipAnnotation& annotation, std::string_view text,
                              RenderFormat format);

std::string annotation_to_json(const QuipAnnotation& annotation);
QuipAnnotation annotation_from_json(std::string_view json);

enum class AggregateMode { macro, micro };

// Throws Error(empty_input) for an empty sequence. Degenerate results are
// excluded from macro; with nothing scorable both modes return 0.
double aggregate(std::span<const QuipResult> results, AggregateMode mode);

}  // namespace quipforge
