#include "quipforge/scorer.hpp"

#include <algorithm>
#include "json.hpp"

#include "quipforge/error.hpp"

namespace quipforge {

namespace {

using nlohmann::json;

// Table-style shades: strongest for single coverage, lighter for overlaps.
constexpr const char* kTtyShade[] = {"\x1b[48;5;214m", "\x1b[48;5;222m", "\x1b[48;5;230m"};
constexpr const char* kTtyReset = "\x1b[0m";

uint32_t display_depth(uint32_t d) { return std::min<uint32_t>(d, 3); }

void append_html_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
}

}  // namespace

QuipResult quip_normalized(std::string_view normalized, size_t n, const GramMembership& member) {
  const std::vector<size_t> offsets = code_point_offsets(normalized);
  const size_t chars = offsets.size() - 1;
  QuipResult r;
  if (chars < n) {
    r.degenerate = true;
    return r;
  }
  r.total_grams = chars - n + 1;
  r.matched_mask.resize(r.total_grams);
  for (size_t i = 0; i < r.total_grams; ++i) {
    const bool hit = member(normalized.substr(offsets[i], offsets[i + n] - offsets[i]));
    r.matched_mask[i] = hit;
    r.matched_grams += hit ? 1 : 0;
  }
  r.score = static_cast<double>(r.matched_grams) / static_cast<double>(r.total_grams);
  return r;
}

QuipResult quip(const NgramSketch& sketch, std::string_view text) {
  const std::string norm = normalize(text, sketch.config().normalization);
  return quip_normalized(norm, sketch.config().n,
                         [&sketch](std::string_view g) { return sketch.contains_unchecked(g); });
}

std::vector<uint32_t> coverage_depths(const std::vector<bool>& matched_mask, size_t n,
                                      size_t num_chars) {
  std::vector<int64_t> diff(num_chars + 1, 0);
  for (size_t i = 0; i < matched_mask.size(); ++i) {
    if (!matched_mask[i]) continue;
    diff[i] += 1;
    diff[std::min(i + n, num_chars)] -= 1;
  }
  std::vector<uint32_t> depths(num_chars, 0);
  int64_t running = 0;
  for (size_t c = 0; c < num_chars; ++c) {
    running += diff[c];
    depths[c] = static_cast<uint32_t>(running);
  }
  return depths;
}

std::vector<QuotedSpan> spans_from_depths(std::span<const uint32_t> depths) {
  std::vector<QuotedSpan> spans;
  size_t c = 0;
  while (c < depths.size()) {
    if (depths[c] == 0) {
      ++c;
      continue;
    }
    QuotedSpan s{c, c, 0};
    while (c < depths.size() && depths[c] > 0) {
      s.max_depth = std::max(s.max_depth, depths[c]);
      ++c;
    }
    s.end = c;
    spans.push_back(s);
  }
  return spans;
}

QuipAnnotation annotate(const NgramSketch& sketch, std::string_view text, QuipResult* result) {
  NormalizedText norm = normalize_with_offsets(text, sketch.config().normalization);
  QuipResult r = quip_normalized(
      norm.text, sketch.config().n,
      [&sketch](std::string_view g) { return sketch.contains_unchecked(g); });
  QuipAnnotation a;
  a.depths = coverage_depths(r.matched_mask, sketch.config().n, norm.raw_begin.size());
  a.spans = spans_from_depths(a.depths);
  a.normalized_text = std::move(norm.text);
  a.raw_begin = std::move(norm.raw_begin);
  a.raw_end = std::move(norm.raw_end);
  if (result != nullptr) *result = std::move(r);
  return a;
}

RenderFormat parse_render_format(std::string_view name) {
  if (name == "tty") return RenderFormat::tty;
  if (name == "html") return RenderFormat::html;
  if (name == "json") return RenderFormat::json;
  throw Error(ErrorCode::invalid_argument, "unknown render format '" + std::string(name) + "'");
}

std::string annotation_to_json(const QuipAnnotation& a) {
  json spans = json::array();
  for (const auto& s : a.spans) {
    spans.push_back({{"start", s.start}, {"end", s.end}, {"max_depth", s.max_depth}});
  }
  json j = {{"text", a.normalized_text}, {"depths", a.depths}, {"spans", spans}};
  if (a.raw_begin.size() == a.depths.size()) {
    json raw = json::array();
    for (const auto& s : a.spans) {
      raw.push_back({{"start", a.raw_begin[s.start]}, {"end", a.raw_end[s.end - 1]}});
    }
    j["raw_spans"] = raw;
  }
  return j.dump();
}

QuipAnnotation annotation_from_json(std::string_view text) {
  QuipAnnotation a;
  try {
    const json j = json::parse(text);
    a.normalized_text = j.at("text").get<std::string>();
    a.depths = j.at("depths").get<std::vector<uint32_t>>();
    for (const auto& s : j.at("spans")) {
      a.spans.push_back({s.at("start").get<size_t>(), s.at("end").get<size_t>(),
                         s.at("max_depth").get<uint32_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_input, std::string("bad annotation json: ") + e.what());
  }
  return a;
}

std::string render_annotation(const QuipAnnotation& annotation, std::string_view text,
                              RenderFormat format) {
  const std::vector<size_t> offsets = code_point_offsets(text);
  const size_t chars = offsets.size() - 1;
  if (chars != annotation.depths.size()) {
    throw Error(ErrorCode::invalid_input, "annotation covers " +
                                              std::to_string(annotation.depths.size()) +
                                              " characters but text has " + std::to_string(chars));
  }
  if (format == RenderFormat::json) return annotation_to_json(annotation);

  auto piece = [&](size_t c) { return text.substr(offsets[c], offsets[c + 1] - offsets[c]); };
  std::string out;
  out.reserve(text.size() * 2);

  if (format == RenderFormat::tty) {
    uint32_t shade = 0;
    for (size_t c = 0; c < chars; ++c) {
      const uint32_t d = display_depth(annotation.depths[c]);
      if (d != shade) {
        out += d == 0 ? kTtyReset : kTtyShade[d - 1];
        shade = d;
      }
      out += piece(c);
    }
    if (shade != 0) out += kTtyReset;
    return out;
  }

  // html: one <mark> level per depth step, nested.
  uint32_t open = 0;
  for (size_t c = 0; c < chars; ++c) {
    const uint32_t d = display_depth(annotation.depths[c]);
    while (open > d) {
      out += "</mark>";
      --open;
    }
    while (open < d) {
      ++open;
      out += "<mark class=\"quip-d" + std::to_string(open) + "\">";
    }
    append_html_escaped(out, piece(c));
  }
  while (open > 0) {
    out += "</mark>";
    --open;
  }
  return out;
}

double aggregate(std::span<const QuipResult> results, AggregateMode mode) {
  if (results.empty()) throw Error(ErrorCode::empty_input, "nothing to aggregate");
  if (mode == AggregateMode::macro) {
    double sum = 0.0;
    size_t count = 0;
    for (const auto& r : results) {
      if (r.degenerate) continue;
      sum += r.score;
      ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  }
  uint64_t matched = 0;
  uint64_t total = 0;
  for (const auto& r : results) {
    matched += r.matched_grams;
    total += r.total_grams;
  }
  return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
}

}  // namespace quipforge
