#include "quipforge/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "quipforge/error.hpp"

namespace quipforge {

namespace {

const icu::Normalizer2& nfc_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || nfc == nullptr) {
    throw std::runtime_error(std::string("ICU NFC unavailable: ") + u_errorName(status));
  }
  return *nfc;
}

std::vector<UChar32> decode(std::string_view utf8) {
  std::vector<UChar32> out;
  out.reserve(utf8.size());
  const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
  const int32_t length = static_cast<int32_t>(utf8.size());
  if (utf8.size() > static_cast<size_t>(INT32_MAX)) {
    throw Error(ErrorCode::invalid_input, "text exceeds 2 GiB");
  }
  int32_t i = 0;
  while (i < length) {
    const int32_t at = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) {
      throw Error(ErrorCode::decode, "invalid UTF-8 at byte " + std::to_string(at));
    }
    out.push_back(c);
  }
  return out;
}

void append_utf8(std::string& out, UChar32 c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t len = 0;
  U8_APPEND_UNSAFE(buf, len, c);
  out.append(reinterpret_cast<const char*>(buf), static_cast<size_t>(len));
}

std::vector<UChar32> to_code_points(const icu::UnicodeString& us) {
  std::vector<UChar32> out;
  out.reserve(static_cast<size_t>(us.length()));
  for (int32_t i = 0; i < us.length();) {
    const UChar32 c = us.char32At(i);
    out.push_back(c);
    i += U16_LENGTH(c);
  }
  return out;
}

icu::UnicodeString from_code_points(const UChar32* cps, size_t count) {
  icu::UnicodeString us;
  for (size_t i = 0; i < count; ++i) us.append(cps[i]);
  return us;
}

// NFC and lowercasing. Lowercasing can un-normalize, hence the second NFC pass.
std::vector<UChar32> case_and_compose(const UChar32* cps, size_t count,
                                      const NormalizationPolicy& policy) {
  if (!policy.unicode_nfc && !policy.lowercase) return {cps, cps + count};
  icu::UnicodeString us = from_code_points(cps, count);
  UErrorCode status = U_ZERO_ERROR;
  if (policy.unicode_nfc) {
    us = nfc_instance().normalize(us, status);
  }
  if (policy.lowercase) {
    us.toLower(icu::Locale::getRoot());
    if (policy.unicode_nfc) us = nfc_instance().normalize(us, status);
  }
  if (U_FAILURE(status)) {
    throw std::runtime_error(std::string("ICU normalization failed: ") + u_errorName(status));
  }
  return to_code_points(us);
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }

struct MappedPoint {
  UChar32 cp;
  size_t raw_begin;
  size_t raw_end;
};

// Transforms each segment independently and checks the concatenation equals
// the whole-text transform. Returns false on mismatch.
bool map_segments(const std::vector<UChar32>& raw, const std::vector<size_t>& cuts,
                  const NormalizationPolicy& policy, const std::vector<UChar32>& whole,
                  std::vector<MappedPoint>& out) {
  out.clear();
  for (size_t s = 0; s + 1 < cuts.size(); ++s) {
    const size_t b = cuts[s];
    const size_t e = cuts[s + 1];
    for (UChar32 c : case_and_compose(raw.data() + b, e - b, policy)) {
      out.push_back({c, b, e});
    }
  }
  if (out.size() != whole.size()) return false;
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i].cp != whole[i]) return false;
  }
  return true;
}

std::vector<MappedPoint> mapped_case_and_compose(const std::vector<UChar32>& raw,
                                                 const NormalizationPolicy& policy) {
  std::vector<MappedPoint> out;
  if (!policy.unicode_nfc && !policy.lowercase) {
    out.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out.push_back({raw[i], i, i + 1});
    return out;
  }
  const std::vector<UChar32> whole = case_and_compose(raw.data(), raw.size(), policy);
  auto boundary_ok = [&](size_t i) {
    return !policy.unicode_nfc || nfc_instance().hasBoundaryBefore(raw[i]);
  };

  // Finest segmentation: every normalization boundary.
  std::vector<size_t> cuts{0};
  for (size_t i = 1; i < raw.size(); ++i) {
    if (boundary_ok(i)) cuts.push_back(i);
  }
  cuts.push_back(raw.size());
  if (map_segments(raw, cuts, policy, whole, out)) return out;

  // Casing context never crosses whitespace.
  cuts.assign(1, 0);
  for (size_t i = 1; i < raw.size(); ++i) {
    if (is_space(raw[i]) != is_space(raw[i - 1]) && boundary_ok(i)) cuts.push_back(i);
  }
  cuts.push_back(raw.size());
  if (map_segments(raw, cuts, policy, whole, out)) return out;

  out.clear();
  for (UChar32 c : whole) out.push_back({c, 0, raw.size()});
  return out;
}

}  // namespace

NormalizationPolicy NormalizationPolicy::from_flags(uint32_t flags) {
  if ((flags & ~kAllBits) != 0) {
    throw Error(ErrorCode::format, "unknown normalization flag bits " + std::to_string(flags));
  }
  return {(flags & kNfcBit) != 0, (flags & kLowercaseBit) != 0, (flags & kCollapseBit) != 0};
}

uint32_t NormalizationPolicy::flags() const {
  return (unicode_nfc ? kNfcBit : 0) | (lowercase ? kLowercaseBit : 0) |
         (collapse_whitespace ? kCollapseBit : 0);
}

std::vector<size_t> code_point_offsets(std::string_view utf8) {
  std::vector<size_t> offsets;
  offsets.reserve(utf8.size() + 1);
  const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
  const int32_t length = static_cast<int32_t>(utf8.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t at = i;
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) {
      throw Error(ErrorCode::decode, "invalid UTF-8 at byte " + std::to_string(at));
    }
    offsets.push_back(static_cast<size_t>(at));
  }
  offsets.push_back(utf8.size());
  return offsets;
}

size_t code_point_count(std::string_view utf8) { return code_point_offsets(utf8).size() - 1; }

void validate_utf8(std::string_view utf8) { (void)decode(utf8); }

std::string normalize(std::string_view text, const NormalizationPolicy& policy) {
  const std::vector<UChar32> raw = decode(text);
  const std::vector<UChar32> cased = case_and_compose(raw.data(), raw.size(), policy);
  std::string out;
  out.reserve(text.size());
  if (!policy.collapse_whitespace) {
    for (UChar32 c : cased) append_utf8(out, c);
    return out;
  }
  bool pending_space = false;
  for (UChar32 c : cased) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    append_utf8(out, c);
  }
  return out;
}

NormalizedText normalize_with_offsets(std::string_view text, const NormalizationPolicy& policy) {
  const std::vector<UChar32> raw = decode(text);
  const std::vector<MappedPoint> mapped = mapped_case_and_compose(raw, policy);
  NormalizedText out;
  out.text.reserve(text.size());
  auto emit = [&out](UChar32 c, size_t b, size_t e) {
    append_utf8(out.text, c);
    out.raw_begin.push_back(b);
    out.raw_end.push_back(e);
  };
  if (!policy.collapse_whitespace) {
    for (const auto& m : mapped) emit(m.cp, m.raw_begin, m.raw_end);
    return out;
  }
  size_t i = 0;
  while (i < mapped.size()) {
    if (!is_space(mapped[i].cp)) {
      emit(mapped[i].cp, mapped[i].raw_begin, mapped[i].raw_end);
      ++i;
      continue;
    }
    size_t j = i;
    while (j < mapped.size() && is_space(mapped[j].cp)) ++j;
    if (i > 0 && j < mapped.size()) emit(U' ', mapped[i].raw_begin, mapped[j - 1].raw_end);
    i = j;
  }
  return out;
}

std::vector<std::string> extract_ngrams(std::string_view text, size_t n) {
  if (n == 0) throw Error(ErrorCode::contract, "n-gram width must be >= 1");
  const std::vector<size_t> offsets = code_point_offsets(text);
  const size_t chars = offsets.size() - 1;
  std::vector<std::string> grams;
  if (chars < n) return grams;
  grams.reserve(chars - n + 1);
  for (size_t i = 0; i + n <= chars; ++i) {
    grams.emplace_back(text.substr(offsets[i], offsets[i + n] - offsets[i]));
  }
  return grams;
}

std::string to_lower(std::string_view text) {
  return normalize(text, NormalizationPolicy{false, true, false});
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> tokens;
  const std::vector<UChar32> cps = decode(text);
  std::string current;
  for (UChar32 c : cps) {
    if (is_space(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      append_utf8(current, c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

size_t count_whitespace_tokens(std::string_view text) {
  size_t count = 0;
  bool in_token = false;
  for (UChar32 c : decode(text)) {
    const bool space = is_space(c);
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

}  // namespace quipforge
