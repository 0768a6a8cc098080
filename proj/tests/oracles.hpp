// Test-only reference implementations. Deliberately naive and independent of
// the library code paths they check.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace oracle {

// Splits UTF-8 into characters by lead byte. Assumes valid input.
inline std::vector<std::string> chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& cs, size_t from, size_t count) {
  std::string g;
  for (size_t k = from; k < from + count; ++k) g += cs[k];
  return g;
}

inline std::vector<std::string> grams(const std::string& normalized, size_t n) {
  const auto cs = chars(normalized);
  std::vector<std::string> out;
  for (size_t i = 0; i + n <= cs.size(); ++i) out.push_back(join(cs, i, n));
  return out;
}

struct ExactSet {
  size_t n;
  std::unordered_set<std::string> grams;

  void add_normalized(const std::string& normalized) {
    for (auto& g : oracle::grams(normalized, n)) grams.insert(std::move(g));
  }
  bool contains(const std::string& g) const { return grams.count(g) != 0; }
};

struct Score {
  uint64_t total = 0;
  uint64_t matched = 0;
  std::vector<bool> mask;
};

inline Score quip(const ExactSet& set, const std::string& normalized) {
  Score s;
  for (const auto& g : grams(normalized, set.n)) {
    const bool hit = set.contains(g);
    s.mask.push_back(hit);
    ++s.total;
    s.matched += hit ? 1 : 0;
  }
  return s;
}

// depth[c] = #{i : mask[i] and i <= c < i + n}, by direct enumeration.
inline std::vector<uint32_t> depths(const std::vector<bool>& mask, size_t n, size_t num_chars) {
  std::vector<uint32_t> d(num_chars, 0);
  for (size_t c = 0; c < num_chars; ++c) {
    for (size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] && i <= c && c < i + n) ++d[c];
    }
  }
  return d;
}

struct Candidate {
  double quip;
  uint64_t length;
};

// Nested-loop order: first (w, l), w < l, lexicographic, meeting both predicates.
inline std::optional<std::pair<size_t, size_t>> first_qualifier(const std::vector<Candidate>& sorted,
                                                               double dq, double dl, bool enforce) {
  for (size_t w = 0; w < sorted.size(); ++w) {
    for (size_t l = 0; l < sorted.size(); ++l) {
      if (l <= w) continue;
      const bool c1 = sorted[w].quip - sorted[l].quip > dq;
      bool c2 = true;
      if (enforce) {
        const double a = static_cast<double>(sorted[w].length);
        const double b = static_cast<double>(sorted[l].length);
        const double lo = a < b ? a : b;
        const double diff = a > b ? a - b : b - a;
        c2 = lo > 0 ? diff / lo < dl : (diff == 0 && 0 < dl);
      }
      if (c1 && c2) return std::make_pair(w, l);
    }
  }
  return std::nullopt;
}

inline uint64_t lcs_memo(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<size_t, size_t>, uint64_t> memo;
  std::function<uint64_t(size_t, size_t)> go = [&](size_t i, size_t j) -> uint64_t {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    uint64_t v = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    memo[key] = v;
    return v;
  };
  return go(0, 0);
}

inline std::string random_text(std::mt19937_64& rng, size_t len, const std::string& alphabet) {
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
  std::string s;
  s.reserve(len);
  for (size_t i = 0; i < len; ++i) s.push_back(alphabet[pick(rng)]);
  return s;
}

}  // namespace oracle
