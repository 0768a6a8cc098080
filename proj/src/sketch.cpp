#include "quipforge/sketch.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "quipforge/error.hpp"

namespace quipforge {

namespace {

constexpr uint64_t kMaxBits = uint64_t{1} << 48;
constexpr size_t kIoChunk = size_t{1} << 20;

void put_u32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

void put_u64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

uint32_t crc_update(uint32_t crc, const uint8_t* data, size_t len) {
  uLong c = crc;
  while (len > 0) {
    const uInt chunk = static_cast<uInt>(std::min<size_t>(len, 1u << 30));
    c = crc32(c, data, chunk);
    data += chunk;
    len -= chunk;
  }
  return static_cast<uint32_t>(c);
}

uint64_t byte_count(uint64_t bits) { return (bits + 7) / 8; }

}  // namespace

void SketchConfig::validate() const {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "n must be >= 1");
  if (num_bits < 8) throw Error(ErrorCode::invalid_argument, "num_bits must be >= 8");
  if (num_bits > kMaxBits) {
    throw Error(ErrorCode::invalid_argument, "num_bits exceeds 2^48");
  }
  if (num_hashes < 1 || num_hashes > 64) {
    throw Error(ErrorCode::invalid_argument, "num_hashes must be in [1, 64]");
  }
  if (!is_known_hash_scheme(hash_scheme_id)) {
    throw Error(ErrorCode::unknown_hash,
                "unknown hash_scheme_id " + std::to_string(hash_scheme_id));
  }
}

BloomSizing optimal_sizing(uint64_t expected_grams, double fpr) {
  if (!(fpr > 0.0 && fpr < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "target fpr must be in (0, 1)");
  }
  const double ln2 = std::log(2.0);
  const double log_inv_p = std::log(1.0 / fpr);
  const double n = static_cast<double>(std::max<uint64_t>(expected_grams, 1));
  const double bits = std::ceil(n * log_inv_p / (ln2 * ln2));
  const double hashes = std::ceil(log_inv_p / ln2);
  BloomSizing s;
  s.num_bits = bits >= static_cast<double>(kMaxBits)
                   ? kMaxBits
                   : std::max<uint64_t>(8, static_cast<uint64_t>(bits));
  s.num_hashes = static_cast<uint32_t>(std::clamp(hashes, 1.0, 64.0));
  return s;
}

NgramSketch::NgramSketch(const SketchConfig& config) : config_(config) {
  config_.validate();
  words_.assign((config_.num_bits + 63) / 64, 0);
}

NgramSketch::NgramSketch(const SketchConfig& config, std::vector<uint64_t>&& words,
                         uint64_t inserted)
    : config_(config), words_(std::move(words)), inserted_count_(inserted) {}

uint64_t NgramSketch::set_bits() const {
  uint64_t total = 0;
  for (uint64_t w : words_) total += static_cast<uint64_t>(std::popcount(w));
  return total;
}

double NgramSketch::set_bit_fraction() const {
  return static_cast<double>(set_bits()) / static_cast<double>(config_.num_bits);
}

double NgramSketch::estimated_fpr() const {
  return std::pow(set_bit_fraction(), static_cast<double>(config_.num_hashes));
}

double NgramSketch::analytic_fpr(uint64_t insertions) const {
  const double k = config_.num_hashes;
  const double m = static_cast<double>(config_.num_bits);
  return std::pow(-std::expm1(-k * static_cast<double>(insertions) / m), k);
}

NgramSketch::ProbeStart NgramSketch::probe_start(std::string_view gram_utf8) const {
  const Hash128 h = hash_gram(static_cast<HashScheme>(config_.hash_scheme_id), gram_utf8);
  return {h.h1 % config_.num_bits, h.h2 % config_.num_bits};
}

void NgramSketch::insert_unchecked(std::string_view gram_utf8) {
  auto [index, step] = probe_start(gram_utf8);
  const uint64_t m = config_.num_bits;
  for (uint32_t i = 0; i < config_.num_hashes; ++i) {
    words_[index >> 6] |= uint64_t{1} << (index & 63);
    index += step;
    if (index >= m) index -= m;
  }
  ++inserted_count_;
}

bool NgramSketch::contains_unchecked(std::string_view gram_utf8) const {
  auto [index, step] = probe_start(gram_utf8);
  const uint64_t m = config_.num_bits;
  for (uint32_t i = 0; i < config_.num_hashes; ++i) {
    if ((words_[index >> 6] & (uint64_t{1} << (index & 63))) == 0) return false;
    index += step;
    if (index >= m) index -= m;
  }
  return true;
}

void NgramSketch::insert_gram(std::string_view gram) {
  if (code_point_count(gram) != config_.n) {
    throw Error(ErrorCode::contract, "gram length differs from n");
  }
  insert_unchecked(gram);
}

bool NgramSketch::contains(std::string_view gram) const {
  if (code_point_count(gram) != config_.n) {
    throw Error(ErrorCode::contract, "gram length differs from n=" + std::to_string(config_.n));
  }
  return contains_unchecked(gram);
}

uint64_t NgramSketch::insert_document(std::string_view text, uint32_t stride) {
  if (stride == 0) throw Error(ErrorCode::invalid_argument, "stride must be >= 1");
  const std::string norm = normalize(text, config_.normalization);
  const std::vector<size_t> offsets = code_point_offsets(norm);
  const size_t chars = offsets.size() - 1;
  const size_t n = config_.n;
  uint64_t inserted = 0;
  for (size_t i = 0; i + n <= chars; i += stride) {
    insert_unchecked(std::string_view(norm).substr(offsets[i], offsets[i + n] - offsets[i]));
    ++inserted;
  }
  return inserted;
}

void NgramSketch::merge_from(const NgramSketch& other) {
  if (!(config_ == other.config_)) {
    throw Error(ErrorCode::config_mismatch, "cannot merge sketches with different configs");
  }
  for (size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  inserted_count_ += other.inserted_count_;
}

NgramSketch merge(const NgramSketch& a, const NgramSketch& b) {
  NgramSketch out = a;
  out.merge_from(b);
  return out;
}

CorpusStats NgramSketch::stats(uint64_t documents) const {
  return {documents, inserted_count_, set_bit_fraction(), estimated_fpr()};
}

void NgramSketch::save(std::ostream& out) const {
  std::array<uint8_t, kHeaderBytes> header{};
  std::memcpy(header.data(), kMagic, 4);
  put_u32(header.data() + 4, kFormatVersion);
  put_u32(header.data() + 8, config_.n);
  put_u32(header.data() + 12, config_.num_hashes);
  put_u32(header.data() + 16, config_.hash_scheme_id);
  put_u32(header.data() + 20, config_.normalization.flags());
  put_u64(header.data() + 24, config_.num_bits);
  put_u64(header.data() + 32, inserted_count_);
  // bytes 40..55 reserved, zero

  uint32_t crc = crc_update(0, header.data(), header.size());
  out.write(reinterpret_cast<const char*>(header.data()), header.size());

  const uint64_t nbytes = byte_count(config_.num_bits);
  std::vector<uint8_t> buf;
  buf.reserve(kIoChunk);
  for (uint64_t b = 0; b < nbytes; ++b) {
    buf.push_back(static_cast<uint8_t>(words_[b / 8] >> (8 * (b % 8))));
    if (buf.size() == kIoChunk || b + 1 == nbytes) {
      crc = crc_update(crc, buf.data(), buf.size());
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  uint8_t tail[4];
  put_u32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail), 4);
  if (!out) throw Error(ErrorCode::io, "failed writing sketch");
}

void NgramSketch::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + tmp + " for writing");
  save(out);
  out.close();
  std::error_code ec;
  if (!out) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::io, "failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::io, "cannot rename " + tmp + " to " + path);
  }
}

std::vector<uint8_t> NgramSketch::serialize() const {
  std::string s;
  {
    std::ostringstream os;
    save(os);
    s = os.str();
  }
  return {s.begin(), s.end()};
}

NgramSketch NgramSketch::load(std::istream& in) {
  std::array<uint8_t, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  const auto got = static_cast<size_t>(in.gcount());
  if (got >= 4 && std::memcmp(header.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::format, "bad magic: not a sketch file");
  }
  if (got < header.size()) throw Error(ErrorCode::truncated, "truncated sketch header");

  const uint32_t version = get_u32(header.data() + 4);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::version, "unsupported sketch format version " + std::to_string(version));
  }
  SketchConfig config;
  config.n = get_u32(header.data() + 8);
  config.num_hashes = get_u32(header.data() + 12);
  config.hash_scheme_id = get_u32(header.data() + 16);
  if (!is_known_hash_scheme(config.hash_scheme_id)) {
    throw Error(ErrorCode::unknown_hash,
                "unknown hash_scheme_id " + std::to_string(config.hash_scheme_id));
  }
  config.normalization = NormalizationPolicy::from_flags(get_u32(header.data() + 20));
  config.num_bits = get_u64(header.data() + 24);
  const uint64_t inserted = get_u64(header.data() + 32);
  for (size_t i = 40; i < kHeaderBytes; ++i) {
    if (header[i] != 0) throw Error(ErrorCode::format, "reserved header bytes are not zero");
  }
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::format, std::string("invalid sketch header: ") + e.what());
  }

  uint32_t crc = crc_update(0, header.data(), header.size());
  const uint64_t nbytes = byte_count(config.num_bits);
  // Grow with the data actually present so a corrupt num_bits cannot force
  // a huge allocation before truncation is detected.
  std::vector<uint64_t> words;
  std::vector<uint8_t> buf(kIoChunk);
  uint64_t done = 0;
  while (done < nbytes) {
    const size_t want = static_cast<size_t>(std::min<uint64_t>(kIoChunk, nbytes - done));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(want));
    if (static_cast<size_t>(in.gcount()) != want) {
      throw Error(ErrorCode::truncated, "truncated sketch bit array");
    }
    crc = crc_update(crc, buf.data(), want);
    words.resize((done + want + 7) / 8, 0);
    for (size_t i = 0; i < want; ++i) {
      const uint64_t b = done + i;
      words[b / 8] |= static_cast<uint64_t>(buf[i]) << (8 * (b % 8));
    }
    done += want;
  }
  uint8_t tail[4];
  in.read(reinterpret_cast<char*>(tail), 4);
  if (in.gcount() != 4) throw Error(ErrorCode::truncated, "missing sketch checksum");
  if (get_u32(tail) != crc) throw Error(ErrorCode::checksum, "sketch checksum mismatch");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::format, "trailing bytes after sketch checksum");
  }

  words.resize((config.num_bits + 63) / 64, 0);
  const uint64_t tail_bits = config.num_bits % 64;
  if (tail_bits != 0 && (words.back() >> tail_bits) != 0) {
    throw Error(ErrorCode::format, "padding bits past num_bits are set");
  }

  return NgramSketch(config, std::move(words), inserted);
}

NgramSketch NgramSketch::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  return load(in);
}

}  // namespace quipforge
