#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace quipforge {

struct Hash128 {
  uint64_t h1;
  uint64_t h2;
};

// MurmurHash3_x64_128 (Appleby). h1/h2 are the two 64-bit output lanes as
// produced by the reference implementation on a little-endian host.
Hash128 murmur3_x64_128(const void* data, size_t len, uint32_t seed);

inline Hash128 murmur3_x64_128(std::string_view bytes, uint32_t seed = 0) {
  return murmur3_x64_128(bytes.data(), bytes.size(), seed);
}

enum class HashScheme : uint32_t {
  murmur3_x64_128 = 1,
};

bool is_known_hash_scheme(uint32_t id);

Hash128 hash_gram(HashScheme scheme, std::string_view gram_utf8);

}  // namespace quipforge
