#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace duetml {

using Bytes = std::vector<std::uint8_t>;

/// Milliseconds since the Unix epoch. Virtual clocks in tests use the same
/// representation, so every timestamp in the system is one of these.
using Timestamp = std::chrono::milliseconds;
using Clock = std::function<Timestamp()>;

Timestamp system_now();

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> data);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform integer in [0, bound) by rejection on raw mt19937_64 output.
/// std::uniform_int_distribution is implementation-defined, which would make
/// montage bytes differ between standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

/// Fisher-Yates over [0, n) with the portable draw above.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

std::string trim(std::string_view s);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);
void write_file(const std::string& path, std::string_view data);

}  // namespace duetml
