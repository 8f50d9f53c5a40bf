#include "camtrap/hashing.hpp"

#include <sodium.h>

#include <stdexcept>

namespace camtrap {

Digest128 hash128(std::span<const std::uint8_t> bytes) {
  Digest128 out{};
  // crypto_generichash is BLAKE2b; it needs no sodium_init() and cannot fail for these sizes.
  if (crypto_generichash(out.data(), out.size(), bytes.data(), bytes.size(), nullptr, 0) != 0) {
    throw std::runtime_error("BLAKE2b failed");
  }
  return out;
}

Digest128 hash128(std::string_view bytes) {
  return hash128(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

std::uint64_t digest_seed(const Digest128& digest) noexcept {
  std::uint64_t seed = 0;
  for (int i = 7; i >= 0; --i) seed = (seed << 8) | digest[static_cast<std::size_t>(i)];
  return seed;
}

}  // namespace camtrap
