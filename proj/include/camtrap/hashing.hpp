#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace camtrap {

using Digest128 = std::array<std::uint8_t, 16>;

/// BLAKE2b with a 128-bit output.
Digest128 hash128(std::span<const std::uint8_t> bytes);
Digest128 hash128(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);

/// First eight digest bytes read little-endian; a convenient 64-bit seed.
std::uint64_t digest_seed(const Digest128& digest) noexcept;

}  // namespace camtrap
