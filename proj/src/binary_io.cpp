#include "camtrap/binary_io.hpp"

#include <limits>

namespace camtrap::binary {

void Writer::short_string(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error("string longer than 65535 bytes cannot be encoded");
  }
  put(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

std::string Reader::short_string(const char* what) {
  const auto n = get<std::uint16_t>(what);
  return std::string(bytes(n, what));
}

void Reader::require(std::size_t n, const char* what) const {
  if (data_.size() - pos_ < n) {
    throw ParseError("unexpected end of data reading " + std::string(what) + " at byte " +
                         std::to_string(pos_),
                     pos_);
  }
}

}  // namespace camtrap::binary
