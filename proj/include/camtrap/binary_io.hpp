#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "camtrap/error.hpp"

namespace camtrap::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swapping for this target");

/// Appends little-endian encoded values to a byte string.
class Writer {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out_.append(raw, sizeof(T));
  }

  void bytes(std::string_view raw) { out_.append(raw); }

  /// u16 length prefix followed by the bytes.
  void short_string(std::string_view s);

  const std::string& data() const noexcept { return out_; }
  std::string release() noexcept { return std::move(out_); }

 private:
  std::string out_;
};

/// Bounds-checked cursor over a byte buffer. Every read past the end throws ParseError
/// carrying the offset.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get(const char* what) {
    require(sizeof(T), what);
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view bytes(std::size_t n, const char* what) {
    require(n, what);
    auto view = data_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::string short_string(const char* what);

  std::size_t position() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void require(std::size_t n, const char* what) const;

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace camtrap::binary
