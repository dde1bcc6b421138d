#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "ncmap/util/error.h"

namespace ncmap {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

// Appends little-endian scalars to an in-memory buffer.
class BinaryWriter {
 public:
  template <typename T>
  void Put(T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    buffer_.append(bytes, sizeof(T));
  }
  void PutU8(uint8_t v) { Put(v); }
  void PutU32(uint32_t v) { Put(v); }
  void PutI32(int32_t v) { Put(v); }
  void PutF32(float v) { Put(v); }
  void PutF64(double v) { Put(v); }
  void PutMagic(std::string_view magic) { buffer_.append(magic); }

  const std::string& bytes() const { return buffer_; }
  std::string Release() { return std::move(buffer_); }

 private:
  std::string buffer_;
};

// Reads little-endian scalars; every failure names the byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data, std::string what = "file")
      : data_(data), what_(std::move(what)) {}

  template <typename T>
  T Get() {
    Require(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }
  uint8_t GetU8() { return Get<uint8_t>(); }
  uint32_t GetU32() { return Get<uint32_t>(); }
  int32_t GetI32() { return Get<int32_t>(); }
  float GetF32() { return Get<float>(); }
  double GetF64() { return Get<double>(); }

  void ExpectMagic(std::string_view magic) {
    Require(magic.size());
    if (data_.substr(offset_, magic.size()) != magic) {
      Fail("bad magic, expected '" + std::string(magic) + "'");
    }
    offset_ += magic.size();
  }

  // Reads a count and checks that `count * min_item_bytes` bytes remain.
  uint32_t GetCount(size_t min_item_bytes) {
    const size_t at = offset_;
    const uint32_t n = GetU32();
    if (min_item_bytes > 0 && n > remaining() / min_item_bytes) {
      offset_ = at;
      Fail("count " + std::to_string(n) + " exceeds remaining data");
    }
    return n;
  }

  size_t offset() const { return offset_; }
  size_t remaining() const { return data_.size() - offset_; }
  void ExpectEnd() {
    if (remaining() != 0) Fail("trailing bytes");
  }

  [[noreturn]] void Fail(const std::string& message) const {
    throw DataError(what_ + ": " + message + " at offset " +
                    std::to_string(offset_));
  }

 private:
  void Require(size_t n) {
    if (remaining() < n) {
      Fail("truncated data (need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()) + ")");
    }
  }

  std::string_view data_;
  std::string what_;
  size_t offset_ = 0;
};

std::string ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::string& bytes);

}  // namespace ncmap
