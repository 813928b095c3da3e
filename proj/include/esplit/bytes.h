// Copyright 2026 The esplit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Byte-order helpers for the on-disk and on-wire formats.

#ifndef ESPLIT_BYTES_H_
#define ESPLIT_BYTES_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "esplit/error.h"

namespace esplit {

enum class Endian { kLittle, kBig };

class ByteWriter {
 public:
  explicit ByteWriter(Endian e) : endian_(e) {}

  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                      std::conditional_t<sizeof(T) == 8, int64_t, int32_t>, T>>;
    const U u = std::bit_cast<U>(v);
    for (size_t i = 0; i < sizeof(U); ++i) {
      const size_t shift = endian_ == Endian::kBig ? 8 * (sizeof(U) - 1 - i) : 8 * i;
      out_.push_back(static_cast<uint8_t>(u >> shift));
    }
  }
  void put_bytes(std::span<const uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void put_string(const std::string& s) {
    put(static_cast<uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

  std::vector<uint8_t>& bytes() { return out_; }
  size_t size() const { return out_.size(); }

 private:
  Endian endian_;
  std::vector<uint8_t> out_;
};

// Bounds-checked reader; running past the end is a kFormat error naming `what`.
class ByteReader {
 public:
  ByteReader(std::span<const uint8_t> in, Endian e, std::string what)
      : in_(in), endian_(e), what_(std::move(what)) {}

  template <typename T>
  T get() {
    using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                      std::conditional_t<sizeof(T) == 8, int64_t, int32_t>, T>>;
    need(sizeof(U));
    U u = 0;
    for (size_t i = 0; i < sizeof(U); ++i) {
      const size_t shift = endian_ == Endian::kBig ? 8 * (sizeof(U) - 1 - i) : 8 * i;
      u |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << shift);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }
  std::span<const uint8_t> get_bytes(size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() {
    const uint32_t n = get<uint32_t>();
    auto s = get_bytes(n);
    return std::string(s.begin(), s.end());
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (n > in_.size() - pos_) fail(ErrorKind::kFormat, "truncated " + what_);
  }

  std::span<const uint8_t> in_;
  size_t pos_ = 0;
  Endian endian_;
  std::string what_;
};

// zlib CRC-32 (IEEE 802.3 polynomial).
uint32_t crc32(std::span<const uint8_t> bytes);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace esplit

#endif  // ESPLIT_BYTES_H_
