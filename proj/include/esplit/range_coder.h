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

// Range coder over static integer CDF tables.
//
// State is a 48-bit window `low` (plus a carry bit) and a range kept in
// [2^32, 2^48) between symbols. Whenever the range drops below 2^32 the top
// 16 bits of the window are shifted out as one big-endian word; carries are
// resolved with a cached word plus a run of pending 0xFFFF words. The stream
// holds no leading padding word, and finishing flushes the three words left
// in the window, so an encoder that performed S renormalizations writes
// exactly S + 3 words and the decoder reads exactly that many.

#ifndef ESPLIT_RANGE_CODER_H_
#define ESPLIT_RANGE_CODER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "esplit/entropy_model.h"
#include "esplit/quantizer.h"

namespace esplit {

struct Bitstream {
  std::vector<uint8_t> bytes;
  uint64_t bit_length() const { return bytes.size() * 8; }
  friend bool operator==(const Bitstream&, const Bitstream&) = default;
};

class RangeEncoder {
 public:
  // Codes the interval [cum_low, cum_low + freq) out of 2^precision.
  void encode(uint32_t cum_low, uint32_t freq, int precision);
  void encode_symbol(const CdfTable& table, int symbol);
  // Flushes the window; the encoder must not be used afterwards.
  Bitstream finish();

 private:
  void shift_low();
  void put_word(uint16_t w);

  uint64_t low_ = 0;
  uint64_t range_ = (uint64_t{1} << 48) - 1;
  uint16_t cache_ = 0;
  bool have_cache_ = false;
  uint64_t pending_ = 0;
  std::vector<uint8_t> out_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);
  int decode_symbol(const CdfTable& table);
  // True when every input word has been consumed.
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  uint16_t next_word();

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint64_t code_ = 0;
  uint64_t range_ = (uint64_t{1} << 48) - 1;
};

// Plain symbol-index sequences under a single table.
Bitstream encode_symbols(std::span<const int> symbols, const CdfTable& table);
std::vector<int> decode_symbols(const Bitstream& bits, const CdfTable& table, size_t count);

// Codes a latent code with one table per channel, channel-major raster order.
// Escaped positions are coded as the table's escape symbol; their raw values
// travel outside the bitstream.
Bitstream encode(const LatentCode& code, std::span<const CdfTable> tables);

// Inverse of encode(). `escape_values` supplies the raw values for escape
// symbols in order of appearance. Truncated or over-long streams and a
// wrong number of escape values are kFormat errors.
LatentCode decode(const Bitstream& bits, std::span<const CdfTable> tables, int channels, int height,
                  int width, std::span<const int16_t> escape_values = {});

// Ideal code length -sum log2(freq/2^P) of the code under the tables,
// escapes counted at the escape symbol's cost.
double table_bits(const LatentCode& code, std::span<const CdfTable> tables);

}  // namespace esplit

#endif  // ESPLIT_RANGE_CODER_H_
