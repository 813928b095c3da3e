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

#include "esplit/range_coder.h"

#include <algorithm>
#include <cmath>

#include "esplit/error.h"

namespace esplit {
namespace {

constexpr uint64_t kWindowBits = 48;
constexpr uint64_t kTop = uint64_t{1} << kWindowBits;
constexpr uint64_t kMask = kTop - 1;
constexpr uint64_t kBottom = uint64_t{1} << 32;
constexpr uint64_t kHighWordAllOnes = uint64_t{0xFFFF} << 32;

void check_tables(std::span<const CdfTable> tables, int channels) {
  if (static_cast<int>(tables.size()) != channels) {
    fail(ErrorKind::kInvalidArgument, "need one cdf table per channel: " + std::to_string(tables.size()) +
                                          " tables for " + std::to_string(channels) + " channels");
  }
}

}  // namespace

// ---- Encoder ----------------------------------------------------------------

void RangeEncoder::put_word(uint16_t w) {
  out_.push_back(static_cast<uint8_t>(w >> 8));
  out_.push_back(static_cast<uint8_t>(w & 0xFF));
}

void RangeEncoder::shift_low() {
  if (low_ < kHighWordAllOnes || low_ >= kTop) {
    const uint16_t carry = static_cast<uint16_t>(low_ >> kWindowBits);
    if (have_cache_) put_word(static_cast<uint16_t>(cache_ + carry));
    for (; pending_ > 0; --pending_) put_word(static_cast<uint16_t>(0xFFFF + carry));
    cache_ = static_cast<uint16_t>((low_ >> 32) & 0xFFFF);
    have_cache_ = true;
  } else {
    ++pending_;
  }
  low_ = (low_ << 16) & kMask;
}

void RangeEncoder::encode(uint32_t cum_low, uint32_t freq, int precision) {
  if (finished_) fail(ErrorKind::kInvalidArgument, "RangeEncoder used after finish()");
  if (freq == 0 || cum_low + static_cast<uint64_t>(freq) > (uint64_t{1} << precision)) {
    fail(ErrorKind::kInvalidArgument, "invalid coding interval");
  }
  const uint64_t r = range_ >> precision;
  low_ += r * cum_low;
  range_ = r * freq;
  while (range_ < kBottom) {
    shift_low();
    range_ <<= 16;
  }
}

void RangeEncoder::encode_symbol(const CdfTable& table, int symbol) {
  if (symbol < 0 || symbol >= table.n_symbols()) {
    fail(ErrorKind::kInvalidArgument, "symbol index " + std::to_string(symbol) + " outside table");
  }
  encode(table.cdf[static_cast<size_t>(symbol)], table.freq(symbol), table.precision);
}

Bitstream RangeEncoder::finish() {
  if (finished_) fail(ErrorKind::kInvalidArgument, "RangeEncoder finished twice");
  for (int i = 0; i < 4; ++i) shift_low();
  finished_ = true;
  return Bitstream{std::move(out_)};
}

// ---- Decoder ----------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  if (bytes_.size() % 2 != 0) fail(ErrorKind::kFormat, "bitstream length must be a whole number of words");
  for (int i = 0; i < 3; ++i) code_ = (code_ << 16) | next_word();
}

uint16_t RangeDecoder::next_word() {
  if (pos_ + 2 > bytes_.size()) fail(ErrorKind::kFormat, "truncated bitstream");
  const uint16_t w = static_cast<uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
  pos_ += 2;
  return w;
}

int RangeDecoder::decode_symbol(const CdfTable& table) {
  const uint64_t r = range_ >> table.precision;
  const uint64_t target = std::min<uint64_t>(code_ / r, table.total() - 1);
  const auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), static_cast<uint32_t>(target));
  const int symbol = static_cast<int>(it - table.cdf.begin()) - 1;
  code_ -= r * table.cdf[static_cast<size_t>(symbol)];
  range_ = r * table.freq(symbol);
  while (range_ < kBottom) {
    code_ = ((code_ << 16) & kMask) | next_word();
    range_ <<= 16;
  }
  return symbol;
}

// ---- Sequence helpers ---------------------------------------------------------

Bitstream encode_symbols(std::span<const int> symbols, const CdfTable& table) {
  if (symbols.empty()) return {};
  RangeEncoder enc;
  for (int s : symbols) enc.encode_symbol(table, s);
  return enc.finish();
}

std::vector<int> decode_symbols(const Bitstream& bits, const CdfTable& table, size_t count) {
  std::vector<int> out;
  if (count == 0) {
    if (!bits.bytes.empty()) fail(ErrorKind::kFormat, "non-empty bitstream for zero symbols");
    return out;
  }
  RangeDecoder dec(bits.bytes);
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(dec.decode_symbol(table));
  if (!dec.exhausted()) fail(ErrorKind::kFormat, "trailing bytes after last symbol");
  return out;
}

Bitstream encode(const LatentCode& code, std::span<const CdfTable> tables) {
  check_tables(tables, code.channels);
  if (static_cast<int64_t>(code.symbols.size()) != code.size()) {
    fail(ErrorKind::kInvalidArgument, "latent code symbol count does not match its shape");
  }
  if (code.size() == 0) return {};
  const int64_t plane = static_cast<int64_t>(code.height) * code.width;
  RangeEncoder enc;
  size_t e = 0;
  for (int64_t i = 0; i < code.size(); ++i) {
    const CdfTable& t = tables[static_cast<size_t>(i / plane)];
    const bool escaped = e < code.escapes.size() && code.escapes[e].index == static_cast<uint32_t>(i);
    if (escaped) {
      ++e;
      enc.encode_symbol(t, t.escape_index());
      continue;
    }
    const int idx = t.index_of(code.symbols[static_cast<size_t>(i)]);
    if (idx < 0) {
      fail(ErrorKind::kInvalidArgument, "symbol " + std::to_string(code.symbols[static_cast<size_t>(i)]) +
                                            " at position " + std::to_string(i) +
                                            " is outside the table and not escaped");
    }
    enc.encode_symbol(t, idx);
  }
  if (e != code.escapes.size()) fail(ErrorKind::kInvalidArgument, "escape list not strictly increasing");
  return enc.finish();
}

LatentCode decode(const Bitstream& bits, std::span<const CdfTable> tables, int channels, int height,
                  int width, std::span<const int16_t> escape_values) {
  if (channels < 0 || height < 0 || width < 0) fail(ErrorKind::kInvalidArgument, "negative latent shape");
  check_tables(tables, channels);
  LatentCode code;
  code.channels = channels;
  code.height = height;
  code.width = width;
  const int64_t n = code.size();
  code.symbols.resize(static_cast<size_t>(n));
  if (n == 0) {
    if (!bits.bytes.empty() || !escape_values.empty()) fail(ErrorKind::kFormat, "payload for an empty code");
    return code;
  }
  const int64_t plane = static_cast<int64_t>(height) * width;
  RangeDecoder dec(bits.bytes);
  size_t e = 0;
  for (int64_t i = 0; i < n; ++i) {
    const CdfTable& t = tables[static_cast<size_t>(i / plane)];
    const int s = dec.decode_symbol(t);
    if (s == t.escape_index()) {
      if (e >= escape_values.size()) fail(ErrorKind::kFormat, "bitstream has more escapes than the side channel");
      code.escapes.push_back({static_cast<uint32_t>(i), escape_values[e]});
      code.symbols[static_cast<size_t>(i)] = escape_values[e];
      ++e;
    } else {
      code.symbols[static_cast<size_t>(i)] = t.offset + s;
    }
  }
  if (e != escape_values.size()) fail(ErrorKind::kFormat, "side channel has more escapes than the bitstream");
  if (!dec.exhausted()) fail(ErrorKind::kFormat, "trailing bytes after last symbol");
  return code;
}

double table_bits(const LatentCode& code, std::span<const CdfTable> tables) {
  check_tables(tables, code.channels);
  const int64_t plane = static_cast<int64_t>(code.height) * code.width;
  double bits = 0;
  size_t e = 0;
  for (int64_t i = 0; i < code.size(); ++i) {
    const CdfTable& t = tables[static_cast<size_t>(i / plane)];
    int idx;
    if (e < code.escapes.size() && code.escapes[e].index == static_cast<uint32_t>(i)) {
      idx = t.escape_index();
      ++e;
    } else {
      idx = t.index_of(code.symbols[static_cast<size_t>(i)]);
      if (idx < 0) fail(ErrorKind::kInvalidArgument, "symbol outside table and not escaped");
    }
    bits -= std::log2(t.probability(idx));
  }
  return bits;
}

}  // namespace esplit
