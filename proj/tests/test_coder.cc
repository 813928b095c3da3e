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


#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "esplit/bytes.h"
#include "esplit/error.h"
#include "esplit/frame.h"
#include "esplit/quantizer.h"
#include "esplit/range_coder.h"

namespace esplit {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kShape;
}

// ---- Quantizer -------------------------------------------------------------------

TEST(Round, HalfAwayFromZero) {
  EXPECT_EQ(round_half_away(1.5), 2.0);
  EXPECT_EQ(round_half_away(-1.5), -2.0);
  EXPECT_EQ(round_half_away(0.49), 0.0);
  EXPECT_EQ(round_half_away(-0.49), 0.0);
}

TEST(Round, OutOfRangeBecomesEscape) {
  const Tensor z({1, 1, 3}, std::vector<double>{0.2, 70.2, -64.4});
  const LatentCode c = round_quantize(z, 64);
  ASSERT_EQ(c.escapes.size(), 1u);
  EXPECT_EQ(c.escapes[0], (Escape{1, 70}));
  EXPECT_EQ(c.symbols, (std::vector<int32_t>{0, 70, -64}));
  validate_latent_code(c, 64);
  EXPECT_EQ(dequantize(c).vec(), (std::vector<double>{0, 70, -64}));
}

TEST(Round, UpperBoundIsExclusive) {
  const LatentCode c = round_quantize(Tensor({1, 1, 2}, std::vector<double>{63.0, 64.0}), 64);
  ASSERT_EQ(c.escapes.size(), 1u);
  EXPECT_EQ(c.escapes[0].index, 1u);
}

TEST(Round, RejectsNonFiniteAndInt16Overflow) {
  EXPECT_EQ(kind_of([] { round_quantize(Tensor({1, 1, 1}, NAN)); }), ErrorKind::kNumeric);
  EXPECT_EQ(kind_of([] { round_quantize(Tensor({1, 1, 1}, 40000.0)); }), ErrorKind::kInvalidArgument);
}

TEST(Noise, SupportAndMean) {
  std::mt19937_64 rng(9);
  const Tensor n = noise_quantize(Tensor({1000000}, 0.0), rng);
  double mean = 0;
  for (double v : n.vec()) {
    ASSERT_GE(v, -0.5);
    ASSERT_LE(v, 0.5);
    mean += v;
  }
  mean /= static_cast<double>(n.numel());
  EXPECT_LT(std::abs(mean), 3 * (1 / std::sqrt(12.0)) / std::sqrt(1e6));
}

TEST(Noise, IdentityGradient) {
  std::mt19937_64 rng(1);
  ad::Graph g;
  ad::Var z = g.input(Tensor({2, 3}, 0.7), true);
  g.backward(ad::sum(noise_quantize(z, rng)));
  const Tensor grad = g.grad(z);
  for (double v : grad.vec()) EXPECT_EQ(v, 1.0);
}

TEST(U8, HandEvaluatedExample) {
  const Tensor x({3}, std::vector<double>{0.0, 2.55, 1.28});
  const AffineQuant8 a = quantize_u8(x);
  EXPECT_NEAR(a.scale, 0.01, 1e-8);
  EXPECT_EQ(a.offset, 0.0);
  EXPECT_EQ(a.q[2], 128);
  EXPECT_NEAR(dequantize_u8(a)[2], 1.28, 1e-6);
  EXPECT_EQ(a.q[0], 0);
  EXPECT_EQ(a.q[1], 255);
}

TEST(U8, ConstantTensorIsExact) {
  const Tensor x({5}, -0.75);
  const AffineQuant8 a = quantize_u8(x);
  for (uint8_t q : a.q) EXPECT_EQ(q, a.q[0]);
  EXPECT_EQ(dequantize_u8(a), x);
}

TEST(U8, RoundTripWithinHalfStep) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-7, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x({4, 5, 5});
    for (double& v : x.data()) v = u(rng) * (trial + 1) / 10.0;
    const AffineQuant8 a = quantize_u8(x);
    const Tensor y = dequantize_u8(a);
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_LE(std::abs(y[i] - x[i]), a.scale / 2 + 1e-12);
  }
}

TEST(U8, PayloadIsEightByteHeaderPlusElements) {
  const Tensor x({2, 3, 3}, std::vector<double>(18, 0.5));
  const AffineQuant8 a = quantize_u8(x);
  const std::vector<uint8_t> p = pack_u8_payload(a);
  EXPECT_EQ(p.size(), 8u + 18u);
  const AffineQuant8 b = unpack_u8_payload(p, x.shape());
  EXPECT_EQ(dequantize_u8(b), dequantize_u8(a));
}

// ---- Range coder -----------------------------------------------------------------

CdfTable random_table(std::mt19937_64& rng, int n, int precision) {
  // Strictly increasing cdf from n distinct cut points.
  std::vector<uint32_t> cuts;
  std::uniform_int_distribution<uint32_t> d(1, (1u << precision) - 1);
  std::gamma_distribution<double> spread(0.3, 1.0);
  std::vector<double> w(static_cast<size_t>(n));
  double sum = 0;
  for (double& v : w) sum += (v = spread(rng) + 1e-9);
  const uint32_t total = 1u << precision;
  CdfTable t;
  t.precision = precision;
  t.cdf.push_back(0);
  uint32_t acc = 0;
  double run = 0;
  for (int s = 0; s < n; ++s) {
    run += w[static_cast<size_t>(s)];
    uint32_t next = s + 1 == n ? total : static_cast<uint32_t>(std::llround(run / sum * total));
    next = std::max(next, acc + 1);
    next = std::min<uint32_t>(next, total - static_cast<uint32_t>(n - 1 - s));
    t.cdf.push_back(acc = next);
  }
  (void)d;
  return t;
}

std::vector<int> sample(const CdfTable& t, size_t count, std::mt19937_64& rng) {
  std::uniform_int_distribution<uint32_t> u(0, t.total() - 1);
  std::vector<int> s(count);
  for (int& v : s) {
    const uint32_t x = u(rng);
    v = static_cast<int>(std::upper_bound(t.cdf.begin(), t.cdf.end(), x) - t.cdf.begin()) - 1;
  }
  return s;
}

double ideal_bits(const CdfTable& t, const std::vector<int>& s) {
  double bits = 0;
  for (int v : s) bits -= std::log2(t.probability(v));
  return bits;
}

TEST(RangeCoder, RandomRoundTrips) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const CdfTable t = random_table(rng, 2 + trial % 40, trial % 3 == 0 ? 12 : 16);
    validate_cdf_table(t);
    const std::vector<int> s = sample(t, static_cast<size_t>(trial * 7 % 500), rng);
    const Bitstream b = encode_symbols(s, t);
    EXPECT_EQ(decode_symbols(b, t, s.size()), s);
  }
}

TEST(RangeCoder, EmptySequence) {
  CdfTable t;
  t.cdf = {0, 30000, 65536};
  EXPECT_TRUE(encode_symbols({}, t).bytes.empty());
  EXPECT_TRUE(decode_symbols({}, t, 0).empty());
}

TEST(RangeCoder, UniformFourSymbolBound) {
  CdfTable t;
  t.cdf = {0, 16384, 32768, 49152, 65536};
  const std::vector<int> s = {0, 1, 2, 3, 3, 2, 1, 0};
  EXPECT_LE(encode_symbols(s, t).bit_length(), 16u + 64u);
}

TEST(RangeCoder, CloseToCrossEntropy) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 3; ++trial) {
    const CdfTable t = random_table(rng, 17, 16);
    const std::vector<int> s = sample(t, 100000, rng);
    const double bound = ideal_bits(t, s) * 1.002 + 64;
    EXPECT_LE(static_cast<double>(encode_symbols(s, t).bit_length()), bound);
  }
}

TEST(RangeCoder, TruncatedAndOverlongStreamsAreFormatErrors) {
  CdfTable t;
  t.cdf = {0, 1000, 65536};
  const std::vector<int> s(200, 0);
  Bitstream b = encode_symbols(s, t);
  Bitstream shorter = b;
  shorter.bytes.resize(shorter.bytes.size() - 2);
  EXPECT_EQ(kind_of([&] { decode_symbols(shorter, t, s.size()); }), ErrorKind::kFormat);
  Bitstream longer = b;
  longer.bytes.push_back(0);
  longer.bytes.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_symbols(longer, t, s.size()); }), ErrorKind::kFormat);
  Bitstream odd = b;
  odd.bytes.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_symbols(odd, t, s.size()); }), ErrorKind::kFormat);
}

TEST(RangeCoder, LatentCodeWithEscapes) {
  CdfTable t;
  t.offset = -2;
  t.cdf = {0, 5000, 20000, 45000, 60000, 65536};  // symbols -2..1 plus escape
  const Tensor z({2, 2, 2}, std::vector<double>{0, 1, -2, 9, -1, 0, -300, 1});
  const LatentCode code = round_quantize(z, 2, 3);
  ASSERT_EQ(code.escapes.size(), 2u);
  const std::vector<CdfTable> tables = {t, t};
  const Bitstream b = encode(code, tables);
  std::vector<int16_t> esc;
  for (const Escape& e : code.escapes) esc.push_back(e.value);
  LatentCode back = decode(b, tables, 2, 2, 2, esc);
  back.beta_id = code.beta_id;
  EXPECT_EQ(back, code);
  EXPECT_EQ(kind_of([&] { decode(b, tables, 2, 2, 2, {}); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([&] { encode(code, std::vector<CdfTable>{t}); }), ErrorKind::kInvalidArgument);
  const double bits = table_bits(code, tables);
  EXPECT_LE(static_cast<double>(b.bit_length()), bits + 64);
}

struct Vector {
  std::string name;
  CdfTable table;
  std::vector<int> symbols;
  std::vector<uint8_t> bytes;
};

std::vector<Vector> load_vectors() {
  std::ifstream in(std::string(ESPLIT_TESTDATA_DIR) + "/coder_vectors.txt");
  std::vector<Vector> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "case") {
      out.emplace_back();
      ls >> out.back().name;
    } else if (key == "precision") {
      ls >> out.back().table.precision;
    } else if (key == "cdf") {
      for (uint32_t v; ls >> v;) out.back().table.cdf.push_back(v);
    } else if (key == "symbols") {
      for (int v; ls >> v;) out.back().symbols.push_back(v);
    } else if (key == "bytes") {
      std::string hex;
      ls >> hex;
      for (size_t i = 0; i + 1 < hex.size(); i += 2) {
        out.back().bytes.push_back(static_cast<uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
      }
    }
  }
  return out;
}

TEST(RangeCoder, FrozenVectors) {
  const std::vector<Vector> vs = load_vectors();
  ASSERT_EQ(vs.size(), 6u);
  for (const Vector& v : vs) {
    EXPECT_EQ(encode_symbols(v.symbols, v.table).bytes, v.bytes) << v.name;
    EXPECT_EQ(decode_symbols({v.bytes}, v.table, v.symbols.size()), v.symbols) << v.name;
  }
}

// ---- Frame -----------------------------------------------------------------------

PayloadFrame sample_frame() {
  PayloadFrame f;
  f.codec = Codec::kEntropic;
  f.channels = 2;
  f.height = 3;
  f.width = 4;
  f.beta_id = 7;
  f.escapes = {{5, -300}, {9, 120}};
  f.bitstream = {0xde, 0xad, 0xbe, 0xef, 0x01, 0x02};
  return f;
}

TEST(Frame, RoundTripAndSize) {
  const PayloadFrame f = sample_frame();
  const std::vector<uint8_t> bytes = serialize_frame(f);
  EXPECT_EQ(bytes.size(), 24u + 6u * 2u + 6u);
  EXPECT_EQ(bytes.size(), f.wire_size());
  EXPECT_EQ(parse_frame(bytes), f);
  EXPECT_TRUE(frame_crc_ok(bytes));
}

TEST(Frame, BigEndianLayout) {
  const std::vector<uint8_t> b = serialize_frame(sample_frame());
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "ESPL");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ((std::vector<uint8_t>(b.begin() + 6, b.begin() + 16)),
            (std::vector<uint8_t>{0, 2, 0, 3, 0, 4, 0, 7, 0, 2}));
  // First escape: u32 5, i16 -300.
  EXPECT_EQ((std::vector<uint8_t>(b.begin() + 16, b.begin() + 22)),
            (std::vector<uint8_t>{0, 0, 0, 5, 0xfe, 0xd4}));
  const uint32_t crc = crc32(std::span(b).first(b.size() - 4));
  const std::span<const uint8_t> tail = std::span<const uint8_t>(b).last(4);
  ByteReader r(tail, Endian::kBig, "crc");
  EXPECT_EQ(r.get<uint32_t>(), crc);
}

TEST(Frame, ErrorCategories) {
  const std::vector<uint8_t> good = serialize_frame(sample_frame());
  auto with_crc = [](std::vector<uint8_t> m) {
    const uint32_t crc = crc32(std::span<const uint8_t>(m).first(m.size() - 4));
    for (int i = 0; i < 4; ++i) m[m.size() - 4 + static_cast<size_t>(i)] = static_cast<uint8_t>(crc >> (24 - 8 * i));
    return m;
  };
  auto with_byte = [&](size_t pos, uint8_t v) {
    std::vector<uint8_t> m = good;
    m[pos] = v;
    return with_crc(m);
  };
  std::vector<uint8_t> b = good;
  b[20] ^= 0x40;
  EXPECT_EQ(kind_of([&] { parse_frame(b); }), ErrorKind::kTransport);
  // Cut or padded in transit: the trailing crc no longer matches.
  b = good;
  b.pop_back();
  EXPECT_EQ(kind_of([&] { parse_frame(b); }), ErrorKind::kTransport);
  b = good;
  b.push_back(0);
  EXPECT_EQ(kind_of([&] { parse_frame(b); }), ErrorKind::kTransport);
  EXPECT_EQ(kind_of([&] { parse_frame(std::span(good).first(10)); }), ErrorKind::kFormat);
  // Valid crc over inconsistent lengths.
  b = good;
  b.erase(b.end() - 5);
  EXPECT_EQ(kind_of([&] { parse_frame(with_crc(b)); }), ErrorKind::kFormat);
  b = good;
  b.insert(b.end() - 4, 0);
  EXPECT_EQ(kind_of([&] { parse_frame(with_crc(b)); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([&] { parse_frame(with_byte(15, 200)); }), ErrorKind::kFormat);

  EXPECT_EQ(kind_of([&] { parse_frame(with_byte(5, 9)); }), ErrorKind::kUnsupported);
  EXPECT_EQ(kind_of([&] { parse_frame(with_byte(4, 2)); }), ErrorKind::kUnsupported);
  EXPECT_EQ(kind_of([&] { parse_frame(with_byte(0, 'X')); }), ErrorKind::kFormat);
}

TEST(Frame, EverySingleByteMutationFailsCrc) {
  const std::vector<uint8_t> good = serialize_frame(sample_frame());
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> delta(1, 255);
  for (size_t pos = 0; pos < good.size(); ++pos) {
    std::vector<uint8_t> m = good;
    m[pos] = static_cast<uint8_t>(m[pos] + delta(rng));
    EXPECT_EQ(kind_of([&] { parse_frame(m); }), ErrorKind::kTransport) << pos;
    EXPECT_FALSE(frame_crc_ok(m)) << pos;
  }
}

TEST(Frame, RawImageFrame) {
  std::vector<uint8_t> px(3 * 32 * 32, 17);
  const PayloadFrame f = raw_image_frame(px, 3, 32, 32);
  EXPECT_EQ(f.codec, Codec::kRaw);
  EXPECT_EQ(f.wire_size(), 3u * 32u * 32u + 24u);
  EXPECT_EQ(parse_frame(serialize_frame(f)), f);
}

}  // namespace
}  // namespace esplit
