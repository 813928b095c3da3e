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


#include "esplit/frame.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esplit/bytes.h"
#include "esplit/error.h"
#include "esplit/range_coder.h"

namespace esplit {
namespace {

constexpr uint8_t kMagic[4] = {'E', 'S', 'P', 'L'};

}  // namespace

const char* codec_name(Codec c) {
  switch (c) {
    case Codec::kEntropic: return "entropic";
    case Codec::kCrbq: return "crbq";
    case Codec::kRaw: return "raw";
  }
  return "?";
}

std::vector<uint8_t> serialize_frame(const PayloadFrame& f) {
  if (f.escapes.size() > std::numeric_limits<uint16_t>::max()) {
    fail(ErrorKind::kInvalidArgument, "too many escapes for one frame");
  }
  if (f.bitstream.size() > std::numeric_limits<uint32_t>::max()) fail(ErrorKind::kInvalidArgument, "bitstream too long");
  ByteWriter w(Endian::kBig);
  w.put_bytes(kMagic);
  w.put(kFrameVersion);
  w.put(static_cast<uint8_t>(f.codec));
  w.put(f.channels);
  w.put(f.height);
  w.put(f.width);
  w.put(f.beta_id);
  w.put(static_cast<uint16_t>(f.escapes.size()));
  for (const Escape& e : f.escapes) {
    w.put(e.index);
    w.put(e.value);
  }
  w.put(static_cast<uint32_t>(f.bitstream.size()));
  w.put_bytes(f.bitstream);
  w.put(crc32(w.bytes()));
  return std::move(w.bytes());
}

bool frame_crc_ok(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4) return false;
  ByteReader r(bytes.last(4), Endian::kBig, "frame crc");
  return r.get<uint32_t>() == crc32(bytes.first(bytes.size() - 4));
}

PayloadFrame parse_frame(std::span<const uint8_t> bytes) {
  if (bytes.size() < kFrameOverheadBytes) fail(ErrorKind::kFormat, "truncated frame header");
  if (!frame_crc_ok(bytes)) fail(ErrorKind::kTransport, "frame crc mismatch");
  ByteReader hdr(bytes, Endian::kBig, "frame");
  hdr.get_bytes(14);
  const uint16_t n_esc = hdr.get<uint16_t>();
  const size_t len_pos = 16 + 6 * size_t{n_esc};
  if (bytes.size() < len_pos + 8) fail(ErrorKind::kFormat, "truncated frame");
  ByteReader len_reader(bytes.subspan(len_pos, 4), Endian::kBig, "frame");
  const size_t expected = kFrameOverheadBytes + 6 * size_t{n_esc} + len_reader.get<uint32_t>();
  if (bytes.size() < expected) fail(ErrorKind::kFormat, "truncated frame");
  if (bytes.size() > expected) fail(ErrorKind::kFormat, "trailing bytes after frame");

  ByteReader r(bytes.first(bytes.size() - 4), Endian::kBig, "frame");
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) fail(ErrorKind::kFormat, "bad frame magic");
  const uint8_t version = r.get<uint8_t>();
  if (version != kFrameVersion) fail(ErrorKind::kUnsupported, "frame version " + std::to_string(version));
  const uint8_t codec = r.get<uint8_t>();
  if (codec > static_cast<uint8_t>(Codec::kRaw)) fail(ErrorKind::kUnsupported, "unknown codec id " + std::to_string(codec));
  PayloadFrame f;
  f.codec = static_cast<Codec>(codec);
  f.channels = r.get<uint16_t>();
  f.height = r.get<uint16_t>();
  f.width = r.get<uint16_t>();
  f.beta_id = r.get<uint16_t>();
  r.get<uint16_t>();
  f.escapes.resize(n_esc);
  for (Escape& e : f.escapes) {
    e.index = r.get<uint32_t>();
    e.value = r.get<int16_t>();
  }
  const auto bits = r.get_bytes(r.get<uint32_t>());
  f.bitstream.assign(bits.begin(), bits.end());
  return f;
}

std::vector<uint8_t> pack_u8_payload(const AffineQuant8& a) {
  ByteWriter w(Endian::kBig);
  w.put(static_cast<float>(a.scale));
  w.put(static_cast<float>(a.offset));
  w.put_bytes(a.q);
  return std::move(w.bytes());
}

AffineQuant8 unpack_u8_payload(std::span<const uint8_t> bytes, const Shape& shape) {
  const size_t n = static_cast<size_t>(shape_numel(shape));
  if (bytes.size() != 8 + n) {
    fail(ErrorKind::kFormat, "u8 payload holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(8 + n));
  }
  ByteReader r(bytes, Endian::kBig, "u8 payload");
  AffineQuant8 a;
  a.shape = shape;
  a.scale = r.get<float>();
  a.offset = r.get<float>();
  if (!(a.scale > 0) || !std::isfinite(a.scale) || !std::isfinite(a.offset)) {
    fail(ErrorKind::kFormat, "invalid u8 scale/offset");
  }
  a.zero_point = static_cast<int>(std::clamp(std::round(-a.offset / a.scale), 0.0, 255.0));
  const auto q = r.get_bytes(n);
  a.q.assign(q.begin(), q.end());
  return a;
}

Codec checkpoint_codec(const Checkpoint& ckpt) {
  if (ckpt.stage == StageTag::kCrbq) return Codec::kCrbq;
  if (ckpt.has_prior()) return Codec::kEntropic;
  fail(ErrorKind::kUnsupported, std::string("a ") + stage_tag_name(ckpt.stage) + " checkpoint has no bottleneck codec");
}

uint16_t checkpoint_beta_id(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.find("beta_id");
  return it == ckpt.metadata.end() ? 0 : static_cast<uint16_t>(std::stoi(it->second));
}

PayloadFrame encode_bottleneck(const Checkpoint& ckpt, const Tensor& z, LatentCode* code_out) {
  const Shape latent = ckpt.latent_shape();
  if (z.shape() != latent) {
    fail(ErrorKind::kShape, "bottleneck " + shape_str(z.shape()) + " does not match model latent " + shape_str(latent));
  }
  PayloadFrame f;
  f.codec = checkpoint_codec(ckpt);
  f.channels = static_cast<uint16_t>(latent[0]);
  f.height = static_cast<uint16_t>(latent[1]);
  f.width = static_cast<uint16_t>(latent[2]);
  f.beta_id = checkpoint_beta_id(ckpt);
  if (f.codec == Codec::kCrbq) {
    f.bitstream = pack_u8_payload(quantize_u8(z));
    return f;
  }
  if (ckpt.tables.empty()) fail(ErrorKind::kInvalidArgument, "checkpoint has no exported cdf tables");
  // Tables cover [offset, -offset - 1], so the clamp bound is -offset.
  LatentCode code = round_quantize(z, -ckpt.tables[0].offset, f.beta_id);
  f.escapes = code.escapes;
  f.bitstream = encode(code, ckpt.tables).bytes;
  if (code_out) *code_out = std::move(code);
  return f;
}

Tensor decode_bottleneck(const PayloadFrame& f, const Checkpoint& ckpt) {
  const Codec expected = checkpoint_codec(ckpt);
  if (f.codec != expected) {
    fail(ErrorKind::kUnsupported, std::string("frame codec ") + codec_name(f.codec) + " but model expects " +
                                      codec_name(expected));
  }
  const Shape latent = ckpt.latent_shape();
  if (Shape{f.channels, f.height, f.width} != latent) {
    fail(ErrorKind::kFormat, "frame shape does not match model latent " + shape_str(latent));
  }
  if (f.beta_id != checkpoint_beta_id(ckpt)) {
    fail(ErrorKind::kFormat, "frame coded at rate point " + std::to_string(f.beta_id) + ", model serves " +
                                 std::to_string(checkpoint_beta_id(ckpt)));
  }
  if (f.codec == Codec::kCrbq) {
    if (!f.escapes.empty()) fail(ErrorKind::kFormat, "crbq frame carries escapes");
    return dequantize_u8(unpack_u8_payload(f.bitstream, latent)).reshaped({1, latent[0], latent[1], latent[2]});
  }
  std::vector<int16_t> values;
  values.reserve(f.escapes.size());
  for (const Escape& e : f.escapes) values.push_back(e.value);
  LatentCode code = decode(Bitstream{f.bitstream}, ckpt.tables, f.channels, f.height, f.width, values);
  for (size_t i = 0; i < f.escapes.size(); ++i) {
    if (code.escapes[i].index != f.escapes[i].index) fail(ErrorKind::kFormat, "escape position mismatch");
  }
  code.beta_id = f.beta_id;
  return dequantize(code);
}

PayloadFrame raw_image_frame(std::span<const uint8_t> pixels, int channels, int height, int width) {
  if (pixels.size() != static_cast<size_t>(channels) * height * width) {
    fail(ErrorKind::kShape, "raw image byte count does not match its shape");
  }
  PayloadFrame f;
  f.codec = Codec::kRaw;
  f.channels = static_cast<uint16_t>(channels);
  f.height = static_cast<uint16_t>(height);
  f.width = static_cast<uint16_t>(width);
  f.bitstream.assign(pixels.begin(), pixels.end());
  return f;
}

}  // namespace esplit
