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


// Wire frame carrying one compressed bottleneck.
//
// Layout, all multi-byte fields big-endian:
//   off  size  field
//     0     4  magic "ESPL"
//     4     1  version (1)
//     5     1  codec_id: 0 entropic, 1 crbq-u8, 2 raw
//     6     2  channels
//     8     2  height
//    10     2  width
//    12     2  beta_id
//    14     2  n_escapes
//    16  6*n   escapes: u32 flat index, i16 value
//     .     4  bitstream_len
//     .   len  bitstream
//     .     4  crc32 (zlib) of every preceding byte
// so a frame is 24 + 6 * n_escapes + bitstream_len bytes.
//
// Codec payloads: entropic = range-coder output; crbq-u8 = f32 scale, f32
// offset, then one byte per element; raw = the 8-bit CHW image.

#ifndef ESPLIT_FRAME_H_
#define ESPLIT_FRAME_H_

#include <cstdint>
#include <span>
#include <vector>

#include "esplit/model.h"
#include "esplit/quantizer.h"

namespace esplit {

inline constexpr uint8_t kFrameVersion = 1;
inline constexpr size_t kFrameOverheadBytes = 24;

enum class Codec : uint8_t { kEntropic = 0, kCrbq = 1, kRaw = 2 };
const char* codec_name(Codec c);

struct PayloadFrame {
  Codec codec = Codec::kEntropic;
  uint16_t channels = 0;
  uint16_t height = 0;
  uint16_t width = 0;
  uint16_t beta_id = 0;
  std::vector<Escape> escapes;
  std::vector<uint8_t> bitstream;

  size_t wire_size() const { return kFrameOverheadBytes + 6 * escapes.size() + bitstream.size(); }
  friend bool operator==(const PayloadFrame&, const PayloadFrame&) = default;
};

std::vector<uint8_t> serialize_frame(const PayloadFrame& frame);

// Size mismatches against the declared lengths are kFormat errors, a bad
// checksum is kTransport, an unknown codec or version is kUnsupported.
PayloadFrame parse_frame(std::span<const uint8_t> bytes);

// True when the trailing crc32 matches the rest of the buffer.
bool frame_crc_ok(std::span<const uint8_t> bytes);

// Codec payload helpers.
std::vector<uint8_t> pack_u8_payload(const AffineQuant8& a);
AffineQuant8 unpack_u8_payload(std::span<const uint8_t> bytes, const Shape& shape);

// Codec a trained student transmits with: crbq for channel-reduced
// baselines, entropic for anything carrying a prior.
Codec checkpoint_codec(const Checkpoint& ckpt);
uint16_t checkpoint_beta_id(const Checkpoint& ckpt);

// Frame for one sample's continuous bottleneck z [C, H, W]. For the entropic
// codec the rounded code is returned through `code`.
PayloadFrame encode_bottleneck(const Checkpoint& ckpt, const Tensor& z, LatentCode* code = nullptr);
// Reconstructs the [1, C, H, W] server-side input from a frame. Shape,
// codec or rate-point disagreement with the checkpoint is an error.
Tensor decode_bottleneck(const PayloadFrame& frame, const Checkpoint& ckpt);

// Codec 2 frame for an 8-bit CHW image.
PayloadFrame raw_image_frame(std::span<const uint8_t> pixels, int channels, int height, int width);

}  // namespace esplit

#endif  // ESPLIT_FRAME_H_
