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

#ifndef ESPLIT_QUANTIZER_H_
#define ESPLIT_QUANTIZER_H_

#include <cstdint>
#include <random>
#include <vector>

#include "esplit/autodiff.h"
#include "esplit/entropy_model.h"
#include "esplit/tensor.h"

namespace esplit {

struct Escape {
  uint32_t index;  // flat channel-major position
  int16_t value;
  friend bool operator==(const Escape&, const Escape&) = default;
};

// Integer bottleneck of one sample, laid out [C, H, W]. Positions listed in
// `escapes` hold their raw value in `symbols` too; everything else lies in
// [-bound, bound - 1].
struct LatentCode {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<int32_t> symbols;
  std::vector<Escape> escapes;  // strictly increasing index
  uint16_t beta_id = 0;

  int64_t size() const { return static_cast<int64_t>(channels) * height * width; }
  Shape shape() const { return {channels, height, width}; }
  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

// Round half away from zero.
double round_half_away(double v);

// Samples U(-1/2, 1/2) noise of the given shape.
Tensor uniform_noise(const Shape& shape, std::mt19937_64& rng);

// z + U(-1/2, 1/2). The noise enters as a constant, so d(out)/dz = 1.
Tensor noise_quantize(const Tensor& z, std::mt19937_64& rng);
ad::Var noise_quantize(ad::Var z, std::mt19937_64& rng);

// Rounds a [C, H, W] tensor. Values outside [-bound, bound - 1] become
// escapes; an escape outside the int16 range is an error.
LatentCode round_quantize(const Tensor& z, int bound = kDefaultClampBound, uint16_t beta_id = 0);
// [1, C, H, W] float view of the code.
Tensor dequantize(const LatentCode& code);
// Throws kFormat when symbols or escapes break the LatentCode invariants.
void validate_latent_code(const LatentCode& code, int bound = kDefaultClampBound);

// Per-tensor affine 8-bit quantization: x ~ offset + q * scale. Scale and
// offset are kept float32-representable so the 8-byte wire header carries
// them without loss; offset is rounded down and scale up so every input
// stays inside the 0..255 grid.
struct AffineQuant8 {
  Shape shape;
  std::vector<uint8_t> q;
  double scale = 1.0;
  double offset = 0.0;
  int zero_point = 0;  // round(-offset / scale) clamped to [0, 255]
};

AffineQuant8 quantize_u8(const Tensor& x);
Tensor dequantize_u8(const AffineQuant8& a);

}  // namespace esplit

#endif  // ESPLIT_QUANTIZER_H_
