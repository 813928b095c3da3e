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

#include "esplit/quantizer.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esplit/error.h"

namespace esplit {

double round_half_away(double v) { return std::round(v); }

Tensor uniform_noise(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  Tensor n(shape);
  for (double& v : n.data()) v = unif(rng);
  return n;
}

Tensor noise_quantize(const Tensor& z, std::mt19937_64& rng) {
  Tensor out = uniform_noise(z.shape(), rng);
  for (int64_t i = 0; i < z.numel(); ++i) out[i] += z[i];
  return out;
}

ad::Var noise_quantize(ad::Var z, std::mt19937_64& rng) {
  return ad::add(z, z.graph()->input(uniform_noise(z.shape(), rng)));
}

LatentCode round_quantize(const Tensor& z, int bound, uint16_t beta_id) {
  if (z.rank() != 3) fail(ErrorKind::kShape, "round_quantize expects [C,H,W], got " + shape_str(z.shape()));
  LatentCode code;
  code.channels = static_cast<int>(z.dim(0));
  code.height = static_cast<int>(z.dim(1));
  code.width = static_cast<int>(z.dim(2));
  code.beta_id = beta_id;
  code.symbols.resize(static_cast<size_t>(z.numel()));
  for (int64_t i = 0; i < z.numel(); ++i) {
    if (!std::isfinite(z[i])) fail(ErrorKind::kNumeric, "round_quantize: non-finite latent");
    const double r = round_half_away(z[i]);
    if (r < -bound || r > bound - 1) {
      if (r < std::numeric_limits<int16_t>::min() || r > std::numeric_limits<int16_t>::max()) {
        fail(ErrorKind::kInvalidArgument,
             "latent value " + std::to_string(r) + " does not fit the 16-bit escape channel");
      }
      code.escapes.push_back({static_cast<uint32_t>(i), static_cast<int16_t>(r)});
    }
    code.symbols[static_cast<size_t>(i)] = static_cast<int32_t>(r);
  }
  return code;
}

Tensor dequantize(const LatentCode& code) {
  Tensor t({1, code.channels, code.height, code.width});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = code.symbols[static_cast<size_t>(i)];
  return t;
}

void validate_latent_code(const LatentCode& code, int bound) {
  if (code.channels <= 0 || code.height <= 0 || code.width <= 0) fail(ErrorKind::kFormat, "latent code has empty shape");
  if (static_cast<int64_t>(code.symbols.size()) != code.size()) {
    fail(ErrorKind::kFormat, "latent code symbol count does not match its shape");
  }
  size_t e = 0;
  for (int64_t i = 0; i < code.size(); ++i) {
    const int32_t s = code.symbols[static_cast<size_t>(i)];
    const bool escaped = e < code.escapes.size() && code.escapes[e].index == static_cast<uint32_t>(i);
    if (escaped) {
      if (code.escapes[e].value != s) fail(ErrorKind::kFormat, "escape value disagrees with symbol");
      ++e;
    } else if (s < -bound || s > bound - 1) {
      fail(ErrorKind::kFormat, "symbol " + std::to_string(s) + " at " + std::to_string(i) + " needs an escape");
    }
  }
  if (e != code.escapes.size()) fail(ErrorKind::kFormat, "escape list not strictly increasing or out of range");
}

AffineQuant8 quantize_u8(const Tensor& x) {
  check_finite(x, "quantize_u8 input");
  AffineQuant8 a;
  a.shape = x.shape();
  a.q.resize(static_cast<size_t>(x.numel()));
  if (x.empty()) return a;
  const auto [lo_it, hi_it] = std::minmax_element(x.data().begin(), x.data().end());
  const double lo = *lo_it, hi = *hi_it;
  float offset = static_cast<float>(lo);
  if (offset > lo) offset = std::nextafter(offset, -std::numeric_limits<float>::infinity());
  float scale = static_cast<float>(std::max((hi - offset) / 255.0, 1e-12));
  if (static_cast<double>(scale) * 255.0 + offset < hi) {
    scale = std::nextafter(scale, std::numeric_limits<float>::infinity());
  }
  a.offset = offset;
  a.scale = scale;
  a.zero_point = static_cast<int>(std::clamp(std::round(-a.offset / a.scale), 0.0, 255.0));
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double q = std::round((x[i] - a.offset) / a.scale);
    a.q[static_cast<size_t>(i)] = static_cast<uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return a;
}

Tensor dequantize_u8(const AffineQuant8& a) {
  Tensor t(a.shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = a.offset + a.q[static_cast<size_t>(i)] * a.scale;
  return t;
}

}  // namespace esplit
