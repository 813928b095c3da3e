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


// Synthetic toy data: rendered digit glyphs on cluttered colour backgrounds.
//
// Images are stored as 8-bit CHW pixels, exactly what a camera sensor would
// hand the device, and mapped to network inputs in [-1, 1] on load. The
// primary task is the digit (10 classes); the secondary task is its parity.

#ifndef ESPLIT_DATASET_H_
#define ESPLIT_DATASET_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "esplit/tensor.h"

namespace esplit {

enum class Task { kDigit, kParity };
const char* task_name(Task task);
Task task_from_name(const std::string& name);
int task_classes(Task task);
int task_label(int digit, Task task);

double pixel_to_input(uint8_t p);

struct Dataset {
  int channels = 3;
  int height = 32;
  int width = 32;
  std::vector<uint8_t> labels;  // digit per sample
  std::vector<uint8_t> pixels;  // N * C * H * W

  size_t size() const { return labels.size(); }
  size_t image_bytes() const { return static_cast<size_t>(channels) * height * width; }
  std::span<const uint8_t> image(size_t i) const;
  // [B, C, H, W] network input for the given sample indices.
  Tensor images(std::span<const size_t> idx) const;
  Tensor images(size_t begin, size_t end) const;
  std::vector<int> task_labels(std::span<const size_t> idx, Task task) const;
  std::vector<int> task_labels(size_t begin, size_t end, Task task) const;
  Dataset slice(size_t begin, size_t end) const;
};

struct DigitOptions {
  int image_size = 32;
  double min_glyph_px = 13;  // glyph height range in pixels
  double max_glyph_px = 22;
  double max_rotation = 0.2;  // radians
  double max_shear = 0.2;
  double max_tint = 0.15;      // per-channel colour deviation from grey
  double min_contrast = 0.3;  // luminance gap between ink and background
  double max_contrast = 0.6;
  double noise_min = 0.02;
  double noise_max = 0.1;
  int max_distractors = 2;
};

Dataset make_digits(size_t n, uint64_t seed, const DigitOptions& opts = {});
// Defaults with glyph sizes scaled from 32 px to `image_size`.
DigitOptions digit_options_for(int image_size);

// Little-endian "ESDS" container with a trailing crc32.
std::vector<uint8_t> serialize_dataset(const Dataset& d);
Dataset parse_dataset(std::span<const uint8_t> bytes);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// Fisher-Yates over [0, n) driven by rng.
std::vector<size_t> shuffled_indices(size_t n, std::mt19937_64& rng);

}  // namespace esplit

#endif  // ESPLIT_DATASET_H_
