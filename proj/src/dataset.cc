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


#include "esplit/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "esplit/bytes.h"
#include "esplit/error.h"

namespace esplit {
namespace {

// 5x7 bitmap font, one row string per line, '#' = ink.
constexpr std::array<std::array<const char*, 7>, 10> kGlyphs = {{
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
}};

constexpr char kMagic[4] = {'E', 'S', 'D', 'S'};
constexpr uint32_t kVersion = 1;

struct Rgb {
  double r, g, b;
  double luma() const { return 0.299 * r + 0.587 * g + 0.114 * b; }
};

// Ink coverage of glyph `d` at glyph-space point (u, v), u in [0,5), v in [0,7).
// `fill` shrinks each lit cell towards its centre to vary stroke weight.
bool glyph_ink(int d, double u, double v, double fill) {
  if (u < 0 || v < 0 || u >= 5 || v >= 7) return false;
  const int cu = static_cast<int>(u), cv = static_cast<int>(v);
  if (kGlyphs[static_cast<size_t>(d)][static_cast<size_t>(cv)][cu] != '#') {
    return false;
  }
  const double margin = (1.0 - fill) / 2;
  const double fu = u - cu, fv = v - cv;
  return fu >= margin && fu <= 1 - margin && fv >= margin && fv <= 1 - margin;
}

void render_one(int digit, std::mt19937_64& rng, const DigitOptions& o, std::span<uint8_t> out) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto U = [&](double a, double b) { return a + (b - a) * unif(rng); };
  const int S = o.image_size;

  // Background: a mid-grey with a random tint and a linear gradient.
  const double base = U(0.3, 0.7);
  const Rgb bg{base + U(-o.max_tint, o.max_tint), base + U(-o.max_tint, o.max_tint), base + U(-o.max_tint, o.max_tint)};
  const double gx = U(-0.3, 0.3), gy = U(-0.3, 0.3);
  // Ink: shift the background luminance by a signed contrast, then tint.
  const double contrast = U(o.min_contrast, o.max_contrast) * (unif(rng) < 0.5 ? -1 : 1);
  Rgb ink{bg.r + contrast + U(-o.max_tint, o.max_tint), bg.g + contrast + U(-o.max_tint, o.max_tint),
          bg.b + contrast + U(-o.max_tint, o.max_tint)};
  const double shift = bg.luma() + contrast - ink.luma();
  ink = {ink.r + shift, ink.g + shift, ink.b + shift};

  // Glyph placement: glyph-space -> image-space affine map, inverted per pixel.
  const double height = U(o.min_glyph_px, o.max_glyph_px);
  const double sy = height / 7, sx = sy * U(0.8, 1.2);
  const double rot = U(-o.max_rotation, o.max_rotation), shear = U(-o.max_shear, o.max_shear);
  const double half_w = 2.5 * sx, half_h = 3.5 * sy;
  const double cx = S / 2.0 + U(-1, 1) * std::max(0.0, S / 2.0 - half_w - 1);
  const double cy = S / 2.0 + U(-1, 1) * std::max(0.0, S / 2.0 - half_h - 1);
  const double fill = U(0.8, 1.0);
  const double cr = std::cos(rot), sr = std::sin(rot);

  struct Stroke {
    double x0, y0, x1, y1, width;
    Rgb color;
  };
  std::uniform_int_distribution<int> n_dist(0, o.max_distractors);
  std::vector<Stroke> strokes(static_cast<size_t>(n_dist(rng)));
  for (Stroke& s : strokes) {
    s = {U(0, S), U(0, S), U(0, S), U(0, S), U(0.6, 1.8), {U(0, 1), U(0, 1), U(0, 1)}};
  }

  const double noise = U(o.noise_min, o.noise_max);
  std::normal_distribution<double> gauss(0.0, noise);
  const size_t plane = static_cast<size_t>(S) * S;
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      // 3x3 supersampled ink coverage.
      double cover = 0;
      for (int sy_i = 0; sy_i < 3; ++sy_i) {
        for (int sx_i = 0; sx_i < 3; ++sx_i) {
          const double px = x + (sx_i + 0.5) / 3 - cx, py = y + (sy_i + 0.5) / 3 - cy;
          const double rx = cr * px + sr * py, ry = -sr * px + cr * py;
          const double u = (rx - shear * ry) / sx + 2.5, v = ry / sy + 3.5;
          cover += glyph_ink(digit, u, v, fill) ? 1.0 / 9 : 0.0;
        }
      }
      const double g = gx * (x - S / 2.0) / S + gy * (y - S / 2.0) / S;
      Rgb c{bg.r + g, bg.g + g, bg.b + g};
      c = {c.r + cover * (ink.r - c.r), c.g + cover * (ink.g - c.g), c.b + cover * (ink.b - c.b)};
      for (const Stroke& s : strokes) {
        const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
        const double len2 = std::max(dx * dx + dy * dy, 1e-9);
        const double t = std::clamp(((x + 0.5 - s.x0) * dx + (y + 0.5 - s.y0) * dy) / len2, 0.0, 1.0);
        const double ex = s.x0 + t * dx - (x + 0.5), ey = s.y0 + t * dy - (y + 0.5);
        const double a = std::clamp(s.width - std::sqrt(ex * ex + ey * ey), 0.0, 1.0) * 0.8;
        c = {c.r + a * (s.color.r - c.r), c.g + a * (s.color.g - c.g), c.b + a * (s.color.b - c.b)};
      }
      const double vals[3] = {c.r, c.g, c.b};
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(vals[ch] + gauss(rng), 0.0, 1.0);
        out[static_cast<size_t>(ch) * plane + static_cast<size_t>(y) * S + x] =
            static_cast<uint8_t>(std::lround(v * 255));
      }
    }
  }
}

}  // namespace

const char* task_name(Task task) { return task == Task::kDigit ? "digit" : "parity"; }

Task task_from_name(const std::string& name) {
  if (name == "digit") return Task::kDigit;
  if (name == "parity") return Task::kParity;
  fail(ErrorKind::kInvalidArgument, "unknown task '" + name + "' (expected digit or parity)");
}

int task_classes(Task task) { return task == Task::kDigit ? 10 : 2; }

int task_label(int digit, Task task) { return task == Task::kDigit ? digit : digit % 2; }

double pixel_to_input(uint8_t p) { return p / 127.5 - 1.0; }

std::span<const uint8_t> Dataset::image(size_t i) const {
  if (i >= size()) fail(ErrorKind::kInvalidArgument, "sample index out of range");
  return std::span(pixels).subspan(i * image_bytes(), image_bytes());
}

Tensor Dataset::images(std::span<const size_t> idx) const {
  Tensor t({static_cast<int64_t>(idx.size()), channels, height, width});
  const size_t n = image_bytes();
  for (size_t b = 0; b < idx.size(); ++b) {
    const auto img = image(idx[b]);
    for (size_t k = 0; k < n; ++k) t[static_cast<int64_t>(b * n + k)] = pixel_to_input(img[k]);
  }
  return t;
}

Tensor Dataset::images(size_t begin, size_t end) const {
  std::vector<size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return images(idx);
}

std::vector<int> Dataset::task_labels(std::span<const size_t> idx, Task task) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(task_label(labels.at(i), task));
  return out;
}

std::vector<int> Dataset::task_labels(size_t begin, size_t end, Task task) const {
  std::vector<size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return task_labels(idx, task);
}

Dataset Dataset::slice(size_t begin, size_t end) const {
  if (begin > end || end > size()) fail(ErrorKind::kInvalidArgument, "bad dataset slice");
  Dataset d;
  d.channels = channels;
  d.height = height;
  d.width = width;
  d.labels.assign(labels.begin() + static_cast<ptrdiff_t>(begin), labels.begin() + static_cast<ptrdiff_t>(end));
  d.pixels.assign(pixels.begin() + static_cast<ptrdiff_t>(begin * image_bytes()),
                  pixels.begin() + static_cast<ptrdiff_t>(end * image_bytes()));
  return d;
}

Dataset make_digits(size_t n, uint64_t seed, const DigitOptions& opts) {
  if (opts.image_size < 8) fail(ErrorKind::kInvalidArgument, "image_size must be >= 8");
  Dataset d;
  d.height = d.width = opts.image_size;
  d.labels.resize(n);
  d.pixels.resize(n * d.image_bytes());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> digit_dist(0, 9);
  for (size_t i = 0; i < n; ++i) {
    const int digit = digit_dist(rng);
    d.labels[i] = static_cast<uint8_t>(digit);
    render_one(digit, rng, opts, std::span(d.pixels).subspan(i * d.image_bytes(), d.image_bytes()));
  }
  return d;
}

std::vector<uint8_t> serialize_dataset(const Dataset& d) {
  ByteWriter w(Endian::kLittle);
  w.put_bytes(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.put(kVersion);
  w.put(static_cast<uint32_t>(d.size()));
  w.put(static_cast<uint16_t>(d.channels));
  w.put(static_cast<uint16_t>(d.height));
  w.put(static_cast<uint16_t>(d.width));
  w.put_bytes(d.labels);
  w.put_bytes(d.pixels);
  w.put(crc32(w.bytes()));
  return std::move(w.bytes());
}

Dataset parse_dataset(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorKind::kFormat, "dataset file too short");
  const auto body = bytes.first(bytes.size() - 4);
  if (ByteReader(bytes.last(4), Endian::kLittle, "dataset").get<uint32_t>() != crc32(body)) {
    fail(ErrorKind::kFormat, "dataset crc mismatch");
  }
  ByteReader r(body, Endian::kLittle, "dataset");
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) fail(ErrorKind::kFormat, "not a dataset file");
  if (r.get<uint32_t>() != kVersion) fail(ErrorKind::kUnsupported, "unsupported dataset version");
  Dataset d;
  const uint32_t n = r.get<uint32_t>();
  d.channels = r.get<uint16_t>();
  d.height = r.get<uint16_t>();
  d.width = r.get<uint16_t>();
  const auto labels = r.get_bytes(n);
  d.labels.assign(labels.begin(), labels.end());
  const auto px = r.get_bytes(static_cast<size_t>(n) * d.image_bytes());
  d.pixels.assign(px.begin(), px.end());
  if (r.remaining() != 0) fail(ErrorKind::kFormat, "trailing bytes in dataset");
  for (uint8_t l : d.labels) {
    if (l > 9) fail(ErrorKind::kFormat, "dataset label out of range");
  }
  return d;
}

DigitOptions digit_options_for(int image_size) {
  DigitOptions o;
  const double s = image_size / 32.0;
  o.image_size = image_size;
  o.min_glyph_px *= s;
  o.max_glyph_px *= s;
  return o;
}

void save_dataset(const Dataset& d, const std::string& path) { write_file(path, serialize_dataset(d)); }

Dataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

std::vector<size_t> shuffled_indices(size_t n, std::mt19937_64& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace esplit
