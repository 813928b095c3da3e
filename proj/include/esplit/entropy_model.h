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

// Factorized prior over the bottleneck: one univariate density per latent
// channel, shared across spatial positions. Each density is given by a
// monotone scalar network whose output passes through a sigmoid to give the
// CDF. Discrete symbol probabilities come from CDF differences over unit bins,
// and the same densities are quantized into integer CDF tables for the range
// coder.

#ifndef ESPLIT_ENTROPY_MODEL_H_
#define ESPLIT_ENTROPY_MODEL_H_

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "esplit/autodiff.h"

namespace esplit {

inline constexpr int kDefaultClampBound = 64;
inline constexpr int kDefaultPrecision = 16;

// Any per-channel univariate distribution that can be discretized.
class Density {
 public:
  virtual ~Density() = default;
  virtual int channels() const = 0;
  virtual double cdf(double t, int channel) const = 0;
  // 1 - cdf(t), overridden where it can be computed without cancellation.
  virtual double sf(double t, int channel) const { return 1.0 - cdf(t, channel); }

  // P(z) = CDF(z + 1/2) - CDF(z - 1/2), evaluated on whichever tail keeps the
  // subtraction well conditioned.
  double pmf(int64_t z, int channel) const;
  // Mass outside [-bound, bound - 1]; this is what the escape symbol carries.
  double tail_mass(int bound, int channel) const;
};

// Density defined by an arbitrary CDF callable, used for substitutions in
// tests (Gaussian, uniform, two-point).
class FunctionDensity : public Density {
 public:
  using Fn = std::function<double(double)>;
  FunctionDensity(int channels, Fn cdf, Fn sf = nullptr)
      : channels_(channels), cdf_(std::move(cdf)), sf_(std::move(sf)) {}
  int channels() const override { return channels_; }
  double cdf(double t, int) const override { return cdf_(t); }
  double sf(double t, int) const override { return sf_ ? sf_(t) : 1.0 - cdf_(t); }

 private:
  int channels_;
  Fn cdf_;
  Fn sf_;
};

// The learnable prior. Stage k maps x -> softplus(M_k) x + b_k, followed for
// all but the last stage by x + tanh(a_k) * tanh(x). softplus keeps every
// matrix entry positive and tanh(a_k) >= -1 keeps each nonlinearity
// non-decreasing, so the composed logit is monotone in its input.
class FactorizedPrior : public Density {
 public:
  static constexpr int kStages = 4;
  static constexpr int kWidth = 3;
  static constexpr std::array<int, kStages + 1> kDims = {1, kWidth, kWidth, kWidth, 1};

  // Adds freshly initialized prior parameters under `prefix` to `store`.
  static void init_params(ParamStore& store, int channels, std::mt19937_64& rng,
                          const std::string& prefix = "prior.", double init_scale = 10.0);
  static std::vector<std::string> param_names(const std::string& prefix = "prior.");

  FactorizedPrior(const ParamStore& store, const std::string& prefix = "prior.");

  int channels() const override { return channels_; }
  double cdf(double t, int channel) const override;
  double sf(double t, int channel) const override;
  double logit(double t, int channel) const;

 private:
  friend class PriorLikelihoodOp;
  int channels_ = 0;
  // Constrained (transformed) parameters, channel-major.
  std::array<std::vector<double>, kStages> matrix_;
  std::array<std::vector<double>, kStages> bias_;
  std::array<std::vector<double>, kStages - 1> factor_;
};

// Differentiable per-element likelihood P(z) of `z` [N, C, H, W] under the
// prior stored at `prefix`, floored at `p_min` (zero gradient where floored).
// Gradients flow to z and to every trainable prior parameter.
ad::Var prior_likelihood(ad::Graph& g, const ParamStore& store, ad::Var z, double p_min,
                         const std::string& prefix = "prior.");

struct RateStats {
  double bits = 0;
  int64_t underflows = 0;
};

// -sum log2 P(z_i) for a [N, C, H, W] (or [C, H, W]) tensor of latents.
// Probabilities below p_min are clamped and counted as underflows.
RateStats rate_bits(const Density& density, const Tensor& latents,
                    double p_min = 1.0 / (1 << kDefaultPrecision));

// Integer CDF over symbols [offset, offset + n_symbols - 2] plus one trailing
// escape symbol.
struct CdfTable {
  int32_t offset = 0;
  int precision = kDefaultPrecision;
  std::vector<uint32_t> cdf;  // size n_symbols + 1

  int n_symbols() const { return static_cast<int>(cdf.size()) - 1; }
  int escape_index() const { return n_symbols() - 1; }
  uint32_t freq(int symbol) const { return cdf[symbol + 1] - cdf[symbol]; }
  uint32_t total() const { return 1u << precision; }
  // Symbol index for an in-range value, or -1 when it needs the escape.
  int index_of(int64_t value) const;
  double probability(int symbol) const { return static_cast<double>(freq(symbol)) / total(); }

  bool operator==(const CdfTable&) const = default;
};

// Throws kFormat if the table breaks cdf[0] = 0, cdf[n] = 2^P or strict
// monotonicity.
void validate_cdf_table(const CdfTable& table);

// Quantizes one channel of `density` over [-bound, bound - 1] plus escape.
// Every symbol receives frequency >= 1; the rest is spread in proportion to
// probability and the rounding remainder goes to the largest residuals.
CdfTable export_cdf_table(const Density& density, int channel, int bound = kDefaultClampBound,
                          int precision = kDefaultPrecision);
std::vector<CdfTable> export_cdf_tables(const Density& density, int bound = kDefaultClampBound,
                                        int precision = kDefaultPrecision);

}  // namespace esplit

#endif  // ESPLIT_ENTROPY_MODEL_H_
