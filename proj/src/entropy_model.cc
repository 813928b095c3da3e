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

#include "esplit/entropy_model.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "esplit/error.h"

namespace esplit {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double interval_mass(const Density& d, double lo, double hi, int channel) {
  const double cl = d.cdf(lo, channel);
  const double ch = d.cdf(hi, channel);
  double p = (cl + ch > 1.0) ? d.sf(lo, channel) - d.sf(hi, channel) : ch - cl;
  return std::max(p, 0.0);
}

// Channel index of flat element i in a [N, C, H, W] or [C, H, W] tensor.
struct ChannelLayout {
  int64_t channels;
  int64_t plane;
  explicit ChannelLayout(const Shape& s) {
    if (s.size() == 4) {
      channels = s[1];
      plane = s[2] * s[3];
    } else if (s.size() == 3) {
      channels = s[0];
      plane = s[1] * s[2];
    } else {
      fail(ErrorKind::kShape, "latents must be [N,C,H,W] or [C,H,W], got " + shape_str(s));
    }
  }
  int channel(int64_t i) const { return static_cast<int>((i / plane) % channels); }
};

}  // namespace

double Density::pmf(int64_t z, int channel) const {
  const double zc = static_cast<double>(z);
  return interval_mass(*this, zc - 0.5, zc + 0.5, channel);
}

double Density::tail_mass(int bound, int channel) const {
  return cdf(-bound - 0.5, channel) + sf(bound - 0.5, channel);
}

// ---- FactorizedPrior ----------------------------------------------------------

std::vector<std::string> FactorizedPrior::param_names(const std::string& prefix) {
  std::vector<std::string> names;
  for (int k = 0; k < kStages; ++k) names.push_back(prefix + "matrix" + std::to_string(k));
  for (int k = 0; k < kStages; ++k) names.push_back(prefix + "bias" + std::to_string(k));
  for (int k = 0; k + 1 < kStages; ++k) names.push_back(prefix + "factor" + std::to_string(k));
  return names;
}

void FactorizedPrior::init_params(ParamStore& store, int channels, std::mt19937_64& rng,
                                  const std::string& prefix, double init_scale) {
  if (channels <= 0) fail(ErrorKind::kInvalidArgument, "prior needs at least one channel");
  const int64_t C = channels;
  const double scale = std::pow(init_scale, 1.0 / kStages);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (int k = 0; k < kStages; ++k) {
    const int64_t din = kDims[k], dout = kDims[k + 1];
    const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(dout)));
    store[prefix + "matrix" + std::to_string(k)] = {Tensor({C, dout, din}, init), true};
    Tensor bias({C, dout});
    for (double& v : bias.data()) v = unif(rng);
    store[prefix + "bias" + std::to_string(k)] = {std::move(bias), true};
    if (k + 1 < kStages) store[prefix + "factor" + std::to_string(k)] = {Tensor({C, dout}, 0.0), true};
  }
}

FactorizedPrior::FactorizedPrior(const ParamStore& store, const std::string& prefix) {
  auto get = [&](const std::string& name) -> const Tensor& {
    auto it = store.find(prefix + name);
    if (it == store.end()) fail(ErrorKind::kInvalidArgument, "missing prior parameter " + prefix + name);
    return it->second.value;
  };
  channels_ = static_cast<int>(get("matrix0").dim(0));
  const int64_t C = channels_;
  for (int k = 0; k < kStages; ++k) {
    const int64_t din = kDims[k], dout = kDims[k + 1];
    const Tensor& m = get("matrix" + std::to_string(k));
    const Tensor& b = get("bias" + std::to_string(k));
    if (m.shape() != Shape{C, dout, din} || b.shape() != Shape{C, dout}) {
      fail(ErrorKind::kShape, "prior stage " + std::to_string(k) + " has shape " +
                                  shape_str(m.shape()) + "/" + shape_str(b.shape()));
    }
    matrix_[k].resize(m.data().size());
    std::transform(m.data().begin(), m.data().end(), matrix_[k].begin(), softplus);
    bias_[k] = b.vec();
    if (k + 1 < kStages) {
      const Tensor& f = get("factor" + std::to_string(k));
      if (f.shape() != Shape{C, dout}) fail(ErrorKind::kShape, "prior factor shape " + shape_str(f.shape()));
      factor_[k].resize(f.data().size());
      std::transform(f.data().begin(), f.data().end(), factor_[k].begin(),
                     [](double v) { return std::tanh(v); });
    }
  }
}

// Forward/backward through one channel's monotone network. Lives in a class
// so it can read the private parameter arrays.
class PriorLikelihoodOp {
 public:
  using Vec = std::array<double, FactorizedPrior::kWidth>;
  struct Trace {
    std::array<Vec, FactorizedPrior::kStages> in;
    std::array<Vec, FactorizedPrior::kStages> pre;
  };
  // Gradients with respect to the constrained parameters.
  struct Grads {
    std::array<std::vector<double>, FactorizedPrior::kStages> matrix;
    std::array<std::vector<double>, FactorizedPrior::kStages> bias;
    std::array<std::vector<double>, FactorizedPrior::kStages - 1> factor;
  };

  static double forward(const FactorizedPrior& p, int c, double t, Trace* tr) {
    constexpr auto& D = FactorizedPrior::kDims;
    Vec x{t, 0, 0};
    for (int k = 0; k < FactorizedPrior::kStages; ++k) {
      const int din = D[k], dout = D[k + 1];
      const double* m = p.matrix_[k].data() + static_cast<size_t>(c) * dout * din;
      const double* b = p.bias_[k].data() + static_cast<size_t>(c) * dout;
      Vec u{};
      for (int i = 0; i < dout; ++i) {
        double s = b[i];
        for (int j = 0; j < din; ++j) s += m[i * din + j] * x[j];
        u[i] = s;
      }
      if (tr) {
        tr->in[k] = x;
        tr->pre[k] = u;
      }
      if (k + 1 == FactorizedPrior::kStages) return u[0];
      const double* a = p.factor_[k].data() + static_cast<size_t>(c) * dout;
      for (int i = 0; i < dout; ++i) x[i] = u[i] + a[i] * std::tanh(u[i]);
    }
    return 0;
  }

  // Returns d(logit)/dt * g and accumulates parameter gradients.
  static double backward(const FactorizedPrior& p, int c, const Trace& tr, double g, Grads* grads) {
    constexpr auto& D = FactorizedPrior::kDims;
    Vec gx{};  // gradient w.r.t. the output of the current stage's nonlinearity
    for (int k = FactorizedPrior::kStages - 1; k >= 0; --k) {
      const int din = D[k], dout = D[k + 1];
      const size_t mo = static_cast<size_t>(c) * dout * din;
      const size_t vo = static_cast<size_t>(c) * dout;
      Vec gu{};
      if (k + 1 == FactorizedPrior::kStages) {
        gu[0] = g;
      } else {
        const double* a = p.factor_[k].data() + vo;
        for (int i = 0; i < dout; ++i) {
          const double th = std::tanh(tr.pre[k][i]);
          gu[i] = gx[i] * (1.0 + a[i] * (1.0 - th * th));
          if (grads) grads->factor[k][vo + i] += gx[i] * th;
        }
      }
      const double* m = p.matrix_[k].data() + mo;
      Vec gin{};
      for (int i = 0; i < dout; ++i) {
        if (grads) grads->bias[k][vo + i] += gu[i];
        for (int j = 0; j < din; ++j) {
          if (grads) grads->matrix[k][mo + i * din + j] += gu[i] * tr.in[k][j];
          gin[j] += m[i * din + j] * gu[i];
        }
      }
      gx = gin;
    }
    return gx[0];
  }

  static ad::Var apply(ad::Graph& g, const ParamStore& store, ad::Var z, double p_min,
                       const std::string& prefix) {
    std::vector<ad::Var> inputs{z};
    for (const std::string& name : FactorizedPrior::param_names(prefix)) inputs.push_back(g.param(store, name));
    auto prior = std::make_shared<const FactorizedPrior>(store, prefix);
    const Tensor& zv = z.value();
    ChannelLayout layout(zv.shape());
    if (layout.channels != prior->channels()) {
      fail(ErrorKind::kShape, "prior has " + std::to_string(prior->channels()) +
                                  " channels, latents " + shape_str(zv.shape()));
    }
    Tensor lik(zv.shape());
    for (int64_t i = 0; i < zv.numel(); ++i) {
      const int c = layout.channel(i);
      const double lo = forward(*prior, c, zv[i] - 0.5, nullptr);
      const double hi = forward(*prior, c, zv[i] + 0.5, nullptr);
      const double s = (lo + hi > 0) ? -1.0 : 1.0;
      lik[i] = std::max(std::abs(sigmoid(s * hi) - sigmoid(s * lo)), p_min);
    }

    ad::BackwardFn bw = [z, prior, p_min, layout, out = &g, id = static_cast<int>(g.size())](
                            const Tensor& gout, ad::GradSlots gin) {
      const Tensor& zv = z.value();
      const Tensor& lik = out->value(id);
      Grads grads;
      const bool want_params = std::any_of(gin.begin() + 1, gin.end(), [](Tensor* t) { return t; });
      for (int k = 0; k < FactorizedPrior::kStages; ++k) {
        grads.matrix[k].assign(prior->matrix_[k].size(), 0.0);
        grads.bias[k].assign(prior->bias_[k].size(), 0.0);
        if (k + 1 < FactorizedPrior::kStages) grads.factor[k].assign(prior->factor_[k].size(), 0.0);
      }
      Trace tl, th;
      for (int64_t i = 0; i < zv.numel(); ++i) {
        if (gout[i] == 0.0) continue;
        const int c = layout.channel(i);
        const double lo = forward(*prior, c, zv[i] - 0.5, &tl);
        const double hi = forward(*prior, c, zv[i] + 0.5, &th);
        if (lik[i] <= p_min) continue;
        // P = sigmoid(hi) - sigmoid(lo); sigmoid' is symmetric so no sign trick needed here.
        const double d_hi = gout[i] * sigmoid(hi) * sigmoid(-hi);
        const double d_lo = -gout[i] * sigmoid(lo) * sigmoid(-lo);
        Grads* gp = want_params ? &grads : nullptr;
        const double dz = backward(*prior, c, th, d_hi, gp) + backward(*prior, c, tl, d_lo, gp);
        if (gin[0]) (*gin[0])[i] += dz;
      }
      if (!want_params) return;
      // Chain through the constraints: softplus' = 1 - exp(-softplus), tanh' = 1 - tanh^2.
      size_t slot = 1;
      for (int k = 0; k < FactorizedPrior::kStages; ++k, ++slot) {
        if (!gin[slot]) continue;
        for (size_t j = 0; j < grads.matrix[k].size(); ++j) {
          (*gin[slot])[static_cast<int64_t>(j)] += grads.matrix[k][j] * (1.0 - std::exp(-prior->matrix_[k][j]));
        }
      }
      for (int k = 0; k < FactorizedPrior::kStages; ++k, ++slot) {
        if (!gin[slot]) continue;
        for (size_t j = 0; j < grads.bias[k].size(); ++j) (*gin[slot])[static_cast<int64_t>(j)] += grads.bias[k][j];
      }
      for (int k = 0; k + 1 < FactorizedPrior::kStages; ++k, ++slot) {
        if (!gin[slot]) continue;
        for (size_t j = 0; j < grads.factor[k].size(); ++j) {
          const double a = prior->factor_[k][j];
          (*gin[slot])[static_cast<int64_t>(j)] += grads.factor[k][j] * (1.0 - a * a);
        }
      }
    };
    return g.record("prior_likelihood", std::move(inputs), std::move(lik), std::move(bw));
  }
};

double FactorizedPrior::logit(double t, int channel) const {
  if (channel < 0 || channel >= channels_) fail(ErrorKind::kInvalidArgument, "prior channel out of range");
  return PriorLikelihoodOp::forward(*this, channel, t, nullptr);
}

double FactorizedPrior::cdf(double t, int channel) const { return sigmoid(logit(t, channel)); }
double FactorizedPrior::sf(double t, int channel) const { return sigmoid(-logit(t, channel)); }

ad::Var prior_likelihood(ad::Graph& g, const ParamStore& store, ad::Var z, double p_min,
                         const std::string& prefix) {
  return PriorLikelihoodOp::apply(g, store, z, p_min, prefix);
}

RateStats rate_bits(const Density& density, const Tensor& latents, double p_min) {
  ChannelLayout layout(latents.shape());
  if (layout.channels != density.channels()) {
    fail(ErrorKind::kShape, "density has " + std::to_string(density.channels()) +
                                " channels, latents " + shape_str(latents.shape()));
  }
  RateStats stats;
  for (int64_t i = 0; i < latents.numel(); ++i) {
    const double z = latents[i];
    double p = interval_mass(density, z - 0.5, z + 0.5, layout.channel(i));
    if (p < p_min) {
      p = p_min;
      ++stats.underflows;
    }
    stats.bits -= std::log2(p);
  }
  return stats;
}

// ---- CDF tables ---------------------------------------------------------------

int CdfTable::index_of(int64_t value) const {
  const int64_t idx = value - offset;
  return (idx >= 0 && idx < escape_index()) ? static_cast<int>(idx) : -1;
}

void validate_cdf_table(const CdfTable& t) {
  if (t.precision < 1 || t.precision > 16) fail(ErrorKind::kFormat, "cdf table precision out of range");
  if (t.cdf.size() < 2) fail(ErrorKind::kFormat, "cdf table has no symbols");
  if (t.cdf.front() != 0) fail(ErrorKind::kFormat, "cdf table must start at 0");
  if (t.cdf.back() != t.total()) fail(ErrorKind::kFormat, "cdf table must end at 2^precision");
  for (size_t i = 1; i < t.cdf.size(); ++i) {
    if (t.cdf[i] <= t.cdf[i - 1]) fail(ErrorKind::kFormat, "cdf table not strictly increasing");
  }
}

CdfTable export_cdf_table(const Density& density, int channel, int bound, int precision) {
  if (bound < 1) fail(ErrorKind::kInvalidArgument, "clamp bound must be positive");
  if (precision < 1 || precision > 16) fail(ErrorKind::kInvalidArgument, "precision must be in [1, 16]");
  const int n = 2 * bound + 1;
  const int64_t total = int64_t{1} << precision;
  if (n > total) fail(ErrorKind::kInvalidArgument, "too many symbols for table precision");

  std::vector<double> probs(static_cast<size_t>(n));
  for (int s = 0; s + 1 < n; ++s) probs[static_cast<size_t>(s)] = density.pmf(s - bound, channel);
  probs.back() = std::max(density.tail_mass(bound, channel), 0.0);

  // Every symbol gets 1; the remaining total - n counts are shared out.
  const double spare = static_cast<double>(total - n);
  std::vector<int64_t> freq(static_cast<size_t>(n));
  std::vector<double> residual(static_cast<size_t>(n));
  int64_t used = 0;
  for (size_t s = 0; s < probs.size(); ++s) {
    const double share = probs[s] * spare;
    const double whole = std::floor(share);
    freq[s] = 1 + static_cast<int64_t>(whole);
    residual[s] = share - whole;
    used += freq[s];
  }
  std::vector<size_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return residual[a] > residual[b]; });
  int64_t remaining = total - used;
  for (size_t i = 0; remaining > 0; i = (i + 1) % order.size(), --remaining) ++freq[order[i]];
  // Float slack can overshoot by a count or two; take it from the largest bins.
  while (remaining < 0) {
    auto it = std::max_element(freq.begin(), freq.end());
    if (*it <= 1) fail(ErrorKind::kNumeric, "cannot normalize cdf table");
    --*it;
    ++remaining;
  }

  CdfTable table;
  table.offset = -bound;
  table.precision = precision;
  table.cdf.resize(static_cast<size_t>(n) + 1);
  table.cdf[0] = 0;
  for (size_t s = 0; s < freq.size(); ++s) table.cdf[s + 1] = table.cdf[s] + static_cast<uint32_t>(freq[s]);
  validate_cdf_table(table);
  return table;
}

std::vector<CdfTable> export_cdf_tables(const Density& density, int bound, int precision) {
  std::vector<CdfTable> tables;
  for (int c = 0; c < density.channels(); ++c) tables.push_back(export_cdf_table(density, c, bound, precision));
  return tables;
}

}  // namespace esplit
