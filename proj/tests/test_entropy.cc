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
#include <numbers>
#include <random>

#include "esplit/entropy_model.h"
#include "esplit/error.h"
#include "esplit/optim.h"

namespace esplit {
namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }
double normal_sf(double t) { return 0.5 * std::erfc(t / std::numbers::sqrt2); }

FunctionDensity gaussian(int channels = 1) { return FunctionDensity(channels, normal_cdf, normal_sf); }

TEST(Pmf, UnitGaussianAtZero) {
  const FunctionDensity d = gaussian();
  EXPECT_NEAR(d.pmf(0, 0), std::erf(0.5 / std::numbers::sqrt2), 1e-15);
  EXPECT_NEAR(d.pmf(0, 0), 0.38292, 1e-5);
}

TEST(Pmf, SymmetryAndTelescoping) {
  const FunctionDensity d = gaussian();
  double total = 0;
  for (int k = -20; k <= 20; ++k) {
    EXPECT_NEAR(d.pmf(k, 0), d.pmf(-k, 0), 1e-300 + 1e-15 * d.pmf(k, 0));
    total += d.pmf(k, 0);
  }
  EXPECT_LE(total, 1.0);
  EXPECT_GT(total, 1.0 - 1e-12);
}

TEST(Pmf, FarTailStaysPositive) {
  const FunctionDensity d = gaussian();
  EXPECT_GT(d.pmf(30, 0), 0.0);
  EXPECT_NEAR(d.pmf(30, 0), d.pmf(-30, 0), 1e-15 * d.pmf(30, 0));
}

TEST(RateBits, TwoPointDensityCostsOneBitPerSymbol) {
  // Half the mass on -1 and half on 0.
  const FunctionDensity d(1, [](double t) { return t < -0.5 ? 0.0 : (t < 0.5 ? 0.5 : 1.0); });
  Tensor z({1, 1, 1, 9});
  for (int i = 0; i < 9; ++i) z[i] = i % 2 == 0 ? 0.0 : -1.0;
  const RateStats r = rate_bits(d, z);
  EXPECT_DOUBLE_EQ(r.bits, 9.0);
  EXPECT_EQ(r.underflows, 0);
}

TEST(RateBits, UniformOverEightSymbols) {
  const FunctionDensity d(1, [](double t) { return std::clamp((t + 0.5) / 8.0, 0.0, 1.0); });
  Tensor z({1, 1, 2, 5});
  for (int i = 0; i < 10; ++i) z[i] = i % 8;
  EXPECT_NEAR(rate_bits(d, z).bits, 30.0, 1e-12);
}

TEST(RateBits, UnderflowsAreClampedAndCounted) {
  const FunctionDensity d = gaussian();
  const Tensor z({1, 1, 1, 1}, 60.0);
  const RateStats r = rate_bits(d, z, 1e-9);
  EXPECT_EQ(r.underflows, 1);
  EXPECT_NEAR(r.bits, -std::log2(1e-9), 1e-9);
}

TEST(FactorizedPrior, FreshInitIsAProperMonotoneCdf) {
  ParamStore ps;
  std::mt19937_64 rng(3);
  FactorizedPrior::init_params(ps, 4, rng);
  const FactorizedPrior p(ps);
  EXPECT_EQ(p.channels(), 4);
  std::uniform_real_distribution<double> u(-80, 80);
  for (int c = 0; c < 4; ++c) {
    const double c0 = p.cdf(0, c);
    EXPECT_GT(c0, 0.0);
    EXPECT_LT(c0, 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const int c = i % 4;
    EXPECT_LE(p.cdf(a, c), p.cdf(b, c));
  }
}

TEST(FactorizedPrior, FittedToInRangeDataPutsNegligibleMassAtTheBounds) {
  ParamStore ps;
  std::mt19937_64 rng(11);
  FactorizedPrior::init_params(ps, 1, rng);
  Adam opt({.lr = 0.05});
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int step = 0; step < 300; ++step) {
    Tensor z({1, 1, 8, 8});
    for (double& v : z.data()) v = nd(rng);
    ad::Graph g;
    ad::Var lik = prior_likelihood(g, ps, g.input(z), 1e-9);
    g.backward(ad::sum(ad::log(lik)) * (-1.0 / 64));
    opt.step(ps, g.param_grads());
  }
  const FactorizedPrior p(ps);
  EXPECT_LT(p.cdf(-kDefaultClampBound, 0), 1e-4);
  EXPECT_GT(p.cdf(kDefaultClampBound, 0), 1 - 1e-4);
}

TEST(CdfTable, ExportedTableMatchesPmf) {
  const FunctionDensity d = gaussian();
  const CdfTable t = export_cdf_table(d, 0, 8, 16);
  validate_cdf_table(t);
  EXPECT_EQ(t.n_symbols(), 17);
  EXPECT_EQ(t.offset, -8);
  EXPECT_EQ(t.cdf.front(), 0u);
  EXPECT_EQ(t.cdf.back() - t.cdf.front(), 1u << 16);
  const double tol = t.n_symbols() * std::ldexp(1.0, -16);
  for (int s = 0; s < t.n_symbols(); ++s) {
    EXPECT_GE(t.freq(s), 1u);
    const double want = s == t.escape_index() ? d.tail_mass(8, 0) : d.pmf(t.offset + s, 0);
    EXPECT_NEAR(t.probability(s), want, tol) << s;
  }
  EXPECT_EQ(t.index_of(-8), 0);
  EXPECT_EQ(t.index_of(7), 15);
  EXPECT_EQ(t.index_of(8), -1);
  EXPECT_EQ(t.index_of(-9), -1);
}

TEST(CdfTable, EveryChannelOfAPrior) {
  ParamStore ps;
  std::mt19937_64 rng(5);
  FactorizedPrior::init_params(ps, 3, rng);
  const std::vector<CdfTable> tables = export_cdf_tables(FactorizedPrior(ps));
  ASSERT_EQ(tables.size(), 3u);
  for (const CdfTable& t : tables) {
    validate_cdf_table(t);
    EXPECT_EQ(t.n_symbols(), 2 * kDefaultClampBound + 1);
  }
}

TEST(CdfTable, ValidationCatchesBrokenTables) {
  CdfTable t;
  t.precision = 4;
  t.cdf = {0, 5, 5, 16};
  EXPECT_THROW(validate_cdf_table(t), Error);
  t.cdf = {0, 5, 9, 15};
  EXPECT_THROW(validate_cdf_table(t), Error);
  t.cdf = {1, 5, 9, 16};
  EXPECT_THROW(validate_cdf_table(t), Error);
  t.cdf = {0, 5, 9, 16};
  EXPECT_NO_THROW(validate_cdf_table(t));
}

TEST(CdfTable, RejectsImpossibleGeometry) {
  const FunctionDensity d = gaussian();
  EXPECT_THROW(export_cdf_table(d, 0, 0, 16), Error);
  EXPECT_THROW(export_cdf_table(d, 0, 64, 6), Error);
}

}  // namespace
}  // namespace esplit
