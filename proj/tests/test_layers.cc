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

#include "esplit/error.h"
#include "esplit/layers.h"
#include "esplit/model.h"
#include "fd_suite.h"

namespace esplit {
namespace {

GdnParams params(std::vector<double> beta, std::vector<double> gamma) {
  const int64_t c = static_cast<int64_t>(beta.size());
  return {Tensor({c}, std::move(beta)), Tensor({c, c}, std::move(gamma))};
}

TEST(Gdn, HandEvaluatedTwoChannels) {
  const Tensor x({2, 1, 1}, std::vector<double>{2, -1});
  const Tensor y = gdn_forward(x, params({1, 1}, {0.5, 0.5, 0.5, 0.5}));
  EXPECT_DOUBLE_EQ(y[0], 0.8);
  EXPECT_DOUBLE_EQ(y[1], -0.4);
}

TEST(Gdn, IdentityAndZero) {
  const GdnParams id = params({1, 1, 1}, std::vector<double>(9, 0.0));
  Tensor x({1, 3, 2, 2});
  for (int i = 0; i < 12; ++i) x[i] = 0.3 * i - 1.7;
  EXPECT_EQ(gdn_forward(x, id), x);
  EXPECT_EQ(igdn_forward(x, id), x);
  EXPECT_EQ(igdn_forward(gdn_forward(x, id), id), x);
  const Tensor zero({3, 2, 2}, 0.0);
  EXPECT_EQ(gdn_forward(zero, params({1, 2, 3}, std::vector<double>(9, 0.4))), zero);
}

TEST(Gdn, InverseHandEvaluated) {
  const Tensor y = igdn_forward(Tensor({1, 1, 1}, 3.0), params({1}, {0.5}));
  EXPECT_DOUBLE_EQ(y[0], 7.5);
}

TEST(Gdn, ChannelMismatchIsShapeError) {
  try {
    gdn_forward(Tensor({3, 2, 2}), params({1, 1}, {0, 0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(Gdn, RawParameterRoundTrip) {
  const GdnParams p = params({0.5, 2.0}, {0.1, 0.2, 0.3, 0.4});
  const GdnParams q = gdn_params_from(gdn_raw_from(p));
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(q.beta[i], p.beta[i], 1e-12);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(q.gamma[i], p.gamma[i], 1e-12);
}

ModelSpec single_conv() {
  ModelSpec s;
  s.in_ch = 3;
  s.in_h = s.in_w = 8;
  s.stages = {{"a", {{LayerKind::kConv, 3, 16, 3, 1, 1}}}, {"b", {{LayerKind::kRelu}}}};
  s.mobile_stages = 1;
  return s;
}

TEST(Spec, ConvParameterCount) {
  const ModelSpec s = single_conv();
  EXPECT_EQ(count_params(s, Side::kAll), 3 * 3 * 3 * 16 + 16);
  EXPECT_EQ(count_macs(s, Side::kAll), 8 * 8 * 16 * 3 * 9);
}

TEST(Spec, MobilePlusServerIsTotal) {
  const ModelSpec t = teacher_spec();
  EXPECT_EQ(count_params(t, Side::kMobile) + count_params(t, Side::kServer), count_params(t, Side::kAll));
  EXPECT_EQ(count_macs(t, Side::kMobile) + count_macs(t, Side::kServer), count_macs(t, Side::kAll));
}

TEST(Spec, DefaultStudentMobileParameterCount) {
  // conv 3->24 (672) + GDN (24 + 576) + conv 24->24 (5208) + GDN (600)
  // + conv 24->16 (3472).
  Checkpoint teacher;
  teacher.spec = teacher_spec();
  std::mt19937_64 rng(1);
  init_params(teacher.spec, teacher.params, rng);
  const Checkpoint s = build_student(teacher, encoder_stage(), decoder_stage({}, 16), rng);
  EXPECT_EQ(count_params(s.spec, Side::kMobile), 10552);
}

TEST(Spec, JsonRoundTripAndHash) {
  const ModelSpec t = teacher_spec();
  EXPECT_EQ(spec_from_json(spec_to_json(t)), t);
  EXPECT_EQ(spec_hash(t), spec_hash(spec_from_json(spec_to_json(t))));
  ModelSpec other = t;
  other.stages[3].layers[1].out_ch = 2;
  EXPECT_NE(spec_hash(t), spec_hash(other));
}

TEST(Spec, ValidationRejectsBadSpecs) {
  ModelSpec s = single_conv();
  s.stages[0].layers[0].in_ch = 4;
  EXPECT_THROW(validate_spec(s), Error);
  s = single_conv();
  s.mobile_stages = 2;
  EXPECT_THROW(validate_spec(s), Error);
  s = single_conv();
  s.stages[1].name = "a";
  EXPECT_THROW(validate_spec(s), Error);
  EXPECT_THROW(spec_from_json("{\"in_ch\": 3"), Error);
}

TEST(Encoder, ZeroImageZeroWeightsGivesZeroLatent) {
  Checkpoint s = testing::tiny_student(testing::tiny_teacher(1), 2);
  for (auto& [name, p] : s.params) {
    if (name.rfind("encoder.", 0) == 0 && name.find("_raw") == std::string::npos) {
      for (double& v : p.value.data()) v = 0;
    }
  }
  const Tensor z = encoder_forward(s, Tensor({1, 3, 8, 8}, 0.0));
  for (double v : z.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, LatentShapeAndDeterminism) {
  const Checkpoint s = testing::tiny_student(testing::tiny_teacher(1), 2);
  Tensor x({2, 3, 8, 8});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::sin(0.1 * static_cast<double>(i));
  const Tensor z = encoder_forward(s, x);
  EXPECT_EQ(z.shape(), (Shape{2, 2, 2, 2}));
  EXPECT_EQ(encoder_forward(s, x), z);
  EXPECT_EQ(decoder_forward(s, z).shape(), (Shape{2, 16, 4, 4}));
  EXPECT_EQ(s.latent_shape(), (Shape{2, 2, 2}));
}

TEST(Spec, WrongInputSizeIsShapeError) {
  const Checkpoint t = testing::tiny_teacher(3);
  EXPECT_NO_THROW(full_forward(t, Tensor({1, 3, 8, 8})));
  try {
    full_forward(t, Tensor({1, 3, 16, 16}));
    ADD_FAILURE() << "accepted 16x16 input";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
  EXPECT_THROW(server_forward(testing::tiny_student(t, 1), Tensor({1, 3, 2, 2})), Error);
}

TEST(Student, TailCopiedEncoderFresh) {
  const Checkpoint t = testing::tiny_teacher(3);
  const Checkpoint s = testing::tiny_student(t, 4);
  for (const auto& [name, p] : t.params) {
    const bool tail = name.rfind("stage2.", 0) == 0 || name.rfind("head.", 0) == 0;
    if (tail) {
      ASSERT_EQ(s.params.count(name), 1u) << name;
      EXPECT_EQ(s.params.at(name).value, p.value) << name;
    } else {
      EXPECT_EQ(s.params.count(name), 0u) << name;
    }
  }
  EXPECT_TRUE(s.has_prior());
}

TEST(Student, OracleDecoderReproducesTeacherLogits) {
  const Checkpoint t = testing::tiny_teacher(5);
  const Checkpoint s = testing::tiny_student(t, 6);
  Tensor x({3, 3, 8, 8});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::cos(0.37 * static_cast<double>(i));
  const Tensor h = run_stages(t, x, 0, t.spec.mobile_stages);
  const Tensor from_student = run_stages(s, h, s.spec.mobile_stages + 1, static_cast<int>(s.spec.stages.size()));
  EXPECT_EQ(from_student, full_forward(t, x));
}

TEST(Checkpoint, SerializeRoundTripAndTamperDetection) {
  Checkpoint s = testing::tiny_student(testing::tiny_teacher(7), 8);
  s.metadata["beta"] = "0.5";
  const std::vector<uint8_t> bytes = serialize_checkpoint(s);
  const Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(checkpoint_hash(back), checkpoint_hash(s));
  std::vector<uint8_t> bad = bytes;
  bad[bad.size() / 2] ^= 0x01;
  EXPECT_THROW(parse_checkpoint(bad), Error);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(parse_checkpoint(bad), Error);
}

TEST(Checkpoint, MissingParameterIsRejected) {
  Checkpoint s = testing::tiny_student(testing::tiny_teacher(7), 8);
  s.params.erase(s.params.begin());
  EXPECT_THROW(validate_checkpoint(s), Error);
}

}  // namespace
}  // namespace esplit
