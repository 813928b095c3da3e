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


#include "small_models.h"

namespace esplit::testing {

RunConfig small_config() {
  RunConfig c = default_config();
  c.arch.image_size = 16;
  c.arch.latent_channels = 4;
  c.arch.encoder_channels = 6;
  c.arch.decoder_channels = 8;
  c.crbq_latent_channels = 2;
  for (TrainConfig* t : {&c.teacher, &c.stage1, &c.stage2, &c.end2end, &c.crbq, &c.head}) {
    t->epochs = 2;
    t->batch_size = 16;
  }
  c.end2end.beta = 0.01;
  c.dataset.n_train = 96;
  c.dataset.n_test = 48;
  return c;
}

Dataset small_data(size_t n, uint64_t seed) {
  return make_digits(n, seed, digit_options_for(16));
}

}  // namespace esplit::testing
