# Copyright 2026 The esplit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Smoke tests for the Python bindings on a reduced configuration."""

import json

import numpy as np
import pytest

import esplit


@pytest.fixture(scope="module")
def small():
    cfg = json.loads(esplit.default_config_json())
    cfg["model"].update(image_size=16, latent_channels=4, encoder_channels=6, decoder_channels=8,
                        crbq_latent_channels=2)
    cfg["dataset"].update(n_train=64, n_test=24)
    for phase in ("teacher", "stage1", "stage2", "end2end", "crbq", "head"):
        cfg[phase].update(epochs=1, batch_size=16)
    text = json.dumps(cfg)
    train = esplit.load_train_set(text)
    test = esplit.load_test_set(text)
    teacher = esplit.train_teacher(train, text).checkpoint
    return text, train, test, teacher


def test_dataset_shapes(small):
    _, train, _, _ = small
    assert len(train) == 64
    x = train.images(0, 5)
    assert x.shape == (5, 3, 16, 16)
    assert x.dtype == np.float64
    assert set(train.task_labels("parity")) <= {0, 1}


def test_config_round_trip():
    text = esplit.default_config_json()
    assert json.loads(esplit.normalize_config(text)) == json.loads(text)
    with pytest.raises(esplit.Error) as e:
        esplit.normalize_config('{"no_such_key": 1}')
    assert e.value.args[0] == "config"


def test_two_stage_split_matches_local(small):
    text, train, test, teacher = small
    s1 = esplit.train_stage1(teacher, train, beta=0.05, beta_id=1, config_json=text)
    assert s1.checkpoint.stage == "stage1"
    assert len(s1.log) == 1 and s1.log[0]["rate_bits"] > 0
    s2 = esplit.train_stage2(s1.checkpoint, teacher, train, text).checkpoint
    assert s2.params_hash("encoder.") == s1.checkpoint.params_hash("encoder.")

    images = test.images(0, 6)
    local = esplit.predict_logits(s2, images).argmax(axis=1)
    for i in range(6):
        frame = esplit.client_encode(s2, images[i])
        assert esplit.frame_crc_ok(frame)
        pred, logits = esplit.server_infer(frame, s2)
        assert pred == local[i]
        assert logits.shape[-1] == 10

    bad = bytearray(frame)
    bad[10] ^= 0xFF
    with pytest.raises(esplit.Error) as e:
        esplit.server_infer(bytes(bad), s2)
    assert e.value.args[0] == "transport"

    rd = esplit.eval_rd(s2, test)
    assert rd["beta_id"] == 1 and rd["bytes_per_sample"] > 24
    summary = esplit.run_split(test, s2, limit=8)
    assert summary["mean_total_s"] == pytest.approx(
        summary["mean_encode_s"] + summary["mean_comm_s"] + summary["mean_server_s"])


def test_checkpoint_bytes_round_trip(small):
    _, _, _, teacher = small
    again = esplit.checkpoint_from_bytes(teacher.to_bytes())
    assert again.hash() == teacher.hash()
    with pytest.raises(esplit.Error):
        esplit.checkpoint_from_bytes(teacher.to_bytes()[:-3])


def test_coder_round_trip():
    cdf = [0, 16384, 32768, 49152, 65536]
    symbols = [0, 1, 2, 3, 3, 2, 1, 0]
    data = esplit.encode_symbols(symbols, cdf)
    assert esplit.decode_symbols(data, cdf, len(symbols)) == symbols
    assert len(data) * 8 <= 16 + 64


def test_channel_time():
    assert esplit.simulate_channel(75) == pytest.approx(0.016)
    with pytest.raises(esplit.Error):
        esplit.simulate_channel(1, rate_bps=0)
