# Copyright 2026 The imvae Authors.
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

import math
import os
from pathlib import Path

import numpy as np
import pytest

import imvae

DATA = Path(os.environ.get("IMVAE_SOURCE_DIR", Path(__file__).resolve().parents[2])) / "data" / "mnist10k"


def toy(n=120, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 4
    x = np.zeros((n, 16))
    for i, c in enumerate(labels):
        x[i, 4 * c : 4 * c + 4] = 1.0
    flip = rng.random(x.shape) < 0.1
    return np.where(flip, 1.0 - x, x), labels.tolist()


def test_init_and_shapes():
    m = imvae.init_params(imvae.ModelShape(input_dim=16, z_dim=3, hidden=8, critic_hidden=5), 1)
    params = m.parameters()
    assert len(params) == 26
    mean, log_var = m.encode(np.zeros((4, 16)))
    assert mean.shape == (4, 3) and log_var.shape == (4, 3)
    recon = m.decode(np.zeros((4, 3)))
    assert recon.shape == (4, 16)
    assert np.all((recon > 0) & (recon < 1))
    assert m.critic(np.zeros((4, 16)), np.zeros((4, 3))).shape == (4, 1)


def test_checkpoint_round_trip(tmp_path):
    m = imvae.init_params(imvae.ModelShape(input_dim=16, z_dim=2, hidden=6, critic_hidden=4), 3)
    path = tmp_path / "m.ckpt"
    imvae.save_checkpoint(path, m)
    back = imvae.load_checkpoint(path)
    assert imvae.encode_checkpoint(back) == imvae.encode_checkpoint(m)
    assert path.read_bytes()[:8] == b"IMVAE001"
    path.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
    with pytest.raises(imvae.FormatError):
        imvae.load_checkpoint(path)


def test_train_is_deterministic():
    x, labels = toy()
    cfg = {"z_dim": 2, "hidden": 8, "critic_hidden": 6, "batch": 16, "steps": 20, "seed": 4,
           "metrics": "kl,au,probe", "probe_epochs": 2}
    a = imvae.train(cfg, x, labels)
    b = imvae.train(cfg, x, labels)
    assert a["status"] == "ok"
    assert imvae.encode_checkpoint(a["model"]) == imvae.encode_checkpoint(b["model"])
    # repr keeps NaN entries comparable.
    assert repr(a["metrics"]) == repr(b["metrics"])
    assert [r["step"] for r in a["metrics"]] == [0, 20]
    assert all(math.isfinite(r["mi_bound"]) for r in a["log"])


def test_config_errors():
    with pytest.raises(imvae.ConfigError):
        imvae.config_text({"batch": 1})
    with pytest.raises(imvae.ConfigError):
        imvae.config_text({"no_such_key": 1})
    assert "alpha=2.5\n" in imvae.config_text({"alpha": 2.5})


def test_metric_functions():
    assert imvae.kl_term(np.array([[1.0, 0.0]]), np.zeros((1, 2))) == pytest.approx(0.5)
    means = np.column_stack([np.linspace(-1, 1, 50), np.zeros(50)])
    assert imvae.active_units(means) == 1
    joint, marginal = np.array([1.0, 2.0]), np.array([0.5, -0.5])
    dv = imvae.mi_lower_bound("dv", joint, marginal)
    fd = imvae.mi_lower_bound("kl-f-dual", joint, marginal)
    assert dv == pytest.approx(1.5 - math.log(np.mean(np.exp(marginal))))
    assert fd == pytest.approx(1.5 - np.mean(np.exp(marginal - 1.0)))
    assert dv >= fd


def test_mi_estimate_on_correlated_gaussians():
    x, z, truth = imvae.synth_correlated_gaussian(20000, 0.8, 1)
    assert truth == pytest.approx(-0.5 * math.log(1 - 0.64))
    est = imvae.estimate_mi(x, z, steps=1500, window=300, batch=256, hidden=64, seed=2)
    assert abs(est["nats"] - truth) < 0.15
    assert len(est["trace"]) == 1500


def test_probe_and_binarize():
    x, labels = toy(400, 1)
    acc = imvae.probe_accuracy(x[:300], labels[:300], x[300:], labels[300:], epochs=10)
    assert acc > 0.9
    b = imvae.binarize(np.array([[0.2, 0.5, 0.9]]), mode="threshold")
    assert b.tolist() == [[0.0, 1.0, 1.0]]


@pytest.mark.skipif(not (DATA / "images-idx3-ubyte.gz").exists(), reason="bundled MNIST subset missing")
def test_load_bundled_mnist():
    x, labels = imvae.load_idx(str(DATA / "images-idx3-ubyte.gz"), str(DATA / "labels-idx1-ubyte.gz"))
    assert x.shape == (10000, 784)
    assert len(labels) == 10000 and set(labels) == set(range(10))
