import io

import numpy as np
import pytest

from sneq.graphs import random_dataset
from sneq.train import (
    LOG_HEADER,
    Adam,
    ModelCheckpoint,
    TrainingDiverged,
    checkpoint_bytes,
    evaluate,
    format_log_line,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    train,
)
from sneq.vae import AutoencoderConfig, GraphAutoencoder

SMALL = dict(n_max=6, encoder_widths=(4, 4), decoder_widths=(4,), latent_channels=3)


@pytest.fixture(scope="module")
def data():
    return random_dataset(20, 6, 0.5, 7)


def test_epochs_zero_is_initialization(data):
    cfg = AutoencoderConfig(**SMALL, epochs=0, seed=3)
    res = train(cfg, data)
    init = GraphAutoencoder.initialize(cfg, np.random.default_rng(3))
    assert checkpoint_bytes(res.checkpoint) == checkpoint_bytes(ModelCheckpoint(init))
    assert res.history == []


def test_deterministic(data):
    cfg = AutoencoderConfig(**SMALL, epochs=15, seed=4, beta=1.0, variational=True)
    a, b = train(cfg, data), train(cfg, data)
    assert checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint)
    assert a.history == b.history


def test_loss_trend_over_200_epochs(data):
    cfg = AutoencoderConfig(epochs=200, seed=7)
    h = [r.reconstruction for r in train(cfg, data).history]
    windows = [np.mean(h[k:k + 40]) for k in range(0, 200, 40)]
    assert all(x >= y for x, y in zip(windows, windows[1:]))
    assert h[-1] < h[0]


def test_empty_dataset():
    with pytest.raises(ValueError):
        train(AutoencoderConfig(**SMALL), [])


def test_divergence_raises(data):
    cfg = AutoencoderConfig(**SMALL, epochs=50, lr=1e6, seed=0)
    with pytest.raises(TrainingDiverged):
        train(cfg, data)


def test_adam_matches_reference_step():
    opt = Adam(lr=0.1)
    p, g = np.array([1.0, -2.0]), np.array([0.5, -0.25])
    (out,) = opt.step([p], [g])
    # first step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(out, p - 0.1 * np.sign(g), atol=1e-7)


def test_log_format(data):
    buf = io.StringIO()
    res = train(AutoencoderConfig(**SMALL, epochs=3), data, log_fp=buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == LOG_HEADER
    assert len(lines) == 4
    assert lines[1] == format_log_line(1, res.history[0])
    assert len(lines[2].split(",")) == 5


def test_checkpoint_roundtrip(tmp_path, data):
    res = train(AutoencoderConfig(**SMALL, epochs=5, seed=1), data)
    path = tmp_path / "m.snva"
    save_checkpoint(res.checkpoint, path)
    back = load_checkpoint(path)
    assert back.config == res.checkpoint.config
    assert checkpoint_bytes(back) == path.read_bytes()
    assert evaluate(back.model, data) == evaluate(res.checkpoint.model, data)


def test_checkpoint_rejects_bad_input(data):
    raw = checkpoint_bytes(train(AutoencoderConfig(**SMALL, epochs=1), data).checkpoint)
    with pytest.raises(ValueError, match="magic"):
        read_checkpoint(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(ValueError, match="version"):
        read_checkpoint(io.BytesIO(raw[:4] + (9).to_bytes(4, "little") + raw[8:]))
    with pytest.raises(ValueError, match="truncated"):
        read_checkpoint(io.BytesIO(raw[:-10]))
