"""Adam training loop, checkpoints and training logs for the graph autoencoder."""

from __future__ import annotations

import io
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from sneq.layers import LayerWeights, basis_terms, bias_strata
from sneq.tensor import EquivariantTensor
from sneq.vae import (
    AutoencoderConfig,
    GraphAutoencoder,
    LossReport,
    loss_and_gradients,
    make_batch,
)

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SNVA"
CHECKPOINT_VERSION = 1
OPTIMIZER_TAG = 1  # Adam(beta1=0.9, beta2=0.999, eps=1e-8), moments not stored
_LAYER_HEADER = struct.Struct("<IIIIIII")
LOG_HEADER = "epoch,bce,kl,total,edge_acc"


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1**t)
            v_hat = self.v[k] / (1 - self.beta2**t)
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


@dataclass
class ModelCheckpoint:
    model: GraphAutoencoder
    optimizer_tag: int = OPTIMIZER_TAG

    @property
    def config(self) -> AutoencoderConfig:
        return self.model.config


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    history: list[LossReport]


def train(
    config: AutoencoderConfig,
    dataset: Sequence[EquivariantTensor],
    log_fp=None,
    progress_every: int = 0,
) -> TrainResult:
    """Full-batch Adam, one step per epoch; deterministic given ``config.seed``.

    Graphs smaller than ``config.n_max`` are padded with ghost vertices.
    ``history[e]`` reports the loss at the parameters entering epoch ``e + 1``.
    """
    if not dataset:
        raise ValueError("empty dataset")
    batch = make_batch(dataset, config.n_max)
    rng = np.random.default_rng(config.seed)
    model = GraphAutoencoder.initialize(config, rng)
    noise = np.random.default_rng([config.seed, 1])
    opt = Adam(config.lr)
    history: list[LossReport] = []
    if log_fp is not None:
        log_fp.write(LOG_HEADER + "\n")
    params = model.parameters()
    for epoch in range(1, config.epochs + 1):
        eps = noise.standard_normal((batch.size, batch.n, config.latent_channels)) if config.variational else None
        try:
            _, report, grads = loss_and_gradients(model, batch, eps)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {exc}") from exc
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDiverged(f"non-finite gradient at epoch {epoch} (loss {report.total!r})")
        history.append(report)
        if log_fp is not None:
            log_fp.write(format_log_line(epoch, report) + "\n")
        if progress_every and epoch % progress_every == 0:
            log.info("epoch %d bce %.4f kl %.4f acc %.4f", epoch, report.reconstruction, report.kl, report.edge_accuracy)
        params = opt.step(params, grads)
        model = model.with_parameters(params)
    return TrainResult(ModelCheckpoint(model), history)


def evaluate(model: GraphAutoencoder, dataset: Sequence[EquivariantTensor]) -> LossReport:
    """Loss of the deterministic (latent-mean) path."""
    batch = make_batch(dataset, model.config.n_max)
    _, report, _ = loss_and_gradients(model, batch, None)
    return report


def format_log_line(epoch: int, r: LossReport) -> str:
    return f"{epoch},{r.reconstruction!r},{r.kl!r},{r.total!r},{r.edge_accuracy!r}"


# ---------------------------------------------------------------------------
# checkpoint I/O


def _write_layer(fp: BinaryIO, lw: LayerWeights) -> None:
    nb = 0 if lw.bias is None else lw.bias.shape[0]
    fp.write(_LAYER_HEADER.pack(lw.order_in, lw.order_out, int(lw.full_diagonal), lw.n_terms, lw.c_in, lw.c_out, nb))
    fp.write(np.ascontiguousarray(lw.weights, dtype="<f8").tobytes())
    if lw.bias is not None:
        fp.write(np.ascontiguousarray(lw.bias, dtype="<f8").tobytes())


def _read_exact(fp: BinaryIO, count: int) -> bytes:
    raw = fp.read(count)
    if len(raw) != count:
        raise ValueError("truncated checkpoint")
    return raw


def _read_layer(fp: BinaryIO) -> LayerWeights:
    k_in, k_out, full, t, c_in, c_out, nb = _LAYER_HEADER.unpack(_read_exact(fp, _LAYER_HEADER.size))
    if t != len(basis_terms(k_in, k_out, bool(full))):
        raise ValueError(f"layer ({k_in}->{k_out}) stores {t} terms, basis has a different count")
    w = np.frombuffer(_read_exact(fp, 8 * t * c_in * c_out), dtype="<f8").reshape(t, c_in, c_out)
    b = None
    if nb:
        if nb != len(bias_strata(k_out, bool(full))):
            raise ValueError("bias strata count mismatch")
        b = np.frombuffer(_read_exact(fp, 8 * nb * c_out), dtype="<f8").reshape(nb, c_out)
    return LayerWeights(k_in, k_out, bool(full), w.astype(np.float64), None if b is None else b.astype(np.float64))


def write_checkpoint(ckpt: ModelCheckpoint, fp: BinaryIO) -> None:
    """Magic, version, optimizer tag, JSON config block, layer blocks in canonical term order."""
    cfg = json.dumps(ckpt.config.to_dict(), sort_keys=True).encode("utf-8")
    fp.write(struct.pack("<4sIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, ckpt.optimizer_tag, len(cfg)))
    fp.write(cfg)
    layers = ckpt.model.layers
    fp.write(struct.pack("<I", len(layers)))
    for lw in layers:
        _write_layer(fp, lw)


def read_checkpoint(fp: BinaryIO) -> ModelCheckpoint:
    magic, version, tag, n_cfg = struct.unpack("<4sIII", _read_exact(fp, 16))
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    config = AutoencoderConfig.from_dict(json.loads(_read_exact(fp, n_cfg).decode("utf-8")))
    (count,) = struct.unpack("<I", _read_exact(fp, 4))
    layers = [_read_layer(fp) for _ in range(count)]
    k = len(config.encoder_widths)
    if count != k + 1 + len(config.decoder_widths) + 1:
        raise ValueError("layer count does not match the config")
    return ModelCheckpoint(GraphAutoencoder(config, layers[:k], layers[k], layers[k + 1:]), tag)


def checkpoint_bytes(ckpt: ModelCheckpoint) -> bytes:
    buf = io.BytesIO()
    write_checkpoint(ckpt, buf)
    return buf.getvalue()


def save_checkpoint(ckpt: ModelCheckpoint, path: str | os.PathLike) -> None:
    with open(path, "wb") as fp:
        write_checkpoint(ckpt, fp)


def load_checkpoint(path: str | os.PathLike) -> ModelCheckpoint:
    with open(path, "rb") as fp:
        return read_checkpoint(fp)
