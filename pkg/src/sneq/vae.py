"""Second-order graph (variational) autoencoder with exact reverse-mode gradients.

Encoder: full second-order layers with ReLU, then a 2->1 pooling layer giving
``2C`` channels per vertex, split into mean and log-variance.  Decoder: the
per-channel outer product z_c z_c^T, full second-order layers (ReLU on hidden
layers, identity on the last, which has one channel), symmetrization
(S + S^T)/2 and a sigmoid.

Everything is batched over graphs padded to a common size; ghost vertices are
masked out of the reconstruction and KL terms.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sneq.layers import LayerWeights, Nonlinearity, linear_backward, linear_forward
from sneq.tensor import EquivariantTensor


@dataclass(frozen=True)
class AutoencoderConfig:
    """Architecture and training hyperparameters.

    The widths are desk-scale defaults, not the 100-channel, 20-latent setup
    used for molecules.  ``decoder_widths`` lists the hidden decoder layers;
    a final one-channel layer is always appended.
    """

    n_max: int = 6
    encoder_widths: tuple[int, ...] = (16, 16, 16, 16)
    decoder_widths: tuple[int, ...] = (16, 16, 16)
    latent_channels: int = 8
    beta: float = 0.0
    variational: bool = False
    hidden_xi: str = "relu"
    normalize: bool = True
    lr: float = 0.001
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))
        if any(w < 1 for w in self.encoder_widths + self.decoder_widths) or self.latent_channels < 1:
            raise ValueError("layer widths must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.n_max < 1 or self.epochs < 0 or self.lr <= 0:
            raise ValueError("need n_max >= 1, epochs >= 0, lr > 0")
        Nonlinearity(self.hidden_xi)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        d["decoder_widths"] = list(self.decoder_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> AutoencoderConfig:
        return cls(**d)


@dataclass(frozen=True)
class LossReport:
    reconstruction: float
    kl: float
    total: float
    edge_accuracy: float

    def __post_init__(self):
        for name in ("reconstruction", "kl", "total", "edge_accuracy"):
            if not np.isfinite(getattr(self, name)):
                raise FloatingPointError(f"non-finite {name}: {getattr(self, name)}")


@dataclass(eq=False)
class GraphAutoencoder:
    config: AutoencoderConfig
    encoder: list[LayerWeights]
    pool: LayerWeights
    decoder: list[LayerWeights]

    @classmethod
    def initialize(cls, config: AutoencoderConfig, rng=None) -> GraphAutoencoder:
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(config.seed if rng is None else rng)
        enc, c = [], 1
        for w in config.encoder_widths:
            enc.append(LayerWeights.glorot(2, 2, True, c, w, rng))
            c = w
        pool = LayerWeights.glorot(2, 1, True, c, 2 * config.latent_channels, rng)
        dec, c = [], config.latent_channels
        for w in config.decoder_widths + (1,):
            dec.append(LayerWeights.glorot(2, 2, True, c, w, rng))
            c = w
        return cls(config, enc, pool, dec)

    @property
    def layers(self) -> list[LayerWeights]:
        return self.encoder + [self.pool] + self.decoder

    def parameters(self) -> list[np.ndarray]:
        out = []
        for lw in self.layers:
            out.append(lw.weights)
            out.append(lw.bias)
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> GraphAutoencoder:
        it = iter(params)
        new = [lw.replace(weights=next(it), bias=next(it)) for lw in self.layers]
        k = len(self.encoder)
        return GraphAutoencoder(self.config, new[:k], new[k], new[k + 1:])


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    adjacency: np.ndarray  # (B, n, n)
    vertex_mask: np.ndarray  # (B, n), 1 for real vertices

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n(self) -> int:
        return self.adjacency.shape[1]

    def pair_mask(self) -> np.ndarray:
        m = self.vertex_mask
        return m[:, :, None] * m[:, None, :] * (1.0 - np.eye(self.n))


def make_batch(graphs: Sequence[EquivariantTensor], n_max: int | None = None) -> Batch:
    """Pad graphs with disconnected ghost vertices up to ``n_max``."""
    if not graphs:
        raise ValueError("empty batch")
    sizes = [g.n for g in graphs]
    n = max(sizes) if n_max is None else n_max
    if max(sizes) > n:
        raise ValueError(f"graph with {max(sizes)} vertices exceeds n_max={n}")
    adj = np.zeros((len(graphs), n, n))
    mask = np.zeros((len(graphs), n))
    for b, g in enumerate(graphs):
        adj[b, : g.n, : g.n] = g.channel(0)
        mask[b, : g.n] = 1.0
    return Batch(adj, mask)


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    enc_inputs: list[np.ndarray] = field(default_factory=list)
    enc_pre: list[np.ndarray] = field(default_factory=list)
    enc_post: list[np.ndarray] = field(default_factory=list)
    pool_input: np.ndarray | None = None
    mean: np.ndarray | None = None
    logvar: np.ndarray | None = None
    eps: np.ndarray | None = None
    z: np.ndarray | None = None
    dec_inputs: list[np.ndarray] = field(default_factory=list)
    dec_pre: list[np.ndarray] = field(default_factory=list)
    dec_post: list[np.ndarray] = field(default_factory=list)
    logits: np.ndarray | None = None  # symmetrized, (B, n, n)
    probs: np.ndarray | None = None


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def encode_arrays(model: GraphAutoencoder, adjacency: np.ndarray, cache: ForwardCache | None = None):
    """(B, n, n[, c]) adjacency -> (mean, logvar), each (B, n, C)."""
    cfg = model.config
    xi = Nonlinearity(cfg.hidden_xi)
    h = adjacency[..., None] if adjacency.ndim == 3 else adjacency
    for lw in model.encoder:
        pre = linear_forward(lw, h, cfg.normalize)
        post = xi(pre)
        if cache is not None:
            cache.enc_inputs.append(h)
            cache.enc_pre.append(pre)
            cache.enc_post.append(post)
        h = post
    latent = linear_forward(model.pool, h, cfg.normalize)
    c = cfg.latent_channels
    if cache is not None:
        cache.pool_input = h
    return latent[..., :c], latent[..., c:]


def decode_arrays(model: GraphAutoencoder, z: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
    """(B, n, C) latents -> symmetrized logits (B, n, n)."""
    cfg = model.config
    xi = Nonlinearity(cfg.hidden_xi)
    h = np.einsum("bic,bjc->bijc", z, z)
    last = len(model.decoder) - 1
    for idx, lw in enumerate(model.decoder):
        pre = linear_forward(lw, h, cfg.normalize)
        post = pre if idx == last else xi(pre)
        if cache is not None:
            cache.dec_inputs.append(h)
            cache.dec_pre.append(pre)
            cache.dec_post.append(post)
        h = post
    s = h[..., 0]
    return 0.5 * (s + np.swapaxes(s, -1, -2))


def forward(model: GraphAutoencoder, batch: Batch, eps: np.ndarray | None = None) -> ForwardCache:
    """Full pass; ``eps`` is the reparameterization noise (ignored unless variational)."""
    cache = ForwardCache()
    mean, logvar = encode_arrays(model, batch.adjacency, cache)
    if model.config.variational and eps is not None:
        z = mean + np.exp(0.5 * logvar) * eps
    else:
        eps = None
        z = mean
    cache.mean, cache.logvar, cache.eps, cache.z = mean, logvar, eps, z
    cache.logits = decode_arrays(model, z, cache)
    cache.probs = _sigmoid(cache.logits)
    return cache


def _bce_from_logits(logits, target):
    # -[t log p + (1-t) log(1-p)] with p = sigmoid(s)
    return np.logaddexp(0.0, logits) - target * logits


def loss_from_cache(model: GraphAutoencoder, batch: Batch, cache: ForwardCache, loss_scale: float = 1.0):
    """Mean over graphs of BCE + beta * KL, and the per-epoch report."""
    pm = batch.pair_mask()
    # overflow shows up as a non-finite report, which the trainer treats as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        bce = (_bce_from_logits(cache.logits, batch.adjacency) * pm).sum() / batch.size
        kl = _kl(cache.mean, cache.logvar, batch.vertex_mask) / batch.size
        total = bce + model.config.beta * kl if model.config.beta else bce
    correct = ((cache.probs > 0.5) == (batch.adjacency > 0.5)) * pm
    acc = correct.sum() / pm.sum() if pm.sum() else 1.0
    return loss_scale * total, LossReport(float(bce), float(kl), float(total), float(acc))


def _kl(mean, logvar, vertex_mask):
    per = 0.5 * (np.exp(logvar) + mean**2 - 1.0 - logvar)
    return (per * vertex_mask[..., None]).sum()


def backward(model: GraphAutoencoder, batch: Batch, cache: ForwardCache, loss_scale: float = 1.0):
    """Exact gradients of ``loss_scale * loss_from_cache(...)`` w.r.t. ``model.parameters()``."""
    cfg = model.config
    xi = Nonlinearity(cfg.hidden_xi)
    scale = loss_scale / batch.size
    pm = batch.pair_mask()

    g_sym = scale * (cache.probs - batch.adjacency) * pm
    g_s = 0.5 * (g_sym + np.swapaxes(g_sym, -1, -2))
    g_h = g_s[..., None]

    dec_grads = []
    last = len(model.decoder) - 1
    for idx in range(last, -1, -1):
        lw = model.decoder[idx]
        g_pre = g_h if idx == last else g_h * xi.derivative(cache.dec_pre[idx], cache.dec_post[idx])
        g_h, gw, gb = linear_backward(lw, cache.dec_inputs[idx], g_pre, cfg.normalize)
        dec_grads.append((gw, gb))
    dec_grads.reverse()

    # outer product z_i z_j per channel
    z = cache.z
    g_z = np.einsum("bijc,bjc->bic", g_h, z) + np.einsum("bjic,bjc->bic", g_h, z)

    vm = batch.vertex_mask[..., None]
    beta_s = cfg.beta * scale
    g_mean = g_z + beta_s * cache.mean * vm
    g_logvar = beta_s * 0.5 * (np.exp(cache.logvar) - 1.0) * vm
    if cache.eps is not None:
        g_logvar = g_logvar + g_z * cache.eps * 0.5 * np.exp(0.5 * cache.logvar)
    g_latent = np.concatenate([g_mean, g_logvar], axis=-1)

    g_h, pool_w, pool_b = linear_backward(model.pool, cache.pool_input, g_latent, cfg.normalize)

    enc_grads = []
    for idx in range(len(model.encoder) - 1, -1, -1):
        lw = model.encoder[idx]
        g_pre = g_h * xi.derivative(cache.enc_pre[idx], cache.enc_post[idx])
        g_h, gw, gb = linear_backward(lw, cache.enc_inputs[idx], g_pre, cfg.normalize)
        enc_grads.append((gw, gb))
    enc_grads.reverse()

    grads = []
    for gw, gb in enc_grads + [(pool_w, pool_b)] + dec_grads:
        grads.extend([gw, gb])
    return grads


def loss_and_gradients(model: GraphAutoencoder, batch: Batch, eps=None, loss_scale: float = 1.0):
    cache = forward(model, batch, eps)
    value, report = loss_from_cache(model, batch, cache, loss_scale)
    return value, report, backward(model, batch, cache, loss_scale)


def gradients(model: GraphAutoencoder, batch: Batch, eps=None, loss_scale: float = 1.0) -> list[np.ndarray]:
    return loss_and_gradients(model, batch, eps, loss_scale)[2]


# ---------------------------------------------------------------------------
# tensor-level API


def encode(adjacency: EquivariantTensor, model: GraphAutoencoder):
    """Latent mean and log-variance (order-1 tensors with C channels) of one graph."""
    if adjacency.order != 2:
        raise ValueError("encode needs an order-2 adjacency tensor")
    if adjacency.n > model.config.n_max:
        raise ValueError(f"graph with {adjacency.n} vertices exceeds n_max={model.config.n_max}")
    mean, logvar = encode_arrays(model, adjacency.values[None])
    return EquivariantTensor(mean[0], 1), EquivariantTensor(logvar[0], 1)


def decode(z: EquivariantTensor, model: GraphAutoencoder) -> EquivariantTensor:
    """Edge probabilities (order-2, one channel) from per-vertex latents."""
    if z.order != 1 or z.channels != model.config.latent_channels:
        raise ValueError(f"decode needs an order-1 tensor with {model.config.latent_channels} channels")
    if z.n > model.config.n_max:
        raise ValueError(f"{z.n} vertices exceeds n_max={model.config.n_max}")
    logits = decode_arrays(model, z.values[None])
    return EquivariantTensor(_sigmoid(logits[0])[..., None], 2)


def reconstruct(adjacency: EquivariantTensor, model: GraphAutoencoder) -> EquivariantTensor:
    """Deterministic path: decode the latent mean."""
    mean, _ = encode(adjacency, model)
    return decode(mean, model)


def loss(pred, target, mean, logvar, beta: float) -> LossReport:
    """BCE over off-diagonal entries plus beta times the Gaussian KL to N(0, 1).

    ``pred``/``target`` are (n, n) arrays or order-2 tensors; ``mean``/``logvar``
    are (n, C) arrays or order-1 tensors.
    """
    p, t, mu, lv = (x.values[..., 0] if isinstance(x, EquivariantTensor) and x.order == 2 else
                    x.values if isinstance(x, EquivariantTensor) else np.asarray(x, dtype=np.float64)
                    for x in (pred, target, mean, logvar))
    if p.shape != t.shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("pred and target must be matching square matrices")
    if mu.shape != lv.shape:
        raise ValueError("mean and logvar shapes differ")
    for name, arr in (("pred", p), ("target", t), ("mean", mu), ("logvar", lv)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("pred entries must lie in (0, 1)")
    off = 1.0 - np.eye(p.shape[0])
    bce = float(-((t * np.log(p) + (1 - t) * np.log1p(-p)) * off).sum())
    kl = float(0.5 * (np.exp(lv) + mu**2 - 1.0 - lv).sum())
    acc = float((((p > 0.5) == (t > 0.5)) * off).sum() / off.sum()) if off.sum() else 1.0
    return LossReport(bce, kl, bce + beta * kl, acc)
