"""Dense multi-channel tensors over an index set of size n and the S_n action on them."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

MAX_ORDER = 3
TENSOR_MAGIC = b"SNEQ"
TENSOR_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True, eq=False)
class Permutation:
    """A bijection of {0..n-1}, stored one-line: ``mapping[i] = sigma(i)``.

    User-facing constructors and printing are 1-based.
    """

    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise ValueError(f"not a permutation of 0..{m.size - 1}: {self.mapping!r}")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    @classmethod
    def from_one_based(cls, images: Sequence[int]) -> Permutation:
        return cls(np.asarray(images, dtype=np.int64) - 1)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(np.arange(n))

    @classmethod
    def transposition(cls, n: int, a: int, b: int) -> Permutation:
        m = np.arange(n)
        m[a], m[b] = b, a
        return cls(m)

    @classmethod
    def cycle(cls, n: int) -> Permutation:
        """The n-cycle i -> i+1 (mod n)."""
        return cls((np.arange(n) + 1) % n)

    @property
    def n(self) -> int:
        return int(self.mapping.size)

    def one_based(self) -> tuple[int, ...]:
        return tuple(int(x) + 1 for x in self.mapping)

    def inverse(self) -> Permutation:
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.n)
        return Permutation(inv)

    def __call__(self, i: int) -> int:
        return int(self.mapping[i])

    def __eq__(self, other):
        return isinstance(other, Permutation) and np.array_equal(self.mapping, other.mapping)

    def __hash__(self):
        return hash(self.mapping.tobytes())

    def __repr__(self):
        return f"Permutation({self.one_based()})"


def compose(sigma2: Permutation, sigma1: Permutation) -> Permutation:
    """The permutation i -> sigma2(sigma1(i))."""
    if sigma2.n != sigma1.n:
        raise ValueError(f"size mismatch: {sigma2.n} vs {sigma1.n}")
    return Permutation(sigma2.mapping[sigma1.mapping])


@dataclass(frozen=True, eq=False)
class EquivariantTensor:
    """Order-k tensor with a trailing channel axis: ``values.shape == (n,)*order + (channels,)``.

    Order-0 tensors have no index axes; ``n`` then records the size of the set
    they were pooled from.
    """

    values: np.ndarray
    order: int
    n: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if not 0 <= self.order <= MAX_ORDER:
            raise ValueError(f"order must be in 0..{MAX_ORDER}, got {self.order}")
        if v.ndim != self.order + 1:
            raise ValueError(f"expected {self.order + 1} axes (order + channel), got shape {v.shape}")
        if self.order and len(set(v.shape[:-1])) != 1:
            raise ValueError(f"index axes must all have the same size, got shape {v.shape}")
        if v.shape[-1] < 1:
            raise ValueError("need at least one channel")
        if not np.all(np.isfinite(v)):
            raise ValueError("tensor entries must be finite")
        if self.order:
            if self.n is not None and self.n != v.shape[0]:
                raise ValueError(f"n={self.n} disagrees with shape {v.shape}")
            object.__setattr__(self, "n", int(v.shape[0]))
        elif self.n is None:
            object.__setattr__(self, "n", 0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, array, order: int | None = None) -> EquivariantTensor:
        """Wrap a single-channel array of shape ``(n,)*order``; a channel axis is appended."""
        a = np.asarray(array, dtype=np.float64)
        if order is not None and a.ndim != order:
            raise ValueError(f"expected a {order}-dimensional array, got shape {a.shape}")
        return cls(a[..., None], a.ndim)

    @property
    def channels(self) -> int:
        return int(self.values.shape[-1])

    def channel(self, c: int = 0) -> np.ndarray:
        return self.values[..., c]

    def __eq__(self, other):
        return (
            isinstance(other, EquivariantTensor)
            and self.order == other.order
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"EquivariantTensor(n={self.n}, order={self.order}, channels={self.channels})"


def act_array(sigma: Permutation, values: np.ndarray, order: int) -> np.ndarray:
    """Apply sigma to the first ``order`` axes: out[i1..ik] = in[s^-1(i1)..s^-1(ik)].

    Extra trailing axes (channels) are carried along; leading batch axes are
    not supported here.
    """
    inv = sigma.inverse().mapping
    out = values
    for axis in range(order):
        out = np.take(out, inv, axis=axis)
    return out


def act(sigma: Permutation, f: EquivariantTensor) -> EquivariantTensor:
    if f.order == 0:
        return f
    if sigma.n != f.n:
        raise ValueError(f"permutation of size {sigma.n} cannot act on tensor over n={f.n}")
    return EquivariantTensor(act_array(sigma, f.values, f.order), f.order)


def random_permutation(n: int, seed) -> Permutation:
    """Uniform permutation by Fisher-Yates driven by a seeded generator."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    m = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        m[i], m[j] = m[j], m[i]
    return Permutation(m)


def random_tensor(n: int, order: int, channels: int, seed) -> EquivariantTensor:
    rng = np.random.default_rng(seed)
    return EquivariantTensor(rng.standard_normal((n,) * order + (channels,)), order)


def dump_tensor(f: EquivariantTensor, fp: BinaryIO) -> None:
    fp.write(_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, f.n, f.order, f.channels))
    fp.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_tensor(fp: BinaryIO) -> EquivariantTensor:
    head = fp.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated tensor header")
    magic, version, n, order, channels = _HEADER.unpack(head)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != TENSOR_VERSION:
        raise ValueError(f"unsupported tensor version {version}")
    shape = (n,) * order + (channels,)
    count = int(np.prod(shape))
    raw = fp.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated tensor payload")
    return EquivariantTensor(np.frombuffer(raw, dtype="<f8").reshape(shape), order, n)
