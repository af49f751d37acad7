"""Equivariant linear layers between first-, second- and third-order actions.

Every basis term of a layer ``order_in -> order_out`` is a set partition of
the output axes together with the input axes.  A block containing input axes
ties those axes to a common value; if it also contains output axes the value
is read off the output index, otherwise it is summed over.  Output axes that
share a block restrict the term to the stratum where those output indices are
equal (a Kronecker delta).  Blocks of input axes attached to the output form
the *contraction* (``f_{i,*}``, ``f_{p,p}``, ...), and the output axes they are
attached to form the *broadcast*.

The set of all partitions gives the Bell-number count of terms (2, 15, 203
for orders 1, 2, 3), and reproduces term for term the first-order layer
``w0 f_i + w1 f_*``, the zero-diagonal second-order layer, the 15-term
full second-order layer and the 5-term second-to-first-order pooling.

A term is applied as *gather* (an einsum collapsing the input to the kept
blocks), a channel matmul, then *scatter* (broadcast onto the output with the
stratum delta).  The adjoint is the same two steps with the roles of input and
output swapped, which the trainer uses for exact gradients.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from sneq.tensor import EquivariantTensor

SUPPORTED_ORDERS = (1, 2, 3)
_STRATUM_ORDER = {2: [(), ((0, 1),)], 3: [(), ((0, 1),), ((0, 2),), ((1, 2),), ((0, 1, 2),)]}
_OUT_LETTERS = "ijk"


def set_partitions(elements: Sequence[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All set partitions of ``elements`` (restricted-growth enumeration)."""
    elements = list(elements)
    if not elements:
        yield ()
        return
    first, rest = elements[0], elements[1:]
    for sub in set_partitions(rest):
        yield ((first,),) + sub
        for b in range(len(sub)):
            yield sub[:b] + ((first,) + sub[b],) + sub[b + 1:]


def _canonical(blocks) -> tuple[tuple[int, ...], ...]:
    return tuple(sorted(tuple(sorted(b)) for b in blocks))


@dataclass(frozen=True)
class BasisTerm:
    """One equivariant linear map, given as a partition of output+input axes.

    Elements ``0..order_out-1`` are output axes, ``order_out..order_out+order_in-1``
    input axes.  ``zero_diag`` marks the zero-diagonal layer kind: the input
    is restricted to its all-distinct stratum and so is the output.
    """

    order_in: int
    order_out: int
    blocks: tuple[tuple[int, ...], ...]
    zero_diag: bool = False

    def __post_init__(self):
        object.__setattr__(self, "blocks", _canonical(self.blocks))
        flat = sorted(x for b in self.blocks for x in b)
        if flat != list(range(self.order_in + self.order_out)):
            raise ValueError(f"blocks {self.blocks} do not partition {self.order_out}+{self.order_in} axes")

    def _is_out(self, x: int) -> bool:
        return x < self.order_out

    @property
    def kept_blocks(self) -> list[tuple[int, ...]]:
        """Blocks holding both input and output axes, ordered by first input axis."""
        kept = [b for b in self.blocks if any(self._is_out(x) for x in b) and any(not self._is_out(x) for x in b)]
        return sorted(kept, key=lambda b: min(x for x in b if not self._is_out(x)))

    @property
    def summed_blocks(self) -> list[tuple[int, ...]]:
        return [b for b in self.blocks if all(not self._is_out(x) for x in b)]

    @property
    def contraction_order(self) -> int:
        return len(self.kept_blocks)

    @property
    def stratum(self) -> tuple[tuple[int, ...], ...]:
        """Groups of output axes forced equal (empty for the generic stratum)."""
        groups = []
        for b in self.blocks:
            outs = tuple(x for x in b if self._is_out(x))
            if len(outs) > 1:
                groups.append(outs)
        return tuple(sorted(groups))

    def in_letters(self) -> str:
        """einsum subscripts of the input axes, one letter per block."""
        return "".join(self._letter_of(x) for x in range(self.order_out, self.order_out + self.order_in))

    def out_letters(self) -> str:
        return "".join(self._letter_of(x) for x in range(self.order_out))

    def kept_letters(self) -> str:
        return "".join(self._letter_of(b[0]) for b in self.kept_blocks)

    def _letter_of(self, x: int) -> str:
        for idx, b in enumerate(self.blocks):
            if x in b:
                return string.ascii_lowercase[idx]
        raise KeyError(x)

    def contraction_pattern(self) -> str:
        """Input pattern with kept blocks named a, b, c in order, '*' for summed singletons, 'p' for summed ties."""
        names = {}
        for pos, b in enumerate(self.kept_blocks):
            names[b] = "abc"[pos]
        for b in self.summed_blocks:
            names[b] = "*" if len(b) == 1 else "p"
        out = []
        for x in range(self.order_out, self.order_out + self.order_in):
            out.append(next(v for b, v in names.items() if x in b))
        return "".join(out)

    def broadcast(self) -> tuple[int, ...]:
        """Output axis (smallest) each kept block is attached to."""
        return tuple(min(x for x in b if self._is_out(x)) for b in self.kept_blocks)

    @property
    def descriptor(self) -> str:
        idx = []
        for x in range(self.order_out, self.order_out + self.order_in):
            b = next(b for b in self.blocks if x in b)
            outs = [y for y in b if self._is_out(y)]
            if outs:
                idx.append(_OUT_LETTERS[min(outs)])
            elif len(b) == 1:
                idx.append("*")
            else:
                idx.append("p")
        body = "f_{" + ",".join(idx) + "}"
        if "p" in idx:
            body = "sum_p " + body
        prefix = ""
        for group in self.stratum:
            prefix += "delta_{" + ",".join(_OUT_LETTERS[x] for x in group) + "} "
        return prefix + body

    def __str__(self):
        return self.descriptor


# Printed weight numbering for the second-order layers and pooling.
_PRINTED_ORDER = {
    (1, 1, True): ["f_{i}", "f_{*}"],
    (2, 2, False): ["f_{i,j}", "f_{j,i}", "f_{i,*}", "f_{*,i}", "f_{*,j}", "f_{j,*}", "f_{*,*}"],
    (2, 2, True): [
        "f_{i,j}", "f_{j,i}", "f_{i,*}", "f_{*,i}", "f_{*,j}", "f_{j,*}", "f_{*,*}",
        "sum_p f_{p,p}", "f_{i,i}", "f_{j,j}",
        "delta_{i,j} f_{i,i}", "delta_{i,j} sum_p f_{p,p}", "delta_{i,j} f_{*,*}",
        "delta_{i,j} f_{i,*}", "delta_{i,j} f_{*,i}",
    ],
    (2, 1, True): ["f_{i,*}", "f_{*,i}", "f_{*,*}", "sum_p f_{p,p}", "f_{i,i}"],
    (2, 1, False): ["f_{i,*}", "f_{*,i}", "f_{*,*}"],
}


def _sort_key(term: BasisTerm):
    strata = _STRATUM_ORDER.get(term.order_out, [()])
    return (strata.index(term.stratum), -term.contraction_order, term.contraction_pattern(), term.broadcast())


@lru_cache(maxsize=None)
def basis_terms(order_in: int, order_out: int, full_diagonal: bool = True) -> tuple[BasisTerm, ...]:
    """Canonically ordered basis of equivariant maps ``order_in -> order_out``.

    Second-order layers and the 2->1 pooling keep their printed numbering
    (``w0 f_{i,j} + w1 f_{j,i} + ...``).  Other pairs are ordered by output
    stratum, then contraction order descending, then contraction pattern,
    then broadcast.
    """
    if order_in not in SUPPORTED_ORDERS or order_out not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported order pair ({order_in}, {order_out})")
    zero_diag = not full_diagonal and max(order_in, order_out) > 1
    outs = set(range(order_out))
    terms = []
    for blocks in set_partitions(range(order_in + order_out)):
        if zero_diag and any(len(b & outs) > 1 or len(set(b) - outs) > 1 for b in map(set, blocks)):
            continue
        terms.append(BasisTerm(order_in, order_out, blocks, zero_diag))
    key = (order_in, order_out, full_diagonal or max(order_in, order_out) == 1)
    if key in _PRINTED_ORDER:
        rank = {d: i for i, d in enumerate(_PRINTED_ORDER[key])}
        terms.sort(key=lambda t: rank[t.descriptor])
    else:
        terms.sort(key=_sort_key)
    return tuple(terms)


def bias_strata(order_out: int, full_diagonal: bool = True) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """Output strata carrying a separate per-channel bias: the uniform one first."""
    if order_out == 1 or not full_diagonal:
        return ((),)
    return tuple(_STRATUM_ORDER[order_out])


# ---------------------------------------------------------------------------
# gather / scatter kernels


@lru_cache(maxsize=None)
def _equal_mask(n: int, letters: str) -> np.ndarray | None:
    """Boolean mask over (n,)*len(letters): axes sharing a letter must be equal."""
    k = len(letters)
    idx = np.indices((n,) * k)
    mask = np.ones((n,) * k, dtype=bool)
    tied = False
    for a in range(k):
        for b in range(a + 1, k):
            if letters[a] == letters[b]:
                mask &= idx[a] == idx[b]
                tied = True
    return mask if tied else None


@lru_cache(maxsize=None)
def _distinct_mask(n: int, k: int) -> np.ndarray:
    idx = np.indices((n,) * k)
    mask = np.ones((n,) * k, dtype=bool)
    for a in range(k):
        for b in range(a + 1, k):
            mask &= idx[a] != idx[b]
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def _grids(n: int, letters: str, kept: str) -> tuple[np.ndarray, ...]:
    idx = np.indices((n,) * len(letters))
    return tuple(idx[letters.index(c)] for c in kept)


def gather(values: np.ndarray, letters: str, kept: str) -> np.ndarray:
    """Collapse the index axes of ``values`` (shape ``(*batch, n..n, C)``) to the kept letters.

    Repeated letters take a diagonal; letters missing from ``kept`` are summed.
    """
    return np.einsum(f"...{letters}Z->...{kept}Z", values)


def scatter(kept_values: np.ndarray, letters: str, kept: str, n: int) -> np.ndarray:
    """Adjoint of :func:`gather`: spread ``(*batch, n..n[kept], C)`` over axes named by ``letters``."""
    k = len(letters)
    if kept:
        out = kept_values[(Ellipsis,) + _grids(n, letters, kept) + (slice(None),)]
    else:
        shape = kept_values.shape[:-1] + (1,) * k + kept_values.shape[-1:]
        out = np.broadcast_to(kept_values.reshape(shape), kept_values.shape[:-1] + (n,) * k + kept_values.shape[-1:])
    mask = _equal_mask(n, letters)
    if mask is not None:
        out = out * mask[..., None]
    return out


def term_scale(term: BasisTerm, n: int, normalize: bool) -> float:
    return float(n) ** -len(term.summed_blocks) if normalize else 1.0


def _mask_distinct(values: np.ndarray, order: int, n: int) -> np.ndarray:
    if order < 2:
        return values
    return values * _distinct_mask(n, order)[..., None]


# ---------------------------------------------------------------------------
# weights and layers


class Nonlinearity(enum.Enum):
    IDENTITY = "identity"
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self is Nonlinearity.IDENTITY:
            return x
        if self is Nonlinearity.RELU:
            return np.maximum(x, 0.0)
        if self is Nonlinearity.SIGMOID:
            return _sigmoid(x)
        return np.tanh(x)

    def derivative(self, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
        """d xi / d pre, given the pre-activation and the activation."""
        if self is Nonlinearity.IDENTITY:
            return np.ones_like(pre)
        if self is Nonlinearity.RELU:
            return (pre > 0).astype(pre.dtype)
        if self is Nonlinearity.SIGMOID:
            return post * (1.0 - post)
        return 1.0 - post**2


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass(frozen=True, eq=False)
class LayerWeights:
    """Channel-mixing weights of one equivariant layer.

    ``weights[t]`` is the ``c_in x c_out`` matrix of ``terms[t]``; ``bias[s]``
    is the per-channel bias on the output stratum ``bias_strata(...)[s]``.
    """

    order_in: int
    order_out: int
    full_diagonal: bool
    weights: np.ndarray
    bias: np.ndarray | None = None
    terms: tuple[BasisTerm, ...] = field(init=False)

    def __post_init__(self):
        terms = basis_terms(self.order_in, self.order_out, self.full_diagonal)
        object.__setattr__(self, "terms", terms)
        w = _as_float(self.weights)
        if w.ndim != 3 or w.shape[0] != len(terms):
            raise ValueError(f"expected weights of shape ({len(terms)}, c_in, c_out), got {w.shape}")
        object.__setattr__(self, "weights", w)
        if self.bias is not None:
            b = _as_float(self.bias)
            want = (len(bias_strata(self.order_out, self.full_diagonal)), w.shape[2])
            if b.shape != want:
                raise ValueError(f"expected bias of shape {want}, got {b.shape}")
            object.__setattr__(self, "bias", b)

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def c_out(self) -> int:
        return self.weights.shape[2]

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @classmethod
    def zeros(cls, order_in, order_out, full_diagonal=True, c_in=1, c_out=1, bias=True) -> LayerWeights:
        t = len(basis_terms(order_in, order_out, full_diagonal))
        b = np.zeros((len(bias_strata(order_out, full_diagonal)), c_out)) if bias else None
        return cls(order_in, order_out, full_diagonal, np.zeros((t, c_in, c_out)), b)

    @classmethod
    def from_scalars(cls, order_in, order_out, full_diagonal, scalars: Sequence[float] | dict) -> LayerWeights:
        """Single-channel weights; ``scalars`` is a full list or a {term index: value} dict."""
        lw = cls.zeros(order_in, order_out, full_diagonal, bias=False)
        w = lw.weights.copy()
        items = scalars.items() if isinstance(scalars, dict) else enumerate(scalars)
        for t, v in items:
            w[t, 0, 0] = v
        return cls(order_in, order_out, full_diagonal, w)

    @classmethod
    def glorot(cls, order_in, order_out, full_diagonal, c_in, c_out, rng, bias=True) -> LayerWeights:
        """Uniform in +-sqrt(6 / (fan_in + fan_out)) with fan_in = c_in * n_terms, fan_out = c_out."""
        t = len(basis_terms(order_in, order_out, full_diagonal))
        limit = glorot_limit(t, c_in, c_out)
        w = rng.uniform(-limit, limit, size=(t, c_in, c_out))
        b = np.zeros((len(bias_strata(order_out, full_diagonal)), c_out)) if bias else None
        return cls(order_in, order_out, full_diagonal, w, b)

    def replace(self, weights=None, bias=None) -> LayerWeights:
        return LayerWeights(
            self.order_in,
            self.order_out,
            self.full_diagonal,
            self.weights if weights is None else weights,
            self.bias if bias is None else bias,
        )


def _as_float(x) -> np.ndarray:
    """float64 unless already a wider float (the gradient oracle runs in longdouble)."""
    a = np.asarray(x)
    return a if a.dtype == np.longdouble else a.astype(np.float64)


def glorot_limit(n_terms: int, c_in: int, c_out: int) -> float:
    return float(np.sqrt(6.0 / (c_in * n_terms + c_out)))


def _check_input(lw: LayerWeights, values: np.ndarray) -> int:
    k = lw.order_in
    if values.ndim < k + 1:
        raise ValueError(f"input of shape {values.shape} has too few axes for order {k}")
    space = values.shape[values.ndim - 1 - k: -1]
    if len(set(space)) != 1:
        raise ValueError(f"index axes disagree: {values.shape}")
    if values.shape[-1] != lw.c_in:
        raise ValueError(f"layer expects {lw.c_in} input channels, got {values.shape[-1]}")
    return space[0]


def linear_forward(lw: LayerWeights, values: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Affine part of the layer on raw arrays of shape ``(*batch, n..n, c_in)``."""
    n = _check_input(lw, values)
    x = _mask_distinct(values, lw.order_in, n) if not lw.full_diagonal else values
    batch = values.shape[: values.ndim - 1 - lw.order_in]
    out = np.zeros(batch + (n,) * lw.order_out + (lw.c_out,), dtype=np.result_type(values, lw.weights))
    for term, w in zip(lw.terms, lw.weights):
        if not w.any():
            continue
        kept = term.kept_letters()
        k = gather(x, term.in_letters(), kept) @ w
        out = out + term_scale(term, n, normalize) * scatter(k, term.out_letters(), kept, n)
    if lw.bias is not None:
        for stratum, b in zip(bias_strata(lw.order_out, lw.full_diagonal), lw.bias):
            out = out + _stratum_indicator(n, lw.order_out, stratum)[..., None] * b
    if not lw.full_diagonal:
        out = _mask_distinct(out, lw.order_out, n)
    return out


def linear_backward(lw: LayerWeights, values: np.ndarray, grad_out: np.ndarray, normalize: bool = False):
    """Gradients of ``sum(grad_out * linear_forward(lw, values))``.

    Returns ``(grad_values, grad_weights, grad_bias)``; ``grad_bias`` is None
    for bias-free layers.  Batch axes are summed in the weight gradients.
    """
    n = _check_input(lw, values)
    x = _mask_distinct(values, lw.order_in, n) if not lw.full_diagonal else values
    g = _mask_distinct(grad_out, lw.order_out, n) if not lw.full_diagonal else grad_out
    dtype = np.result_type(values, grad_out, lw.weights)
    grad_x = np.zeros(values.shape, dtype=dtype)
    grad_w = np.zeros(lw.weights.shape, dtype=dtype)
    for t, (term, w) in enumerate(zip(lw.terms, lw.weights)):
        kept = term.kept_letters()
        scale = term_scale(term, n, normalize)
        gk = scale * gather(g, term.out_letters(), kept)
        xk = gather(x, term.in_letters(), kept)
        grad_w[t] = xk.reshape(-1, lw.c_in).T @ gk.reshape(-1, lw.c_out)
        grad_x = grad_x + scatter(gk @ w.T, term.in_letters(), kept, n)
    if not lw.full_diagonal:
        grad_x = _mask_distinct(grad_x, lw.order_in, n)
    grad_b = None
    if lw.bias is not None:
        axes = tuple(range(g.ndim - 1))
        grad_b = np.stack(
            [
                (g * _stratum_indicator(n, lw.order_out, s)[..., None]).sum(axis=axes)
                for s in bias_strata(lw.order_out, lw.full_diagonal)
            ]
        )
    return grad_x, grad_w, grad_b


@lru_cache(maxsize=None)
def _stratum_indicator(n: int, order: int, stratum) -> np.ndarray:
    if not stratum:
        return np.ones((n,) * order)
    letters = list(_OUT_LETTERS[:order])
    for group in stratum:
        for x in group:
            letters[x] = letters[group[0]]
    mask = _equal_mask(n, "".join(letters))
    return mask.astype(np.float64)


def apply_layer(
    lw: LayerWeights, xi: Nonlinearity, f_in: EquivariantTensor, normalize: bool = False
) -> EquivariantTensor:
    """xi( sum_t broadcast(contract_t(f_in)) W_t + bias )."""
    if f_in.order != lw.order_in:
        raise ValueError(f"layer expects order {lw.order_in} input, got order {f_in.order}")
    return EquivariantTensor(Nonlinearity(xi)(linear_forward(lw, f_in.values, normalize)), lw.order_out)


def pool_2_to_1(lw: LayerWeights, xi: Nonlinearity, f_in: EquivariantTensor, normalize: bool = False):
    """First-order output w1 f_{i,*} + w2 f_{*,i} + w3 f_{*,*} + w4 sum_p f_{p,p} + w5 f_{i,i}.

    The weights are stored 0-based, so ``lw.weights[0]`` multiplies ``f_{i,*}``.
    """
    if (lw.order_in, lw.order_out) != (2, 1) or f_in.order != 2:
        raise ValueError("pool_2_to_1 needs a 2->1 layer and an order-2 input")
    return apply_layer(lw, xi, f_in, normalize)


def lift_1_to_2(f: EquivariantTensor) -> EquivariantTensor:
    """Per-channel outer product: out[i, j, c] = f[i, c] * f[j, c]."""
    if f.order != 1:
        raise ValueError(f"lift_1_to_2 needs an order-1 input, got order {f.order}")
    return EquivariantTensor(np.einsum("ic,jc->ijc", f.values, f.values), 2)


def pool_1_to_0(f: EquivariantTensor) -> EquivariantTensor:
    if f.order != 1:
        raise ValueError(f"pool_1_to_0 needs an order-1 input, got order {f.order}")
    return EquivariantTensor(f.values.sum(axis=0), 0, f.n)


def materialize_term(term: BasisTerm, n: int) -> np.ndarray:
    """Single-channel matrix M of the term with ``apply(term)(f) = M @ vec(f)`` (row-major vec)."""
    d_in = n**term.order_in
    basis = np.eye(d_in).reshape((d_in,) + (n,) * term.order_in + (1,))
    if term.zero_diag:
        basis = _mask_distinct(basis, term.order_in, n)
    kept = term.kept_letters()
    k = gather(basis, term.in_letters(), kept)
    out = scatter(k, term.out_letters(), kept, n)
    if term.zero_diag:
        out = _mask_distinct(out, term.order_out, n)
    return np.ascontiguousarray(out.reshape(d_in, n**term.order_out).T)


def active_terms(terms: Iterable[BasisTerm], index: Sequence[int]) -> list[BasisTerm]:
    """Terms whose output stratum contains the output entry ``index``."""
    hits = []
    for t in terms:
        if all(len({index[x] for x in group}) == 1 for group in t.stratum):
            hits.append(t)
    return hits
