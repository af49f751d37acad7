"""Compositional covariant networks: neurons over subsets of the objects.

A neuron's activation lives on its *domain*, an ordered set of global object
ids, and transforms under permutations of that set by the usual k-th order
action.  Children are *promoted* into the parent's domain by reindexing and
then aggregated, by sum or by elementwise product, before an equivariant
layer is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sneq.layers import LayerWeights, Nonlinearity, linear_forward
from sneq.tensor import EquivariantTensor, Permutation, act


@dataclass(frozen=True, eq=False)
class DomainActivation:
    """An activation over ``domain``; local index ``i`` is the object ``domain[i]``.

    Domains are kept sorted.  An unsorted domain is sorted on construction and
    the tensor relabeled to match, so the pair still denotes the same thing.
    """

    domain: tuple[int, ...]
    tensor: EquivariantTensor

    def __post_init__(self):
        dom = tuple(int(x) for x in self.domain)
        if len(set(dom)) != len(dom):
            raise ValueError(f"domain has duplicates: {dom}")
        if self.tensor.order and self.tensor.n != len(dom):
            raise ValueError(f"tensor over n={self.tensor.n} but domain has {len(dom)} objects")
        order = sorted(range(len(dom)), key=lambda i: dom[i])
        tensor = self.tensor
        if order != list(range(len(dom))):
            # local index i moves to its rank in sorted order
            rank = np.empty(len(dom), dtype=np.int64)
            rank[order] = np.arange(len(dom))
            tensor = act(Permutation(rank), tensor)
        object.__setattr__(self, "domain", tuple(sorted(dom)))
        object.__setattr__(self, "tensor", tensor)


def promotion_map(child_domain: Sequence[int], parent_domain: Sequence[int]) -> np.ndarray:
    """Positions chi(i) of each child object in the parent domain."""
    where = {x: p for p, x in enumerate(parent_domain)}
    missing = [x for x in child_domain if x not in where]
    if missing:
        raise ValueError(f"child objects {missing} are not in the parent domain")
    return np.array([where[x] for x in child_domain], dtype=np.int64)


def promote(child: DomainActivation, parent_domain: Sequence[int], fill: float = 0.0) -> EquivariantTensor:
    """Reindex ``child`` into ``parent_domain``; entries outside its support get ``fill``."""
    parent_domain = tuple(parent_domain)
    chi = promotion_map(child.domain, parent_domain)
    f = child.tensor
    if f.order == 0:
        return f
    m = len(parent_domain)
    out = np.full((m,) * f.order + (f.channels,), float(fill))
    out[np.ix_(*([chi] * f.order), np.arange(f.channels))] = f.values
    return EquivariantTensor(out, f.order)


def _check_children(children: Sequence[DomainActivation]):
    if not children:
        raise ValueError("need at least one child")
    orders = {c.tensor.order for c in children}
    chans = {c.tensor.channels for c in children}
    if len(orders) != 1 or len(chans) != 1:
        raise ValueError(f"children disagree on order/channels: {orders}, {chans}")


def aggregate_sum(children: Sequence[DomainActivation], parent_domain: Sequence[int]) -> EquivariantTensor:
    _check_children(children)
    total = sum(promote(c, parent_domain).values for c in children)
    return EquivariantTensor(total, children[0].tensor.order, len(parent_domain))


def aggregate_product(children: Sequence[DomainActivation], parent_domain: Sequence[int]) -> EquivariantTensor:
    """Elementwise product of promotions, each filled with 1 outside its child's support."""
    _check_children(children)
    total = np.prod([promote(c, parent_domain, fill=1.0).values for c in children], axis=0)
    return EquivariantTensor(total, children[0].tensor.order, len(parent_domain))


# ---------------------------------------------------------------------------
# neighborhood networks on graphs


def _check_adjacency(adjacency: EquivariantTensor) -> np.ndarray:
    if adjacency.order != 2 or adjacency.channels != 1:
        raise ValueError("adjacency must be a single-channel order-2 tensor")
    a = adjacency.channel(0)
    if not np.isin(a, (0.0, 1.0)).all() or not np.array_equal(a, a.T) or np.any(np.diag(a)):
        raise ValueError("adjacency must be 0/1, symmetric, with zero diagonal")
    return a


def neighborhoods(adjacency: np.ndarray, radius: int) -> list[tuple[int, ...]]:
    """Radius-``radius`` neighborhoods (center included) as sorted 0-based vertex indices."""
    n = adjacency.shape[0]
    reach = np.eye(n, dtype=bool)
    step = adjacency.astype(bool) | np.eye(n, dtype=bool)
    for _ in range(radius):
        reach = (reach.astype(int) @ step.astype(int)) > 0
    return [tuple(np.flatnonzero(reach[v]).tolist()) for v in range(n)]


def _local_structure(a: np.ndarray, domain: tuple[int, ...]) -> np.ndarray:
    idx = np.array(domain)
    sub = a[np.ix_(idx, idx)]
    return np.stack([sub, np.eye(len(idx))], axis=-1)


STRUCTURE_CHANNELS = 2


@dataclass
class NeighborhoodOutput:
    levels: list[list[DomainActivation]]
    readout: np.ndarray  # (n, 2 * c_L): per-vertex [sum of all entries, trace]


def neighborhood_network(
    adjacency: EquivariantTensor,
    layers: int,
    weights: Sequence[LayerWeights],
    xi: Nonlinearity = Nonlinearity.RELU,
    normalize: bool = False,
) -> NeighborhoodOutput:
    """Second-order compositional network over growing vertex neighborhoods.

    Level 0 holds, for each vertex v, the 1x1 activation on {v} with channels
    (adjacency, identity).  Level l gives v the domain N_l(v); its input is the
    sum of the promoted level-(l-1) activations of v and its neighbours,
    concatenated with the adjacency and identity restricted to N_l(v), and
    ``weights[l-1]`` (a full 2->2 layer) maps it on.  The readout sums every
    entry and the diagonal of the last level, giving invariant per-vertex
    features that relabeling the graph permutes along with the vertices.
    """
    a = _check_adjacency(adjacency)
    if len(weights) != layers:
        raise ValueError(f"expected {layers} layer weights, got {len(weights)}")
    n = a.shape[0]
    nbr1 = neighborhoods(a, 1)
    # domains use 1-based object ids; neighborhoods() works 0-based
    level = [
        DomainActivation((v + 1,), EquivariantTensor(_local_structure(a, (v,)), 2)) for v in range(n)
    ]
    levels = [level]
    for ell in range(1, layers + 1):
        lw = weights[ell - 1]
        doms = neighborhoods(a, ell)
        nxt = []
        for v in range(n):
            children = [level[u] for u in nbr1[v]]
            dom = tuple(x + 1 for x in doms[v])
            agg = aggregate_sum(children, dom).values
            x = np.concatenate([agg, _local_structure(a, doms[v])], axis=-1)
            out = Nonlinearity(xi)(linear_forward(lw, x, normalize))
            nxt.append(DomainActivation(dom, EquivariantTensor(out, 2)))
        level = nxt
        levels.append(level)
    readout = np.stack(
        [
            np.concatenate([act_.tensor.values.sum(axis=(0, 1)), np.einsum("iic->c", act_.tensor.values)])
            for act_ in level
        ]
    )
    return NeighborhoodOutput(levels, readout)


def neighborhood_weights(widths: Sequence[int], rng) -> list[LayerWeights]:
    """Glorot-initialized full 2->2 layers for :func:`neighborhood_network`."""
    out, c_prev = [], STRUCTURE_CHANNELS
    for c in widths:
        out.append(LayerWeights.glorot(2, 2, True, c_prev + STRUCTURE_CHANNELS, c, rng))
        c_prev = c
    return out
