"""Plain-text graph files and random graphs.

File format: a header line ``n m`` followed by ``m`` lines ``i j`` with
1-based vertex ids.  Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import itertools
import os
from typing import TextIO

import numpy as np

from sneq.tensor import EquivariantTensor


class GraphFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_graph(text: str) -> EquivariantTensor:
    lines = [
        (no, raw.split("#", 1)[0].strip())
        for no, raw in enumerate(text.splitlines(), start=1)
    ]
    lines = [(no, s) for no, s in lines if s]
    if not lines:
        raise GraphFormatError("empty graph file")
    no, head = lines[0]
    try:
        n, m = (int(tok) for tok in head.split())
    except ValueError:
        raise GraphFormatError(f"expected 'n m', got {head!r}", no) from None
    if n < 1 or m < 0:
        raise GraphFormatError(f"bad header n={n} m={m}", no)
    body = lines[1:]
    if len(body) != m:
        raise GraphFormatError(f"header announces {m} edges, found {len(body)}", no)
    a = np.zeros((n, n))
    for no, s in body:
        try:
            i, j = (int(tok) for tok in s.split())
        except ValueError:
            raise GraphFormatError(f"expected 'i j', got {s!r}", no) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphFormatError(f"vertex id out of range 1..{n}: {s!r}", no)
        if i == j:
            raise GraphFormatError(f"self-loop at vertex {i}", no)
        if a[i - 1, j - 1]:
            raise GraphFormatError(f"duplicate edge {i}-{j}", no)
        a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
    return EquivariantTensor.from_array(a, 2)


def load_graph(path: str | os.PathLike) -> EquivariantTensor:
    with open(path, encoding="utf-8") as fp:
        return parse_graph(fp.read())


def format_graph(adjacency: EquivariantTensor) -> str:
    a = adjacency.channel(0)
    n = a.shape[0]
    edges = [(i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if a[i, j] > 0.5]
    return "".join([f"{n} {len(edges)}\n"] + [f"{i} {j}\n" for i, j in edges])


def save_graph(adjacency: EquivariantTensor, fp: TextIO | str | os.PathLike) -> None:
    text = format_graph(adjacency)
    if hasattr(fp, "write"):
        fp.write(text)
    else:
        with open(fp, "w", encoding="utf-8") as out:
            out.write(text)


def random_graph(n: int, edge_prob: float, seed) -> EquivariantTensor:
    """Erdos-Renyi G(n, p); pairs i < j are drawn in row-major order."""
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"edge probability must be in [0, 1], got {edge_prob}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    draws = rng.random(iu[0].size) < edge_prob
    a = np.zeros((n, n))
    a[iu] = draws
    a = a + a.T
    return EquivariantTensor.from_array(a, 2)


def random_dataset(count: int, n: int, edge_prob: float, seed) -> list[EquivariantTensor]:
    rng = np.random.default_rng(seed)
    return [random_graph(n, edge_prob, rng) for _ in range(count)]


def largest_component(adjacency: np.ndarray) -> list[int]:
    """0-based vertices of the largest connected component (lowest ids win ties)."""
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    best: list[int] = []
    for s in range(n):
        if seen[s]:
            continue
        comp, stack = [], [s]
        seen[s] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in np.flatnonzero(adjacency[v] > 0.5):
                if not seen[u]:
                    seen[u] = True
                    stack.append(int(u))
        if len(comp) > len(best):
            best = sorted(comp)
    return best


MAX_AUTOMORPHISM_N = 8


def automorphism_orbits(adjacency: np.ndarray) -> list[int]:
    """Orbit label (smallest member) of each vertex under the automorphism group, by brute force."""
    n = adjacency.shape[0]
    if n > MAX_AUTOMORPHISM_N:
        raise ValueError(f"brute-force automorphisms need n <= {MAX_AUTOMORPHISM_N}, got {n}")
    a = adjacency > 0.5
    label = list(range(n))
    for p in itertools.permutations(range(n)):
        if np.array_equal(a[np.ix_(p, p)], a):
            for v in range(n):
                label[v] = min(label[v], p[v])
    return label


def equivariant_accuracy_ceiling(graphs: list[EquivariantTensor]) -> float:
    """Best off-diagonal edge accuracy any permutation-equivariant autoencoder can reach.

    Automorphic vertices get identical latents, and an equivariant decoder is
    then invariant under swapping them, so its prediction is constant over
    each unordered pair of automorphism orbits; the best constant is the
    majority label.
    """
    correct = total = 0
    for g in graphs:
        a = g.channel(0)
        orb = automorphism_orbits(a)
        groups: dict[tuple[int, int], list[float]] = {}
        n = a.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                groups.setdefault(tuple(sorted((orb[i], orb[j]))), []).append(a[i, j])
        for labels in groups.values():
            ones = int(sum(x > 0.5 for x in labels))
            correct += max(ones, len(labels) - ones)
        total += n * (n - 1) // 2
    return correct / total if total else 1.0
