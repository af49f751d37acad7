"""Brute-force checks that the layer bases span exactly the equivariant maps.

Two independent counts of dim Hom_{S_n}(in, out):

* orbit counting: equivariant maps between tuple actions are constant on the
  S_n orbits of (output tuple, input tuple) pairs, i.e. on equality patterns,
  so the dimension is the number of set partitions of ``k_in + k_out``
  elements with at most ``n`` blocks;
* a nullspace computation on the linear constraints ``P_out M = M P_in`` for
  a generating set of S_n, solved by sparse Gaussian elimination.
"""

from __future__ import annotations

import itertools
import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from sneq.layers import LayerWeights, basis_terms, linear_forward, materialize_term
from sneq.reps import ActionSpec, Variant
from sneq.tensor import Permutation, act_array, random_permutation

MAX_UNKNOWNS = 20000
RANK_RTOL = 1e-9
RESIDUAL_TOL = 1e-9
EXACT_MAX_N = 4


class ProblemTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class CommutantProblem:
    spec_in: ActionSpec
    spec_out: ActionSpec

    def __post_init__(self):
        if self.spec_in.n != self.spec_out.n:
            raise ValueError("input and output actions must share n")

    @property
    def n(self) -> int:
        return self.spec_in.n

    @property
    def unknowns(self) -> int:
        return len(self.spec_in.points()) * len(self.spec_out.points())


def _restricted_growth_strings(m: int) -> Iterable[tuple[int, ...]]:
    """Set partitions of m labelled elements as restricted growth strings."""
    if m == 0:
        yield ()
        return
    a = [0] * m
    while True:
        yield tuple(a)
        # increment: find rightmost position that can grow
        i = m - 1
        while i > 0 and a[i] > max(a[:i]):
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, m):
            a[j] = 0


def commutant_dim_orbit(k_in: int, k_out: int, n: int, zero_diag: bool = False) -> int:
    """Number of set partitions of k_in + k_out elements with at most n blocks.

    With ``zero_diag`` both tuples range over distinct indices only, so no
    two output elements and no two input elements may share a block.
    """
    if not (0 <= k_in <= 3 and 0 <= k_out <= 3) or k_in + k_out > 6:
        raise ValueError(f"orders out of range: ({k_in}, {k_out})")
    if n < 1:
        raise ValueError("n must be positive")
    count = 0
    for rgs in _restricted_growth_strings(k_in + k_out):
        if max(rgs, default=-1) + 1 > n:
            continue
        if zero_diag and (len(set(rgs[:k_out])) < k_out or len(set(rgs[k_out:])) < k_in):
            continue
        count += 1
    return count


def action_permutation(spec: ActionSpec, sigma: Permutation) -> np.ndarray:
    """Index map of sigma on ``spec.points()``: point p goes to ``perm[p]``."""
    pts = spec.points()
    where = {p: idx for idx, p in enumerate(pts)}
    return np.array(
        [where[spec.canonical_point(tuple(sigma(x) for x in p))] for p in pts], dtype=np.int64
    )


def action_matrix(spec: ActionSpec, sigma: Permutation) -> sparse.csr_matrix:
    """Matrix P with (P v)[sigma.p] = v[p]."""
    perm = action_permutation(spec, sigma)
    d = perm.size
    return sparse.csr_matrix((np.ones(d), (perm, np.arange(d))), shape=(d, d))


def generators(n: int) -> list[Permutation]:
    """The transposition (1 2) and the n-cycle (1 2 ... n)."""
    if n == 1:
        return [Permutation.identity(1)]
    return [Permutation.transposition(n, 0, 1), Permutation.cycle(n)]


def constraint_matrix(problem: CommutantProblem, elements: Sequence[Permutation]) -> sparse.csr_matrix:
    """Stacked ``kron(P_out, I) - kron(I, P_in^T)`` acting on row-major vec(M)."""
    d_in = len(problem.spec_in.points())
    d_out = len(problem.spec_out.points())
    blocks = []
    for g in elements:
        p_out = action_matrix(problem.spec_out, g)
        p_in = action_matrix(problem.spec_in, g)
        blocks.append(sparse.kron(p_out, sparse.identity(d_in)) - sparse.kron(sparse.identity(d_out), p_in.T))
    return sparse.vstack(blocks).tocsr()


def sparse_rank(rows: Iterable[dict], exact: bool = False, rtol: float = RANK_RTOL) -> int:
    """Rank of a sparse row set by online Gaussian elimination.

    Pivots are eliminated in creation order, so every reduction terminates.
    In float mode an entry counts as zero when ``|v| <= rtol * largest pivot``;
    in exact mode values are Fractions and only exact zeros vanish.
    """
    pivots: dict[int, tuple[int, dict]] = {}
    scale = 0.0
    for raw in rows:
        row = {c: (Fraction(v) if exact else float(v)) for c, v in raw.items() if v != 0}
        heap = [(pivots[c][0], c) for c in row if c in pivots]
        heapq.heapify(heap)
        while heap:
            _, c = heapq.heappop(heap)
            v = row.get(c)
            if v is None or v == 0:
                continue
            _, prow = pivots[c]
            for cc, pv in prow.items():
                nv = row.get(cc, 0) - v * pv
                if cc == c:
                    row.pop(c, None)
                    continue
                row[cc] = nv
                if cc in pivots and cc != c:
                    heapq.heappush(heap, (pivots[cc][0], cc))
        if exact:
            row = {c: v for c, v in row.items() if v != 0}
        else:
            cut = rtol * max(scale, 1e-300)
            row = {c: v for c, v in row.items() if abs(v) > cut}
        if not row:
            continue
        c_piv = max(row, key=lambda c: (abs(row[c]), -c))
        v_piv = row[c_piv]
        if not exact:
            scale = max(scale, abs(v_piv))
        pivots[c_piv] = (len(pivots), {c: v / v_piv for c, v in row.items()})
    return len(pivots)


def _csr_rows(mat: sparse.csr_matrix) -> Iterable[dict]:
    for r in range(mat.shape[0]):
        lo, hi = mat.indptr[r], mat.indptr[r + 1]
        if lo != hi:
            yield dict(zip(mat.indices[lo:hi].tolist(), mat.data[lo:hi].tolist()))


def commutant_dim_nullspace(
    problem: CommutantProblem, exact: bool = False, extra_elements: Sequence[Permutation] = ()
) -> int:
    """dim{M : P_out(g) M = M P_in(g) for g in generators (+ extra_elements)}."""
    if problem.unknowns > MAX_UNKNOWNS:
        raise ProblemTooLarge(f"{problem.unknowns} unknowns exceeds the limit of {MAX_UNKNOWNS}")
    cons = constraint_matrix(problem, generators(problem.n) + list(extra_elements))
    cons.eliminate_zeros()
    if exact:
        rows = ({c: int(round(v)) for c, v in r.items()} for r in _csr_rows(cons))
    else:
        rows = _csr_rows(cons)
    return problem.unknowns - sparse_rank(rows, exact=exact)


# ---------------------------------------------------------------------------
# basis verification


LAYER_KINDS = {
    "1->1": (1, 1, True),
    "2->2 zero-diag": (2, 2, False),
    "2->2 full": (2, 2, True),
    "2->1": (2, 1, True),
    "3->3 zero-diag": (3, 3, False),
    "3->3 full": (3, 3, True),
}


def layer_action_spec(order: int, full_diagonal: bool, n: int) -> ActionSpec:
    if order == 1:
        return ActionSpec(n, Variant.ORDER1)
    if order == 2:
        return ActionSpec(n, Variant.ORDER2_FULL if full_diagonal else Variant.ORDER2_ZERO_DIAG)
    return ActionSpec(n, Variant.ORDER3_FULL if full_diagonal else Variant.ORDER3_DISTINCT)


def _flat_index(points: list[tuple[int, ...]], n: int) -> np.ndarray:
    return np.array([np.ravel_multi_index(p, (n,) * len(p)) for p in points], dtype=np.int64)


@dataclass(frozen=True)
class Verdict:
    kind: str  # "exact" | "deficient" | "excess"
    rank: int
    dim: int
    n_terms: int
    residual: float
    exact_rank: int | None = None

    @property
    def ok(self) -> bool:
        return self.kind == "exact"

    def __str__(self):
        return self.kind if self.ok else f"{self.kind}({self.rank})"


def exact_rank_int(mat: np.ndarray) -> int:
    """Exact rank of an integer matrix via Fraction elimination on its Gram matrix."""
    a = np.asarray(mat, dtype=np.int64)
    gram = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    rows = ({j: int(v) for j, v in enumerate(r) if v} for r in gram)
    return sparse_rank(rows, exact=True)


def basis_spans_commutant(
    order_in: int, order_out: int, n: int, full_diagonal: bool = True, check_exact: bool | None = None
) -> Verdict:
    """Compare the materialized basis of a layer kind with the commutant dimension.

    ``exact`` iff the terms are linearly independent, their span has the
    commutant's dimension, and each term commutes with the action.  When the
    nullspace problem is too large, full-diagonal layers fall back to the
    orbit count for the dimension.
    """
    spec_in = layer_action_spec(order_in, full_diagonal, n)
    spec_out = layer_action_spec(order_out, full_diagonal, n)
    problem = CommutantProblem(spec_in, spec_out)
    if problem.unknowns > MAX_UNKNOWNS and full_diagonal:
        dim = commutant_dim_orbit(order_in, order_out, n)
    else:
        dim = commutant_dim_nullspace(problem)

    pts_in, pts_out = spec_in.points(), spec_out.points()
    rows_idx, cols_idx = _flat_index(pts_out, n), _flat_index(pts_in, n)
    terms = basis_terms(order_in, order_out, full_diagonal)
    mats = [materialize_term(t, n)[np.ix_(rows_idx, cols_idx)] for t in terms]

    residual = 0.0
    for g in generators(n):
        p_out = action_matrix(spec_out, g)
        p_in = action_matrix(spec_in, g)
        for m in mats:
            residual = max(residual, float(np.abs(p_out @ m - (p_in.T @ m.T).T).max(initial=0.0)))

    stack = np.stack([m.ravel() for m in mats])
    sv = np.linalg.svd(stack, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0

    if check_exact is None:
        check_exact = n <= EXACT_MAX_N
    exact = None
    if check_exact:
        exact = exact_rank_int(np.rint(stack))
        if exact != rank:
            raise ArithmeticError(f"float rank {rank} disagrees with exact rank {exact}")

    if residual >= RESIDUAL_TOL or rank > dim:
        kind = "excess"
    elif rank == dim == len(terms):
        kind = "exact"
    else:
        kind = "deficient"
    return Verdict(kind, rank, dim, len(terms), residual, exact)


def random_elements(n: int, count: int, seed) -> list[Permutation]:
    rng = np.random.default_rng(seed)
    return [random_permutation(n, rng) for _ in range(count)]


def verify_grid(kinds: Iterable[str], ns: Iterable[int]) -> list[tuple[str, int, Verdict | None, int]]:
    """(kind, n, verdict, orbit dimension) for each pair with n >= the layer order.

    The verdict is None when no dimension oracle is feasible.
    """
    out = []
    for kind, n in itertools.product(kinds, ns):
        k_in, k_out, full = LAYER_KINDS[kind]
        if n < max(k_in, k_out):
            continue
        problem = CommutantProblem(layer_action_spec(k_in, full, n), layer_action_spec(k_out, full, n))
        orbit = commutant_dim_orbit(k_in, k_out, n, zero_diag=not full)
        if problem.unknowns > MAX_UNKNOWNS and not full:
            out.append((kind, n, None, orbit))
            continue
        out.append((kind, n, basis_spans_commutant(k_in, k_out, n, full), orbit))
    return out


# ---------------------------------------------------------------------------
# randomized equivariance trials


def equivariance_error(kind: str, n: int, trials: int, seed, channels: int = 2, normalize: bool = False) -> float:
    """Largest |act(s, L(f)) - L(act(s, f))| over random permutations, inputs and weights."""
    k_in, k_out, full = LAYER_KINDS[kind]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        lw = LayerWeights.glorot(k_in, k_out, full, channels, channels, rng)
        lw = lw.replace(bias=rng.standard_normal(lw.bias.shape))
        sigma = random_permutation(n, rng)
        f = rng.standard_normal((n,) * k_in + (channels,))
        lhs = act_array(sigma, linear_forward(lw, f, normalize), k_out)
        rhs = linear_forward(lw, act_array(sigma, f, k_in), normalize)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst
