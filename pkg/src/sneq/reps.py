"""Integer partitions, irrep dimensions and type vectors of permutation actions.

Irreps of S_n are indexed by partitions of n.  Partitions are listed in
inverse lexicographic order, (n) < (n-1,1) < (n-2,2) < (n-2,1,1) < ...,
and that order is the canonical index of every :class:`TypeVector`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from collections import Counter
from functools import lru_cache
from math import factorial
from typing import Iterator

MAX_PARTITION_N = 12


@dataclass(frozen=True, order=False)
class Partition:
    parts: tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if not parts or any(p < 1 for p in parts):
            raise ValueError(f"partition parts must be positive: {self.parts!r}")
        if any(a < b for a, b in zip(parts, parts[1:])):
            raise ValueError(f"partition parts must be non-increasing: {self.parts!r}")
        object.__setattr__(self, "parts", parts)

    @property
    def n(self) -> int:
        return sum(self.parts)

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __str__(self):
        return "(" + ",".join(map(str, self.parts)) + ")"

    def conjugate(self) -> Partition:
        return Partition(tuple(sum(1 for p in self.parts if p > c) for c in range(self.parts[0])))


def _partitions_desc(n: int, max_part: int) -> Iterator[tuple[int, ...]]:
    # Largest first part first: yields reverse lexicographic order.
    if n == 0:
        yield ()
        return
    for first in range(min(n, max_part), 0, -1):
        for rest in _partitions_desc(n - first, first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _partition_table(n: int) -> tuple[Partition, ...]:
    return tuple(Partition(p) for p in _partitions_desc(n, n))


def integer_partitions(n: int) -> list[Partition]:
    """All partitions of ``n`` in inverse lexicographic order."""
    if not isinstance(n, int) or not 1 <= n <= MAX_PARTITION_N:
        raise ValueError(f"n must be an integer in [1, {MAX_PARTITION_N}], got {n!r}")
    return list(_partition_table(n))


def irrep_dimension(lam: Partition) -> int:
    """Dimension of the irrep indexed by ``lam`` via the hook length formula."""
    conj = lam.conjugate().parts
    hooks = 1
    for r, row in enumerate(lam.parts):
        for c in range(row):
            hooks *= (row - c - 1) + (conj[c] - r - 1) + 1
    return factorial(lam.n) // hooks


@dataclass(frozen=True)
class TypeVector:
    """Irrep multiplicities of an action, aligned with ``integer_partitions(n)``.

    Trailing zero multiplicities may be omitted.
    """

    n: int
    multiplicities: tuple[int, ...]

    def __post_init__(self):
        mult = tuple(int(m) for m in self.multiplicities)
        parts = integer_partitions(self.n)
        if len(mult) > len(parts):
            raise ValueError(f"type vector of length {len(mult)} exceeds p({self.n}) = {len(parts)}")
        if any(m < 0 for m in mult):
            raise ValueError("multiplicities must be non-negative")
        while mult and mult[-1] == 0:
            mult = mult[:-1]
        object.__setattr__(self, "multiplicities", mult)

    @property
    def entries(self) -> list[tuple[Partition, int]]:
        return list(zip(integer_partitions(self.n), self.multiplicities))

    def padded(self, length: int) -> tuple[int, ...]:
        return self.multiplicities + (0,) * (length - len(self.multiplicities))

    def __add__(self, other: TypeVector) -> TypeVector:
        if self.n != other.n:
            raise ValueError(f"cannot add type vectors over n={self.n} and n={other.n}")
        k = max(len(self.multiplicities), len(other.multiplicities))
        return TypeVector(self.n, tuple(a + b for a, b in zip(self.padded(k), other.padded(k))))

    def __str__(self):
        return "(" + ",".join(map(str, self.multiplicities)) + ")"


class Variant(enum.Enum):
    ORDER1 = "order1"
    ORDER2_ZERO_DIAG = "order2_zero_diag"
    ORDER2_SYMMETRIC_ZERO_DIAG = "order2_symmetric_zero_diag"
    ORDER2_FULL = "order2_full"
    ORDER3_FULL = "order3_full"
    ORDER3_DISTINCT = "order3_distinct"
    ORDER3_TWO_EQUAL = "order3_two_equal"
    ORDER3_ALL_EQUAL = "order3_all_equal"


_VARIANT_ORDER = {
    Variant.ORDER1: 1,
    Variant.ORDER2_ZERO_DIAG: 2,
    Variant.ORDER2_SYMMETRIC_ZERO_DIAG: 2,
    Variant.ORDER2_FULL: 2,
    Variant.ORDER3_FULL: 3,
    Variant.ORDER3_DISTINCT: 3,
    Variant.ORDER3_TWO_EQUAL: 3,
    Variant.ORDER3_ALL_EQUAL: 3,
}

TWO_EQUAL_PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class ActionSpec:
    """Which permutation action of S_n a tensor (or a stratum of one) carries.

    ``pair`` names the two equal index positions (0-based) for the
    ``ORDER3_TWO_EQUAL`` stratum and is ignored otherwise.
    """

    n: int
    variant: Variant
    pair: tuple[int, int] = (0, 1)

    def __post_init__(self):
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "pair", tuple(self.pair))
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.order == 2 and self.n < 2:
            raise ValueError("order-2 actions need n >= 2")
        if self.order == 3 and self.n < 3:
            raise ValueError("order-3 actions need n >= 3")
        if variant is Variant.ORDER3_TWO_EQUAL and self.pair not in TWO_EQUAL_PAIRS:
            raise ValueError(f"pair must be one of {TWO_EQUAL_PAIRS}")

    @property
    def order(self) -> int:
        return _VARIANT_ORDER[self.variant]

    def points(self) -> list[tuple[int, ...]]:
        """Index tuples (0-based) spanning the space this action permutes.

        For the symmetric variant each point (i, j), i < j, stands for the
        basis vector e_ij + e_ji.
        """
        n, v = self.n, self.variant
        rng = range(n)
        if v is Variant.ORDER1:
            return [(i,) for i in rng]
        if v is Variant.ORDER2_FULL:
            return [(i, j) for i in rng for j in rng]
        if v is Variant.ORDER2_ZERO_DIAG:
            return [(i, j) for i in rng for j in rng if i != j]
        if v is Variant.ORDER2_SYMMETRIC_ZERO_DIAG:
            return [(i, j) for i in rng for j in rng if i < j]
        triples = [(i, j, k) for i in rng for j in rng for k in rng]
        if v is Variant.ORDER3_FULL:
            return triples
        if v is Variant.ORDER3_DISTINCT:
            return [t for t in triples if len(set(t)) == 3]
        if v is Variant.ORDER3_ALL_EQUAL:
            return [t for t in triples if len(set(t)) == 1]
        a, b = self.pair
        return [t for t in triples if len(set(t)) == 2 and t[a] == t[b]]

    def canonical_point(self, point: tuple[int, ...]) -> tuple[int, ...]:
        if self.variant is Variant.ORDER2_SYMMETRIC_ZERO_DIAG:
            return tuple(sorted(point))
        return tuple(point)


# Closed-form multiplicities over the leading partitions
# (n), (n-1,1), (n-2,2), (n-2,1,1), (n-3,3), (n-3,2,1), (n-3,1,1,1).
_TYPE_TABLE = {
    Variant.ORDER1: (1, 1),
    Variant.ORDER2_ZERO_DIAG: (1, 2, 1, 1),
    # unordered pairs {i, j}: (n) + (n-1,1) + (n-2,2), dimension n(n-1)/2
    Variant.ORDER2_SYMMETRIC_ZERO_DIAG: (1, 1, 1),
    Variant.ORDER2_FULL: (2, 3, 1, 1),
    Variant.ORDER3_DISTINCT: (1, 3, 3, 3, 1, 2, 1),
    Variant.ORDER3_TWO_EQUAL: (1, 2, 1, 1),
    Variant.ORDER3_ALL_EQUAL: (1, 1),
}


def action_type(spec: ActionSpec) -> TypeVector:
    """Irrep multiplicities of the permutation representation carried by ``spec``.

    In the stable regime n >= 2 * order the closed-form table applies;
    otherwise (and for ``ORDER3_FULL``) the multiplicities come from the
    character inner product with the action's fixed-point counts.
    """
    if spec.variant in _TYPE_TABLE and spec.n >= 2 * spec.order:
        return TypeVector(spec.n, _TYPE_TABLE[spec.variant])
    return character_type(spec)


def order3_full_type(n: int) -> TypeVector:
    """Sum of the five order-3 stratum types (one distinct, three two-equal, one all-equal)."""
    strata = [ActionSpec(n, Variant.ORDER3_DISTINCT), ActionSpec(n, Variant.ORDER3_ALL_EQUAL)]
    strata += [ActionSpec(n, Variant.ORDER3_TWO_EQUAL, p) for p in TWO_EQUAL_PAIRS]
    total = TypeVector(n, ())
    for s in strata:
        total = total + action_type(s)
    return total


# ---------------------------------------------------------------------------
# characters


def class_size(mu: Partition) -> int:
    """Number of permutations with cycle type ``mu``."""
    denom = 1
    for k, m in Counter(mu.parts).items():
        denom *= factorial(m) * k**m
    return factorial(mu.n) // denom


def cycle_representative(mu: Partition) -> tuple[int, ...]:
    """A 0-based permutation (one-line) with cycle type ``mu``."""
    out, start = [], 0
    for length in mu.parts:
        out.extend(start + (i + 1) % length for i in range(length))
        start += length
    return tuple(out)


@lru_cache(maxsize=None)
def _mn(beta: frozenset, cycles: tuple[int, ...]) -> int:
    # Murnaghan-Nakayama on beta-sets: removing a rim hook of length r moves a bead b -> b - r
    if not cycles:
        return 1
    r, rest = cycles[0], cycles[1:]
    total = 0
    for b in beta:
        if b - r >= 0 and b - r not in beta:
            height = sum(1 for c in beta if b - r < c < b)
            total += (-1) ** height * _mn((beta - {b}) | {b - r}, rest)
    return total


def character(lam: Partition, mu: Partition) -> int:
    """Value of the irreducible character chi_lam on the class of cycle type ``mu``."""
    if lam.n != mu.n:
        raise ValueError(f"partitions of different n: {lam} and {mu}")
    k = len(lam.parts)
    beta = frozenset(p + k - 1 - i for i, p in enumerate(lam.parts))
    return _mn(beta, mu.parts)


def fixed_points(spec: ActionSpec, sigma: tuple[int, ...]) -> int:
    """Character of the permutation representation of ``spec`` at ``sigma``."""
    return sum(1 for pt in spec.points() if spec.canonical_point(tuple(sigma[i] for i in pt)) == pt)


def character_type(spec: ActionSpec) -> TypeVector:
    """Multiplicities <chi_perm, chi_lam> computed class by class."""
    parts = integer_partitions(spec.n)
    perm = {mu: fixed_points(spec, cycle_representative(mu)) for mu in parts}
    order = factorial(spec.n)
    mult = []
    for lam in parts:
        acc = sum(class_size(mu) * perm[mu] * character(lam, mu) for mu in parts)
        if acc % order:
            raise ArithmeticError(f"non-integral multiplicity for {lam}")
        mult.append(acc // order)
    return TypeVector(spec.n, tuple(mult))


def param_count(tau: TypeVector, tau_out: TypeVector) -> int:
    """Number of learnable parameters of an equivariant linear map, sum_i tau_i * tau'_i."""
    if tau.n != tau_out.n:
        raise ValueError(f"type vectors over different n: {tau.n} vs {tau_out.n}")
    return sum(a * b for a, b in zip(tau.multiplicities, tau_out.multiplicities))


def type_dimension(tau: TypeVector, n: int | None = None) -> int:
    """Total dimension sum_i tau_i * d_lambda_i of the represented space."""
    if n is not None and n != tau.n:
        raise ValueError(f"type vector is over n={tau.n}, not {n}")
    return sum(m * irrep_dimension(lam) for lam, m in tau.entries)
