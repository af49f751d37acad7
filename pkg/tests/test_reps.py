from math import factorial

import pytest
from hypothesis import given, strategies as st

from sneq.reps import (
    TWO_EQUAL_PAIRS,
    ActionSpec,
    Partition,
    TypeVector,
    Variant,
    action_type,
    character,
    character_type,
    class_size,
    integer_partitions,
    irrep_dimension,
    order3_full_type,
    param_count,
    type_dimension,
)


def P(*parts):
    return Partition(parts)


def test_partitions_examples():
    assert integer_partitions(1) == [P(1)]
    assert integer_partitions(3) == [P(3), P(2, 1), P(1, 1, 1)]
    assert len(integer_partitions(5)) == 7


def test_partitions_inverse_lex_order():
    assert integer_partitions(4) == [P(4), P(3, 1), P(2, 2), P(2, 1, 1), P(1, 1, 1, 1)]


@pytest.mark.parametrize("n", [0, -1, 13])
def test_partitions_out_of_range(n):
    with pytest.raises(ValueError):
        integer_partitions(n)


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition((1, 2))
    with pytest.raises(ValueError):
        Partition((2, 0))
    assert str(P(2, 1)) == "(2,1)"
    assert P(3, 1).conjugate() == P(2, 1, 1)


def _count_standard_tableaux(lam):
    # brute force: remove a corner cell recursively
    parts = list(lam.parts)
    if sum(parts) <= 1:
        return 1
    total = 0
    for r, row in enumerate(parts):
        if row and (r + 1 == len(parts) or parts[r + 1] < row):
            smaller = parts.copy()
            smaller[r] -= 1
            total += _count_standard_tableaux(Partition(tuple(x for x in smaller if x)))
    return total


def test_irrep_dimension_examples():
    assert irrep_dimension(P(5)) == 1
    assert irrep_dimension(P(2, 1)) == 2
    assert irrep_dimension(P(3, 2)) == 5


@pytest.mark.parametrize("n", range(1, 9))
def test_hook_length_matches_tableau_count(n):
    for lam in integer_partitions(n):
        assert irrep_dimension(lam) == _count_standard_tableaux(lam)


@pytest.mark.parametrize("n", range(1, 9))
def test_sum_of_squared_dimensions(n):
    assert sum(irrep_dimension(lam) ** 2 for lam in integer_partitions(n)) == factorial(n)


def test_action_type_examples():
    assert action_type(ActionSpec(5, Variant.ORDER1)).multiplicities == (1, 1)
    assert action_type(ActionSpec(5, Variant.ORDER2_FULL)).multiplicities == (2, 3, 1, 1)
    assert action_type(ActionSpec(7, Variant.ORDER3_DISTINCT)).multiplicities == (1, 3, 3, 3, 1, 2, 1)
    assert action_type(ActionSpec(6, Variant.ORDER2_ZERO_DIAG)).multiplicities == (1, 2, 1, 1)
    assert action_type(ActionSpec(6, Variant.ORDER3_ALL_EQUAL)).multiplicities == (1, 1)
    for pair in TWO_EQUAL_PAIRS:
        assert action_type(ActionSpec(6, Variant.ORDER3_TWO_EQUAL, pair)).multiplicities == (1, 2, 1, 1)


def test_symmetric_zero_diag_type():
    # unordered pairs: dimension n(n-1)/2 forces (1,1,1)
    for n in range(4, 9):
        t = action_type(ActionSpec(n, Variant.ORDER2_SYMMETRIC_ZERO_DIAG))
        assert t.multiplicities == (1, 1, 1)
        assert type_dimension(t) == n * (n - 1) // 2


def test_order3_full_type_sums_strata():
    assert order3_full_type(6).multiplicities == (5, 10, 6, 6, 1, 2, 1)
    t = order3_full_type(6)
    assert param_count(t, t) == 203
    assert action_type(ActionSpec(6, Variant.ORDER3_FULL)) == t


@pytest.mark.parametrize("n", range(1, 9))
def test_character_table_orthogonality(n):
    parts = integer_partitions(n)
    for a in parts:
        for b in parts:
            inner = sum(class_size(mu) * character(a, mu) * character(b, mu) for mu in parts)
            assert inner == (factorial(n) if a == b else 0)
        assert character(a, parts[-1]) == irrep_dimension(a)


def test_character_examples():
    assert character(P(2, 1), P(1, 1, 1)) == 2
    assert character(P(2, 1), P(3)) == -1
    assert character(P(1, 1, 1), P(2, 1)) == -1


@pytest.mark.parametrize("n", range(6, 9))
def test_closed_form_matches_characters_in_stable_range(n):
    for v in Variant:
        if v is Variant.ORDER3_FULL:
            continue
        pairs = TWO_EQUAL_PAIRS if v is Variant.ORDER3_TWO_EQUAL else [(0, 1)]
        for pair in pairs:
            spec = ActionSpec(n, v, pair)
            assert character_type(spec) == action_type(spec)


def test_small_n_types_from_characters():
    t = action_type(ActionSpec(2, Variant.ORDER2_FULL))
    assert param_count(t, t) == 8
    t = action_type(ActionSpec(3, Variant.ORDER2_FULL))
    assert param_count(t, t) == 14
    t = action_type(ActionSpec(4, Variant.ORDER3_FULL))
    assert param_count(t, t) == 187


def test_param_count_examples():
    t1 = TypeVector(6, (1, 1))
    t2 = TypeVector(6, (2, 3, 1, 1))
    assert param_count(t1, t1) == 2
    assert param_count(t2, t2) == 15
    assert param_count(t2, t1) == 5
    with pytest.raises(ValueError):
        param_count(TypeVector(5, (1, 1)), t1)


def test_type_dimension_examples():
    assert type_dimension(TypeVector(6, (1, 1))) == 6
    assert type_dimension(TypeVector(5, (2, 3, 1, 1))) == 25
    assert type_dimension(TypeVector(6, (1, 3, 3, 3, 1, 2, 1))) == 120


def test_type_vector_validation():
    assert TypeVector(4, (1, 1, 0, 0)).multiplicities == (1, 1)
    with pytest.raises(ValueError):
        TypeVector(3, (1, 1, 1, 1))
    with pytest.raises(ValueError):
        TypeVector(3, (-1,))
    with pytest.raises(ValueError):
        TypeVector(3, (1,)) + TypeVector(4, (1,))


def test_action_spec_validation():
    with pytest.raises(ValueError):
        ActionSpec(1, Variant.ORDER2_FULL)
    with pytest.raises(ValueError):
        ActionSpec(5, Variant.ORDER3_TWO_EQUAL, (1, 0))
    assert len(ActionSpec(4, Variant.ORDER2_SYMMETRIC_ZERO_DIAG).points()) == 6


@given(st.lists(st.integers(0, 4), min_size=1, max_size=7), st.lists(st.integers(0, 4), min_size=1, max_size=7))
def test_param_count_symmetric(a, b):
    ta, tb = TypeVector(8, a), TypeVector(8, b)
    assert param_count(ta, tb) == param_count(tb, ta)
    assert param_count(ta, ta) == sum(x * x for x in a)


@pytest.mark.parametrize("n", range(4, 9))
def test_dimension_consistency(n):
    want = {
        Variant.ORDER1: n,
        Variant.ORDER2_FULL: n * n,
        Variant.ORDER2_ZERO_DIAG: n * n - n,
        Variant.ORDER3_DISTINCT: n * (n - 1) * (n - 2),
        Variant.ORDER3_FULL: n**3,
    }
    for v, dim in want.items():
        assert type_dimension(action_type(ActionSpec(n, v))) == dim
