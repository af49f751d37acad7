from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sneq.oracle import (
    LAYER_KINDS,
    CommutantProblem,
    ProblemTooLarge,
    action_matrix,
    basis_spans_commutant,
    commutant_dim_nullspace,
    commutant_dim_orbit,
    equivariance_error,
    exact_rank_int,
    layer_action_spec,
    random_elements,
    sparse_rank,
    verify_grid,
)
from sneq.reps import ActionSpec, Variant, action_type, param_count
from sneq.tensor import act_array, random_permutation


def problem(variant_in, variant_out, n):
    return CommutantProblem(ActionSpec(n, variant_in), ActionSpec(n, variant_out))


def test_orbit_examples():
    assert commutant_dim_orbit(1, 1, 2) == 2
    assert commutant_dim_orbit(2, 2, 4) == 15
    assert commutant_dim_orbit(3, 3, 6) == 203
    assert commutant_dim_orbit(2, 2, 2) == 8
    assert commutant_dim_orbit(2, 2, 3) == 14
    assert commutant_dim_orbit(2, 2, 6, zero_diag=True) == 7
    assert commutant_dim_orbit(3, 3, 6, zero_diag=True) == 34


def test_orbit_errors():
    with pytest.raises(ValueError):
        commutant_dim_orbit(4, 1, 5)
    with pytest.raises(ValueError):
        commutant_dim_orbit(1, 1, 0)


def test_nullspace_examples():
    assert commutant_dim_nullspace(problem(Variant.ORDER1, Variant.ORDER1, 3)) == 2
    assert commutant_dim_nullspace(problem(Variant.ORDER2_FULL, Variant.ORDER2_FULL, 5)) == 15
    assert commutant_dim_nullspace(problem(Variant.ORDER2_FULL, Variant.ORDER2_FULL, 3)) == 14
    assert commutant_dim_orbit(2, 2, 3) == 14


def test_nullspace_exact_mode_agrees():
    for n in (2, 3, 4):
        p = problem(Variant.ORDER2_FULL, Variant.ORDER2_FULL, n)
        assert commutant_dim_nullspace(p, exact=True) == commutant_dim_nullspace(p)


def test_generators_suffice():
    # adding more group elements never shrinks the commutant further
    p = problem(Variant.ORDER2_FULL, Variant.ORDER2_FULL, 4)
    assert commutant_dim_nullspace(p, extra_elements=random_elements(4, 5, 0)) == 15


def test_nullspace_matches_type_vectors():
    # Schur: dim Hom = sum tau_i tau'_i
    for n in range(2, 7):
        for v_in, v_out in [(Variant.ORDER1, Variant.ORDER1), (Variant.ORDER2_FULL, Variant.ORDER1),
                            (Variant.ORDER2_ZERO_DIAG, Variant.ORDER2_ZERO_DIAG),
                            (Variant.ORDER2_SYMMETRIC_ZERO_DIAG, Variant.ORDER2_SYMMETRIC_ZERO_DIAG)]:
            p = problem(v_in, v_out, n)
            want = param_count(action_type(p.spec_in), action_type(p.spec_out))
            assert commutant_dim_nullspace(p) == want, (n, v_in, v_out)


def test_problem_too_large():
    with pytest.raises(ProblemTooLarge):
        commutant_dim_nullspace(problem(Variant.ORDER3_FULL, Variant.ORDER3_FULL, 6))


def test_problem_needs_same_n():
    with pytest.raises(ValueError):
        CommutantProblem(ActionSpec(3, Variant.ORDER1), ActionSpec(4, Variant.ORDER1))


def test_action_matrix_is_the_tensor_action():
    n = 4
    s = random_permutation(n, 2)
    spec = ActionSpec(n, Variant.ORDER2_FULL)
    f = np.random.default_rng(0).standard_normal((n, n))
    moved = act_array(s, f[..., None], 2)[..., 0]
    assert np.allclose(action_matrix(spec, s) @ f.ravel(), moved.ravel())


def test_sparse_rank():
    rows = [{0: 1.0, 1: 2.0}, {0: 2.0, 1: 4.0}, {2: 1.0}]
    assert sparse_rank(rows) == 2
    assert sparse_rank([{0: Fraction(1, 3), 1: Fraction(1, 7)}, {0: 7, 1: 3}], exact=True) == 1
    assert sparse_rank([]) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_sparse_rank_matches_dense(r, c, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(-2, 3, size=(r, c)) * (rng.random((r, c)) < 0.6)
    # duplicate a combination of rows to force dependencies
    a = np.vstack([a, a[:1] - 2 * a[-1:]])
    rows = [{j: float(v) for j, v in enumerate(row) if v} for row in a]
    want = np.linalg.matrix_rank(a)
    assert sparse_rank(rows) == want
    assert sparse_rank(rows, exact=True) == want
    assert exact_rank_int(a) == want


def test_basis_spans_examples():
    v = basis_spans_commutant(1, 1, 4)
    assert v.kind == "exact" and v.rank == 2
    v = basis_spans_commutant(2, 2, 5)
    assert v.kind == "exact" and v.rank == 15
    v = basis_spans_commutant(2, 2, 2)
    assert v.kind == "deficient" and v.dim == 8 and v.rank == 8 and v.n_terms == 15
    assert str(v) == "deficient(8)"


def test_exact_cross_check_runs_for_small_n():
    assert basis_spans_commutant(2, 2, 3).exact_rank == 14
    assert basis_spans_commutant(2, 2, 5).exact_rank is None


def test_layer_action_spec():
    assert layer_action_spec(2, False, 4).variant is Variant.ORDER2_ZERO_DIAG
    assert layer_action_spec(3, True, 4).variant is Variant.ORDER3_FULL


def test_oracles_agree_on_small_grid():
    for kind, n, verdict, orbit in verify_grid(LAYER_KINDS, range(1, 5)):
        assert verdict is not None
        assert verdict.dim == orbit, (kind, n)
        assert verdict.kind != "excess"
        k_in, k_out, _ = LAYER_KINDS[kind]
        if n >= 2 * max(k_in, k_out):
            assert verdict.ok, (kind, n)


def test_equivariance_error_small():
    for kind in LAYER_KINDS:
        assert equivariance_error(kind, 4, 5, 0) < 1e-10
