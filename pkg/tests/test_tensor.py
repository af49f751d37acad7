import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sneq.tensor import (
    EquivariantTensor,
    Permutation,
    act,
    compose,
    dump_tensor,
    load_tensor,
    random_permutation,
    random_tensor,
)


def perms(max_n=6):
    return st.integers(1, max_n).flatmap(lambda n: st.permutations(range(n)).map(Permutation))


def test_compose_examples():
    s = Permutation.from_one_based([3, 1, 2])
    assert compose(Permutation.identity(3), s) == s
    assert compose(s, s.inverse()) == Permutation.identity(3)
    got = compose(Permutation.from_one_based([2, 3, 1]), Permutation.from_one_based([2, 1, 3]))
    assert got.one_based() == (3, 2, 1)


def test_compose_size_mismatch():
    with pytest.raises(ValueError):
        compose(Permutation.identity(2), Permutation.identity(3))


def test_permutation_validation():
    with pytest.raises(ValueError):
        Permutation([0, 0, 1])
    with pytest.raises(ValueError):
        Permutation.from_one_based([0, 1])


def test_act_examples():
    f = EquivariantTensor.from_array([[1.0, 2.0], [3.0, 4.0]])
    swap = Permutation.from_one_based([2, 1])
    assert np.array_equal(act(swap, f).channel(0), [[4.0, 3.0], [2.0, 1.0]])
    g = random_tensor(4, 3, 2, 0)
    assert act(Permutation.identity(4), g) == g


def test_act_moves_entries_forward():
    # (sigma f)_{sigma(i)} = f_i
    f = EquivariantTensor.from_array([10.0, 20.0, 30.0])
    s = Permutation.from_one_based([2, 3, 1])
    assert np.array_equal(act(s, f).channel(0), [30.0, 10.0, 20.0])


def test_act_order0_unchanged():
    f = EquivariantTensor(np.array([1.5, 2.5]), 0, n=4)
    assert act(random_permutation(4, 1), f) == f


def test_act_size_mismatch():
    with pytest.raises(ValueError):
        act(Permutation.identity(3), random_tensor(4, 1, 1, 0))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_action_laws(n, order, seed):
    rng = np.random.default_rng(seed)
    s1, s2 = random_permutation(n, rng), random_permutation(n, rng)
    f = random_tensor(n, order, 2, rng)
    assert act(s2, act(s1, f)) == act(compose(s2, s1), f)
    assert act(s1.inverse(), act(s1, f)) == f
    moved = act(s1, f)
    # multisets per channel and total sums are preserved exactly
    assert np.array_equal(np.sort(moved.values.reshape(-1, 2), axis=0), np.sort(f.values.reshape(-1, 2), axis=0))
    if order >= 2:
        diag = np.einsum("ii...->i...", f.values).sum()
        assert np.einsum("ii...->i...", moved.values).sum() == pytest.approx(diag, abs=1e-12)


@given(perms())
def test_inverse_roundtrip(s):
    assert compose(s, s.inverse()) == Permutation.identity(s.n)
    assert s.inverse().inverse() == s
    assert Permutation.from_one_based(s.one_based()) == s


def test_random_permutation():
    assert random_permutation(1, 5) == Permutation.identity(1)
    assert random_permutation(7, 3) == random_permutation(7, 3)
    with pytest.raises(ValueError):
        random_permutation(0, 1)


def test_random_permutation_uniform():
    counts = {}
    rng = np.random.default_rng(0)
    for _ in range(6000):
        p = random_permutation(3, rng).one_based()
        counts[p] = counts.get(p, 0) + 1
    assert len(counts) == 6
    assert all(800 < c < 1200 for c in counts.values())


def test_random_tensor():
    t = random_tensor(4, 2, 3, 0)
    assert t.values.shape == (4, 4, 3)
    assert t.values.size == 4 * 4 * 3
    assert random_tensor(4, 2, 3, 9) == random_tensor(4, 2, 3, 9)


def test_tensor_validation():
    with pytest.raises(ValueError):
        EquivariantTensor(np.zeros((3, 4, 1)), 2)
    with pytest.raises(ValueError):
        EquivariantTensor(np.zeros((3, 3)), 2)
    with pytest.raises(ValueError):
        EquivariantTensor(np.full((3, 1), np.nan), 1)
    with pytest.raises(ValueError):
        EquivariantTensor(np.zeros((2,) * 4 + (1,)), 4)


def test_tensor_is_read_only():
    t = random_tensor(3, 1, 1, 0)
    with pytest.raises(ValueError):
        t.values[0, 0] = 1.0


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_dump_load_roundtrip(order):
    t = random_tensor(3, order, 2, 4) if order else EquivariantTensor(np.array([1.0, -2.0]), 0, n=3)
    buf = io.BytesIO()
    dump_tensor(t, buf)
    raw = buf.getvalue()
    assert raw[:4] == b"SNEQ"
    assert int.from_bytes(raw[4:8], "little") == 1
    back = load_tensor(io.BytesIO(raw))
    assert back == t and back.n == t.n


def test_load_rejects_bad_input():
    buf = io.BytesIO()
    dump_tensor(random_tensor(2, 1, 1, 0), buf)
    raw = buf.getvalue()
    with pytest.raises(ValueError):
        load_tensor(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(ValueError):
        load_tensor(io.BytesIO(raw[:-3]))
    with pytest.raises(ValueError):
        load_tensor(io.BytesIO(raw[:8]))
