import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisy_synth.data import DataSet, SystemPair, partition, read_trajectory_csv, simulate, stack, write_trajectory_csv
from noisy_synth.noise import block_diagonal, from_energy_bound
from noisy_synth.sigma import build_n, membership


def test_simulate_zero_system():
    sys = SystemPair(np.zeros((2, 2)), np.zeros((2, 1)))
    d = simulate(sys, [1.0, -2.0], np.ones((1, 4)), np.zeros((2, 4)))
    assert np.array_equal(d.x[:, 0], [1.0, -2.0])
    assert not d.x[:, 1:].any()


def test_simulate_scalar_example():
    d = simulate(SystemPair([[1.0]], [[1.0]]), [0.0], [[-0.5, 0.5, -1.5]], [[0.5, 0.5, 0.5]])
    assert np.array_equal(d.x, [[0, 0, 1, 0]])
    xp, xm, um = partition(d)
    assert np.array_equal(xm, [[0, 0, 1]]) and np.array_equal(xp, [[0, 1, 0]])
    assert np.array_equal(um, [[-0.5, 0.5, -1.5]])


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 25), st.integers(0, 2 ** 31))
def test_data_equation_holds(n, m, T, seed):
    rng = np.random.default_rng(seed)
    sys = SystemPair(rng.standard_normal((n, n)) * 0.5, rng.standard_normal((n, m)))
    d = simulate(sys, rng.standard_normal(n), rng.standard_normal((m, T)), rng.standard_normal((n, T)))
    xp, xm, um = partition(d)
    resid = xp - (sys.a @ xm + sys.b @ um + d.w_true)
    assert np.max(np.abs(resid)) <= 1e-12 * max(1.0, np.max(np.abs(d.x)))


def test_dimension_errors():
    sys = SystemPair(np.eye(2), np.ones((2, 1)))
    with pytest.raises(ValueError):
        simulate(sys, [0.0, 0.0], np.ones((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        SystemPair(np.eye(2), np.ones((3, 1)))
    with pytest.raises(ValueError):
        DataSet(np.zeros((1, 1)), np.zeros((1, 0)))
    with pytest.raises(ValueError):
        DataSet(np.zeros((1, 3)), np.zeros((1, 3)))


def test_partition_single_step_and_prefix():
    d = DataSet(np.array([[1.0, 2.0]]), np.array([[3.0]]))
    assert [p.shape for p in partition(d)] == [(1, 1)] * 3
    long = DataSet(np.arange(6.0).reshape(1, 6), np.arange(5.0).reshape(1, 5), np.zeros((1, 5)))
    assert long.prefix(2).T == 2 and np.array_equal(long.prefix(2).x, [[0, 1, 2]])
    with pytest.raises(ValueError):
        long.prefix(6)


def test_stack(scalar_data):
    from noisy_synth.experiments import COMPARISON_DATA as d
    assert all(np.array_equal(a, b) for a, b in zip(stack([d]), partition(d)))
    xp, xm, um = stack([d, d])
    assert xp.shape == (1, 6) and np.array_equal(xp[:, :3], xp[:, 3:])
    with pytest.raises(ValueError):
        stack([d, DataSet(np.zeros((2, 2)), np.zeros((1, 1)))])
    with pytest.raises(ValueError):
        stack([])


def test_stack_is_associative():
    rng = np.random.default_rng(0)
    ds = [DataSet(rng.standard_normal((2, t + 1)), rng.standard_normal((1, t))) for t in (2, 3, 4)]
    left = stack(ds)
    right = tuple(np.hstack([a, b]) for a, b in zip(stack(ds[:1]), stack(ds[1:])))
    assert all(np.array_equal(a, b) for a, b in zip(left, right))


def test_stacked_membership_with_block_model():
    rng = np.random.default_rng(5)
    sys = SystemPair(np.array([[0.9, 0.2], [0.0, 1.1]]), np.array([[0.0], [1.0]]))
    ds, models = [], []
    for T in (6, 8):
        w = 0.1 * rng.standard_normal((2, T))
        ds.append(simulate(sys, rng.standard_normal(2), rng.standard_normal((1, T)), w))
        models.append(from_energy_bound(w @ w.T + 1e-3 * np.eye(2), T))
    # a shared budget: the stacked bound is the sum of the per-experiment bounds
    model = block_diagonal(models)
    assert membership(sys, build_n(*stack(ds), model))[0]


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    d = DataSet(rng.standard_normal((2, 5)), rng.standard_normal((1, 4)))
    write_trajectory_csv(tmp_path / "t.csv", d)
    text = (tmp_path / "t.csv").read_text().splitlines()
    assert text[0] == "t,x1,x2,u1" and text[-1].endswith(",")
    back = read_trajectory_csv(tmp_path / "t.csv")
    assert np.array_equal(back.x, d.x) and np.array_equal(back.u, d.u)


def test_trajectory_csv_errors(tmp_path):
    (tmp_path / "h.csv").write_text("time,x1,u1\n0,1,2\n1,2,\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(tmp_path / "h.csv")
    (tmp_path / "s.csv").write_text("t,x1,u1\n0,1,2\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(tmp_path / "s.csv")
