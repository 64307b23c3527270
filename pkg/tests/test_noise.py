import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisy_synth.matcore import definiteness
from noisy_synth.noise import (NoiseModel, block_diagonal, check_noise, embed_subspace, from_energy_bound,
                               from_sample_covariance, from_sample_norm_bound, load_model, save_model,
                               to_transposed_model)


def test_energy_bound_scalar_example():
    m = from_energy_bound(1.0, 3)
    assert np.array_equal(m.phi11, [[1.0]])
    assert np.array_equal(m.phi12, np.zeros((1, 3)))
    assert np.array_equal(m.phi22, -np.eye(3))


def test_energy_bound_aircraft_level():
    T, sigma = 750, 0.005
    m = from_energy_bound(1.35 * T * sigma ** 2 * np.eye(6), T)
    assert m.n == 6 and m.T == T
    assert np.allclose(np.diag(m.phi11), 1.35 * T * sigma ** 2)


def test_zero_energy_admits_only_zero():
    m = from_energy_bound(0.0, 3)
    assert check_noise(m, np.zeros((1, 3)))[0]
    assert not check_noise(m, np.array([[0.0, 1e-3, 0.0]]))[0]


def test_energy_bound_rejects_indefinite():
    with pytest.raises(ValueError):
        from_energy_bound(np.diag([1.0, -1.0]), 2)


def test_sample_norm_bound():
    assert np.allclose(from_sample_norm_bound(0.5, 3, 20).phi11, 10 * np.eye(3))
    assert np.allclose(from_sample_norm_bound(1.0, 1, 1).phi11, [[1.0]])
    with pytest.raises(ValueError):
        from_sample_norm_bound(0.0, 2, 2)


@given(st.floats(0.01, 5.0), st.integers(1, 30), st.integers(0, 2 ** 31))
def test_columns_in_ball_pass(eps, T, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((3, T))
    w = g / np.linalg.norm(g, axis=0) * np.sqrt(eps) * rng.uniform(size=T)
    assert check_noise(from_sample_norm_bound(eps, 3, T), w)[0]


def test_sample_covariance_needs_regularization():
    with pytest.raises(ValueError, match="semidefinite"):
        from_sample_covariance(np.eye(1), 2)
    m = from_sample_covariance(np.eye(1), 2, delta=1e-6)
    assert definiteness(m.phi22, "ND")
    z = from_sample_covariance(np.zeros((1, 1)), 4, delta=1e-3)
    assert check_noise(z, np.zeros((1, 4)))[0]
    assert not check_noise(z, np.ones((1, 4)))[0]
    with pytest.raises(ValueError):
        from_sample_covariance(np.eye(1), 1, delta=1.0)


def test_sample_covariance_bounds_centered_spread():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((2, 50))
    cov = np.cov(w)
    ok = check_noise(from_sample_covariance(cov * 1.01, 50, delta=1e-6), w)[0]
    bad = check_noise(from_sample_covariance(cov * 0.9, 50, delta=1e-6), w)[0]
    assert ok and not bad


def test_embed_subspace_examples():
    hat = from_energy_bound(1.0, 3)
    assert np.allclose(embed_subspace(np.eye(1), hat).matrix, hat.matrix)
    emb = embed_subspace(np.array([[1.0], [0.0]]), hat)
    assert check_noise(emb, np.array([[0.5, 0.5, 0.5], [0, 0, 0]]))[0]
    assert not check_noise(emb, np.array([[0.5, 0.5, 0.5], [0, 1e-3, 0]]))[0]
    zero = embed_subspace(np.zeros((2, 1)), hat)
    assert check_noise(zero, np.zeros((2, 3)))[0]
    assert not check_noise(zero, np.full((2, 3), 1e-3))[0]
    with pytest.raises(ValueError):
        embed_subspace(np.eye(2), hat)


@given(st.integers(0, 2 ** 31))
def test_embed_subspace_equivalence(seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((3, 2))
    hat = from_energy_bound(np.diag(rng.uniform(0.5, 2, 2)), 4)
    what = rng.standard_normal((2, 4)) * rng.uniform(0.1, 1.5)
    emb = embed_subspace(e, hat)
    assert check_noise(emb, e @ what)[0] == check_noise(hat, what)[0]
    # admissible W lies in im E: any component along the orthogonal complement is rejected
    perp = np.linalg.svd(e)[0][:, 2:]
    assert not check_noise(emb, e @ what + 1e-2 * perp @ np.ones((1, 4)))[0]


def test_check_noise_examples():
    m = from_energy_bound(1.0, 3)
    ok, margin = check_noise(m, [[0.5, 0.5, 0.5]])
    assert ok and margin == pytest.approx(0.25)
    assert check_noise(m, np.zeros((1, 3)))[0]
    assert not check_noise(m, 2 * np.ones((1, 3)))[0]
    with pytest.raises(ValueError):
        check_noise(m, np.zeros((2, 3)))


def test_transposed_model():
    q11, q12, q22 = to_transposed_model(from_energy_bound(np.eye(2), 2))
    assert np.allclose(q11, np.eye(2)) and np.allclose(q22, -np.eye(2)) and not q12.any()
    model = from_energy_bound(2 * np.eye(2), 3)
    q11, _, q22 = to_transposed_model(model)
    rng = np.random.default_rng(3)
    for _ in range(100):
        w = rng.standard_normal((2, 3)) * rng.uniform(0.2, 2)
        dual = definiteness(q11 + w.T @ q22 @ w, "PSD")
        assert check_noise(model, w)[0] == dual
    with pytest.raises(ValueError):
        to_transposed_model(from_energy_bound(np.diag([1.0, 0.0]), 2))
    with pytest.raises(ValueError):
        to_transposed_model(NoiseModel(np.eye(1), np.ones((1, 2)), -np.eye(2)))


@given(st.integers(0, 2 ** 31))
def test_admissible_set_is_bounded(seed):
    rng = np.random.default_rng(seed)
    n, T = 2, 4
    phi11 = np.diag(rng.uniform(0.5, 3, n))
    phi22 = -np.diag(rng.uniform(0.5, 3, T))
    model = NoiseModel(phi11, np.zeros((n, T)), phi22)
    v = rng.standard_normal((n, T))
    v /= np.linalg.norm(v, 2)
    # boundary point W = Phi11^{1/2} V (-Phi22)^{-1/2} with |V|_2 = 1
    w = np.sqrt(phi11) @ v @ np.diag(1 / np.sqrt(-np.diag(phi22)))
    assert check_noise(model, w)[0]
    assert np.linalg.norm(w, 2) ** 2 <= np.max(phi11) / np.min(-np.diag(phi22)) * (1 + 1e-12)


def test_model_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        NoiseModel(np.eye(1), np.zeros((1, 2)), np.eye(2))
    with pytest.raises(ValueError):
        NoiseModel(np.eye(1), np.zeros((1, 3)), -np.eye(2))
    m = NoiseModel(np.eye(2), 0.1 * np.ones((2, 3)), -np.eye(3))
    save_model(m, tmp_path / "model")
    back = load_model(tmp_path / "model")
    assert np.array_equal(back.matrix, m.matrix)


def test_block_diagonal_sums_forms():
    a, b = from_energy_bound(np.eye(2), 2), from_energy_bound(2 * np.eye(2), 3)
    both = block_diagonal([a, b])
    assert both.T == 5
    rng = np.random.default_rng(0)
    w1, w2 = rng.standard_normal((2, 2)), rng.standard_normal((2, 3))
    assert np.allclose(both.evaluate(np.hstack([w1, w2])), a.evaluate(w1) + b.evaluate(w2))
