import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisy_synth.data import SystemPair, partition, simulate
from noisy_synth.noise import NoiseModel, check_noise, from_energy_bound
from noisy_synth.sigma import (QmiForm, build_n, ellipsoid_center, is_bounded, kernel_inclusion, membership,
                               sample_sigma, slater_check, whiten)

SCALAR_N = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 1.5], [0.5, 1.5, -2.75]])


def test_qmi_form_validation():
    with pytest.raises(ValueError):
        QmiForm(np.eye(2), 2)
    f = QmiForm(np.diag([1.0, -1.0, -1.0]), 1)
    assert f.q == 2
    assert np.allclose(f.evaluate(np.array([[0.5], [0.5]])), [[0.5]])


def test_build_n_scalar_example(scalar_data):
    xp, xm, um, model = scalar_data
    assert np.allclose(build_n(xp, xm, um, model).mat, SCALAR_N)


def test_build_n_zero_data():
    f = build_n(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((1, 3)), from_energy_bound(np.eye(2), 3))
    assert np.allclose(f.mat, np.diag([1.0, 1.0, 0, 0, 0]))


def test_build_n_dimension_checks(scalar_data):
    xp, xm, um, _ = scalar_data
    with pytest.raises(ValueError):
        build_n(xp, xm, um, from_energy_bound(np.eye(1), 4))
    with pytest.raises(ValueError):
        build_n(xp, xm[:, :2], um, from_energy_bound(np.eye(1), 3))


def random_instance(rng, n=None, m=None, T=None):
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    T = T or int(rng.integers(1, 9))
    sys = SystemPair(rng.standard_normal((n, n)) * 0.6, rng.standard_normal((n, m)))
    w = 0.3 * rng.standard_normal((n, T))
    d = simulate(sys, rng.standard_normal(n), rng.standard_normal((m, T)), w)
    phi12 = 0.1 * rng.standard_normal((n, T))
    phi22 = -np.diag(rng.uniform(0.5, 2, T))
    # choose phi11 so that the true noise is admissible with a random slack
    g = phi12 @ w.T
    phi11 = -(g + g.T) - w @ phi22 @ w.T + rng.uniform(0, 1) * np.eye(n)
    return sys, d, NoiseModel(phi11, phi12, phi22)


@given(st.integers(0, 2 ** 31))
def test_n22_is_nsd_and_kernel_inclusion(seed):
    rng = np.random.default_rng(seed)
    _, d, model = random_instance(rng)
    f = build_n(*partition(d), model)
    assert np.linalg.eigvalsh(f.m22)[-1] <= 1e-9 * max(1.0, np.abs(f.mat).max())
    assert kernel_inclusion(f.m22, f.m12)


def test_membership_examples(scalar_data):
    f = build_n(*scalar_data[:3], scalar_data[3])
    ok, margin = membership(SystemPair([[1.0]], [[1.0]]), f)
    assert ok and margin == pytest.approx(0.25)
    assert not membership(SystemPair([[10.0]], [[10.0]]), f)[0]


def test_membership_matches_noise_check():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        sys0, d, model = random_instance(rng)
        xp, xm, um = partition(d)
        f = build_n(xp, xm, um, model)
        cand = SystemPair(sys0.a + rng.standard_normal(sys0.a.shape) * rng.uniform(0, 0.5),
                          sys0.b + rng.standard_normal(sys0.b.shape) * rng.uniform(0, 0.5))
        w = xp - cand.a @ xm - cand.b @ um
        ok_m, mm = membership(cand, f)
        ok_n, mn = check_noise(model, w)
        assert ok_m == ok_n
        assert abs(mm - mn) <= 1e-9 * max(1.0, np.abs(f.mat).max() * (1 + np.abs(w).max()) ** 2)


def test_slater_examples(scalar_data):
    f = build_n(*scalar_data[:3], scalar_data[3])
    ok, zbar, npos = slater_check(f, 1)
    assert ok and npos == 1
    assert np.linalg.eigvalsh(f.evaluate(zbar))[0] > 0
    ok, zbar, _ = slater_check(QmiForm(np.diag([1.0, 1.0, -1.0, -1.0]), 2))
    assert ok
    assert not slater_check(QmiForm(-np.eye(3), 1))[0]
    with pytest.raises(ValueError):
        slater_check(f, 2)


def test_is_bounded():
    assert is_bounded([[0.0, 0.0, 1.0]], [[-0.5, 0.5, -1.5]])
    assert not is_bounded(np.zeros((1, 3)), np.zeros((1, 3)))
    rng = np.random.default_rng(0)
    assert is_bounded(rng.standard_normal((3, 6)), rng.standard_normal((2, 6)))
    assert not is_bounded(rng.standard_normal((3, 4)), rng.standard_normal((2, 4)))


def test_sample_sigma_scalar(scalar_data):
    f = build_n(*scalar_data[:3], scalar_data[3])
    zc, delta = ellipsoid_center(f)
    assert membership(SystemPair(zc[:1].T, zc[1:].T), f)[1] == pytest.approx(delta[0, 0])
    inner = sample_sigma(f, 1000, seed=0)
    assert all(membership(s, f)[0] for s in inner)
    edge = sample_sigma(f, 200, seed=1, mode="boundary")
    margins = [membership(s, f)[1] for s in edge]
    assert all(abs(mg) <= 1e-6 * max(1.0, np.abs(f.mat).max()) for mg in margins)
    with pytest.raises(ValueError):
        sample_sigma(f, 2, seed=0, mode="edge")


def test_sample_sigma_needs_full_rank():
    f = build_n(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)), from_energy_bound(np.eye(1), 3))
    with pytest.raises(ValueError):
        sample_sigma(f, 3, seed=0)


@given(st.integers(0, 2 ** 31))
def test_samples_are_members(seed):
    rng = np.random.default_rng(seed)
    _, d, model = random_instance(rng, T=8)
    xp, xm, um = partition(d)
    f = build_n(xp, xm, um, model)
    if not is_bounded(xm, um):
        return
    for s in sample_sigma(f, 20, seed=seed % 1000):
        assert membership(s, f)[0]


@given(st.integers(0, 2 ** 31))
def test_whitening_congruence(seed):
    rng = np.random.default_rng(seed)
    _, d, model = random_instance(rng, T=10)
    xp, xm, um = partition(d)
    f = build_n(xp, xm, um, model)
    wd = whiten(xp, xm, um, model)
    t = wd.transform
    scale = max(1.0, np.abs(f.mat).max())
    assert np.allclose(t.T @ f.mat @ t, wd.form.mat, atol=1e-9 * scale)
    for sys in wd.sample(20, seed=0):
        assert membership(sys, f)[0]


def test_whitening_scalar(scalar_data):
    wd = whiten(*scalar_data[:3], scalar_data[3])
    assert wd.delta[0, 0] == pytest.approx(0.5)
    assert np.allclose(wd.zc, [[1.5], [1.0]])
    f = build_n(*scalar_data[:3], scalar_data[3])
    assert all(membership(s, f)[0] for s in wd.sample(200, seed=3))
    with pytest.raises(ValueError):
        whiten(scalar_data[0][:, :1], scalar_data[1][:, :1], scalar_data[2][:, :1], from_energy_bound(1.0, 1))
