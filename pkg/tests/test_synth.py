import numpy as np
import pytest

from noisy_synth.data import SystemPair, partition, simulate
from noisy_synth.experiments import SWEEP_SYSTEM, sweep_dataset
from noisy_synth.noise import from_energy_bound, from_sample_norm_bound
from noisy_synth.sigma import build_n
from noisy_synth.synth import (Controller, NotInformativeError, PerformanceSpec,
                               check_image_inclusion, load_controller, problem_for, save_controller,
                               stab_problem, synth_h2, synth_hinf, synth_stab, synth_stab_multi)
from noisy_synth.verify import ClosedLoop, hinf_norm, h2_norm, robust_verify, spectral_radius

SCALAR_SPEC = PerformanceSpec(np.eye(1), np.zeros((1, 1)))


def noiseless_scalar(a=1.2, b=1.0, T=4, seed=0):
    rng = np.random.default_rng(seed)
    sys = SystemPair(np.array([[a]]), np.array([[b]]))
    d = simulate(sys, np.ones(1), rng.standard_normal((1, T)), np.zeros((1, T)))
    return sys, partition(d)


def test_stab_scalar_example(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_stab(xp, xm, um, model)
    assert ctrl.slater
    assert abs(1 + ctrl.k[0, 0]) < 1
    assert ctrl.beta > 0 and ctrl.alpha >= 0
    assert problem_for(ctrl, xp, xm, um, model).verify(ctrl)[0]


def test_stab_robust_over_consistent_set(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_stab(xp, xm, um, model)
    rep = robust_verify(ctrl, build_n(xp, xm, um, model), count=500, seed=3)
    assert rep["pass_lyapunov"] == 500 and rep["pass_spectral"] == 500


def test_stab_schur_complement_matches_multiplier_form(scalar_data):
    rng = np.random.default_rng(0)
    xp, xm, um, model = scalar_data
    n_form = build_n(xp, xm, um, model)
    sp = stab_problem(n_form, 1)
    scale = sp.alpha_vars["alpha"]
    for _ in range(10):
        p = rng.uniform(0.5, 2.0)
        l, a, b = rng.standard_normal(), rng.uniform(0, 2), rng.uniform(0, 1)
        x = sp.problem.pack({"P": np.array([[p]]), "L": np.array([[l]]), "alpha": a * scale, "beta": b})
        lmi = sp.problem.blocks[0].expr.value(x)
        schur = lmi[:3, :3] - np.outer(lmi[:3, 3], lmi[3, :3]) / lmi[3, 3]
        m = np.array([[p, 0, 0], [0, -p, -l], [0, -l, -l * l / p]])
        expected = m - a * n_form.mat - np.diag([b, 0, 0])
        assert np.allclose(schur, expected, atol=1e-10)


def test_stab_noiseless_controllable():
    sys, (xp, xm, um) = noiseless_scalar()
    ctrl = synth_stab(xp, xm, um, from_energy_bound(1e-9 * np.eye(1), xp.shape[1]))
    assert spectral_radius(sys.closed_loop(ctrl.k)) < 1


def test_stab_sweep_dataset_low_noise():
    xp, xm, um = partition(sweep_dataset(0, 0, 0, 0.5))
    ctrl = synth_stab(xp, xm, um, from_sample_norm_bound(0.5, 3, xp.shape[1]))
    assert spectral_radius(SWEEP_SYSTEM.closed_loop(ctrl.k)) < 1


def test_stab_not_informative_for_large_noise(scalar_data):
    xp, xm, um, _ = scalar_data
    with pytest.raises(NotInformativeError) as exc:
        synth_stab(xp, xm, um, from_energy_bound(50 * np.eye(1), 3))
    assert exc.value.slater


def test_shrinking_noise_keeps_feasibility(scalar_data):
    xp, xm, um, _ = scalar_data
    for bound in (1.0, 0.9, 0.8):
        ctrl = synth_stab(xp, xm, um, from_energy_bound(bound * np.eye(1), 3))
        assert abs(1 + ctrl.k[0, 0]) < 1


def test_image_inclusion(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_stab(xp, xm, um, model)
    assert check_image_inclusion(ctrl.k, xm, um)
    rng = np.random.default_rng(0)
    assert check_image_inclusion(rng.standard_normal((2, 3)), rng.standard_normal((3, 8)), rng.standard_normal((2, 8)))
    assert not check_image_inclusion(np.ones((1, 2)), np.zeros((2, 4)), np.zeros((1, 4)))
    # rank-one data: only K = u/x is in the image
    xm1, um1 = np.array([[2.0]]), np.array([[1.0]])
    assert check_image_inclusion(np.array([[0.5]]), xm1, um1)
    assert not check_image_inclusion(np.array([[0.4]]), xm1, um1)


def test_h2_scalar_and_robustness(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_h2(xp, xm, um, model, SCALAR_SPEC)
    assert ctrl.gamma_achieved ** 2 > np.trace(ctrl.z)
    assert problem_for(ctrl, xp, xm, um, model, SCALAR_SPEC).verify(ctrl)[0]
    rep = robust_verify(ctrl, build_n(xp, xm, um, model), SCALAR_SPEC, count=200, seed=1)
    assert rep["pass_lyapunov"] == rep["pass_spectral"] == rep["pass_performance"] == 200


def test_h2_gamma_constraint(scalar_data):
    xp, xm, um, model = scalar_data
    best = synth_h2(xp, xm, um, model, SCALAR_SPEC).gamma_achieved
    ok = synth_h2(xp, xm, um, model, PerformanceSpec(np.eye(1), np.zeros((1, 1)), 1.05 * best))
    assert np.trace(ok.z) < (1.05 * best) ** 2
    with pytest.raises(NotInformativeError):
        synth_h2(xp, xm, um, model, PerformanceSpec(np.eye(1), np.zeros((1, 1)), 0.9 * best))


def test_h2_identity_subspace_matches_plain(scalar_data):
    xp, xm, um, model = scalar_data
    a = synth_h2(xp, xm, um, model, SCALAR_SPEC)
    b = synth_h2(xp, xm, um, model, SCALAR_SPEC, e_subspace=np.eye(1))
    assert a.gamma_achieved == pytest.approx(b.gamma_achieved, rel=1e-6)


def test_h2_zero_output_is_small(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_h2(xp, xm, um, model, PerformanceSpec(np.zeros((1, 1)), np.zeros((1, 1))))
    assert ctrl.gamma_achieved < 1e-2


def test_hinf_scalar_and_robustness(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_hinf(xp, xm, um, model, SCALAR_SPEC)
    assert ctrl.mu == pytest.approx(1 / ctrl.gamma_achieved ** 2, rel=1e-8)
    assert problem_for(ctrl, xp, xm, um, model, SCALAR_SPEC).verify(ctrl)[0]
    rep = robust_verify(ctrl, build_n(xp, xm, um, model), SCALAR_SPEC, count=200, seed=2)
    assert rep["pass_lyapunov"] == rep["pass_spectral"] == rep["pass_performance"] == 200


def test_hinf_robustness_nonsymmetric_plant():
    # a non-normal plant with D != 0: the certified inequality is not the P-form one
    sys = SystemPair(np.array([[0.9, 0.4], [-0.2, 1.05]]), np.array([[0.0], [1.0]]))
    spec = PerformanceSpec(np.array([[1.0, 0.0]]), np.array([[0.1]]))
    rng = np.random.default_rng(3)
    T, eps = 40, 0.0025
    g = rng.standard_normal((2, T))
    w = g / np.linalg.norm(g, axis=0) * np.sqrt(eps) * rng.uniform(size=T) ** 0.5
    d = simulate(sys, rng.standard_normal(2), rng.standard_normal((1, T)), w)
    xp, xm, um = partition(d)
    model = from_sample_norm_bound(eps, 2, T)
    ctrl = synth_hinf(xp, xm, um, model, spec)
    rep = robust_verify(ctrl, build_n(xp, xm, um, model), spec, count=300, seed=0)
    assert rep["pass_lyapunov"] == rep["pass_spectral"] == rep["pass_performance"] == 300
    assert hinf_norm(ClosedLoop.from_gain(sys, ctrl.k, spec)) < ctrl.gamma_achieved


def test_hinf_large_gamma_feasible_when_stabilizable(scalar_data):
    xp, xm, um, model = scalar_data
    synth_stab(xp, xm, um, model)
    ctrl = synth_hinf(xp, xm, um, model, PerformanceSpec(np.eye(1), np.zeros((1, 1)), 1e6))
    assert ctrl.gamma_achieved == 1e6
    assert abs(1 + ctrl.k[0, 0]) < 1


def test_hinf_zero_output_any_gamma(scalar_data):
    xp, xm, um, model = scalar_data
    ctrl = synth_hinf(xp, xm, um, model, PerformanceSpec(np.zeros((1, 1)), np.zeros((1, 1)), 0.01))
    assert abs(1 + ctrl.k[0, 0]) < 1


def test_hinf_singleton_matches_norm():
    sys, (xp, xm, um) = noiseless_scalar(a=0.8, b=1.0)
    model = from_energy_bound(1e-10 * np.eye(1), xp.shape[1])
    ctrl = synth_hinf(xp, xm, um, model, SCALAR_SPEC)
    true = hinf_norm(ClosedLoop.from_gain(sys, ctrl.k, SCALAR_SPEC))
    assert true <= ctrl.gamma_achieved * (1 + 1e-6)
    assert true == pytest.approx(ctrl.gamma_achieved, rel=1e-2)


def test_h2_singleton_matches_norm():
    sys, (xp, xm, um) = noiseless_scalar(a=0.8, b=1.0)
    model = from_energy_bound(1e-10 * np.eye(1), xp.shape[1])
    ctrl = synth_h2(xp, xm, um, model, SCALAR_SPEC)
    true = h2_norm(ClosedLoop.from_gain(sys, ctrl.k, SCALAR_SPEC))
    # optimal state feedback kills the pole, leaving |G| = 1
    assert true == pytest.approx(1.0, rel=1e-3)
    assert true <= ctrl.gamma_achieved


def test_multi_single_sample_equals_stab():
    xp, xm, um = np.array([[0.2]]), np.array([[1.0]]), np.array([[0.3]])
    multi = synth_stab_multi(xp, xm, um, 0.01)
    single = synth_stab(xp, xm, um, from_sample_norm_bound(0.01, 1, 1))
    assert "conservative" in multi.flags and not multi.slater
    assert multi.beta == pytest.approx(single.beta, rel=1e-5)
    assert multi.k[0, 0] == pytest.approx(single.k[0, 0], rel=1e-5)


@pytest.mark.parametrize("trial", range(5))
def test_aggregated_feasible_implies_multi_feasible(trial):
    # equal per-sample multipliers reproduce the aggregated bound T eps I
    eps = 0.5
    xp, xm, um = partition(sweep_dataset(0, 0, trial, eps))
    T = xp.shape[1]
    agg = synth_stab(xp, xm, um, from_energy_bound(T * eps * np.eye(3), T))
    multi = synth_stab_multi(xp, xm, um, eps)
    assert spectral_radius(SWEEP_SYSTEM.closed_loop(agg.k)) < 1
    assert spectral_radius(SWEEP_SYSTEM.closed_loop(multi.k)) < 1
    assert multi.beta >= agg.beta * (1 - 1e-6)


def test_multi_can_succeed_where_aggregated_fails():
    # the per-sample noise set is much smaller than the aggregated one
    eps = 0.5
    xp, xm, um = partition(sweep_dataset(0, 0, 6, eps))
    T = xp.shape[1]
    with pytest.raises(NotInformativeError):
        synth_stab(xp, xm, um, from_energy_bound(T * eps * np.eye(3), T))
    multi = synth_stab_multi(xp, xm, um, eps)
    assert spectral_radius(SWEEP_SYSTEM.closed_loop(multi.k)) < 1
    assert problem_for(multi, xp, xm, um, eps=eps).verify(multi)[0]


def test_multi_rejects_nonpositive_eps(scalar_data):
    xp, xm, um, _ = scalar_data
    with pytest.raises(ValueError):
        synth_stab_multi(xp, xm, um, 0.0)


def test_controller_json_roundtrip(tmp_path, scalar_data):
    xp, xm, um, model = scalar_data
    for ctrl in (synth_stab(xp, xm, um, model), synth_h2(xp, xm, um, model, SCALAR_SPEC),
                 synth_hinf(xp, xm, um, model, SCALAR_SPEC)):
        path = tmp_path / f"{ctrl.kind}.json"
        save_controller(ctrl, path)
        back = load_controller(path)
        assert back.kind == ctrl.kind and np.array_equal(back.k, ctrl.k)
        assert np.array_equal(back.lyapunov, ctrl.lyapunov) and back.alpha == ctrl.alpha


def test_controller_validation():
    with pytest.raises(ValueError):
        Controller("stab", np.zeros((1, 1)), 0.0, 1.0, True)
    with pytest.raises(ValueError):
        Controller("stab", np.zeros((1, 1)), 0.0, 0.0, True, p=np.eye(1))
    with pytest.raises(ValueError):
        Controller("stab", np.zeros((1, 1)), 0.0, 1.0, True, p=-np.eye(1))
    with pytest.raises(ValueError):
        Controller("lqr", np.zeros((1, 1)), 0.0, 1.0, True, p=np.eye(1))


def test_performance_spec_validation():
    with pytest.raises(ValueError):
        PerformanceSpec(np.eye(2), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        PerformanceSpec(np.eye(1), np.zeros((1, 1)), -1.0)
