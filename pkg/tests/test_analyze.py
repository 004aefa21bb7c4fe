import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqpm import analyze as an
from bqpm import biphoton as bp
from bqpm import simulate as sim
from bqpm.errors import BootstrapError, ConfigurationError, FitError, InputError

IDEAL = sim.DetectionChain(1.0, 1.0)


def expected(rho, n_total=1e5):
    # 16 settings, mean pair count chosen so the total is about n_total
    return sim.expected_counts(rho, an.TOMOGRAPHY_SETTINGS, n_total / 4, IDEAL, 1.0)


def poisson(rho, seed, n_total=1e5):
    return sim.simulate_counts(rho, an.TOMOGRAPHY_SETTINGS, n_total / 4, IDEAL, 1.0, seed)


def random_density(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def test_settings_table():
    labels = [s.label for s in an.TOMOGRAPHY_SETTINGS]
    assert labels == ["HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                      "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL"]
    basis = {"H": [1, 0], "V": [0, 1], "D": [1, 1], "A": [1, -1], "R": [1, -1j], "L": [1, 1j]}
    for s in an.TOMOGRAPHY_SETTINGS:
        for arm, letter in zip((s.signal, s.idler), s.label):
            want = np.array(basis[letter], dtype=complex)
            want /= np.linalg.norm(want)
            assert abs(abs(np.vdot(want, arm.vector())) - 1) < 1e-12


@pytest.mark.parametrize("rho", [bp.to_density(bp.PHI_PLUS), np.eye(4) / 4,
                                 bp.to_density(bp.source_state(14.83, math.pi))])
def test_linear_inversion_exact(rho):
    est = an.linear_reconstruct(expected(rho))
    assert np.max(np.abs(est - rho)) < 1e-12


def test_linear_inversion_goes_negative():
    rho = bp.to_density(bp.PHI_PLUS)
    neg = sum(np.linalg.eigvalsh(an.linear_reconstruct(poisson(rho, s, 1e4))).min() < 0 for s in range(100))
    assert neg > 0


def test_singular_settings_rejected():
    settings = [an.TOMOGRAPHY_SETTINGS[0]] * 16
    recs = sim.expected_counts(np.eye(4) / 4, settings, 100, IDEAL, 1.0)
    with pytest.raises(ConfigurationError):
        an.linear_reconstruct(recs, settings)


def test_record_count_mismatch():
    with pytest.raises(InputError):
        an.linear_reconstruct(expected(np.eye(4) / 4)[:15])


def test_physical_projection():
    m = np.diag([0.6, 0.5, 0.1, -0.2]).astype(complex)
    rho = an.physical_projection(m)
    bp.validate_density(rho)
    assert np.allclose(np.diag(rho).real, [0.5, 5 / 12, 1 / 12, 0])


def test_mle_noiseless_pure():
    rho = bp.to_density(bp.PHI_PLUS)
    r = an.mle_reconstruct(expected(rho), target=bp.PHI_PLUS)
    assert 1 - r.fidelity_to_target < 1e-6
    bp.validate_density(r.rho)


def test_mle_poisson_median_fidelity():
    rho = bp.to_density(bp.PHI_PLUS)
    f = [an.mle_reconstruct(poisson(rho, s), target=bp.PHI_PLUS).fidelity_to_target for s in range(30)]
    assert np.median(f) > 0.99


def test_mle_werner():
    p = 0.9293
    rho = bp.werner_mix(bp.PHI_PLUS, p)
    r = an.mle_reconstruct(expected(rho), target=bp.PHI_PLUS, chsh_angles="optimal")
    assert r.fidelity_to_target == pytest.approx((3 * p + 1) / 4, abs=1e-5)
    assert r.chsh_s == pytest.approx(2 * math.sqrt(2) * p, abs=1e-4)


@pytest.mark.parametrize("seed", range(20))
def test_mle_round_trip_mixed(seed):
    rho = random_density(np.random.default_rng(seed))
    r = an.mle_reconstruct(expected(rho))
    assert np.max(np.abs(r.rho - rho)) < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mle_is_physical_and_dominates(seed):
    rho = random_density(np.random.default_rng(seed), rank=2)
    recs = poisson(rho, seed, 2e3)
    r = an.mle_reconstruct(recs)
    bp.validate_density(r.rho, atol=1e-10)
    start = an.physical_projection(an.linear_reconstruct(recs))
    assert r.log_likelihood >= an.log_likelihood(start, recs) - 1e-9


def test_mle_gradient_matches_finite_difference():
    rho = bp.werner_mix(bp.PHI_PLUS, 0.8)
    recs = poisson(rho, 3, 1e4)
    n, t = an._counts(recs)
    vecs = an._projector_vectors(an.TOMOGRAPHY_SETTINGS)
    x = np.random.default_rng(0).normal(size=16)

    def f(x):
        tm = an._t_from_params(x)
        m = tm.conj().T @ tm
        p = np.real(np.einsum("ni,ik,nk->n", vecs.conj(), m, vecs))
        return -an._poisson_loglik(n, t * p)

    # the objective in _mle_density is f / total up to a constant
    captured = {}
    orig = an.optimize.minimize

    def spy(fun, x0, **kw):
        captured["fun"] = fun
        return orig(fun, x0, **kw)

    an.optimize.minimize = spy
    try:
        an._mle_density(recs, an.TOMOGRAPHY_SETTINGS, 10)
    except Exception:
        pass
    finally:
        an.optimize.minimize = orig
    val, grad = captured["fun"](x)
    h = 1e-6
    num = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(16)]) / n.sum()
    assert np.max(np.abs(grad - num)) < 1e-6


def test_params_round_trip():
    rho = random_density(np.random.default_rng(5))
    tm = an._t_from_params(an._params_from_density(rho, floor=0))
    assert np.max(np.abs(tm.conj().T @ tm - rho)) < 1e-12


def test_fidelity_and_purity():
    assert an.fidelity(bp.PHI_PLUS, bp.PHI_PLUS) == pytest.approx(1)
    assert an.fidelity(bp.PHI_PLUS, bp.PHI_MINUS) == pytest.approx(0, abs=1e-15)
    assert an.fidelity(np.eye(4) / 4, bp.PHI_PLUS) == pytest.approx(0.25)
    assert an.purity(np.eye(4) / 4) == pytest.approx(0.25)
    assert an.purity(bp.PHI_PLUS) == pytest.approx(1)


def test_concurrence_examples():
    assert an.concurrence(bp.PHI_PLUS) == pytest.approx(1)
    assert an.concurrence(np.eye(4) / 4) == pytest.approx(0, abs=1e-12)
    assert an.concurrence(bp.TwoPhotonState([1, 0, 0, 0])) == pytest.approx(0, abs=1e-12)
    r = 14.83
    assert an.concurrence(bp.source_state(r)) == pytest.approx(2 * math.sqrt(r) / (r + 1), abs=1e-12)
    assert an.concurrence(bp.source_state(r)) == pytest.approx(0.4866, abs=1e-4)
    # Werner states are entangled only above p = 1/3
    assert an.concurrence(bp.werner_mix(bp.PHI_PLUS, 0.5)) == pytest.approx(0.25, abs=1e-12)
    assert an.concurrence(bp.werner_mix(bp.PHI_PLUS, 0.3)) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_concurrence_bounded(seed):
    rho = random_density(np.random.default_rng(seed), rank=int(seed % 4) + 1)
    c = an.concurrence(rho)
    assert 0 <= c <= 1 + 1e-12


def test_chsh_examples():
    assert an.chsh_S(bp.PHI_PLUS) == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert an.chsh_S(np.eye(4) / 4) == pytest.approx(0, abs=1e-12)
    s, angles = an.optimal_chsh(bp.PHI_PLUS)
    assert s == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    assert an.chsh_S(bp.PHI_PLUS, angles) == pytest.approx(s)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100))
def test_optimal_chsh_pure_real_states(r):
    state = bp.source_state(r)
    s, _ = an.optimal_chsh(bp.to_density(state))
    assert s == pytest.approx(an.pure_state_chsh_max(state), abs=1e-6)
    assert s <= 2 * math.sqrt(2) + 1e-9


def test_correlation_undefined():
    hh = bp.to_density(bp.TwoPhotonState([1, 0, 0, 0]))
    assert an.correlation(hh, 0, 0) == pytest.approx(1)
    with pytest.raises(InputError):
        an.correlation(np.zeros((4, 4)), 0, 0)


def test_visibility_fit():
    th = np.linspace(0, math.pi, 19)
    fit = an.visibility(np.column_stack([th, 3 + 2 * np.cos(2 * th - 0.4)]))
    assert fit.visibility == pytest.approx(2 / 3)
    assert fit.phase == pytest.approx(0.4)
    assert fit.residual_norm < 1e-12
    with pytest.raises(InputError):
        an.visibility([(0, 1), (0.1, 1), (0.2, 1)])
    with pytest.raises(InputError):
        an.visibility(np.column_stack([th / 4, th]))
    with pytest.raises(FitError):
        an.visibility(np.column_stack([th, np.zeros_like(th)]))


def test_visibility_from_records():
    th = np.linspace(0, math.pi, 37)
    settings = [sim.interference_setting("D", t) for t in th]
    recs = sim.expected_counts(bp.to_density(bp.PHI_PLUS), settings, 1e4, IDEAL, 1.0)
    assert an.visibility(recs).visibility == pytest.approx(1, abs=1e-9)


def test_subtract_accidentals():
    s = an.TOMOGRAPHY_SETTINGS[0]
    r = sim.CountRecord(s, 1e5, 1e5, 100, 1.0)
    out = an.subtract_accidentals([r], 1.6)[0]
    assert out.coincidences == pytest.approx(100 - 1e10 * 1.6e-9)
    r = sim.CountRecord(s, 1e6, 1e6, 10, 1.0)
    assert an.subtract_accidentals([r], 1.6)[0].coincidences == 0


def one_record(n):
    return [sim.CountRecord(an.TOMOGRAPHY_SETTINGS[0], n, n, n, 1.0)]


def test_bootstrap_poisson_std():
    b = an.bootstrap(one_record(10_000), "total_coincidences", resamples=1000, seed=1)
    assert b.std == pytest.approx(100, rel=0.1)
    assert b.mean == pytest.approx(10_000, rel=0.01)
    assert b.used == 1000 and b.dropped == 0


def test_bootstrap_zero_counts():
    b = an.bootstrap(one_record(0), "total_coincidences", resamples=100)
    assert b.std == 0 and b.mean == 0


def test_bootstrap_deterministic():
    a = an.bootstrap(one_record(500), "total_coincidences", resamples=200, seed=7)
    b = an.bootstrap(one_record(500), "total_coincidences", resamples=200, seed=7)
    assert a == b


def visibility_records(per_setting, seed=0):
    th = np.linspace(0, math.pi, 19)
    settings = [sim.interference_setting("D", t) for t in th]
    rho = bp.werner_mix(bp.PHI_PLUS, 0.9)
    # the brightest setting gets about per_setting coincidences
    return sim.simulate_counts(rho, settings, per_setting / 0.5, IDEAL, 1.0, seed)


def test_bootstrap_visibility_scaling():
    small = an.bootstrap(visibility_records(1e4), "visibility", resamples=1000, seed=0)
    big = an.bootstrap(visibility_records(1e6), "visibility", resamples=1000, seed=0)
    assert 7 <= small.std / big.std <= 14
    assert small.mean == pytest.approx(0.9, abs=0.01)


def test_mle_bootstrap_errors_reported():
    rho = bp.werner_mix(bp.PHI_PLUS, 0.9)
    r = an.mle_reconstruct(poisson(rho, 0, 1e4), target=bp.PHI_PLUS, bootstrap_resamples=20, seed=0)
    assert set(r.errors) >= {"purity", "concurrence", "fidelity", "dropped_resamples"}
    assert 0 < r.errors["fidelity"] < 0.05


def test_bootstrap_argument_checks():
    with pytest.raises(InputError):
        an.bootstrap(one_record(10), "total_coincidences", resamples=50)
    with pytest.raises(InputError):
        an.bootstrap(one_record(10), "nope", resamples=100)


def test_bootstrap_too_many_failures():
    def stat(recs):
        raise InputError("always")
    with pytest.raises(BootstrapError):
        an.bootstrap(one_record(10), stat, resamples=100)


def test_compensated_state_fidelity_to_phi_minus():
    r = 14.83
    f = an.fidelity(bp.source_state(r, math.pi), bp.PHI_MINUS)
    assert f == pytest.approx((math.sqrt(r) + 1) ** 2 / (2 * (r + 1)), abs=1e-12)
    assert f == pytest.approx(0.743271, abs=1e-6)
