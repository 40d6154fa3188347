import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks, hilbert

from squidline.errors import ConditioningError, ValidationError
from squidline.mode_reduction import (
    MatchedCoefficients,
    ModalExpansion,
    ReductionParams,
    mode_wavenumbers,
    multimode_frequencies,
    multimode_pair,
    node_residual,
    node_wavenumber,
    perturbative_modes,
    secular_function,
    secular_roots,
    simulate_multimode,
    simulate_reduced,
    validity_check,
)
from squidline.squid_spectrum import SquidParams

EPS_GRID = np.logspace(-4, -2, 7)
WINDOW = dict(alpha_ratio=1.008**2, rho=0.3)


def rel_err(a, b):
    return max(abs(x - y) / y for x, y in zip(a, b))


def slope(form, alpha_ratio=1.15, rho=0.3):
    errs = []
    for e in EPS_GRID:
        p = ReductionParams.from_ratios(1.0, alpha_ratio, rho, e)
        errs.append(rel_err(perturbative_modes(p, form), secular_roots(p)))
    return np.polyfit(np.log(EPS_GRID), np.log(errs), 1)[0]


def trajectory_error(alpha_ratio, epsilon, n_modes=16, periods=100, rho=0.3):
    p = ReductionParams.from_ratios(1.0, alpha_ratio, rho, epsilon)
    t_end = periods * 2 * math.pi / p.omega_w
    t = np.linspace(0, t_end, 20001)
    full = simulate_multimode(p, n_modes, {"gamma": 0.1}, (0, t_end), t)
    red = simulate_reduced(p, False, {"gamma": 0.1}, (0, t_end), t)
    return np.max(np.abs(full.gamma - red.gamma)) / np.max(np.abs(full.gamma)), full


def test_decoupled_limit():
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 0.0)
    assert secular_roots(p) == (math.sqrt(1.2), 1.0)
    for form in ("consistent", "expanded"):
        assert perturbative_modes(p, form) == pytest.approx((math.sqrt(1.2), 1.0), rel=1e-15)
    w = multimode_frequencies(p, 10)
    assert np.min(np.abs(w - math.sqrt(1.2))) < 1e-12
    assert np.min(np.abs(w - 1.0)) < 1e-12


def test_roots_approach_bare_frequencies():
    prev = math.inf
    for e in (1e-2, 1e-3, 1e-4):
        d = rel_err(secular_roots(ReductionParams.from_ratios(1.0, 1.2, 0.3, e)), (math.sqrt(1.2), 1.0))
        assert d < prev
        prev = d
    assert prev < 1e-3


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 2.0).filter(lambda r: abs(r - 1) > 0.02), st.floats(0.05, 1.0), st.floats(1e-4, 0.05))
def test_secular_roots_are_zeros(alpha_ratio, rho, eps):
    p = ReductionParams.from_ratios(1.0, alpha_ratio, rho, eps)
    for r in secular_roots(p):
        h = 1e-7 * r
        lo, hi = secular_function(r - h, p), secular_function(r + h, p)
        assert lo * hi <= 0


@pytest.mark.parametrize("n_modes", [20, 100])
def test_rank_one_matches_dense(n_modes):
    p = ReductionParams.from_ratios(1.0, 1.15, 0.3, 0.02)
    d = multimode_frequencies(p, n_modes, "dense")
    r = multimode_frequencies(p, n_modes, "rank_one")
    np.testing.assert_allclose(r, d, rtol=1e-10)


@pytest.mark.parametrize("alpha_ratio,rho,eps", [(1.15, 0.3, 1e-2), (1.008**2, 0.3, 1e-2), (0.8, 0.5, 3e-3), (1.4, 0.1, 1e-2)])
def test_secular_roots_match_matrix_eigenfrequencies(alpha_ratio, rho, eps):
    p = ReductionParams.from_ratios(1.0, alpha_ratio, rho, eps)
    assert rel_err(multimode_pair(p, 400), secular_roots(p)) < 1e-6


def test_truncation_error_decreases_with_modes():
    p = ReductionParams.from_ratios(1.0, 1.15, 0.3, 1e-2)
    s = secular_roots(p)
    errs = [rel_err(multimode_pair(p, n, "rank_one"), s) for n in (100, 1000, 10000)]
    assert errs[0] > errs[1] > errs[2]


def test_consistent_perturbative_error_is_cubic():
    assert slope("consistent") == pytest.approx(3.0, abs=0.2)
    assert slope("consistent", alpha_ratio=0.8, rho=0.5) == pytest.approx(3.0, abs=0.2)


def test_expanded_form_error_is_quadratic():
    # the cot-expanded closed form drops O(eps^2 delta) terms
    assert slope("expanded") == pytest.approx(2.0, abs=0.2)


def test_expanded_form_close_to_consistent():
    p = ReductionParams.from_ratios(1.0, 1.15, 0.3, 1e-3)
    assert rel_err(perturbative_modes(p, "expanded"), perturbative_modes(p, "consistent")) < 1e-5


def test_degenerate_alpha_rejected():
    p = ReductionParams.from_ratios(1.0, 1.0, 0.3, 1e-2)
    with pytest.raises(ConditioningError):
        perturbative_modes(p)
    with pytest.raises(ValidationError):
        perturbative_modes(ReductionParams.from_ratios(1.0, 1.2, 0.3, 1e-2), "other")


def test_matched_coefficients():
    p = ReductionParams.from_ratios(2.0, 1.15, 0.3, 1e-2, v=3.0)
    co = MatchedCoefficients.of(p)
    assert co.a == p.alpha and co.b == 1.0
    assert co.d == pytest.approx(2 * p.v**2 / (p.beta * p.l), rel=1e-15)
    assert co.c == pytest.approx((2 * math.pi * p.v / p.l) ** 2 * (1 - 2 * p.v**2 * p.epsilon / (p.beta * p.l)), rel=1e-15)


def test_matched_frequencies_reconstruct_second_order_forms():
    errs, expansion = [], []
    for e in EPS_GRID:
        p = ReductionParams.from_ratios(1.0, 1.15, 0.3, e)
        co = MatchedCoefficients.of(p)
        exact = co.normal_frequencies(e)
        assert rel_err(exact, perturbative_modes(p)) < 0.5 * e**2
        errs.append(rel_err(exact, secular_roots(p)))
        expansion.append(rel_err(co.second_order(e), exact))
    # the eps^2 expansion of the matched pair is exact up to eps^4
    big = EPS_GRID >= 1e-3
    quartic = np.polyfit(np.log(EPS_GRID[big]), np.log(np.array(expansion)[big]), 1)[0]
    assert quartic == pytest.approx(4.0, abs=0.2)
    # first-order consistent matching: agreement with the secular pair at O(eps^2)
    fit = np.polyfit(np.log(EPS_GRID), np.log(errs), 1)[0]
    assert fit == pytest.approx(2.0, abs=0.2)


def test_node_wavenumber_limits():
    l, l_w, loop_l = 1e-2, 6.35e-7, 500e-12
    assert node_wavenumber(l_w, l, loop_l, 0.0) == math.pi / l
    m_m = 5e-12
    k0 = node_wavenumber(l_w, l, loop_l, m_m)
    small = m_m / (l_w * l)
    assert abs(k0 * l / math.pi - 1) < 10 * small
    assert k0 > math.pi / l
    assert node_residual(k0, l_w, l, loop_l, m_m) < 1e-10
    x = k0 * l / 2
    assert x * math.tan(x) == pytest.approx(-l_w * l * loop_l / m_m**2, rel=1e-6)


@given(st.floats(1e-13, 1e-10))
def test_node_residual_property(m_m):
    k0 = node_wavenumber(6.35e-7, 1e-2, 500e-12, m_m)
    assert node_residual(k0, 6.35e-7, 1e-2, 500e-12, m_m) < 1e-10


def test_node_wavenumber_validation():
    with pytest.raises(ValidationError):
        node_wavenumber(0.0, 1e-2, 500e-12, 5e-12)


def test_boundary_currents_vanish():
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 1e-2)
    k = mode_wavenumbers(p, 12)
    amps = np.random.default_rng(1).normal(size=12)
    m = ModalExpansion(k, amps)
    assert np.all(np.abs(m.current([-p.l / 2, p.l / 2])) < 1e-12 * np.abs(amps * k).sum())
    assert m.field(0.0) == pytest.approx(amps.sum(), rel=1e-14)


def test_zero_coupling_modes_are_free_oscillators():
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 0.0)
    t_end = 100 * 2 * math.pi
    t = np.linspace(0, t_end, 4001)
    q = np.zeros(8)
    q[1] = 0.2
    tr = simulate_multimode(p, 8, {"gamma": 0.1, "q": q}, (0, t_end), t)
    assert tr.energy_drift < 1e-8
    np.testing.assert_allclose(tr.gamma, 0.1 * np.cos(math.sqrt(1.2) * t), atol=1e-7)
    np.testing.assert_allclose(tr.phi, 0.2 * np.cos(t), atol=1e-7)


def test_multimode_energy_conserved():
    _, full = trajectory_error(WINDOW["alpha_ratio"], 0.01)
    assert full.energy_drift < 1e-8


def test_beat_period_matches_secular_splitting():
    p = ReductionParams.from_ratios(1.0, WINDOW["alpha_ratio"], WINDOW["rho"], 0.01)
    wp, wm = secular_roots(p)
    beat = 2 * math.pi / abs(wp - wm)
    t_end = 6.5 * beat
    t = np.linspace(0, t_end, 60001)
    tr = simulate_multimode(p, 16, {"gamma": 0.1}, (0, t_end), t)
    env = np.abs(hilbert(tr.gamma))
    peaks, _ = find_peaks(env, distance=int(0.7 * beat / (t[1] - t[0])))
    peaks = peaks[(t[peaks] > 0.2 * beat) & (t[peaks] < t_end - 0.2 * beat)]
    assert len(peaks) >= 3
    measured = np.mean(np.diff(t[peaks]))
    assert measured == pytest.approx(beat, rel=0.01)


@pytest.fixture(scope="module")
def window_errors():
    return {e: trajectory_error(WINDOW["alpha_ratio"], e)[0] for e in (0.03, 0.01, 0.003)}


def test_reduced_matches_multimode_inside_window(window_errors):
    p = ReductionParams.from_ratios(1.0, WINDOW["alpha_ratio"], WINDOW["rho"], 0.01)
    assert validity_check(p).passed
    assert window_errors[0.01] < 0.05


def test_error_decreases_with_epsilon(window_errors):
    e = [window_errors[k] for k in (0.03, 0.01, 0.003)]
    assert e[0] > e[1] > e[2]


def test_reduced_degrades_outside_window(window_errors):
    p = ReductionParams.from_ratios(1.0, 1.5**2, 0.3, 0.01)
    assert not validity_check(p).passed
    outside, _ = trajectory_error(1.5**2, 0.01)
    assert outside >= 3 * window_errors[0.01]


@pytest.mark.parametrize("nonlinear", [False, True])
def test_reduced_energy_conserved(nonlinear):
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 0.05)
    t_end = 100 * 2 * math.pi
    tr = simulate_reduced(p, nonlinear, {"gamma": 0.5, "phi": 0.1}, (0, t_end), np.linspace(0, t_end, 2001))
    assert tr.energy_drift < 1e-8


def test_reduced_decoupled_sinusoids():
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 0.0)
    t = np.linspace(0, 50, 1001)
    tr = simulate_reduced(p, False, {"gamma": 0.1, "phi": 0.2}, (0, 50), t)
    np.testing.assert_allclose(tr.gamma, 0.1 * np.cos(math.sqrt(1.2) * t), atol=1e-8)
    np.testing.assert_allclose(tr.phi, 0.2 * np.cos(t), atol=1e-8)


def test_nonlinear_correction_is_quadratic_in_amplitude():
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 0.02)
    t = np.linspace(0, 20, 801)
    rel = []
    for amp in (0.01, 0.02, 0.04):
        lin = simulate_reduced(p, False, {"gamma": amp}, (0, 20), t)
        non = simulate_reduced(p, True, {"gamma": amp}, (0, 20), t)
        rel.append(np.max(np.abs(non.gamma - lin.gamma)) / amp)
    fit = np.polyfit(np.log([0.01, 0.02, 0.04]), np.log(rel), 1)[0]
    assert fit == pytest.approx(2.0, abs=0.1)


def test_validity_examples():
    base = ReductionParams.from_ratios(1.0, 1.01**2, 0.3, 0.01)
    assert validity_check(base).passed
    assert not validity_check(base, delta_omega=0.0).passed
    assert not validity_check(base, delta_omega=0.05 * base.omega_w).passed
    assert not validity_check(base, delta_omega=base.v / base.l).passed
    rep = validity_check(base)
    assert rep.as_dict()["pass"] is True
    assert rep.lower_bound == pytest.approx(0.01**2 * 0.3 * base.v / base.l)


def test_validity_node_case():
    p = ReductionParams.from_ratios(1.0, 1.01**2, 0.3, 0.0)
    squid = SquidParams(m_m=5e-12)
    rep = validity_check(p, "node", squid=squid)
    assert rep.case == "node"
    assert rep.lower_bound == pytest.approx(
        2 * squid.c_j * p.beta * p.l / p.v**2 / squid.c_j * (5e-12 / 500e-12) ** 2 * p.v / p.l
    )
    assert rep.passed
    with pytest.raises(ValidationError):
        validity_check(p, "node")
    with pytest.raises(ValidationError):
        validity_check(p, "middle")


def test_parameter_validation():
    with pytest.raises(ValidationError):
        ReductionParams(1.0, 1.0, 0.3, 1.0, 1.0)
    with pytest.raises(ValidationError):
        ReductionParams(-1.0, 1.0, 0.1, 1.0, 1.0)
    p = ReductionParams.from_ratios(1.0, 1.2, 0.3, 0.01)
    with pytest.raises(ValidationError):
        simulate_multimode(p, 4)
    with pytest.raises(ValidationError):
        multimode_frequencies(p, 10, "other")
