import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squidline.constants import EPS0, MU0, NH_PER_CM, PF_PER_CM
from squidline.em_params import (
    FREE,
    GROUND,
    CapacitanceMatrix,
    DeviceGeometry,
    GridConfig,
    beam_mutuals,
    conductor_potentials,
    cpw_cross_section,
    energy_matrix,
    extract,
    line_constants,
    mutual_capacitance_per_length,
    self_inductance_per_length,
    solve_capacitance_matrix,
    stiffness_matrix,
)
from squidline.errors import ConvergenceError, ValidationError


def coax_energy(a, b, n, material):
    x = np.linspace(-1.05 * b, 1.05 * b, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    r = np.hypot(X, Y)
    labels = np.full(X.shape, FREE)
    labels[r <= a] = 0
    labels[r >= b] = GROUND
    K = stiffness_matrix(x, x, np.full((n - 1, n - 1), material))
    fields = conductor_potentials(K, labels, 1, 1e-10, 50)
    return energy_matrix(K, fields)[0, 0]


@pytest.fixture(scope="module")
def default_extraction():
    return extract(DeviceGeometry())


def test_coax_capacitance_oracle():
    a, b = 1.0, 3.0
    c = coax_energy(a, b, 401, EPS0)
    assert c / (2 * math.pi * EPS0 / math.log(b / a)) == pytest.approx(1.0, rel=0.02)


def test_coax_inductance_oracle():
    a, b = 1.0, 3.0
    p = coax_energy(a, b, 401, 1.0 / MU0)
    assert (1.0 / p) / (MU0 * math.log(b / a) / (2 * math.pi)) == pytest.approx(1.0, rel=0.02)


def test_coax_converges_with_resolution():
    exact = 2 * math.pi * EPS0 / math.log(3.0)
    errs = [abs(coax_energy(1.0, 3.0, n, EPS0) / exact - 1) for n in (101, 201, 401)]
    assert errs[0] > errs[1] > errs[2]


def test_capacitance_matrix_is_spd(default_extraction):
    m = default_extraction["capacitance"]
    assert m.c11 > 0 and m.c22 > 0 and m.c11 * m.c22 > m.c12**2


def test_scale_invariance():
    geom = DeviceGeometry()
    cfg = GridConfig()
    c1 = mutual_capacitance_per_length(solve_capacitance_matrix(geom, cfg))
    big = geom.scaled(2.0)
    c2 = mutual_capacitance_per_length(solve_capacitance_matrix(big, GridConfig(cell_size=2 * cfg.cell_size)))
    assert c2 / c1 == pytest.approx(1.0, rel=1e-9)


@pytest.mark.slow
def test_grid_refinement_changes_less_than_three_percent(default_extraction):
    fine = GridConfig(cell_size=12.5e-9)
    geom = DeviceGeometry()
    c_fine = mutual_capacitance_per_length(solve_capacitance_matrix(geom, fine))
    l_fine = self_inductance_per_length(geom, fine)
    lp = default_extraction["line"]
    assert abs(c_fine / lp.c_w - 1) < 0.03
    assert abs(l_fine / lp.l_w - 1) < 0.03


def test_third_excitation_agrees():
    geom = DeviceGeometry()
    cfg = GridConfig()
    cs = cpw_cross_section(geom, cfg)
    K = stiffness_matrix(cs.x, cs.y, EPS0 * cs.permittivity)
    m = solve_capacitance_matrix(geom, cfg)
    both = cs.labels.copy()
    both[both == 1] = 0
    w = energy_matrix(K, conductor_potentials(K, both, 1, 1e-12, 20))[0, 0]
    assert w / (m.c11 + 2 * m.c12 + m.c22) == pytest.approx(1.0, rel=1e-8)


def test_inductance_sign_flip():
    geom = DeviceGeometry()
    ratio = self_inductance_per_length(geom, current=-2.0) / self_inductance_per_length(geom)
    assert ratio == pytest.approx(1.0, rel=1e-12)


def test_line_constants_reference_values():
    lp = line_constants(2.01 * PF_PER_CM, 6.35 * NH_PER_CM, 1e-2)
    assert lp.impedance == pytest.approx(56.2, abs=0.1)
    assert lp.phase_velocity == pytest.approx(8.85e7, rel=5e-3)
    assert lp.f1 == pytest.approx(4.43e9, rel=5e-3)
    assert lp.f2 == pytest.approx(2 * lp.f1, rel=1e-15)


def test_line_constants_identity():
    lp = line_constants(1.0, 1.0, 1.0)
    assert lp.impedance == 1.0 and lp.phase_velocity == 1.0


@given(st.floats(1e-12, 1e-9), st.floats(1e-8, 1e-5))
def test_impedance_velocity_identities(c_w, l_w):
    lp = line_constants(c_w, l_w, 1e-2)
    assert lp.impedance * lp.phase_velocity == pytest.approx(1 / c_w, rel=1e-12)
    assert lp.impedance / lp.phase_velocity == pytest.approx(l_w, rel=1e-12)


def test_series_capacitors():
    assert mutual_capacitance_per_length(CapacitanceMatrix(3.0, 0.0, 3.0)) == pytest.approx(1.5)


@given(
    st.floats(0.1, 10.0),
    st.floats(0.1, 10.0),
    st.floats(-0.99, 0.99),
)
def test_mutual_capacitance_energy_oracle_and_swap(c11, c22, frac):
    c12 = frac * math.sqrt(c11 * c22)
    m = CapacitanceMatrix(c11, c12, c22)
    cm = mutual_capacitance_per_length(m)
    assert cm == pytest.approx(mutual_capacitance_per_length(m.swapped()), rel=1e-12)
    # with the reference floating, charge neutrality fixes the common potential
    C = m.as_array()
    # V = (1/2 + s, -1/2 + s); choose s so that the total charge vanishes
    s = -(C @ np.array([0.5, -0.5])).sum() / C.sum()
    v = np.array([0.5 + s, -0.5 + s])
    assert 2 * (0.5 * v @ C @ v) == pytest.approx(cm, rel=1e-10)


def test_non_spd_matrix_rejected():
    with pytest.raises(ValidationError):
        CapacitanceMatrix(1.0, 2.0, 1.0)


@pytest.mark.parametrize(
    "kw",
    [{"beam_gap": 0.0}, {"lateral_gap": -1e-6}, {"beam_gap": 6e-6}, {"beam_length": 2e-2}],
)
def test_degenerate_geometry_rejected(kw):
    with pytest.raises(ValidationError):
        DeviceGeometry(**kw)


def test_grid_must_resolve_beam_gap():
    with pytest.raises(ValidationError):
        cpw_cross_section(DeviceGeometry(), GridConfig(cell_size=50e-9))


def test_iteration_limit_reported():
    geom = DeviceGeometry()
    with pytest.raises(ConvergenceError):
        solve_capacitance_matrix(geom, GridConfig(relaxation_tolerance=1e-30, max_iterations=1))


def test_beam_mutuals_within_order_bands():
    mut = beam_mutuals(DeviceGeometry())
    assert 25 <= mut["c_m_per_len"] / 1e-12 <= 100
    assert 0.5 <= mut["m_m_per_len"] / 1e-6 <= 2


def test_beam_mutuals_decrease_with_gap():
    gaps = np.geomspace(50e-9, 4.5e-6, 12)
    vals = [beam_mutuals(DeviceGeometry(beam_gap=g, beam_width=100e-9)) for g in gaps]
    c = [v["c_m_per_len"] for v in vals]
    m = [v["m_m_per_len"] for v in vals]
    assert np.all(np.diff(c) < 0) and np.all(np.diff(m) < 0)
    far = beam_mutuals(DeviceGeometry(lateral_gap=1.0, cpw_length=2.0, beam_gap=0.9))
    assert far["c_m_per_len"] < 0.2 * c[-1]


def test_extraction_report_units(default_extraction):
    rep = default_extraction["report"]
    lp = default_extraction["line"]
    assert rep["C_w_pF_per_cm"] == pytest.approx(lp.c_w / PF_PER_CM, rel=1e-12)
    assert rep["Z_ohm"] == pytest.approx(math.sqrt(lp.l_w / lp.c_w))
    assert rep["L_w_lateral_return_nH_per_cm"] < rep["L_w_nH_per_cm"]


@settings(max_examples=5, deadline=None)
@given(st.floats(0.5, 3.0))
def test_vacuum_capacitance_scales_with_permittivity(eps_r):
    # a uniform dielectric multiplies every capacitance by eps_r
    geom = DeviceGeometry(substrate_permittivity=1.0)
    cfg = GridConfig()
    cs = cpw_cross_section(geom, cfg)
    K1 = stiffness_matrix(cs.x, cs.y, EPS0 * np.ones_like(cs.permittivity))
    K2 = stiffness_matrix(cs.x, cs.y, eps_r * EPS0 * np.ones_like(cs.permittivity))
    labels = cs.labels
    w1 = energy_matrix(K1, conductor_potentials(K1, labels, 2, 1e-12, 20))
    w2 = energy_matrix(K2, conductor_potentials(K2, labels, 2, 1e-12, 20))
    np.testing.assert_allclose(w2, eps_r * w1, rtol=1e-9)
