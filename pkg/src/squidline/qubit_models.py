"""Charge- and flux-qubit tripartite Hamiltonians and coupling estimates.

Hamiltonians are returned divided by hbar (units of rad/s) in the product
basis qubit x microwave x mechanical, with the qubit ordered (excited,
ground) so that sigma_z = diag(1, -1).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .constants import E, HBAR, PHI0, R_K
from .em_params import LineParams, line_constants
from .errors import TruncationError, ValidationError, ValidityError

Convention = Literal["charge", "flux"]

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([1.0, -1.0])
SM = np.array([[0.0, 0.0], [1.0, 0.0]])  # lowers excited (index 0) to ground (index 1)


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValidationError(f"{k} must be positive, got {v!r}")


@dataclass(frozen=True)
class ChargeQubitParams:
    c_sigma: float
    c_m: float
    v_dc: float = 1.0
    v_ac_amp: float = 0.0
    delta_n: float = 0.0
    e_j_eff: float = 0.0
    eta_c: float = 1.0

    def __post_init__(self):
        _positive(c_m=self.c_m, eta_c=self.eta_c)
        if self.c_sigma < self.c_m:
            raise ValidationError("c_sigma must be at least c_m")
        if self.v_ac_amp < 0:
            raise ValidationError("v_ac_amp must be non-negative")

    @property
    def e_c_sigma(self) -> float:
        return (2 * E) ** 2 / (2 * self.c_sigma)

    @property
    def polarization(self) -> float:
        """N_m = -C_m V_dc / 2e."""
        return -self.c_m * self.v_dc / (2 * E)


@dataclass(frozen=True)
class FluxQubitParams:
    delta_e: float
    gamma_pm: float
    m_m: float
    loop_l: float
    i_dc: float = 5e-3
    i_ac_amp: float = 0.0
    eta_l: float = 1.0

    def __post_init__(self):
        _positive(delta_e=self.delta_e, m_m=self.m_m, loop_l=self.loop_l, eta_l=self.eta_l)
        if abs(self.gamma_pm) > math.pi:
            raise ValidationError("|gamma_pm| must not exceed pi")
        if self.i_ac_amp < 0:
            raise ValidationError("i_ac_amp must be non-negative")


@dataclass(frozen=True)
class MechanicalParams:
    omega_m: float = 2 * math.pi * 50e6
    x_zp: float = 1e-14
    gap_d: float = 100e-9
    q_m: float = 1e4

    def __post_init__(self):
        _positive(omega_m=self.omega_m, x_zp=self.x_zp, gap_d=self.gap_d, q_m=self.q_m)
        if self.x_zp / self.gap_d > 1e-2:
            raise ValidationError("x_zp must be much smaller than the gap")


# Reference device used in the coupling comparison.
REFERENCE_C_W = 2.01e-10  # F/m
REFERENCE_L_W = 6.35e-7  # H/m


def reference_line(length: float) -> LineParams:
    return line_constants(REFERENCE_C_W, REFERENCE_L_W, length)


def reference_charge_qubit() -> ChargeQubitParams:
    return ChargeQubitParams(c_sigma=2.5e-15, c_m=250e-18, v_dc=1.0)


def reference_flux_qubit(delta_e: float = 13.26e9 * 2 * math.pi * HBAR, gamma_pm: float = -1.517) -> FluxQubitParams:
    return FluxQubitParams(delta_e=delta_e, gamma_pm=gamma_pm, m_m=5e-12, loop_l=500e-12, i_dc=5e-3)


# --------------------------------------------------------------------------
# coupling constants


def charge_couplings(lp: LineParams, cq: ChargeQubitParams, mp: MechanicalParams, l: float) -> dict:
    """Microwave and mechanical couplings of the capacitively coupled qubit (antinode mode)."""
    _positive(l=l)
    omega_w = 2 * math.pi * lp.phase_velocity / l
    g = omega_w * cq.c_m / (2 * cq.c_sigma) * math.sqrt((2 * E) ** 2 / (lp.c_w * l) / (HBAR * omega_w))
    x_tilde = cq.eta_c * mp.x_zp / mp.gap_d
    lam = x_tilde * cq.c_m / cq.c_sigma * E * cq.v_dc
    return {"omega_w": omega_w, "g_c": g, "lambda_c": lam, "x_tilde_c": x_tilde, "kappa_c": lam / (HBAR * mp.omega_m)}


def flux_couplings(lp: LineParams, fq: FluxQubitParams, mp: MechanicalParams, l: float) -> dict:
    """Microwave and mechanical couplings of the inductively coupled qubit (node mode)."""
    _positive(l=l)
    omega_w = math.pi * lp.phase_velocity / l
    phi = PHI0 / (2 * math.pi)
    g = omega_w * fq.m_m / fq.loop_l * math.sqrt(2 * phi**2 / (lp.l_w * l) / (HBAR * omega_w))
    x_tilde = fq.eta_l * mp.x_zp / mp.gap_d
    lam = x_tilde * fq.m_m / fq.loop_l * PHI0 * fq.i_dc / (2 * math.pi)
    return {"omega_w": omega_w, "g_l": g, "lambda_l": lam, "x_tilde_l": x_tilde, "kappa_l": lam / (HBAR * mp.omega_m)}


def coupling_energy_ratio(z: float) -> float:
    """R_K / (4 pi Z): flux-quantum addition energy over charging energy, square-rooted."""
    _positive(z=z)
    return R_K / (4 * math.pi * z)


def mechanical_coupling_ratio(cq: ChargeQubitParams, fq: FluxQubitParams) -> dict:
    """lambda_C / lambda_L and its prefactor multiplying (V_dc / I_dc) / 1 ohm."""
    pref = 4 * math.pi * cq.eta_c / fq.eta_l * (cq.c_m / cq.c_sigma) / (fq.m_m / fq.loop_l) / R_K
    ratio = pref * cq.v_dc / fq.i_dc if fq.i_dc else math.inf
    return {"prefactor_per_ohm": pref, "ratio": ratio}


# --------------------------------------------------------------------------
# Cooper pair box


def cpb_josephson_energy(e_j0: float, phi_ext: float) -> float:
    return 2 * e_j0 * math.cos(math.pi * phi_ext / PHI0)


@dataclass(frozen=True)
class CPBSpectrum:
    energies: np.ndarray
    charges: np.ndarray
    states: np.ndarray = field(repr=False)

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def cpb_full_spectrum(
    n_charge_states: int, e_c_sigma: float, e_j_eff: float, n_m: float, k: int = 4, edge_tol: float = 1e-6
) -> CPBSpectrum:
    """Lowest k levels of E_C (N - N_m)^2 - (E_J/2) (|N><N+1| + h.c.) in a charge window around N_m."""
    if n_charge_states < 5 or n_charge_states % 2 == 0:
        raise ValidationError("n_charge_states must be odd and at least 5")
    half = n_charge_states // 2
    centre = math.floor(n_m + 0.5)
    charges = np.arange(centre - half, centre + half + 1)
    diag = e_c_sigma * (charges - n_m) ** 2
    off = np.full(n_charge_states - 1, -e_j_eff / 2)
    k = min(k, n_charge_states)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    edge = np.max(v[[0, -1], :] ** 2)
    if edge > edge_tol:
        raise TruncationError(f"charge basis too small: edge occupation {edge:.2e}")
    return CPBSpectrum(w, charges, v)


def truncated_charge_qubit(e_c_sigma: float, e_j_eff: float, delta_n: float) -> np.ndarray:
    """Two-level Hamiltonian E_C dN sz - (E_J/2) sx + E_C dN^2 (energies in J)."""
    return e_c_sigma * delta_n * SZ - 0.5 * e_j_eff * SX + e_c_sigma * delta_n**2 * np.eye(2)


# --------------------------------------------------------------------------
# tripartite system


@dataclass(frozen=True)
class TripartiteSystem:
    """Qubit, microwave mode and mechanical mode.

    ``g`` and ``lam`` are the couplings as they appear in the Hamiltonian: for
    the flux qubit they already include the gamma_pm factor (see
    :meth:`flux`). ``drive`` maps time to a frequency in rad/s multiplying
    -(a_m + a_m^dagger).
    """

    omega_a: float
    omega_w: float
    omega_m: float
    g: float = 0.0
    lam: float = 0.0  # J
    x_tilde: float = 0.0
    drive: Callable[[float], float] | None = field(default=None, compare=False)
    truncation: tuple[int, int] = (8, 8)
    convention: Convention = "charge"

    def __post_init__(self):
        _positive(omega_a=self.omega_a, omega_w=self.omega_w, omega_m=self.omega_m)
        if self.convention not in ("charge", "flux"):
            raise ValidationError("convention must be 'charge' or 'flux'")
        n_w, n_m = self.truncation
        if n_w < 1 or n_m < 1:
            raise ValidationError("Fock cutoffs must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.truncation[0] * self.truncation[1]

    @property
    def signs(self) -> tuple[int, int, int]:
        """Signs of the g, lambda and x_tilde g terms."""
        return (1, 1, -1) if self.convention == "charge" else (-1, 1, 1)

    def with_truncation(self, n_w: int, n_m: int) -> "TripartiteSystem":
        return replace(self, truncation=(n_w, n_m))

    @classmethod
    def charge(cls, couplings: dict, omega_a: float, mp: MechanicalParams, drive=None, truncation=(8, 8)):
        return cls(
            omega_a, couplings["omega_w"], mp.omega_m, couplings["g_c"], couplings["lambda_c"], couplings["x_tilde_c"],
            drive, truncation, "charge",
        )

    @classmethod
    def flux(cls, couplings: dict, fq: FluxQubitParams, mp: MechanicalParams, drive=None, truncation=(8, 8)):
        return cls(
            fq.delta_e / HBAR, couplings["omega_w"], mp.omega_m, couplings["g_l"] * fq.gamma_pm,
            couplings["lambda_l"] * fq.gamma_pm, couplings["x_tilde_l"], drive, truncation, "flux",
        )


def ladder(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n)), 1)


def tripartite_operators(n_w: int, n_m: int) -> dict[str, np.ndarray]:
    """Embedded operators sx, sz, sm, a_w, a_m on the product space."""
    iq, iw, im = np.eye(2), np.eye(n_w), np.eye(n_m)

    def emb(q, w, m):
        return np.kron(np.kron(q, w), m)

    return {
        "sx": emb(SX, iw, im),
        "sz": emb(SZ, iw, im),
        "sm": emb(SM, iw, im),
        "a_w": emb(iq, ladder(n_w), im),
        "a_m": emb(iq, iw, ladder(n_m)),
    }


def tripartite_parts(sys: TripartiteSystem) -> tuple[np.ndarray, np.ndarray]:
    """(static H/hbar, drive operator) with H(t) = H0 - drive(t) (a_m + a_m^dagger)."""
    ops = tripartite_operators(*sys.truncation)
    sx = ops["sx"]
    aw, am = ops["a_w"], ops["a_m"]
    xw = aw + aw.T
    xm = am + am.T
    sg, sl, sxg = sys.signs
    H = (
        0.5 * sys.omega_a * ops["sz"]
        + sys.omega_w * aw.T @ aw
        + sys.omega_m * am.T @ am
        + sg * sys.g * xw @ sx
        + sl * sys.lam / HBAR * xm @ sx
        + sxg * sys.x_tilde * sys.g * xw @ xm @ sx
    )
    return 0.5 * (H + H.T), xm


def tripartite_matrix(sys: TripartiteSystem, t: float = 0.0) -> np.ndarray:
    H0, xm = tripartite_parts(sys)
    if sys.drive is None:
        return H0
    return H0 - sys.drive(t) * xm


def build_tripartite_hamiltonian(
    sys: TripartiteSystem, t: float = 0.0, check: bool = True, rtol: float = 1e-6
) -> np.ndarray:
    """Hermitian H/hbar (rad/s) at time t.

    With ``check`` the lowest four eigenvalues are recomputed with both
    cutoffs raised by two and must agree to ``rtol`` relative to the largest
    bare frequency.
    """
    if min(sys.truncation) < 4:
        raise ValidationError("Fock cutoffs must be at least 4")
    H = tripartite_matrix(sys, t)
    if check:
        lo = np.linalg.eigvalsh(H)[:4]
        bigger = sys.with_truncation(sys.truncation[0] + 2, sys.truncation[1] + 2)
        hi = np.linalg.eigvalsh(tripartite_matrix(bigger, t))[:4]
        scale = max(sys.omega_a, sys.omega_w, sys.omega_m)
        shift = np.max(np.abs(hi - lo)) / scale
        if shift > rtol:
            raise TruncationError(f"lowest levels move by {shift:.2e} (relative) when cutoffs grow by 2")
    return H


def to_triplets(H: np.ndarray, atol: float = 0.0) -> list[tuple[int, int, float, float]]:
    """Non-zero entries as (row, col, re, im)."""
    rows, cols = np.nonzero(np.abs(H) > atol)
    return [(int(r), int(c), float(H[r, c].real), float(np.imag(H[r, c]))) for r, c in zip(rows, cols)]


# --------------------------------------------------------------------------
# dispersive limit and drive estimates


def dispersive_estimates(sys: TripartiteSystem) -> dict:
    """Dispersive strengths in the far-detuned regime.

    ``tri_coupling`` is x_tilde g / omega_w; ``chi_qubit`` is
    x_tilde g^2 / |omega_a - omega_w|. The mechanical shift is the
    qubit-state-dependent frequency change +-chi_m from the lambda term.
    """
    detuning = abs(sys.omega_a - sys.omega_w)
    g = abs(sys.g)
    if g > 0 and detuning < 10 * g:
        raise ValidityError(f"|omega_a - omega_w| = {detuning:.3g} is below 10 g = {10 * g:.3g}")
    lam = sys.lam / HBAR
    return {
        "chi_qubit": sys.x_tilde * g**2 / detuning if g else 0.0,
        "tri_coupling": sys.x_tilde * g / sys.omega_w,
        "chi_microwave": g**2 / (sys.omega_a - sys.omega_w) if g else 0.0,
        "chi_mechanical": 2 * lam**2 * sys.omega_a / (sys.omega_a**2 - sys.omega_m**2),
        "g_over_detuning": g / detuning if detuning else math.inf,
    }


def steady_state_amplitude(kind: str, params, mp: MechanicalParams) -> float:
    """Resonantly driven mechanical amplitude in units of x_zp."""
    if kind == "charge":
        cq = params
        return (
            cq.eta_c * mp.x_zp / mp.gap_d * cq.c_m / cq.c_sigma * cq.c_m * abs(cq.v_dc) * cq.v_ac_amp
            / (HBAR * mp.omega_m) * mp.q_m
        )
    if kind == "flux":
        fq = params
        return (
            fq.eta_l * mp.x_zp / mp.gap_d * fq.m_m / fq.loop_l * fq.m_m * abs(fq.i_dc) * fq.i_ac_amp
            / (HBAR * mp.omega_m) * mp.q_m
        )
    raise ValidationError(f"unknown kind {kind!r}")


def bias_safety_check(kind: str, params) -> dict:
    """Compare the ac drive amplitude with the bias period of the qubit."""
    if kind == "charge":
        threshold, amp, unit = 2 * E / params.c_m, params.v_ac_amp, "V"
    elif kind == "flux":
        threshold, amp, unit = 2 * PHI0 / params.m_m, params.i_ac_amp, "A"
    else:
        raise ValidationError(f"unknown kind {kind!r}")
    margin = math.inf if amp == 0 else threshold / amp
    # "considerably smaller": at least a factor of ten
    return {"kind": kind, "threshold": threshold, "amplitude": amp, "unit": unit, "margin": margin, "ok": margin >= 10}


# --------------------------------------------------------------------------
# comparison report


def compare(
    cq: ChargeQubitParams | None = None,
    fq: FluxQubitParams | None = None,
    mp: MechanicalParams | None = None,
    l_charge: float = 2e-2,
    l_flux: float = 1e-2,
    line_c: LineParams | None = None,
    line_f: LineParams | None = None,
) -> dict:
    """Charge versus flux implementation figures of merit."""
    cq = cq or reference_charge_qubit()
    fq = fq or reference_flux_qubit()
    mp = mp or MechanicalParams()
    line_c = line_c or reference_line(l_charge)
    line_f = line_f or reference_line(l_flux)
    cc = charge_couplings(line_c, cq, mp, l_charge)
    fc = flux_couplings(line_f, fq, mp, l_flux)
    unit_c = replace(cq, v_ac_amp=1.0)
    unit_f = replace(fq, i_ac_amp=1.0)
    return {
        "charge": {
            "omega_w": cc["omega_w"],
            "g_over_omega_w": cc["g_c"] / cc["omega_w"],
            "lambda_J": cc["lambda_c"],
            "kappa": cc["kappa_c"],
            "x_tilde_g_over_omega_w": cc["x_tilde_c"] * cc["g_c"] / cc["omega_w"],
            "alpha0_per_volt": steady_state_amplitude("charge", unit_c, mp),
            "bias_check": bias_safety_check("charge", cq),
        },
        "flux": {
            "omega_w": fc["omega_w"],
            "g_over_omega_w": fc["g_l"] / fc["omega_w"],
            "lambda_J": fc["lambda_l"],
            "kappa": fc["kappa_l"],
            "x_tilde_g_over_omega_w": fc["x_tilde_l"] * fc["g_l"] / fc["omega_w"],
            "alpha0_per_ampere": steady_state_amplitude("flux", unit_f, mp),
            "bias_check": bias_safety_check("flux", fq),
        },
        "energy_ratio": coupling_energy_ratio(line_f.impedance),
        "mechanical_ratio": mechanical_coupling_ratio(cq, fq),
        "inputs": {"charge": asdict(cq), "flux": asdict(fq), "mechanical": asdict(mp)},
    }


def format_comparison(rep: dict) -> str:
    rows = [
        ("g / omega_w", rep["charge"]["g_over_omega_w"], rep["flux"]["g_over_omega_w"]),
        ("lambda (J)", rep["charge"]["lambda_J"], rep["flux"]["lambda_J"]),
        ("lambda / hbar omega_m", rep["charge"]["kappa"], rep["flux"]["kappa"]),
        ("x_tilde g / omega_w", rep["charge"]["x_tilde_g_over_omega_w"], rep["flux"]["x_tilde_g_over_omega_w"]),
        ("|alpha0| per unit drive", rep["charge"]["alpha0_per_volt"], rep["flux"]["alpha0_per_ampere"]),
        ("drive threshold", rep["charge"]["bias_check"]["threshold"], rep["flux"]["bias_check"]["threshold"]),
    ]
    out = [f"{'quantity':<26}{'charge':>14}{'flux':>14}"]
    out += [f"{name:<26}{c:>14.4g}{f:>14.4g}" for name, c, f in rows]
    out.append(f"R_K/(4 pi Z) = {rep['energy_ratio']:.4g}")
    out.append(f"lambda_C/lambda_L prefactor = {rep['mechanical_ratio']['prefactor_per_ohm']:.4g} per ohm")
    return "\n".join(out)
