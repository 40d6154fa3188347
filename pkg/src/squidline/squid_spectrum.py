"""Double-well spectrum of the inductively coupled dc SQUID.

The two lowest levels are approximated by a 2x2 generalized eigenproblem in
the non-orthogonal basis of harmonic ground states centred on each well
minimum. A finite-difference diagonalization on a phase grid serves as an
independent check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.optimize import brentq

from .constants import E, PHI0
from .errors import DomainError, NoDoubleWell, ValidationError

SCAN_POINTS = 400


@dataclass(frozen=True)
class SquidParams:
    """dc SQUID parameters, SI units.

    ``branch_n`` selects the flux branch: the potential is evaluated for
    Phi_eff + 2 n Phi0, so every phase shifts by -2 pi n.
    """

    i_c: float = 2.0e-6
    c_j: float = 1.0e-15
    loop_l: float = 500e-12
    phi_ext: float = -PHI0
    m_m: float = 0.0
    i_dc: float = 0.0
    branch_n: int = 0

    def __post_init__(self):
        if not (self.i_c > 0 and self.c_j > 0 and self.loop_l > 0):
            raise ValidationError("i_c, c_j and loop_l must be positive")
        if int(self.branch_n) != self.branch_n:
            raise ValidationError("branch_n must be an integer")

    @property
    def beta_l(self) -> float:
        return 2 * math.pi * self.loop_l * self.i_c / PHI0

    @property
    def e_j(self) -> float:
        return self.i_c * PHI0 / (2 * math.pi)

    @property
    def e_cj(self) -> float:
        return (2 * E) ** 2 / (2 * self.c_j)

    @property
    def effective_flux(self) -> float:
        return self.phi_ext - self.m_m * self.i_dc

    @property
    def offset(self) -> float:
        """Phase offset s in the quadratic term (gamma + s)^2."""
        return 2 * math.pi * self.branch_n + math.pi * self.effective_flux / PHI0

    @property
    def centre(self) -> float:
        return -self.offset

    def with_flux(self, phi_eff_over_phi0: float) -> "SquidParams":
        return SquidParams(
            self.i_c, self.c_j, self.loop_l, phi_eff_over_phi0 * PHI0 + self.m_m * self.i_dc,
            self.m_m, self.i_dc, self.branch_n,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "SquidParams":
        d = dict(d)
        if "phi_eff_over_phi0" in d:
            d["phi_ext"] = d.pop("phi_eff_over_phi0") * PHI0 + d.get("m_m", 0.0) * d.get("i_dc", 0.0)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown SquidParams keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class DoubleWellPotential:
    effective_flux: float
    beta_l: float
    e_j: float
    branch_n: int = 0

    @classmethod
    def of(cls, p: SquidParams) -> "DoubleWellPotential":
        return cls(p.effective_flux, p.beta_l, p.e_j, p.branch_n)

    def __call__(self, gamma):
        s = 2 * math.pi * self.branch_n + math.pi * self.effective_flux / PHI0
        g = np.asarray(gamma, dtype=float)
        return self.e_j * ((g + s) ** 2 / self.beta_l - np.cos(g))


def potential(gamma, p: SquidParams):
    """E_J [ (gamma + s)^2 / beta_L - cos gamma ]."""
    return DoubleWellPotential.of(p)(gamma)


def _force(gamma, p: SquidParams):
    return 2.0 / p.beta_l * (gamma + p.offset) + np.sin(gamma)


def find_minima(p: SquidParams) -> tuple[float, float]:
    """The two lowest local minima of the potential within one period of the centre."""
    c = p.centre
    grid = np.linspace(c - math.pi, c + math.pi, SCAN_POINTS + 1)
    f = _force(grid, p)
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], f[:-1], f[1:]):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(_force, a, b, args=(p,), xtol=1e-15, rtol=1e-15, maxiter=200))
    minima = [r for r in roots if 2.0 / p.beta_l + math.cos(r) > 0]
    if len(minima) < 2:
        if minima:
            lone = minima[0]
        else:
            lone = float(grid[np.argmin(potential(grid, p))])
        raise NoDoubleWell(lone)
    minima.sort(key=lambda g: float(potential(g, p)))
    g1, g2 = sorted(minima[:2])
    return g1, g2


@dataclass(frozen=True)
class VariationalSpectrum:
    e_minus: float
    e_plus: float
    delta_e: float
    coeffs: tuple[tuple[float, float], tuple[float, float]]  # (A, B) for minus, plus
    overlap_s: float
    minima: tuple[float, float]
    widths: tuple[float, float]  # Gaussian exponents a_i in exp(-a_i (g - g_i)^2 / 2)
    hamiltonian: np.ndarray = field(repr=False, compare=False)
    overlap: np.ndarray = field(repr=False, compare=False)
    position: np.ndarray = field(repr=False, compare=False)
    accurate: bool = True

    def basis(self, gamma) -> np.ndarray:
        g = np.asarray(gamma, dtype=float)
        return np.array(
            [(a / math.pi) ** 0.25 * np.exp(-a * (g - gi) ** 2 / 2) for a, gi in zip(self.widths, self.minima)]
        )

    def wavefunctions(self, gamma) -> tuple[np.ndarray, np.ndarray]:
        b = self.basis(gamma)
        return tuple(np.asarray(c) @ b for c in self.coeffs)

    def report(self) -> dict:
        from .constants import H, MEV

        return {
            "E_minus_meV": self.e_minus / MEV,
            "E_plus_meV": self.e_plus / MEV,
            "delta_E_ueV": self.delta_e / MEV * 1e3,
            "delta_E_over_h_GHz": self.delta_e / H / 1e9,
            "psi_minus_AB": list(self.coeffs[0]),
            "psi_plus_AB": list(self.coeffs[1]),
            "overlap": self.overlap_s,
            "minima_rad": list(self.minima),
            "accurate": self.accurate,
        }


def gaussian_matrices(p: SquidParams, minima, widths):
    """Closed-form H, S and position matrices in the two-Gaussian basis."""
    ej, ec, bl, s0 = p.e_j, p.e_cj, p.beta_l, p.offset
    n = len(minima)
    H = np.empty((n, n))
    S = np.empty((n, n))
    G = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            ai, aj = widths[i], widths[j]
            gi, gj = minima[i], minima[j]
            psum = ai + aj
            c = (ai * gi + aj * gj) / psum
            var = 1.0 / psum  # variance of the normalized product Gaussian
            sij = math.sqrt(2 * math.sqrt(ai * aj) / psum) * math.exp(-ai * aj * (gi - gj) ** 2 / (2 * psum))
            kinetic = ec * ai * aj * (var + (c - gi) * (c - gj))
            pot = ej * ((var + (c + s0) ** 2) / bl - math.cos(c) * math.exp(-var / 2))
            S[i, j] = sij
            H[i, j] = sij * (kinetic + pot)
            G[i, j] = sij * c
    return 0.5 * (H + H.T), 0.5 * (S + S.T), 0.5 * (G + G.T)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    lead = v[0] if abs(v[0]) > 1e-14 else v[1]
    return v if lead >= 0 else -v


def variational_spectrum(p: SquidParams) -> VariationalSpectrum:
    """Two lowest levels from harmonic ground states of each well.

    Eigenvectors are normalized in the overlap metric and signed so that the
    first-well coefficient A is non-negative.
    """
    g1, g2 = find_minima(p)
    widths = tuple(math.sqrt(p.e_j * (1.0 / p.beta_l + math.cos(g) / 2) / p.e_cj) for g in (g1, g2))
    H, S, G = gaussian_matrices(p, (g1, g2), widths)
    w, v = eigh(H, S)
    vm, vp = _fix_sign(v[:, 0]), _fix_sign(v[:, 1])
    s12 = float(S[0, 1])
    accurate = abs(s12) < 0.5
    if not accurate:
        warnings.warn(f"basis overlap {s12:.3f} is not small; two-state approximation unreliable", stacklevel=2)
    return VariationalSpectrum(
        e_minus=float(w[0]),
        e_plus=float(w[1]),
        delta_e=float(w[1] - w[0]),
        coeffs=(tuple(map(float, vm)), tuple(map(float, vp))),
        overlap_s=s12,
        minima=(g1, g2),
        widths=widths,
        hamiltonian=H,
        overlap=S,
        position=G,
        accurate=accurate,
    )


@dataclass(frozen=True)
class PhaseMatrixElements:
    gamma_pp: float
    gamma_mm: float
    gamma_pm: float

    def truncated_operator(self) -> np.ndarray:
        """gamma_pm sx + (gpp - gmm)/2 sz + (gpp + gmm)/2 I in the (+, -) basis."""
        sx = np.array([[0.0, 1.0], [1.0, 0.0]])
        sz = np.diag([1.0, -1.0])
        return self.gamma_pm * sx + 0.5 * (self.gamma_pp - self.gamma_mm) * sz + 0.5 * (
            self.gamma_pp + self.gamma_mm
        ) * np.eye(2)


def phase_matrix_elements(spec: VariationalSpectrum) -> PhaseMatrixElements:
    vm = np.array(spec.coeffs[0])
    vp = np.array(spec.coeffs[1])
    G = spec.position
    return PhaseMatrixElements(float(vp @ G @ vp), float(vm @ G @ vm), float(vp @ G @ vm))


@dataclass
class GridSpectrum:
    energies: np.ndarray
    gamma: np.ndarray
    states: np.ndarray  # columns, normalized so sum |psi|^2 dgamma = 1


def grid_spectrum(
    p: SquidParams, span: float | None = None, points: int = 4000, k: int = 2, potential_fn=None
) -> GridSpectrum:
    """Lowest k levels of -E_CJ d^2/dg^2 + V(g) by second-order finite differences.

    ``potential_fn`` replaces the SQUID potential (used for harmonic checks).
    The grid is centred on the potential centre and wavefunctions vanish at
    its ends.
    """
    if points < 2000:
        raise ValidationError("grid_spectrum needs at least 2000 points")
    span = 4 * math.pi if span is None else span
    g = np.linspace(p.centre - span / 2, p.centre + span / 2, points)
    h = g[1] - g[0]
    V = potential(g, p) if potential_fn is None else potential_fn(g)
    diag = 2 * p.e_cj / h**2 + V
    off = np.full(points - 1, -p.e_cj / h**2)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    v = v / math.sqrt(h)
    edge = np.max(np.abs(v[[0, -1], :]), axis=0) / np.max(np.abs(v), axis=0)
    if np.any(edge > 1e-6):
        raise DomainError(f"span {span:.3g} rad too small: boundary amplitude {edge.max():.2e}")
    return GridSpectrum(w, g, v)


def wavefunction_table(p: SquidParams, spec: VariationalSpectrum, gamma=None) -> list[tuple]:
    """Rows of (gamma, V, |psi_minus|^2, |psi_plus|^2) for plotting."""
    if gamma is None:
        gamma = np.linspace(p.centre - math.pi, p.centre + math.pi, 401)
    V = potential(gamma, p)
    pm, pp = spec.wavefunctions(gamma)
    return [tuple(map(float, r)) for r in zip(gamma, V, pm**2, pp**2)]
