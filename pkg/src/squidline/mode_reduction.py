"""Single-mode reduction of the line coupled to a linearized SQUID.

The line field on (-l/2, l/2) is expanded in even cosine modes
cos(2 pi n z / l), which carry zero current at both ends. The SQUID couples
at z = 0 through the capacitance ratio epsilon. Every equation is divided by
C_Sigma, so with x = (gamma, q_0, ..., q_N) the Lagrangian is

    T = 1/2 [gamma_dot^2 - 2 eps gamma_dot phi0_dot + eps phi0_dot^2
             + (beta / v^2) sum_n N_n q_n_dot^2],
    U = 1/2 [alpha gamma^2 + beta sum_n N_n k_n^2 q_n^2],

with phi0 = sum_n q_n the field at the SQUID, N_0 = l and N_n = l/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh
from scipy.optimize import brentq

from .constants import PHI0
from .errors import AccuracyError, ConditioningError, ValidationError

# numeric stand-in for "much less than" in validity checks
MUCH_LESS = 0.1


@dataclass(frozen=True)
class ReductionParams:
    alpha: float
    beta: float
    epsilon: float
    v: float
    l: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.v > 0 and self.l > 0):
            raise ValidationError("alpha, beta, v and l must be positive")
        if not 0 <= self.epsilon < 0.3:
            raise ValidationError("epsilon must lie in [0, 0.3)")

    @property
    def omega_w(self) -> float:
        """Bare frequency of the antinode mode, 2 pi v / l."""
        return 2 * math.pi * self.v / self.l

    @property
    def rho(self) -> float:
        """v^2 / (beta l), equal to C_Sigma / (C_w l)."""
        return self.v**2 / (self.beta * self.l)

    @property
    def delta_omega(self) -> float:
        return math.sqrt(self.alpha) - self.omega_w

    @classmethod
    def from_circuit(cls, i_c, phi_ext, c_sigma, c_m, l_w, c_w, l) -> "ReductionParams":
        alpha = 4 * math.pi * i_c * math.cos(math.pi * phi_ext / PHI0) / (PHI0 * c_sigma)
        return cls(alpha, 1.0 / (c_sigma * l_w), c_m / c_sigma, 1.0 / math.sqrt(l_w * c_w), l)

    @classmethod
    def from_ratios(cls, omega_w: float, alpha_ratio: float, rho: float, epsilon: float, v: float = 1.0):
        """Parameters from omega_w, alpha / omega_w^2 and rho."""
        l = 2 * math.pi * v / omega_w
        return cls(alpha_ratio * omega_w**2, v**2 / (rho * l), epsilon, v, l)


@dataclass(frozen=True)
class MatchedCoefficients:
    """Coefficients of gamma'' + a gamma = b eps phi'', phi'' + c phi = d eps gamma''."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def of(cls, p: ReductionParams) -> "MatchedCoefficients":
        return cls(p.alpha, 1.0, p.omega_w**2 * (1 - 2 * p.rho * p.epsilon), 2 * p.rho)

    def normal_frequencies(self, epsilon: float) -> tuple[float, float]:
        """Exact normal frequencies (SQUID-like, line-like)."""
        bd = self.b * self.d * epsilon**2
        # (a - w^2)(c - w^2) = bd w^4
        A, B, C = 1 - bd, -(self.a + self.c), self.a * self.c
        disc = math.sqrt(B * B - 4 * A * C)
        r1, r2 = (-B - disc) / (2 * A), (-B + disc) / (2 * A)
        w1, w2 = math.sqrt(r1), math.sqrt(r2)
        if abs(w1 - math.sqrt(self.a)) <= abs(w2 - math.sqrt(self.a)):
            return w1, w2
        return w2, w1

    def second_order(self, epsilon: float) -> tuple[float, float]:
        """Normal frequencies expanded to O(eps^2)."""
        bd = self.b * self.d
        wp = math.sqrt(self.a) * (1 + self.a / 2 * bd / (self.a - self.c) * epsilon**2)
        wm = math.sqrt(self.c) * (1 - self.c / 2 * bd / (self.a - self.c) * epsilon**2)
        return wp, wm


# --------------------------------------------------------------------------
# secular equation


def secular_function(omega, p: ReductionParams):
    """Secular equation multiplied through by cos(omega l / 2v), which removes its poles."""
    w = np.asarray(omega, dtype=float)
    th = w * p.l / (2 * p.v)
    c, s = np.cos(th), np.sin(th)
    eps = p.epsilon
    return (p.alpha - w**2) * (0.5 * w**2 * eps * c + p.beta * w / p.v * s) + 0.5 * w**4 * eps**2 * c


def _line_branch_root(p: ReductionParams, m: int) -> float:
    """Zero of omega^2 eps/2 + (beta omega / v) tan(omega l / 2v) on the branch theta in (pi/2 + (m-1) pi, m pi)."""
    k = p.l / (2 * p.v)

    def f(w):
        th = w * k
        return 0.5 * w**2 * p.epsilon * math.cos(th) + p.beta * w / p.v * math.sin(th)

    lo = (math.pi / 2 + (m - 1) * math.pi) / k
    hi = m * math.pi / k
    return brentq(f, lo * (1 + 1e-12), hi, xtol=1e-14 * hi, rtol=1e-15)


def secular_roots(p: ReductionParams, points: int = 4000) -> tuple[float, float]:
    """(omega_plus, omega_minus): the SQUID-like and line-like roots among the two lowest.

    Roots are bracketed on a grid that includes sqrt(alpha) and the bare
    line-branch zero, so that nearly degenerate pairs are always separated.
    """
    if p.epsilon == 0:
        return math.sqrt(p.alpha), p.omega_w
    wa = math.sqrt(p.alpha)
    top = 1.5 * max(wa, p.omega_w)
    specials = [wa, _line_branch_root(p, 1), _line_branch_root(p, 2)]
    grid = np.unique(np.concatenate([np.linspace(0, top, points + 1)[1:], [s for s in specials if s < top]]))
    f = secular_function(grid, p)
    roots = []
    lo_w = grid[0] * 1e-3
    f_lo = float(secular_function(lo_w, p))
    prev_w, prev_f = lo_w, f_lo
    for w, fw in zip(grid, f):
        if fw == 0.0:
            roots.append(float(w))
        elif prev_f * fw < 0:
            roots.append(brentq(secular_function, prev_w, w, args=(p,), xtol=1e-15 * w, rtol=1e-15))
        prev_w, prev_f = w, fw
        if len(roots) >= 2:
            break
    if len(roots) < 2:
        raise ConditioningError("fewer than two positive secular roots found")
    half = p.l / (2 * p.v)
    for r in roots:
        th = r * half
        nearest_pole = (math.floor(th / math.pi - 0.5) + 0.5) * math.pi
        for pole in (nearest_pole, nearest_pole + math.pi):
            if abs(th - pole) < 1e-6 * pole:
                raise ConditioningError(f"root {r:.6g} lies within 1e-6 of a tangent pole")
    r1, r2 = roots
    return (r1, r2) if abs(r1 - wa) <= abs(r2 - wa) else (r2, r1)


def perturbative_modes(p: ReductionParams, form: str = "consistent") -> tuple[float, float]:
    """Second-order (omega_plus, omega_minus).

    ``form="consistent"`` keeps every O(eps^2) term: the cotangent form of
    omega_plus and omega_minus with its rho^2 eps^2 term. ``form="expanded"``
    uses the cotangent expanded about the line frequency and drops that term,
    which leaves O(eps^2 delta) residuals.
    """
    ww, rho, eps = p.omega_w, p.rho, p.epsilon
    det = p.alpha - ww**2
    if abs(det) < 1e-12 * ww**2:
        raise ConditioningError("alpha is degenerate with the line mode")
    shift = ww**3 * rho / det * eps**2
    if form == "expanded":
        return math.sqrt(p.alpha) + shift, ww * (1 - rho * eps) - shift
    if form != "consistent":
        raise ValidationError(f"unknown form {form!r}")
    wa = math.sqrt(p.alpha)
    wp = wa + p.alpha * p.v / (4 * p.beta) / math.tan(wa * p.l / (2 * p.v)) * eps**2
    wm = ww * (1 - rho * eps + rho**2 * eps**2) - shift
    return wp, wm


# --------------------------------------------------------------------------
# node case


def node_wavenumber(l_w: float, l: float, loop_l: float, m_m: float) -> float:
    """Fundamental root of (k l / 2) tan(k l / 2) = -L_w l L / M_m^2.

    With k l / 2 = pi/2 + u the equation becomes (pi/2 + u) cos u = R sin u,
    which has a single root in (0, pi/2) and no pole.
    """
    if not (l_w > 0 and l > 0 and loop_l > 0):
        raise ValidationError("l_w, l and loop_l must be positive")
    if m_m == 0:
        return math.pi / l
    r = l_w * l * loop_l / m_m**2

    def f(u):
        return (math.pi / 2 + u) * math.cos(u) - r * math.sin(u)

    lo, hi = 0.0, math.pi / 2
    if f(lo) * f(hi) > 0:
        raise ConditioningError("node wavenumber bracket failed")
    u = brentq(f, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=500)
    return (math.pi + 2 * u) / l


def node_residual(k0: float, l_w: float, l: float, loop_l: float, m_m: float) -> float:
    """Residual of the node equation in its pole-free form, relative to R."""
    r = l_w * l * loop_l / m_m**2
    x = k0 * l / 2
    u = x - math.pi / 2
    return abs(x * math.cos(u) - r * math.sin(u)) / max(r, 1.0)


# --------------------------------------------------------------------------
# multimode model


@dataclass(frozen=True)
class ModalExpansion:
    """Even cosine modes of the line; amplitudes q_n of cos(k_n z)."""

    wavenumbers: np.ndarray
    amplitudes: np.ndarray
    phase: float = 0.0

    def field(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.cos(np.multiply.outer(z, self.wavenumbers) + self.phase) @ self.amplitudes

    def current(self, z) -> np.ndarray:
        """d phi / dz, proportional to the line current."""
        z = np.asarray(z, dtype=float)
        return -(np.sin(np.multiply.outer(z, self.wavenumbers) + self.phase) * self.wavenumbers) @ self.amplitudes


def mode_wavenumbers(p: ReductionParams, n_modes: int) -> np.ndarray:
    return 2 * math.pi * np.arange(n_modes) / p.l


def modal_matrices(p: ReductionParams, n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Mass and stiffness matrices for (gamma, q_0..q_{n_modes - 1})."""
    k = mode_wavenumbers(p, n_modes)
    norm = np.full(n_modes, p.l / 2)
    norm[0] = p.l
    u = np.ones(n_modes + 1)
    u[0] = -1.0
    M = np.diag(np.concatenate([[1 - p.epsilon], p.beta / p.v**2 * norm])) + p.epsilon * np.outer(u, u)
    K = np.diag(np.concatenate([[p.alpha], p.beta * norm * k**2]))
    return M, K


def _modal_diagonals(p: ReductionParams, n_modes: int):
    k = mode_wavenumbers(p, n_modes)
    norm = np.full(n_modes, p.l / 2)
    norm[0] = p.l
    D = np.concatenate([[1 - p.epsilon], p.beta / p.v**2 * norm])
    K = np.concatenate([[p.alpha], p.beta * norm * k**2])
    return D, K


def multimode_frequencies(
    p: ReductionParams, n_modes: int, method: str = "auto", omega_max: float | None = None
) -> np.ndarray:
    """Positive normal frequencies of the truncated modal system, ascending.

    The mass matrix is diagonal plus rank one, so its generalized eigenvalues
    solve 1 = eps w^2 sum_i 1 / (K_i - w^2 D_i). ``method="dense"`` uses a
    generalized symmetric eigensolver instead; ``"auto"`` picks dense for
    small systems. ``omega_max`` restricts the rank-one search to roots
    below that frequency.
    """
    if n_modes < 2:
        raise ValidationError("need at least two line modes")
    if method == "auto":
        method = "dense" if n_modes <= 400 else "rank_one"
    if method == "dense":
        M, K = modal_matrices(p, n_modes)
        w2 = eigh(K, M, eigvals_only=True)
        w2 = w2[w2 > 1e-12 * p.alpha]
        return np.sqrt(w2)
    if method != "rank_one":
        raise ValidationError(f"unknown method {method!r}")
    D, K = _modal_diagonals(p, n_modes)
    if p.epsilon == 0:
        return np.sort(np.sqrt(K[K > 0] / D[K > 0]))
    poles = np.sort(np.sqrt(K[K > 0] / D[K > 0]))
    eps = p.epsilon

    def g(w):
        return 1.0 - eps * w**2 * np.sum(1.0 / (K - w**2 * D))

    roots = []
    edges = np.concatenate([[0.0], poles])
    if omega_max is not None:
        n_int = int(np.searchsorted(poles, omega_max)) + 1
        edges = edges[: n_int + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        for lo, hi in zip(edges[:-1], edges[1:]):
            span = hi - lo
            a, b = lo + 1e-13 * span, hi - 1e-13 * span
            if lo == 0.0:
                a = 1e-9 * hi
            ga, gb = g(a), g(b)
            if ga * gb < 0:
                roots.append(brentq(g, a, b, xtol=1e-15 * hi, rtol=1e-15))
    return np.array(roots)


def multimode_pair(p: ReductionParams, n_modes: int, method: str = "auto") -> tuple[float, float]:
    """The two truncated-system frequencies nearest the secular pair, as (omega_plus, omega_minus)."""
    wa = math.sqrt(p.alpha)
    top = 1.5 * max(wa, p.omega_w)
    w = multimode_frequencies(p, n_modes, method, omega_max=top)
    lo = w[w < top]
    w1, w2 = sorted(lo[np.argsort(np.abs(lo - 0.5 * (wa + p.omega_w)))[:2]])
    return (w1, w2) if abs(w1 - wa) <= abs(w2 - wa) else (w2, w1)


# --------------------------------------------------------------------------
# time evolution


@dataclass
class Trajectory:
    t: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray  # line field at the SQUID
    energy: np.ndarray

    COLUMNS = ("t", "gamma", "phi", "energy")

    def rows(self):
        return [tuple(map(float, r)) for r in zip(self.t, self.gamma, self.phi, self.energy)]

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))


def _integrate(rhs, y0, t_span, t_eval, rtol, atol):
    sol = solve_ivp(rhs, t_span, y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise AccuracyError(f"integration failed: {sol.message}")
    return sol


def simulate_multimode(
    p: ReductionParams,
    n_modes: int,
    initial: dict | None = None,
    t_span: tuple[float, float] = (0.0, 1.0),
    t_eval=None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> Trajectory:
    """Integrate the linearized SQUID coupled to ``n_modes`` line modes.

    ``initial`` may hold gamma, gamma_dot and arrays q, q_dot of mode
    amplitudes; anything missing starts at zero.
    """
    if n_modes < 8:
        raise ValidationError("n_modes must be at least 8")
    initial = initial or {}
    M, K = modal_matrices(p, n_modes)
    A = np.linalg.solve(M, K)
    n = n_modes + 1
    x0 = np.zeros(n)
    v0 = np.zeros(n)
    x0[0] = initial.get("gamma", 0.0)
    v0[0] = initial.get("gamma_dot", 0.0)
    if "q" in initial:
        x0[1:] = initial["q"]
    if "q_dot" in initial:
        v0[1:] = initial["q_dot"]

    def rhs(_t, y):
        return np.concatenate([y[n:], -A @ y[:n]])

    sol = _integrate(rhs, np.concatenate([x0, v0]), t_span, t_eval, rtol, atol)
    x, xd = sol.y[:n], sol.y[n:]
    energy = 0.5 * np.einsum("it,ij,jt->t", xd, M, xd) + 0.5 * np.einsum("it,ij,jt->t", x, K, x)
    return Trajectory(sol.t, x[0], x[1:].sum(axis=0), energy)


def simulate_reduced(
    p: ReductionParams,
    nonlinear: bool = False,
    initial: dict | None = None,
    t_span: tuple[float, float] = (0.0, 1.0),
    t_eval=None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    coefficients: MatchedCoefficients | None = None,
) -> Trajectory:
    """Integrate the matched two-oscillator equations.

    With ``nonlinear`` the SQUID restoring force a gamma becomes a sin(gamma).
    """
    co = coefficients or MatchedCoefficients.of(p)
    eps = p.epsilon
    initial = initial or {}
    y0 = [initial.get("gamma", 0.0), initial.get("phi", 0.0), initial.get("gamma_dot", 0.0), initial.get("phi_dot", 0.0)]
    Minv = np.linalg.inv(np.array([[1.0, -co.b * eps], [-co.d * eps, 1.0]]))
    force = np.sin if nonlinear else (lambda g: g)

    def rhs(_t, y):
        acc = Minv @ np.array([-co.a * force(y[0]), -co.c * y[1]])
        return [y[2], y[3], acc[0], acc[1]]

    sol = _integrate(rhs, y0, t_span, t_eval, rtol, atol)
    g, ph, gd, pd = sol.y
    # symmetric form: multiply the first equation by d and the second by b
    kin = 0.5 * (co.d * gd**2 - 2 * co.b * co.d * eps * gd * pd + co.b * pd**2)
    pot_g = co.d * co.a * ((1 - np.cos(g)) if nonlinear else 0.5 * g**2)
    energy = kin + pot_g + 0.5 * co.b * co.c * ph**2
    return Trajectory(sol.t, g, ph, energy)


# --------------------------------------------------------------------------
# validity


@dataclass(frozen=True)
class ValidityReport:
    delta_omega: float
    lower_bound: float
    upper_bound: float
    passed: bool
    case: str = "antinode"

    def as_dict(self) -> dict:
        return {
            "case": self.case,
            "delta_omega": self.delta_omega,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "pass": self.passed,
        }


def validity_check(
    p: ReductionParams,
    case: str = "antinode",
    squid=None,
    delta_omega: float | None = None,
    c_w_l: float | None = None,
) -> ValidityReport:
    """Check lower << |delta_omega| << v / l with "<<" meaning a ratio below 0.1.

    The antinode lower scale is eps^2 C_Sigma / (C_w l) * v / l. The node
    scale is (C_w l / C_J)(M_m / L)^2 * v / l and needs ``squid`` for C_J,
    M_m and L; the total line capacitance ``c_w_l`` defaults to
    C_Sigma beta l / v^2 with C_Sigma = 2 C_J / (1 - eps).
    """
    dw = p.delta_omega if delta_omega is None else delta_omega
    vl = p.v / p.l
    if case == "antinode":
        lower = p.epsilon**2 * p.rho * vl
    elif case == "node":
        if squid is None:
            raise ValidationError("node case needs SQUID parameters")
        if c_w_l is None:
            c_sigma = 2 * squid.c_j / (1 - p.epsilon)
            c_w_l = c_sigma * p.beta * p.l / p.v**2
        lower = c_w_l / squid.c_j * (squid.m_m / squid.loop_l) ** 2 * vl
    else:
        raise ValidationError(f"case must be 'antinode' or 'node', got {case!r}")
    ok = abs(dw) > 0 and lower < MUCH_LESS * abs(dw) and abs(dw) < MUCH_LESS * vl
    return ValidityReport(dw, lower, vl, bool(ok), case)
