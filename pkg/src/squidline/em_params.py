"""Per-unit-length line constants and beam mutuals from the CPW cross-section.

The capacitance and inductance of the line are obtained by energy methods on a
2D finite-volume discretization of Laplace's equation over a graded tensor
grid. Conductors are Dirichlet regions; the outer box is grounded.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constants import AF_PER_UM, EPS0, MU0, NH_PER_CM, PF_PER_CM, PH_PER_UM
from .errors import ConvergenceError, ValidationError

FREE = -1
GROUND = -2


@dataclass(frozen=True)
class DeviceGeometry:
    """Cross-section and length dimensions, SI metres.

    ``ground_width`` is the width of each lateral ground plane and
    ``substrate_permittivity`` the relative permittivity of the half-space
    below the metal.
    """

    centre_width: float = 10e-6
    lateral_gap: float = 5e-6
    beam_width: float = 200e-9
    beam_gap: float = 100e-9
    thickness: float = 200e-9
    cpw_length: float = 1e-2
    beam_length: float = 5e-6
    ground_width: float = 50e-6
    substrate_permittivity: float = 11.7

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be strictly positive, got {value!r}")
        if self.beam_gap >= self.lateral_gap:
            raise ValidationError("beam_gap must be smaller than lateral_gap")
        if self.beam_length > self.cpw_length:
            raise ValidationError("beam_length cannot exceed cpw_length")
        if self.beam_width + self.beam_gap >= self.lateral_gap:
            raise ValidationError("beam does not fit inside the lateral gap")

    @property
    def lateral_extent(self) -> float:
        return self.centre_width + 2 * self.lateral_gap + 2 * self.ground_width

    def scaled(self, factor: float) -> "DeviceGeometry":
        d = asdict(self)
        for k in d:
            if k != "substrate_permittivity":
                d[k] *= factor
        return DeviceGeometry(**d)

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceGeometry":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown geometry keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class GridConfig:
    """Discretization controls.

    ``cell_size`` is the finest cell, used at every material or conductor
    edge; cells grow geometrically by ``growth`` away from edges but never
    exceed a quarter of the interval they sit in.
    ``domain_padding`` is the clearance between the conductors and the
    grounded box; ``None`` means five lateral extents.
    """

    cell_size: float = 25e-9
    domain_padding: float | None = None
    relaxation_tolerance: float = 1e-10
    max_iterations: int = 20
    growth: float = 1.15

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValidationError("cell_size must be positive")
        if not self.relaxation_tolerance > 0:
            raise ValidationError("relaxation_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not 1.0 <= self.growth <= 2.0:
            raise ValidationError("growth must lie in [1, 2]")
        if self.domain_padding is not None and not self.domain_padding > 0:
            raise ValidationError("domain_padding must be positive")

    def padding_for(self, geom: DeviceGeometry) -> float:
        return 5 * geom.lateral_extent if self.domain_padding is None else self.domain_padding

    def check_against(self, geom: DeviceGeometry) -> None:
        if self.cell_size > geom.beam_gap / 4:
            raise ValidationError(
                f"cell_size {self.cell_size:.3g} m does not resolve beam_gap/4 = {geom.beam_gap / 4:.3g} m"
            )
        if self.padding_for(geom) < 5 * geom.lateral_extent * (1 - 1e-12):
            raise ValidationError("domain_padding must be at least 5x the lateral extent")


@dataclass(frozen=True)
class CapacitanceMatrix:
    c11: float
    c12: float
    c22: float

    def __post_init__(self):
        if not (self.c11 > 0 and self.c22 > 0 and self.c11 * self.c22 - self.c12**2 > 0):
            raise ValidationError("capacitance matrix is not symmetric positive definite")

    def as_array(self) -> np.ndarray:
        return np.array([[self.c11, self.c12], [self.c12, self.c22]])

    def swapped(self) -> "CapacitanceMatrix":
        return CapacitanceMatrix(self.c22, self.c12, self.c11)


@dataclass(frozen=True)
class LineParams:
    c_w: float
    l_w: float
    impedance: float
    phase_velocity: float
    f1: float
    f2: float
    length: float = field(default=float("nan"))

    def report(self) -> dict:
        return {
            "C_w_pF_per_cm": self.c_w / PF_PER_CM,
            "L_w_nH_per_cm": self.l_w / NH_PER_CM,
            "Z_ohm": self.impedance,
            "v_m_per_s": self.phase_velocity,
            "f1_GHz": self.f1 / 1e9,
            "f2_GHz": self.f2 / 1e9,
        }


# --------------------------------------------------------------------------
# grid and operator


def graded_axis(breaks, h: float, growth: float, max_fraction: float = 0.25) -> np.ndarray:
    """Node coordinates that hit every breakpoint and grade away from each."""
    pts = np.unique(np.asarray(breaks, dtype=float))
    nodes = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        length = b - a
        cap = max(h, max_fraction * length)
        offsets = []
        d, s = 0.0, h
        while d + s < length / 2:
            d += s
            offsets.append(d)
            s = min(s * growth, cap)
        offsets = np.array(offsets)
        # keep the middle cell no smaller than half the last step
        if offsets.size and length / 2 - offsets[-1] < 0.5 * h:
            offsets = offsets[:-1]
        left = a + offsets
        right = (b - offsets)[::-1]
        inner = np.concatenate([left, [a + length / 2], right]) if length > 2 * h else np.array([])
        nodes.extend(inner.tolist())
        nodes.append(b)
    return np.unique(np.array(nodes))


def stiffness_matrix(x: np.ndarray, y: np.ndarray, material: np.ndarray) -> sp.csr_matrix:
    """Finite-volume Laplacian for div(material * grad u) on nodes.

    ``material`` holds one value per cell, shape (len(x)-1, len(y)-1). The
    returned matrix K satisfies u^T K u = integral of material*|grad u|^2
    (to discretization order), so half of it is the stored energy.
    """
    nx, ny = len(x), len(y)
    dx, dy = np.diff(x), np.diff(y)
    if material.shape != (nx - 1, ny - 1):
        raise ValidationError("material array must have one entry per cell")
    pad = np.zeros((nx + 1, ny + 1))
    pad[1:-1, 1:-1] = material

    # horizontal edges (i,j)-(i+1,j): flux area is half of each adjacent cell row
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="ij")
    dy_lo = np.where(j > 0, dy[np.clip(j - 1, 0, ny - 2)], 0.0)
    dy_hi = np.where(j < ny - 1, dy[np.clip(j, 0, ny - 2)], 0.0)
    gh = (pad[i + 1, j] * dy_lo + pad[i + 1, j + 1] * dy_hi) / (2 * dx[i])
    a_h, b_h = (i * ny + j).ravel(), ((i + 1) * ny + j).ravel()

    i, j = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="ij")
    dx_lo = np.where(i > 0, dx[np.clip(i - 1, 0, nx - 2)], 0.0)
    dx_hi = np.where(i < nx - 1, dx[np.clip(i, 0, nx - 2)], 0.0)
    gv = (pad[i, j + 1] * dx_lo + pad[i + 1, j + 1] * dx_hi) / (2 * dy[j])
    a_v, b_v = (i * ny + j).ravel(), (i * ny + j + 1).ravel()

    a = np.concatenate([a_h, a_v])
    b = np.concatenate([b_h, b_v])
    g = np.concatenate([gh.ravel(), gv.ravel()])
    n = nx * ny
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([g, g, -g, -g])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def conductor_potentials(
    K: sp.csr_matrix, labels: np.ndarray, n_conductors: int, tol: float, max_iterations: int
) -> np.ndarray:
    """Potential fields for unit excitation of each conductor in turn.

    Returns an array of shape (n_conductors, n_nodes). Interior nodes are
    found by iterative refinement on a sparse LU factorization; the residual
    must fall below ``tol`` relative to the right-hand side within
    ``max_iterations`` sweeps.
    """
    lab = labels.ravel()
    free = lab == FREE
    fixed = ~free
    scale = abs(K).max()
    Kff = (K[free][:, free] / scale).tocsc()
    Kfc = K[free][:, fixed] / scale
    lu = spla.splu(Kff)
    fields = np.zeros((n_conductors, lab.size))
    for k in range(n_conductors):
        u = np.zeros(lab.size)
        u[lab == k] = 1.0
        rhs = -Kfc @ u[fixed]
        norm = np.linalg.norm(rhs)
        sol = np.zeros_like(rhs)
        for _ in range(max_iterations):
            r = rhs - Kff @ sol
            if np.linalg.norm(r) <= tol * norm:
                break
            sol += lu.solve(r)
        else:
            rel = np.linalg.norm(rhs - Kff @ sol) / norm
            raise ConvergenceError(
                f"Laplace solve did not converge in {max_iterations} iterations (residual {rel:.2e})"
            )
        u[free] = sol
        fields[k] = u
    return fields


def energy_matrix(K: sp.csr_matrix, fields: np.ndarray) -> np.ndarray:
    """Mixed energies W_ij = u_i^T K u_j, i.e. U = V^T W V / 2 for V = sum V_i u_i."""
    KF = (K @ fields.T).T
    W = fields @ KF.T
    return 0.5 * (W + W.T)


@dataclass
class CrossSection:
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray  # per node: FREE, GROUND or conductor index
    permittivity: np.ndarray  # relative, per cell


def cpw_cross_section(geom: DeviceGeometry, cfg: GridConfig) -> CrossSection:
    """Centre strip (conductor 0) and both ground planes (conductor 1) on a substrate half-space."""
    cfg.check_against(geom)
    w, s, t, gw = geom.centre_width, geom.lateral_gap, geom.thickness, geom.ground_width
    half = geom.lateral_extent / 2
    pad = cfg.padding_for(geom)
    xb = [-half - pad, -half, -w / 2 - s, -w / 2, w / 2, w / 2 + s, half, half + pad]
    yb = [-pad, 0.0, t, t + pad]
    x = graded_axis(xb, cfg.cell_size, cfg.growth)
    y = graded_axis(yb, cfg.cell_size, cfg.growth)

    X, Y = np.meshgrid(x, y, indexing="ij")
    tiny = 1e-9 * cfg.cell_size
    in_metal_y = (Y >= -tiny) & (Y <= t + tiny)
    labels = np.full(X.shape, FREE, dtype=int)
    labels[in_metal_y & (np.abs(X) <= w / 2 + tiny)] = 0
    labels[in_metal_y & (np.abs(X) >= w / 2 + s - tiny) & (np.abs(X) <= half + tiny)] = 1
    labels[0, :] = labels[-1, :] = GROUND
    labels[:, 0] = labels[:, -1] = GROUND

    yc = 0.5 * (y[1:] + y[:-1])
    perm = np.where(yc[None, :] < 0, geom.substrate_permittivity, 1.0) * np.ones((len(x) - 1, 1))
    return CrossSection(x, y, labels, perm)


def _solve_maxwell(cs: CrossSection, material: np.ndarray, cfg: GridConfig, n_conductors: int = 2) -> np.ndarray:
    K = stiffness_matrix(cs.x, cs.y, material)
    fields = conductor_potentials(K, cs.labels, n_conductors, cfg.relaxation_tolerance, cfg.max_iterations)
    return energy_matrix(K, fields)


# --------------------------------------------------------------------------
# public operations


def solve_capacitance_matrix(geom: DeviceGeometry, cfg: GridConfig | None = None) -> CapacitanceMatrix:
    """Two-conductor (centre, grounds) Maxwell capacitance matrix per unit length."""
    cfg = cfg or GridConfig()
    cs = cpw_cross_section(geom, cfg)
    W = _solve_maxwell(cs, EPS0 * cs.permittivity, cfg)
    return CapacitanceMatrix(W[0, 0], W[0, 1], W[1, 1])


def mutual_capacitance_per_length(m: CapacitanceMatrix) -> float:
    """Capacitance between the two conductors with the reference floating."""
    if not isinstance(m, CapacitanceMatrix):
        m = CapacitanceMatrix(*m)
    return (m.c11 * m.c22 - m.c12**2) / (m.c11 + m.c22 + 2 * m.c12)


def inductance_matrix(geom: DeviceGeometry, cfg: GridConfig | None = None) -> np.ndarray:
    """Inverse reluctance matrix G with U = I^T G I / 2 for conductor currents I.

    Superconducting conductors exclude flux, so the vector potential is
    constant over each one: the magnetostatic problem is the Laplace problem
    with permittivity replaced by 1/mu0 and charge by current. Net current not
    carried by the listed conductors returns through the grounded box.
    """
    cfg = cfg or GridConfig()
    cs = cpw_cross_section(geom, cfg)
    P = _solve_maxwell(cs, np.full_like(cs.permittivity, 1.0 / MU0), cfg)
    return np.linalg.inv(P)


def self_inductance_per_length(
    geom: DeviceGeometry, cfg: GridConfig | None = None, current: float = 1.0, lateral_return: bool = False
) -> float:
    """L_w = 2U/I^2 for current I on the centre conductor.

    By default the ground planes carry zero net current; with
    ``lateral_return`` they carry the full return current -I.
    """
    G = inductance_matrix(geom, cfg)
    i = np.array([current, -current if lateral_return else 0.0])
    energy = 0.5 * i @ G @ i
    return 2 * energy / current**2


def line_constants(c_w: float, l_w: float, l: float) -> LineParams:
    for name, val in (("c_w", c_w), ("l_w", l_w), ("l", l)):
        if not val > 0:
            raise ValidationError(f"{name} must be positive")
    z = math.sqrt(l_w / c_w)
    v = 1.0 / math.sqrt(l_w * c_w)
    return LineParams(c_w=c_w, l_w=l_w, impedance=z, phase_velocity=v, f1=v / (2 * l), f2=v / l, length=l)


def _filament_mutual(a1: float, a2: float, b1: float, b2: float, d: float) -> float:
    """Neumann mutual inductance of parallel filaments [a1,a2] and [b1,b2] at spacing d."""

    def G(u):
        return u * math.asinh(u / d) - math.hypot(u, d)

    return MU0 / (4 * math.pi) * (G(a2 - b1) - G(a2 - b2) - G(a1 - b1) + G(a1 - b2))


def beam_mutuals(geom: DeviceGeometry) -> dict:
    """Mutual capacitance and inductance between centre conductor and beam.

    Both strips are replaced by round wires of radius (width+thickness)/4
    whose surfaces keep the physical edge-to-edge gap. The capacitance is
    the parallel-wire result for an infinitely long pair in vacuum (the
    substrate is etched away under the beam). The inductance is the partial
    mutual of the beam against a centred line of length ``cpw_length``,
    which is effectively infinite on the beam scale.
    """
    if not geom.beam_gap > 0:
        raise ValidationError("beam_gap must be positive")
    r1 = (geom.centre_width + geom.thickness) / 4
    r2 = (geom.beam_width + geom.thickness) / 4
    dist = r1 + r2 + geom.beam_gap
    arg = (dist**2 - r1**2 - r2**2) / (2 * r1 * r2)
    c_per_len = 2 * math.pi * EPS0 / math.acosh(arg)
    b = geom.beam_length
    ell = geom.cpw_length
    m_total = _filament_mutual(-b / 2, b / 2, -ell / 2, ell / 2, dist)
    return {
        "c_m_per_len": c_per_len,
        "m_m_per_len": m_total / b,
        "c_m": c_per_len * b,
        "m_m": m_total,
        "wire_separation": dist,
    }


def extract(geom: DeviceGeometry, cfg: GridConfig | None = None) -> dict:
    """Full extraction report for one geometry."""
    cfg = cfg or GridConfig()
    cmat = solve_capacitance_matrix(geom, cfg)
    c_w = mutual_capacitance_per_length(cmat)
    G = inductance_matrix(geom, cfg)
    l_w = G[0, 0]
    l_ret = G[0, 0] - 2 * G[0, 1] + G[1, 1]
    lp = line_constants(c_w, l_w, geom.cpw_length)
    mut = beam_mutuals(geom)
    report = {
        "capacitance_matrix_F_per_m": [[cmat.c11, cmat.c12], [cmat.c12, cmat.c22]],
        **lp.report(),
        "L_w_lateral_return_nH_per_cm": l_ret / NH_PER_CM,
        "C_m_per_len_aF_per_um": mut["c_m_per_len"] / AF_PER_UM,
        "M_m_per_len_pH_per_um": mut["m_m_per_len"] / PH_PER_UM,
        "C_m_aF": mut["c_m"] / 1e-18,
        "M_m_pH": mut["m_m"] / 1e-12,
    }
    return {"line": lp, "capacitance": cmat, "mutuals": mut, "report": report}
