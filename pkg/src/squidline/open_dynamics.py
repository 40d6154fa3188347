"""Damped dynamics of the qubit, microwave and mechanical modes.

The Heisenberg-Langevin drifts are realized by a Lindblad master equation
with the same first-moment equations:

* a_i decays at amplitude rate gamma_i: channels a_i at 2 gamma_i (nbar_i + 1)
  and a_i^dagger at 2 gamma_i nbar_i;
* d<sz>/dt = -gamma_1 (<sz> + 1): channel sigma^- at gamma_1;
* <sigma^+> decays at gamma_1 / 2 + gamma_phi: sz channel at gamma_phi / 2.

A coherent input a_in = alpha e^{-i w t} on mode i adds
sqrt(2 gamma_i) (e^{i phi_i} alpha e^{-i w t} a_i^dagger + h.c.) to H.
The qubit bath phases only enter noise correlations and are kept for
completeness. Frequencies are in rad/s throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .constants import HBAR
from .errors import AccuracyError, ValidationError, ValidityError
from .qubit_models import TripartiteSystem, tripartite_operators, tripartite_parts


@dataclass(frozen=True)
class OpenSystemConfig:
    gamma_m: float = 0.0
    gamma_w: float = 0.0
    gamma_1: float = 0.0
    gamma_phi: float = 0.0
    phi_b: float = 0.0
    phi_p: float = 0.0
    phi_1: float = 0.0
    phi: float = 0.0
    nbar_m: float = 0.0
    nbar_w: float = 0.0

    def __post_init__(self):
        for name in ("gamma_m", "gamma_w", "gamma_1", "gamma_phi", "nbar_m", "nbar_w"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")


@dataclass(frozen=True)
class CoherentInput:
    """Input field alpha e^{-i omega t} on mode ``mode`` ("w" or "m")."""

    mode: str
    amplitude: complex
    omega: float

    def __call__(self, t):
        return self.amplitude * np.exp(-1j * self.omega * np.asarray(t))


def _commutator(A: sp.spmatrix) -> sp.csr_matrix:
    """Superoperator of -i[A, .] on column-stacked density matrices."""
    n = A.shape[0]
    I = sp.identity(n, format="csr", dtype=complex)
    return (-1j * (sp.kron(I, A) - sp.kron(A.T, I))).tocsr()


def _dissipator(c: sp.spmatrix) -> sp.csr_matrix:
    n = c.shape[0]
    I = sp.identity(n, format="csr", dtype=complex)
    cdc = (c.conj().T @ c).tocsr()
    return (sp.kron(c.conj(), c) - 0.5 * sp.kron(I, cdc) - 0.5 * sp.kron(cdc.T, I)).tocsr()


@dataclass
class Generator:
    """L(t) = static + sum_k coef_k(t) parts_k acting on vec(rho)."""

    static: sp.csr_matrix
    parts: list[tuple[Callable[[float], complex], sp.csr_matrix]]
    dim: int
    ops: dict = field(repr=False)
    system: TripartiteSystem | None = None
    config: OpenSystemConfig | None = None
    inputs: tuple[CoherentInput, ...] = ()

    def at(self, t: float) -> sp.csr_matrix:
        L = self.static
        for coef, S in self.parts:
            L = L + coef(t) * S
        return L

    def apply(self, t: float, y: np.ndarray) -> np.ndarray:
        out = self.static @ y
        for coef, S in self.parts:
            c = coef(t)
            if c != 0:
                out = out + c * (S @ y)
        return out


def build_generator(
    sys: TripartiteSystem, cfg: OpenSystemConfig, inputs: Sequence[CoherentInput] = ()
) -> Generator:
    """Lindblad generator for ``sys`` with the damping channels of ``cfg``."""
    ops = {k: sp.csr_matrix(v, dtype=complex) for k, v in tripartite_operators(*sys.truncation).items()}
    H0, xm = tripartite_parts(sys)
    dim = H0.shape[0]
    if any(o.shape != (dim, dim) for o in ops.values()):
        raise ValidationError("operator dimensions do not match the Hamiltonian")
    L = _commutator(sp.csr_matrix(H0, dtype=complex))
    channels = []
    for mode, gamma, nbar in (("a_w", cfg.gamma_w, cfg.nbar_w), ("a_m", cfg.gamma_m, cfg.nbar_m)):
        a = ops[mode]
        if gamma > 0:
            channels.append(math.sqrt(2 * gamma * (nbar + 1)) * a)
            if nbar > 0:
                channels.append(math.sqrt(2 * gamma * nbar) * a.conj().T)
    if cfg.gamma_1 > 0:
        channels.append(math.sqrt(cfg.gamma_1) * ops["sm"])
    if cfg.gamma_phi > 0:
        channels.append(math.sqrt(cfg.gamma_phi / 2) * ops["sz"])
    for c in channels:
        L = L + _dissipator(c)
    parts = []
    if sys.drive is not None:
        drive = sys.drive
        parts.append((lambda t, f=drive: -f(t), _commutator(sp.csr_matrix(xm, dtype=complex))))
    for inp in inputs:
        if inp.mode not in ("w", "m"):
            raise ValidationError("input mode must be 'w' or 'm'")
        gamma = cfg.gamma_w if inp.mode == "w" else cfg.gamma_m
        phase = cfg.phi_p if inp.mode == "w" else cfg.phi_b
        a = ops["a_" + inp.mode]
        k = math.sqrt(2 * gamma) * np.exp(1j * phase)
        parts.append((lambda t, i=inp, k=k: k * i(t), _commutator(a.conj().T)))
        parts.append((lambda t, i=inp, k=k: np.conj(k * i(t)), _commutator(a)))
    return Generator(L.tocsr(), parts, dim, ops, sys, cfg, tuple(inputs))


# --------------------------------------------------------------------------
# states


def fock(n: int, k: int) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[k] = 1.0
    return v


def coherent(n: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state, renormalized."""
    k = np.arange(n)
    logfact = np.array([math.lgamma(i + 1) for i in k])
    if alpha == 0:
        return fock(n, 0)
    c = np.exp(k * np.log(complex(alpha)) - 0.5 * logfact - abs(alpha) ** 2 / 2)
    return c / np.linalg.norm(c)


def thermal(n: int, nbar: float) -> np.ndarray:
    if nbar == 0:
        p = np.zeros(n)
        p[0] = 1.0
    else:
        r = nbar / (nbar + 1)
        p = r ** np.arange(n)
        p /= p.sum()
    return np.diag(p).astype(complex)


def qubit_state(excited: float = 0.0, coherence: complex | None = None) -> np.ndarray:
    """Qubit density matrix in (excited, ground) order; pure superposition when coherence is None."""
    if coherence is None:
        psi = np.array([math.sqrt(excited), math.sqrt(1 - excited)], dtype=complex)
        return np.outer(psi, psi.conj())
    return np.array([[excited, coherence], [np.conj(coherence), 1 - excited]], dtype=complex)


def product_state(rho_q, rho_w, rho_m) -> np.ndarray:
    def dm(x):
        x = np.asarray(x, dtype=complex)
        return np.outer(x, x.conj()) if x.ndim == 1 else x

    return np.kron(np.kron(dm(rho_q), dm(rho_w)), dm(rho_m))


# --------------------------------------------------------------------------
# evolution


@dataclass
class EvolutionResult:
    t: np.ndarray
    a_m: np.ndarray
    a_w: np.ndarray
    sz: np.ndarray
    sp: np.ndarray  # <sigma^+>
    purity: np.ndarray
    trace: np.ndarray
    states: list[np.ndarray] | None = None

    COLUMNS = ("t", "re_a_m", "im_a_m", "re_a_w", "im_a_w", "sz", "re_sp", "im_sp", "purity", "trace")

    def rows(self):
        return [
            tuple(map(float, r))
            for r in zip(
                self.t, self.a_m.real, self.a_m.imag, self.a_w.real, self.a_w.imag, self.sz,
                self.sp.real, self.sp.imag, self.purity, self.trace,
            )
        ]


def _vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def _unvec(y: np.ndarray, n: int) -> np.ndarray:
    return y.reshape((n, n), order="F")


def evolve(
    gen: Generator,
    rho0: np.ndarray,
    t_eval,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    keep_states: bool = False,
    trace_tol: float = 1e-6,
) -> EvolutionResult:
    """Integrate the master equation from t_eval[0] and record expectation values."""
    rho0 = np.asarray(rho0, dtype=complex)
    n = gen.dim
    if rho0.shape != (n, n):
        raise ValidationError(f"initial state has shape {rho0.shape}, expected {(n, n)}")
    if not np.allclose(rho0, rho0.conj().T, atol=1e-12) or abs(np.trace(rho0) - 1) > 1e-10:
        raise ValidationError("initial state must be Hermitian with unit trace")
    if np.linalg.eigvalsh(rho0).min() < -1e-10:
        raise ValidationError("initial state must be positive semidefinite")
    t_eval = np.asarray(t_eval, dtype=float)
    sol = solve_ivp(
        gen.apply, (t_eval[0], t_eval[-1]), _vec(rho0), method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol
    )
    if not sol.success:
        raise AccuracyError(f"integration failed: {sol.message}")
    ops = {k: v.toarray() for k, v in gen.ops.items()}
    sp_op = ops["sm"].conj().T
    a_m, a_w, sz, spl, pur, tr = [], [], [], [], [], []
    states = [] if keep_states else None
    for y in sol.y.T:
        rho = _unvec(y, n)
        a_m.append(np.trace(ops["a_m"] @ rho))
        a_w.append(np.trace(ops["a_w"] @ rho))
        sz.append(np.trace(ops["sz"] @ rho).real)
        spl.append(np.trace(sp_op @ rho))
        pur.append(np.vdot(rho, rho).real)
        tr.append(np.trace(rho).real)
        if keep_states:
            states.append(rho.copy())
    tr = np.array(tr)
    drift = float(np.max(np.abs(tr - 1)))
    if drift > trace_tol:
        raise AccuracyError(f"trace drifted by {drift:.2e}")
    return EvolutionResult(sol.t, np.array(a_m), np.array(a_w), np.array(sz), np.array(spl), np.array(pur), tr, states)


def steady_state(gen: Generator) -> np.ndarray:
    """Stationary state of the static generator (time-dependent parts ignored)."""
    n = gen.dim
    L = gen.static.tolil(copy=True)
    # replace one equation by the trace condition
    L[0, :] = 0
    L[0, np.arange(n) * (n + 1)] = 1.0
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0
    y = splu(L.tocsc()).solve(rhs)
    rho = _unvec(y, n)
    return 0.5 * (rho + rho.conj().T)


# --------------------------------------------------------------------------
# protocols


def mechanical_system(omega_m: float, n_m: int, omega_a: float = 10.0, lam: float = 0.0, drive=None):
    """Qubit plus mechanical mode, with the microwave mode truncated away."""
    return TripartiteSystem(
        omega_a=omega_a, omega_w=1.0, omega_m=omega_m, lam=lam, drive=drive, truncation=(1, n_m)
    )


def drive_to_displaced_state(
    omega_m: float,
    force: float,
    cfg: OpenSystemConfig,
    t_end: float,
    n_m: int = 20,
    points: int = 2001,
) -> dict:
    """Resonantly drive the damped mechanical mode with -F cos(w_m t)(a + a^dagger).

    The closed form for the steady amplitude is F / (2 gamma_m) = F Q_m / w_m.
    The measured value averages |<a_m>| over the last ten periods.
    """
    sys = mechanical_system(omega_m, n_m, drive=lambda t: force * math.cos(omega_m * t))
    gen = build_generator(sys, cfg)
    rho0 = product_state(fock(2, 1), fock(1, 0), thermal(n_m, cfg.nbar_m))
    t = np.linspace(0.0, t_end, points)
    res = evolve(gen, rho0, t)
    amp = np.abs(res.a_m)
    tail = t >= t_end - 10 * 2 * math.pi / omega_m
    predicted = force / (2 * cfg.gamma_m) if cfg.gamma_m > 0 else math.inf
    return {"t": t, "amplitude": amp, "steady": float(amp[tail].mean()), "predicted": predicted, "result": res}


def dispersive_qubit_shift_run(
    sys: TripartiteSystem,
    t_end: float,
    cfg: OpenSystemConfig | None = None,
    alpha0: complex = 0.3,
    points: int = 4001,
) -> dict:
    """Rotation frequency of <a_m> with the qubit prepared excited and ground.

    The shift is taken relative to omega_m. Returns both shifts and the
    second-order prediction +-2 lam^2 w_a / (w_a^2 - w_m^2).
    """
    lam = sys.lam / HBAR
    if abs(sys.g) > 0 and abs(sys.g) / abs(sys.omega_a - sys.omega_w) >= 0.1:
        raise ValidityError("g / |omega_a - omega_w| must be below 0.1")
    if abs(lam) / abs(sys.omega_a - sys.omega_m) >= 0.1:
        raise ValidityError("lambda / hbar |omega_a - omega_m| must be below 0.1")
    cfg = cfg or OpenSystemConfig()
    gen = build_generator(sys, cfg)
    n_w, n_m = sys.truncation
    t = np.linspace(0.0, t_end, points)
    out = {}
    for label, q in (("excited", fock(2, 0)), ("ground", fock(2, 1))):
        rho0 = product_state(q, fock(n_w, 0), coherent(n_m, alpha0))
        res = evolve(gen, rho0, t)
        phase = np.unwrap(np.angle(res.a_m))
        freq = -np.polyfit(t, phase, 1)[0]
        out[label] = freq - sys.omega_m
    out["predicted"] = 2 * lam**2 * sys.omega_a / (sys.omega_a**2 - sys.omega_m**2)
    return out


def input_output_expectation(
    result: EvolutionResult, cfg: OpenSystemConfig, a_in, mode: str = "w"
) -> np.ndarray:
    """<a_out>(t) = <a_in>(t) - i sqrt(2 gamma) e^{-i phi} <a>(t)."""
    if mode == "w":
        gamma, phase, a = cfg.gamma_w, cfg.phi_p, result.a_w
    elif mode == "m":
        gamma, phase, a = cfg.gamma_m, cfg.phi_b, result.a_m
    else:
        raise ValidationError("mode must be 'w' or 'm'")
    ain = a_in(result.t) if callable(a_in) else np.broadcast_to(np.asarray(a_in, dtype=complex), result.t.shape)
    return ain - 1j * math.sqrt(2 * gamma) * np.exp(-1j * phase) * a
