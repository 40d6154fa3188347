"""Command-line entry point.

    squidline <params|spectrum|compare|validate-reduction|dynamics>
              --config FILE [--out DIR] [--sweep key=start:stop:steps ...]

Each run writes ``report.json`` and one or more CSV tables into the output
directory. Exit codes: 0 success, 1 unexpected error, 2 invalid input,
3 no convergence, 4 accuracy check failed, 5 truncation too small,
6 ill-conditioned root, 7 phase domain too small, 8 no double well,
9 perturbative validity violated.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SquidlineError, ValidationError
from .reporting import Column, write_csv, write_report

COMMANDS = ("params", "spectrum", "compare", "validate-reduction", "dynamics")


# --------------------------------------------------------------------------
# config helpers


def _build(cls, data: dict | None, **defaults):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for k, v in defaults.items():
        data.setdefault(k, v)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    try:
        key, rng = spec.split("=", 1)
        start, stop, steps = rng.split(":")
        n = int(steps)
        a, b = float(start), float(stop)
    except ValueError as exc:
        raise ValidationError(f"bad sweep {spec!r}; expected key=start:stop:steps") from exc
    if n < 1:
        raise ValidationError("sweep steps must be >= 1")
    values = [a] if n == 1 else np.linspace(a, b, n).tolist()
    return key.strip(), values


def set_path(config: dict, key: str, value) -> dict:
    node = config
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ValidationError(f"sweep key {key!r} does not address a config value")
    node[parts[-1]] = value
    return config


def workers() -> int:
    raw = os.environ.get("SQUIDLINE_WORKERS")
    if raw is None:
        return max(1, min(4, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError("SQUIDLINE_WORKERS must be an integer") from exc
    if n < 1:
        raise ValidationError("SQUIDLINE_WORKERS must be >= 1")
    return n


# --------------------------------------------------------------------------
# commands; each returns (results, {csv name: (columns, rows)}, summary row)


def run_params(cfg: dict):
    from .em_params import DeviceGeometry, GridConfig, extract

    geom = _build(DeviceGeometry, cfg.get("geometry"))
    grid = _build(GridConfig, cfg.get("grid"))
    out = extract(geom, grid)
    rep = out["report"]
    cols = [
        Column("C_w", "pF/cm", "mutual capacitance per length"),
        Column("L_w", "nH/cm", "centre self inductance per length with no net ground-plane current"),
        Column("L_w_return", "nH/cm", "loop inductance per length with lateral return current"),
        Column("Z", "ohm", "impedance sqrt(L_w/C_w)"),
        Column("v", "m/s", "phase velocity"),
        Column("f1", "GHz", "first mode v/2l"),
        Column("C_m_per_len", "aF/um", "beam-centre mutual capacitance per length"),
        Column("M_m_per_len", "pH/um", "beam-centre mutual inductance per length"),
    ]
    row = [
        rep["C_w_pF_per_cm"], rep["L_w_nH_per_cm"], rep["L_w_lateral_return_nH_per_cm"], rep["Z_ohm"],
        rep["v_m_per_s"], rep["f1_GHz"], rep["C_m_per_len_aF_per_um"], rep["M_m_per_len_pH_per_um"],
    ]
    results = {"geometry": asdict(geom), "grid": asdict(grid), **rep}
    return results, {"params": (cols, [row])}, (cols, row)


def run_spectrum(cfg: dict):
    from .constants import H, MEV
    from .squid_spectrum import SquidParams, grid_spectrum, phase_matrix_elements, variational_spectrum, wavefunction_table

    sq = SquidParams.from_dict(cfg.get("squid", {}))
    spec = variational_spectrum(sq)
    pme = phase_matrix_elements(spec)
    gopt = cfg.get("grid", {})
    grid = grid_spectrum(sq, span=gopt.get("span"), points=int(gopt.get("points", 4000)))
    g0, g1 = grid.energies[:2]
    results = {
        "derived": {
            "beta_L": sq.beta_l,
            "E_J_meV": sq.e_j / MEV,
            "E_CJ_meV": sq.e_cj / MEV,
            "E_CJ_over_E_J_beta_L": sq.e_cj / (sq.e_j * sq.beta_l),
        },
        "variational": spec.report(),
        "phase_matrix_elements": asdict(pme),
        "grid": {
            "E0_meV": g0 / MEV,
            "E1_meV": g1 / MEV,
            "delta_E_over_h_GHz": (g1 - g0) / H / 1e9,
            "points": len(grid.gamma),
        },
        "difference": {
            "E_minus_minus_E0_meV": (spec.e_minus - g0) / MEV,
            "E_plus_minus_E1_meV": (spec.e_plus - g1) / MEV,
            "delta_E_ratio": spec.delta_e / (g1 - g0),
        },
    }
    wcols = [
        Column("gamma", "rad", "phase coordinate"),
        Column("V", "J", "double-well potential"),
        Column("psi_minus_sq", "1/rad", "|Psi_-|^2"),
        Column("psi_plus_sq", "1/rad", "|Psi_+|^2"),
    ]
    scols = [
        Column("E_minus", "meV", "variational lower level"),
        Column("E_plus", "meV", "variational upper level"),
        Column("delta_E_over_h", "GHz", "variational splitting"),
        Column("grid_E0", "meV", "finite-difference ground level"),
        Column("grid_E1", "meV", "finite-difference first excited level"),
        Column("grid_delta_E_over_h", "GHz", "finite-difference splitting"),
    ]
    srow = [
        spec.e_minus / MEV, spec.e_plus / MEV, spec.delta_e / H / 1e9, g0 / MEV, g1 / MEV, (g1 - g0) / H / 1e9,
    ]
    return results, {"wavefunctions": (wcols, wavefunction_table(sq, spec)), "spectrum": (scols, [srow])}, (scols, srow)


def run_compare(cfg: dict):
    from .em_params import line_constants
    from .qubit_models import (
        ChargeQubitParams,
        FluxQubitParams,
        MechanicalParams,
        compare,
        format_comparison,
        reference_charge_qubit,
        reference_flux_qubit,
    )

    cq = _build(ChargeQubitParams, cfg.get("charge"), **asdict(reference_charge_qubit()))
    fq = _build(FluxQubitParams, cfg.get("flux"), **asdict(reference_flux_qubit()))
    mp = _build(MechanicalParams, cfg.get("mechanical"))
    l_c = float(cfg.get("l_charge", 2e-2))
    l_f = float(cfg.get("l_flux", 1e-2))
    line = cfg.get("line")
    lc = lf = None
    if line:
        lc = line_constants(line["c_w"], line["l_w"], l_c)
        lf = line_constants(line["c_w"], line["l_w"], l_f)
    rep = compare(cq, fq, mp, l_c, l_f, lc, lf)
    rep["table"] = format_comparison(rep).splitlines()
    cols = [
        Column("quantity", "", "figure of merit"),
        Column("charge", "", "capacitively coupled qubit"),
        Column("flux", "", "inductively coupled qubit"),
    ]
    rows = [
        ("g_over_omega_w", rep["charge"]["g_over_omega_w"], rep["flux"]["g_over_omega_w"]),
        ("lambda_J", rep["charge"]["lambda_J"], rep["flux"]["lambda_J"]),
        ("kappa", rep["charge"]["kappa"], rep["flux"]["kappa"]),
        ("x_tilde_g_over_omega_w", rep["charge"]["x_tilde_g_over_omega_w"], rep["flux"]["x_tilde_g_over_omega_w"]),
        ("alpha0_per_unit_drive", rep["charge"]["alpha0_per_volt"], rep["flux"]["alpha0_per_ampere"]),
        ("drive_threshold", rep["charge"]["bias_check"]["threshold"], rep["flux"]["bias_check"]["threshold"]),
    ]
    scols = [
        Column("g_c_over_omega_w"), Column("g_l_over_omega_w"), Column("energy_ratio", "", "R_K/(4 pi Z)"),
        Column("lambda_ratio_prefactor", "1/ohm"), Column("kappa_c"),
    ]
    srow = [
        rep["charge"]["g_over_omega_w"], rep["flux"]["g_over_omega_w"], rep["energy_ratio"],
        rep["mechanical_ratio"]["prefactor_per_ohm"], rep["charge"]["kappa"],
    ]
    return rep, {"compare": (cols, rows)}, (scols, srow)


def _reduction_params(d: dict):
    from .mode_reduction import ReductionParams

    d = dict(d or {})
    if {"alpha", "beta", "epsilon", "v", "l"} <= set(d):
        return ReductionParams(d["alpha"], d["beta"], d["epsilon"], d["v"], d["l"])
    try:
        return ReductionParams.from_ratios(
            d.get("omega_w", 1.0), d.get("alpha_ratio", 1.008**2), d.get("rho", 0.3), d.get("epsilon", 0.01),
            d.get("v", 1.0),
        )
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def run_validate_reduction(cfg: dict):
    from dataclasses import replace

    from .mode_reduction import (
        MatchedCoefficients,
        perturbative_modes,
        secular_roots,
        simulate_multimode,
        simulate_reduced,
        validity_check,
    )

    p = _reduction_params(cfg.get("reduction"))
    n_modes = int(cfg.get("n_modes", 16))
    periods = float(cfg.get("periods", 100))
    gamma0 = float(cfg.get("gamma0", 0.1))
    samples = int(cfg.get("samples", 20001))
    validity = validity_check(p)
    roots = secular_roots(p)
    pert = perturbative_modes(p)
    co = MatchedCoefficients.of(p)
    T = 2 * math.pi / p.omega_w * periods
    t = np.linspace(0, T, samples)
    mm = simulate_multimode(p, n_modes, {"gamma": gamma0}, (0, T), t)
    red = simulate_reduced(p, False, {"gamma": gamma0}, (0, T), t)
    traj_err = float(np.max(np.abs(mm.gamma - red.gamma)) / np.max(np.abs(mm.gamma)))
    sc = cfg.get("scaling", {})
    eps_grid = np.logspace(math.log10(sc.get("eps_min", 1e-4)), math.log10(sc.get("eps_max", 1e-2)), int(sc.get("points", 7)))
    srows = []
    for e in eps_grid:
        q = replace(p, epsilon=float(e))
        s = secular_roots(q)
        w = perturbative_modes(q)
        srows.append((float(e), s[0], s[1], w[0], w[1], max(abs(a - b) / b for a, b in zip(w, s))))
    errs = np.array([r[-1] for r in srows])
    slope = float(np.polyfit(np.log(eps_grid), np.log(errs), 1)[0]) if len(srows) > 1 else float("nan")
    results = {
        "params": asdict(p),
        "validity": validity.as_dict(),
        "matched_coefficients": asdict(co),
        "secular_roots": list(roots),
        "perturbative_modes": list(pert),
        "trajectory_relative_error": traj_err,
        "multimode_energy_drift": mm.energy_drift,
        "reduced_energy_drift": red.energy_drift,
        "scaling_slope": slope,
    }
    scols = [
        Column("epsilon"), Column("secular_plus", "rad/s"), Column("secular_minus", "rad/s"),
        Column("perturbative_plus", "rad/s"), Column("perturbative_minus", "rad/s"),
        Column("max_relative_error", "", "largest relative deviation of the pair"),
    ]
    tcols = [
        Column("t", "s", "time"),
        Column("gamma_multimode", "rad", "SQUID phase, multimode model"),
        Column("gamma_reduced", "rad", "SQUID phase, two-oscillator model"),
        Column("phi_multimode", "rad", "line field at the SQUID, multimode model"),
        Column("phi_reduced", "rad", "line field, two-oscillator model"),
        Column("energy_multimode", "1/s^2", "conserved quadratic form"),
        Column("energy_reduced", "1/s^2", "conserved quadratic form"),
    ]
    stride = max(1, samples // 2000)
    trows = list(
        zip(mm.t[::stride], mm.gamma[::stride], red.gamma[::stride], mm.phi[::stride], red.phi[::stride],
            mm.energy[::stride], red.energy[::stride])
    )
    sumcols = [Column("epsilon"), Column("delta_omega", "rad/s"), Column("valid"), Column("trajectory_error")]
    return (
        results,
        {"scaling": (scols, srows), "trajectories": (tcols, trows)},
        (sumcols, [p.epsilon, p.delta_omega, validity.passed, traj_err]),
    )


def run_dynamics(cfg: dict):
    from .constants import HBAR
    from .open_dynamics import (
        CoherentInput,
        OpenSystemConfig,
        build_generator,
        coherent,
        evolve,
        input_output_expectation,
        product_state,
        qubit_state,
        thermal,
    )
    from .qubit_models import TripartiteSystem

    s = dict(cfg.get("system", {}))
    trunc = tuple(s.pop("truncation", (4, 8)))
    lam_hbar = s.pop("lambda_over_hbar", 0.0)
    force = s.pop("drive_force", 0.0)
    omega_d = s.pop("drive_omega", s.get("omega_m", 1.0))
    drive = (lambda t, f=force, w=omega_d: f * math.cos(w * t)) if force else None
    try:
        sys_ = TripartiteSystem(lam=lam_hbar * HBAR, drive=drive, truncation=trunc, **s)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    oc = _build(OpenSystemConfig, cfg.get("open"))
    inp_cfg = cfg.get("input")
    inputs = ()
    if inp_cfg:
        amp = complex(inp_cfg.get("re", 0.0), inp_cfg.get("im", 0.0))
        inputs = (CoherentInput(inp_cfg.get("mode", "w"), amp, inp_cfg.get("omega", sys_.omega_w)),)
    gen = build_generator(sys_, oc, inputs)
    ini = cfg.get("initial", {})
    n_w, n_m = trunc
    rho_q = qubit_state(ini.get("qubit_excited", 0.0))
    rho_w = coherent(n_w, complex(ini.get("alpha_w", 0.0))) if ini.get("alpha_w") else thermal(n_w, oc.nbar_w)
    rho_m = coherent(n_m, complex(ini.get("alpha_m", 0.0))) if ini.get("alpha_m") else thermal(n_m, oc.nbar_m)
    t_end = float(cfg.get("t_end", 50.0))
    t = np.linspace(0.0, t_end, int(cfg.get("points", 501)))
    res = evolve(gen, product_state(rho_q, rho_w, rho_m), t)
    w_m = np.abs(res.a_m)
    results = {
        "final": {
            "abs_a_m": float(w_m[-1]), "abs_a_w": float(abs(res.a_w[-1])), "sz": float(res.sz[-1]),
            "purity": float(res.purity[-1]),
        },
        "max_trace_drift": float(np.max(np.abs(res.trace - 1))),
        "purity_range": [float(res.purity.min()), float(res.purity.max())],
    }
    if force and oc.gamma_m > 0:
        results["predicted_steady_abs_a_m"] = force / (2 * oc.gamma_m)
    cols = [Column(c) for c in res.COLUMNS]
    tables = {"tracks": (cols, res.rows())}
    if inputs:
        aout = input_output_expectation(res, oc, inputs[0], inputs[0].mode)
        results["final"]["abs_a_out"] = float(abs(aout[-1]))
        results["final"]["abs_a_in"] = float(abs(inputs[0].amplitude))
        tables["output"] = (
            [Column("t", "s"), Column("re_a_out"), Column("im_a_out")],
            [(float(a), float(b.real), float(b.imag)) for a, b in zip(t, aout)],
        )
    sumcols = [Column("abs_a_m_final"), Column("sz_final"), Column("purity_final")]
    return results, tables, (sumcols, [float(w_m[-1]), float(res.sz[-1]), float(res.purity[-1])])


RUNNERS = {
    "params": run_params,
    "spectrum": run_spectrum,
    "compare": run_compare,
    "validate-reduction": run_validate_reduction,
    "dynamics": run_dynamics,
}


def _run_point(args):
    command, cfg = args
    return RUNNERS[command](cfg)


# --------------------------------------------------------------------------


def execute(command: str, config: dict, out: Path, sweeps: list[str], timestamp: str | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    axes = [parse_sweep(s) for s in sweeps]
    resolved = {"command": command, "input": config, "sweeps": [{"key": k, "values": v} for k, v in axes]}
    if not axes:
        results, tables, _ = RUNNERS[command](copy.deepcopy(config))
        for name, (cols, rows) in tables.items():
            write_csv(out / f"{name}.csv", cols, rows)
        write_report(out / "report.json", command, resolved, results, timestamp)
        return results
    points = []
    for combo in itertools.product(*[v for _, v in axes]):
        cfg = copy.deepcopy(config)
        for (key, _), value in zip(axes, combo):
            set_path(cfg, key, value)
        points.append((combo, cfg))
    n = min(workers(), len(points))
    jobs = [(command, cfg) for _, cfg in points]
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(_run_point, jobs))
    else:
        outcomes = [_run_point(j) for j in jobs]
    sweep_cols = [Column(k, "", "sweep value") for k, _ in axes]
    summary_cols = sweep_cols + list(outcomes[0][2][0])
    summary_rows = [list(combo) + list(o[2][1]) for (combo, _), o in zip(points, outcomes)]
    write_csv(out / f"{command.replace('-', '_')}_sweep.csv", summary_cols, summary_rows)
    results = {"points": [{"sweep": dict(zip([k for k, _ in axes], combo)), "results": o[0]} for (combo, _), o in zip(points, outcomes)]}
    write_report(out / "report.json", command, resolved, results, timestamp)
    return results


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="squidline", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"squidline {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path, help="JSON configuration file")
    ap.add_argument("--out", type=Path, default=Path("squidline-out"), help="output directory")
    ap.add_argument("--sweep", action="append", default=[], metavar="KEY=START:STOP:STEPS",
                    help="sweep a dotted config key; repeat for a grid")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            config = json.loads(args.config.read_text())
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ValidationError("config must be a JSON object")
        results = execute(args.command, config, args.out, args.sweep)
    except SquidlineError as exc:
        print(f"squidline: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"squidline: unexpected error: {exc!r}", file=sys.stderr)
        return 1
    if args.command == "compare" and "table" in results:
        print("\n".join(results["table"]))
    print(f"wrote {args.out / 'report.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
