"""Command-line front end: protocol sweeps, single trajectories and validation.

Every command reads an optional JSON configuration (``--config``), applies
flag overrides (flags win) and writes UTF-8 CSV files into ``--out``.  Each
CSV starts with ``#`` comment lines holding the command, a timestamp and the
effective configuration; everything after them is the data section, which is
deterministic for a given configuration and independent of ``--workers``.

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import io
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, plots
from .master import NonUniqueSteadyStateError, evolve_me, steady_state_info
from .noise import (
    SqueezingSpec,
    critical_cooperativity,
    noise_covariance,
    squeezing_from_db,
)
from .parallel import WORKERS_ENV, default_workers, ordered_map
from .protocols.gaussian import NoSteadyStateError
from .protocols.optomech import (
    om_adiabatic_params,
    om_feedback_me,
    om_gaussian_steady,
    om_params_from_cooperativity,
    zeta_crossing,
)
from .protocols.swap import (
    TlsSwapParams,
    dark_state,
    formula_gains,
    optimize_gains,
    swap_steady_state,
    tls_swap_model,
)
from .protocols.teleport import bosonic_teleport_model, teleport_liouvillian, teleport_steady_state
from .feedback import FeedbackSpec, verify_jump_form
from .qops import (
    DensityOp,
    annihilation,
    embed,
    fock_ket,
    log_negativity,
    quadrature_covariance,
    quadratures,
    sigma_minus,
    sigma_x,
    sigma_y,
    sigma_z,
    trace_distance,
)
from .sme import TrajectoryConfig, ensemble_average, run_ensemble, run_trajectory, swap_sme_model, teleport_sme_model

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid command line or configuration (exit code 2)."""


# --- configuration -------------------------------------------------------

DEFAULTS: dict[str, dict[str, Any]] = {
    "swap-sweep": {
        "z_grid": {"start": 0.0, "stop": 0.95, "num": 20},
        "eta_grid": {"start": 0.5, "stop": 1.0, "num": 21},
        "gain_box": [-4.0, 4.0],
        "scan_points": 21,
        "line_etas": [1.0, 0.9, 0.8, 0.7, 0.6],
        "workers": None,
    },
    "teleport": {
        "squeeze_db": [0.0, -6.0],
        "phase": 0.0,
        "eta": 1.0,
        "fock_dim": 30,
    },
    "om-sweep": {
        "C_grid": {"start": 0.01, "stop": 1000.0, "num": 51, "log": True},
        "nbar_grid": [0.0, 10.0, 1000.0],
        "kappa_over_omega_grid": [0.1, 10.0],
        "squeeze_db": -6.0,
        "g_over_kappa": 0.05,
    },
    "trajectory": {
        "protocol": "swap",
        "z": 0.5,
        "eta": 1.0,
        "G_plus": None,
        "G_minus": None,
        "squeeze_db": -6.0,
        "fock_dim": 20,
        "feedback": True,
        "initial": "mixed",
        "dt": 1e-3,
        "t_total": 20.0,
        "n_steps": None,
        "stride": 10,
        "seed": 1,
    },
    "validate": {
        "tighten": 1.0,
        "nu_sign": 1.0,
        "n_traj": 500,
        "dt": 1e-3,
        "t_total": 1.0,
        "seed": 7,
        "fock_dim": 30,
        "squeezed_fock_dim": 40,
        "workers": None,
    },
}


def _grid(value: Any, name: str) -> np.ndarray:
    """List of numbers or ``{"start", "stop", "num", "log"}``; must be non-empty."""
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "num", "log"}
        if unknown or not {"start", "stop", "num"} <= set(value):
            raise UsageError(f"{name}: a range needs start, stop, num (and optional log)")
        num = int(value["num"])
        if value.get("log"):
            if value["start"] <= 0 or value["stop"] <= 0:
                raise UsageError(f"{name}: log ranges need positive bounds")
            arr = np.logspace(np.log10(value["start"]), np.log10(value["stop"]), max(num, 0))
        else:
            arr = np.linspace(value["start"], value["stop"], max(num, 0))
    elif isinstance(value, (list, tuple)):
        arr = np.asarray(value, dtype=float)
    elif isinstance(value, (int, float)):
        arr = np.array([float(value)])
    else:
        raise UsageError(f"{name}: expected a list or a range object")
    if arr.size == 0:
        raise UsageError(f"{name}: grid is empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name}: grid values must be finite")
    return arr


def load_config(command: str, path: str | None, overrides: dict[str, Any]) -> dict[str, Any]:
    """Defaults, then the JSON file, then non-``None`` flag overrides."""
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(user) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(user)
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in cfg:
            raise UsageError(f"--{key.replace('_', '-')} does not apply to {command}")
        cfg[key] = val
    _check_types(command, cfg)
    return cfg


def _check_types(command: str, cfg: dict[str, Any]) -> None:
    """Scalars must keep the kind of their default; grids are checked when parsed."""
    for key, default in DEFAULTS[command].items():
        val = cfg[key]
        if isinstance(default, bool):
            ok = isinstance(val, bool)
        elif isinstance(default, (int, float)):
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        elif isinstance(default, str):
            ok = isinstance(val, str)
        elif default is None:
            ok = val is None or (isinstance(val, (int, float)) and not isinstance(val, bool))
        else:
            ok = isinstance(val, (list, dict, int, float)) and not isinstance(val, bool)
        if not ok:
            raise UsageError(f"{key}: unexpected value {val!r}")


# --- output helpers ------------------------------------------------------


def _num(v: Any) -> str:
    """Locale-free shortest round-trip text; NaN as ``nan``."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "nan" if math.isnan(f) else repr(f)
    return str(v)


def _header_lines(command: str, cfg: dict[str, Any]) -> list[str]:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return [
        f"bellflow {command} {__version__}",
        f"generated {stamp}",
        "config " + json.dumps(cfg, sort_keys=True, default=float),
    ]


def write_csv(path: Path, command: str, cfg: dict[str, Any], columns: Sequence[str],
              rows: Sequence[Sequence[Any]], extra_comments: Sequence[str] = ()) -> Path:
    buf = io.StringIO()
    for line in _header_lines(command, cfg) + list(extra_comments):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_data_section(path: str | Path) -> str:
    """CSV text with the ``#`` comment header removed."""
    lines = Path(path).read_text(encoding="utf-8").splitlines(keepends=True)
    return "".join(l for l in lines if not l.startswith("#"))


def _workers(cfg_value: Any) -> int:
    return default_workers() if cfg_value is None else max(1, int(cfg_value))


# --- swap-sweep ----------------------------------------------------------

SWAP_COLUMNS = ["mode", "z", "eta", "G_plus", "G_minus", "log_negativity", "fidelity", "kernel_dim", "status"]


def _steady_row(mode: str, z: float, eta: float, gp: float, gm: float) -> list:
    try:
        res = swap_steady_state(TlsSwapParams(z, gp, gm, eta), check_kernel=True)
    except NonUniqueSteadyStateError as exc:
        return [mode, z, eta, gp, gm, np.nan, np.nan, exc.kernel_dim, "non-unique steady state"]
    return [mode, z, eta, gp, gm, res.log_negativity, res.fidelity, res.kernel_dim, "ok"]


def _swap_cell_rows(args) -> list[list]:
    z, eta, box, scan = args
    gp, gm = formula_gains(z)
    rows = [_steady_row("formula", z, eta, gp, gm)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        opt = optimize_gains(z, eta, box=box, grid=scan)
    row = _steady_row("optimized", z, eta, opt.G_plus, opt.G_minus)
    if row[-1] == "ok" and not opt.converged:
        row[-1] = "refinement not converged"
    rows.append(row)
    return rows


def run_swap_sweep(cfg: dict[str, Any], out: Path) -> list[Path]:
    z_grid = _grid(cfg["z_grid"], "z_grid")
    eta_grid = _grid(cfg["eta_grid"], "eta_grid")
    if np.any((z_grid < 0) | (z_grid >= 1)):
        raise UsageError("z_grid values must lie in [0, 1)")
    if np.any((eta_grid <= 0) | (eta_grid > 1)):
        raise UsageError("eta_grid values must lie in (0, 1]")
    box = tuple(float(b) for b in cfg["gain_box"])
    if len(box) != 2 or not box[0] < box[1]:
        raise UsageError("gain_box must be [low, high] with low < high")
    tasks = [(float(z), float(e), box, int(cfg["scan_points"])) for e in eta_grid for z in z_grid]
    cells = ordered_map(_swap_cell_rows, tasks, _workers(cfg["workers"]))
    rows = [r for cell in cells for r in cell]
    files = [write_csv(out / "swap_sweep.csv", "swap-sweep", cfg, SWAP_COLUMNS, rows)]

    nz, ne = z_grid.size, eta_grid.size
    en = {m: np.full((ne, nz), np.nan) for m in ("formula", "optimized")}
    for k, cell in enumerate(cells):
        i, j = divmod(k, nz)
        for r in cell:
            en[r[0]][i, j] = r[5]
    series, dashed = [], []
    for target in cfg["line_etas"]:
        i = int(np.argmin(np.abs(eta_grid - target)))
        if abs(eta_grid[i] - target) > 1e-9:
            continue
        series.append((f"eta={eta_grid[i]:.3g} optimized", z_grid, en["optimized"][i]))
        dashed.append(False)
        series.append((f"eta={eta_grid[i]:.3g} formula", z_grid, en["formula"][i]))
        dashed.append(True)
    zz = np.linspace(0, float(z_grid.max()), 200)
    series.append(("ideal log2((1+z)^2/(1+z^2))", zz, np.log2((1 + zz) ** 2 / (1 + zz ** 2))))
    dashed.append(True)
    figures = {
        "swap_lines.svg": plots.line_plot(series, "z", "log-negativity", "Steady-state entanglement vs z",
                                          dashed=dashed),
        "swap_formula_map.svg": plots.heatmap(z_grid, eta_grid, en["formula"], "z", "eta",
                                              "Formula gains", "E_N"),
        "swap_optimized_map.svg": plots.heatmap(z_grid, eta_grid, en["optimized"], "z", "eta",
                                                "Optimized gains", "E_N"),
    }
    for name, text in figures.items():
        (out / name).write_text(text, encoding="utf-8")
        files.append(out / name)
    return files


# --- teleport -------------------------------------------------------------

TELEPORT_COLUMNS = [
    "squeeze_db", "N", "M_re", "M_im", "eta", "fock_dim", "purity", "min_variance", "target_min_variance",
    "variance_error", "ground_fidelity", "kernel_dim", "jump_rate", "expected_rate", "jump_overlap",
    "jump_matched", "status",
]


def run_teleport(cfg: dict[str, Any], out: Path) -> list[Path]:
    dbs = _grid(cfg["squeeze_db"], "squeeze_db")
    if np.any(dbs > 0):
        raise UsageError("squeeze_db values must be <= 0")
    eta, d = float(cfg["eta"]), int(cfg["fock_dim"])
    if not 0 < eta <= 1:
        raise UsageError("eta must lie in (0, 1]")
    if d < 10:
        raise UsageError("fock_dim must be at least 10")
    rows = []
    for db in dbs:
        sq = squeezing_from_db(float(db), float(cfg["phase"]))
        head = [float(db), sq.N, sq.M.real, sq.M.imag, eta, d]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = teleport_steady_state(sq, d, eta)
        except NonUniqueSteadyStateError as exc:
            rows.append(head + [np.nan] * 5 + [exc.kernel_dim] + [np.nan] * 4 + ["non-unique steady state"])
            continue
        m = bosonic_teleport_model(sq, d)
        rep = verify_jump_form(teleport_liouvillian(sq, d, eta), [(m.expected_rate, m.expected_jump)])
        ch = rep.channels[0]
        rows.append(head + [res.purity, res.min_variance, sq.min_variance, abs(res.min_variance - sq.min_variance),
                            res.ground_fidelity, res.kernel_dim, ch.found_rate, ch.expected_rate, ch.overlap,
                            rep.matched, "ok"])
    return [write_csv(out / "teleport.csv", "teleport", cfg, TELEPORT_COLUMNS, rows)]


# --- om-sweep ------------------------------------------------------------

OM_COLUMNS = ["C", "nbar", "kappa_over_omega", "zeta_db", "gamma_plus", "gamma_minus", "epsilon", "status"]
OM_CROSSING_COLUMNS = ["nbar", "kappa_over_omega", "C_zero_crossing", "C_crit", "relative_offset"]


def run_om_sweep(cfg: dict[str, Any], out: Path) -> list[Path]:
    Cs = _grid(cfg["C_grid"], "C_grid")
    nbars = _grid(cfg["nbar_grid"], "nbar_grid")
    kos = _grid(cfg["kappa_over_omega_grid"], "kappa_over_omega_grid")
    if np.any(Cs <= 0) or np.any(nbars < 0) or np.any(kos <= 0):
        raise UsageError("C and kappa/omega_m must be positive and nbar non-negative")
    db = float(cfg["squeeze_db"])
    if db > 0:
        raise UsageError("squeeze_db must be <= 0")
    sq = squeezing_from_db(db)
    gk = float(cfg["g_over_kappa"])
    c_crit = critical_cooperativity(sq.N)
    rows, crossings, series = [], [], []
    for ko in kos:
        for nb in nbars:
            zetas = []
            for C in Cs:
                p = om_params_from_cooperativity(float(C), float(nb), float(ko), sq, g_over_kappa=gk)
                d = om_adiabatic_params(p)
                try:
                    z, status = om_gaussian_steady(p).zeta_db, "ok"
                except NoSteadyStateError:
                    z, status = np.nan, "non-Hurwitz drift"
                zetas.append(z)
                rows.append([C, nb, ko, z, d.gamma_plus, d.gamma_minus, d.epsilon, status])
            cx = zeta_crossing(float(nb), float(ko), sq, bracket=(float(Cs.min()), float(Cs.max())))
            crossings.append([nb, ko, cx, c_crit, (cx - c_crit) / c_crit])
            series.append((f"nbar={nb:g}, kappa/omega={ko:g}", Cs, np.array(zetas)))
    files = [
        write_csv(out / "om_sweep.csv", "om-sweep", cfg, OM_COLUMNS, rows),
        write_csv(out / "om_crossings.csv", "om-sweep", cfg, OM_CROSSING_COLUMNS, crossings),
    ]
    svg = plots.line_plot(series, "cooperativity C", "zeta (dB)", "Mechanical squeezing vs cooperativity",
                          xlog=True, hlines=[(db, f"input {db:g} dB"), (0.0, "0 dB")],
                          vlines=[(c_crit, f"C_crit={c_crit:.3g}")])
    (out / "om_sweep.svg").write_text(svg, encoding="utf-8")
    files.append(out / "om_sweep.svg")
    return files


# --- trajectory ----------------------------------------------------------

PHOTOCURRENT_COLUMNS = ["time", "I_plus", "I_minus"]
SWAP_OBS_COLUMNS = ["time", "sz1", "sz2", "dark_fidelity", "log_negativity", "purity"]
OSC_OBS_COLUMNS = ["time", "x", "p", "var_x", "var_p", "n", "purity"]


def _trajectory_setup(cfg: dict[str, Any]):
    proto = cfg["protocol"]
    eta = float(cfg["eta"])
    if not 0 < eta <= 1:
        raise UsageError("eta must lie in (0, 1]")
    if proto == "swap":
        try:
            p = TlsSwapParams(float(cfg["z"]), cfg["G_plus"], cfg["G_minus"], eta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        m = tls_swap_model(p)
        model = swap_sme_model(m.s1, m.s2, eta)
        fb = m.feedback
        dark = m.dark_state.projector()
        init = {"mixed": DensityOp.maximally_mixed((2, 2)), "ground": DensityOp.basis((2, 2), 0),
                "excited": DensityOp.basis((2, 2), 3)}
        sz1, sz2 = embed(sigma_z(), 0, (2, 2)), embed(sigma_z(), 1, (2, 2))

        def observe(rho: DensityOp) -> list:
            return [rho.expect(sz1).real, rho.expect(sz2).real, rho.expect(dark).real,
                    log_negativity(rho), rho.purity()]

        cols = SWAP_OBS_COLUMNS
    elif proto == "teleport":
        d = int(cfg["fock_dim"])
        if d < 10:
            raise UsageError("fock_dim must be at least 10")
        sq = squeezing_from_db(float(cfg["squeeze_db"]))
        bm = bosonic_teleport_model(sq, d)
        model = teleport_sme_model(bm.s, sq, eta)
        fb = bm.feedback
        init = {"mixed": DensityOp.maximally_mixed((d,)), "ground": fock_ket(d, 0).projector(),
                "excited": fock_ket(d, 1).projector()}
        x, pq = quadratures(d)
        num = annihilation(d).dag() @ annihilation(d)

        def observe(rho: DensityOp) -> list:
            V = quadrature_covariance(rho)
            return [rho.expect(x).real, rho.expect(pq).real, V[0, 0], V[1, 1], rho.expect(num).real,
                    rho.purity()]

        cols = OSC_OBS_COLUMNS
    else:
        raise UsageError(f"protocol must be 'swap' or 'teleport', got {proto!r}")
    if cfg["initial"] not in init:
        raise UsageError(f"initial must be one of {sorted(init)}")
    if not cfg["feedback"]:
        fb = None
    return model, fb, init[cfg["initial"]], observe, cols


def _step_count(cfg: dict[str, Any]) -> tuple[int, int]:
    dt, stride = float(cfg["dt"]), int(cfg["stride"])
    if not dt > 0:
        raise UsageError("dt must be positive")
    if stride < 1:
        raise UsageError("stride must be at least 1")
    if cfg["n_steps"] is not None:
        n = int(cfg["n_steps"])
    else:
        n = int(round(float(cfg["t_total"]) / dt))
    if n < 0:
        raise UsageError("the number of steps must be non-negative")
    # round to a whole number of snapshot intervals
    return stride * int(round(n / stride)), stride


def run_trajectory_cmd(cfg: dict[str, Any], out: Path) -> list[Path]:
    model, fb, rho0, observe, cols = _trajectory_setup(cfg)
    n, stride = _step_count(cfg)
    seed = int(cfg["seed"])
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    tc = TrajectoryConfig(float(cfg["dt"]), n, seed, stride)
    traj = run_trajectory(model, fb, tc, rho0)
    rec = traj.record
    cur_rows = [[t, a, b] for t, a, b in zip(rec.times, rec.I_plus, rec.I_minus)]
    obs_rows = [[t] + observe(s) for t, s in zip(traj.times, traj.states)]
    return [
        write_csv(out / "trajectory_photocurrents.csv", "trajectory", cfg, PHOTOCURRENT_COLUMNS, cur_rows),
        write_csv(out / "trajectory_observables.csv", "trajectory", cfg, cols, obs_rows),
    ]


# --- validate ------------------------------------------------------------

VALIDATE_COLUMNS = ["invariant", "value", "tolerance", "passed", "seconds"]


def _chk_noise_identities(cfg) -> tuple[float, float]:
    rng = np.random.default_rng(int(cfg["seed"]))
    err = 0.0
    for _ in range(200):
        sq = SqueezingSpec.from_squeeze(rng.uniform(0, 2.5), rng.uniform(-np.pi, np.pi))
        w = noise_covariance(sq)
        err = max(err, abs(w.w1 * w.w2 - w.w3 ** 2 - (sq.N + 1)), abs(w.w1 + w.w2 - 2 * (sq.N + 1)))
    return err, 1e-10


def _chk_dark_state(cfg) -> tuple[float, float]:
    from .feedback import effective_hamiltonian, swap_jump_operators

    worst = 0.0
    for z in np.arange(1, 10) / 10:
        m = tls_swap_model(TlsSwapParams(float(z)))
        phi = m.dark_state
        ops = [m.j1, m.j2, *swap_jump_operators(m.s1, m.s2, m.feedback), effective_hamiltonian(m.s1, m.s2, m.feedback)]
        worst = max(worst, max(float(np.linalg.norm((op @ phi).amplitudes)) for op in ops))
    return worst, 1e-10


def _chk_swap_fidelity(cfg) -> tuple[float, float]:
    worst = 0.0
    for z in np.arange(1, 10) / 10:
        worst = max(worst, 1 - swap_steady_state(TlsSwapParams(float(z))).fidelity)
    return worst, 1e-3


def _chk_swap_entanglement(cfg) -> tuple[float, float]:
    worst = 0.0
    for z in np.arange(1, 10) / 10:
        target = np.log2((1 + z) ** 2 / (1 + z ** 2))
        worst = max(worst, abs(swap_steady_state(TlsSwapParams(float(z))).log_negativity - target))
    return worst, 1e-3


def _chk_teleport_ground(cfg) -> tuple[float, float]:
    return 1 - teleport_steady_state(SqueezingSpec.vacuum(), int(cfg["fock_dim"])).ground_fidelity, 1e-8


def _chk_teleport_squeezed(cfg) -> tuple[float, float]:
    sq = squeezing_from_db(-6.0)
    res = teleport_steady_state(sq, int(cfg["squeezed_fock_dim"]))
    return abs(res.min_variance - sq.min_variance), 1e-6


def _chk_jump_form(cfg) -> tuple[float, float]:
    sq = squeezing_from_db(-6.0)
    d = int(cfg["fock_dim"])
    m = bosonic_teleport_model(sq, d)
    rep = verify_jump_form(teleport_liouvillian(sq, d), [(m.expected_rate, m.expected_jump)])
    ch = rep.channels[0]
    return max(abs(ch.found_rate - ch.expected_rate), 1 - ch.overlap, rep.unexplained_rate, rep.residual), 1e-8


def _ensemble_distance(cfg, feedback: bool) -> tuple[float, float]:
    sq = squeezing_from_db(-6.0)
    model = teleport_sme_model(sigma_minus(), sq, H_sys=0.5 * sigma_x(), nu_sign=float(cfg["nu_sign"]))
    fb = FeedbackSpec(0.8 * sigma_y(), 0.6 * sigma_x()) if feedback else None
    reference = teleport_sme_model(sigma_minus(), sq, H_sys=0.5 * sigma_x())
    L = reference.liouvillian() if fb is None else reference.feedback_liouvillian(fb)
    dt, T = float(cfg["dt"]), float(cfg["t_total"])
    n = int(round(T / dt))
    rho0 = DensityOp.basis((2,), 1)
    run = run_ensemble(model, fb, TrajectoryConfig(dt, n, int(cfg["seed"]), n), rho0, int(cfg["n_traj"]),
                       workers=_workers(cfg["workers"]))
    avg = ensemble_average(run)
    exact = evolve_me(L, rho0, n * dt, min(dt, 1e-3))
    dist = trace_distance(avg.mean[-1], exact)
    tol = 3 * avg.se[-1] if not feedback else max(3 * avg.se[-1], 5 * dt)
    return dist, tol


def _chk_gaussian_vs_fock(cfg) -> tuple[float, float]:
    sq = squeezing_from_db(-6.0)
    worst = 0.0
    for C, nb in ((50.0, 0.0), (200.0, 0.5)):
        p = om_params_from_cooperativity(C, nb, 0.1, sq)
        V_g = om_gaussian_steady(p).covariance
        rho = steady_state_info(om_feedback_me(p, int(cfg["squeezed_fock_dim"]))).state
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            V_f = quadrature_covariance(rho)
        worst = max(worst, float(np.max(np.abs(V_g - V_f))))
    return worst, 1e-6


def _chk_critical_cooperativity(cfg) -> tuple[float, float]:
    return abs(critical_cooperativity(squeezing_from_db(-6.0).N) - 2.67), 1e-2


def _chk_zeta_crossing(cfg) -> tuple[float, float]:
    sq = squeezing_from_db(-6.0)
    cc = critical_cooperativity(sq.N)
    return abs(zeta_crossing(1000.0, 0.1, sq) - cc) / cc, 0.15


VALIDATORS: dict[str, Callable[[dict], tuple[float, float]]] = {
    "noise_identities": _chk_noise_identities,
    "dark_state_annihilated": _chk_dark_state,
    "swap_steady_fidelity": _chk_swap_fidelity,
    "swap_steady_log_negativity": _chk_swap_entanglement,
    "teleport_vacuum_ground_state": _chk_teleport_ground,
    "teleport_squeezed_min_variance": _chk_teleport_squeezed,
    "teleport_jump_form": _chk_jump_form,
    "ensemble_mean_without_feedback": lambda c: _ensemble_distance(c, False),
    "ensemble_mean_with_feedback": lambda c: _ensemble_distance(c, True),
    "gaussian_vs_fock_covariance": _chk_gaussian_vs_fock,
    "critical_cooperativity": _chk_critical_cooperativity,
    "zeta_zero_crossing": _chk_zeta_crossing,
}


def run_validate(cfg: dict[str, Any], out: Path | None) -> tuple[dict, list[Path]]:
    """Run every invariant check; tolerances are scaled by ``cfg["tighten"]``."""
    factor = float(cfg["tighten"])
    if not factor > 0:
        raise UsageError("tighten must be positive")
    results = []
    for name, fn in VALIDATORS.items():
        t0 = time.perf_counter()
        value, tol = fn(cfg)
        tol *= factor
        results.append({"invariant": name, "value": float(value), "tolerance": float(tol),
                        "passed": bool(np.isfinite(value) and value <= tol),
                        "seconds": round(time.perf_counter() - t0, 3)})
    report = {"passed": all(r["passed"] for r in results), "tighten": factor, "checks": results}
    files = []
    if out is not None:
        rows = [[r[c] for c in VALIDATE_COLUMNS] for r in results]
        files.append(write_csv(out / "validate.csv", "validate", cfg, VALIDATE_COLUMNS, rows))
        (out / "validate.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        files.append(out / "validate.json")
    return report, files


# --- argument parsing ----------------------------------------------------

_SCHEMAS = {
    "swap-sweep": "swap_sweep.csv: " + ", ".join(SWAP_COLUMNS)
                  + "\n  (two rows per cell, mode = formula | optimized)"
                  + "\nplots: swap_lines.svg, swap_formula_map.svg, swap_optimized_map.svg",
    "teleport": "teleport.csv: " + ", ".join(TELEPORT_COLUMNS),
    "om-sweep": "om_sweep.csv: " + ", ".join(OM_COLUMNS)
                + "\nom_crossings.csv: " + ", ".join(OM_CROSSING_COLUMNS) + "\nplot: om_sweep.svg",
    "trajectory": "trajectory_photocurrents.csv: " + ", ".join(PHOTOCURRENT_COLUMNS)
                  + "\ntrajectory_observables.csv: " + ", ".join(SWAP_OBS_COLUMNS) + " (swap)"
                  + "\n  or " + ", ".join(OSC_OBS_COLUMNS) + " (teleport)",
    "validate": "validate.csv: " + ", ".join(VALIDATE_COLUMNS)
                + "\nvalidate.json: the same report; also printed to stdout",
}

_HELP = {
    "swap-sweep": "steady-state entanglement over a (z, eta) grid, formula and optimized gains",
    "teleport": "oscillator fixed points under continuous teleportation feedback",
    "om-sweep": "mechanical squeezing vs cooperativity from the Gaussian moments",
    "trajectory": "one seeded conditional trajectory with photocurrents",
    "validate": "run the invariant checks; exit 1 if any fails",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON file with parameter overrides")
    common.add_argument("--out", metavar="DIR", default="bellflow-out", help="output directory (created if missing)")
    common.add_argument("--seed", metavar="U64", type=int, help="seed for stochastic runs")
    common.add_argument("--workers", metavar="N", type=int,
                        help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    common.add_argument("--dt", metavar="F", type=float, help="time step")
    common.add_argument("--fock-dim", metavar="N", type=int, help="Fock truncation")
    parser = _Parser(prog="bellflow", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"bellflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in DEFAULTS:
        sp = sub.add_parser(name, parents=[common], help=_HELP[name], description=_HELP[name],
                            epilog="output columns:\n" + _SCHEMAS[name]
                                   + "\nconfig keys and defaults: " + json.dumps(DEFAULTS[name]),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "validate":
            sp.add_argument("--tighten", metavar="FACTOR", type=float,
                            help="multiply every tolerance by FACTOR (e.g. 1e-3)")
            sp.add_argument("--inject-wrong-nu", action="store_true",
                            help="negative control: flip the sign of nu in the ensemble checks")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {"seed": args.seed, "workers": args.workers, "dt": args.dt, "fock_dim": args.fock_dim}
        if args.command == "validate":
            overrides["tighten"] = args.tighten
            overrides["nu_sign"] = -1.0 if args.inject_wrong_nu else None
        # flags that a command does not use are ignored rather than rejected
        overrides = {k: v for k, v in overrides.items() if k in DEFAULTS[args.command]}
        cfg = load_config(args.command, args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "validate":
            report, _ = run_validate(cfg, out)
            print(json.dumps(report, indent=2))
            return EXIT_OK if report["passed"] else EXIT_FAIL
        runner = {"swap-sweep": run_swap_sweep, "teleport": run_teleport, "om-sweep": run_om_sweep,
                  "trajectory": run_trajectory_cmd}[args.command]
        for f in runner(cfg, out):
            print(f)
        return EXIT_OK
    except UsageError as exc:
        print(f"bellflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
