"""Command-line scenario runner.

Every subcommand writes one CSV table (header row, ``%.17g`` floats, Unix
newlines, ``#`` comment lines) to ``--out`` or stdout.  Parameters come from
built-in defaults, then an optional ``key = value`` config file, then
command-line flags.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures (rows computed before the failure are kept).
"""

import argparse
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adiabatic import AQC_THRESHOLD, xi_table
from .dynamics import IntegratorConfig, integrate_master
from .errors import AdiabaticError, ConfigError, InputError, NumericalError
from .measurement import (
    AXES, TomographyProtocol, fidelity, project_physical, sample_counts, tomography,
)
from .models import (
    DEUTSCH_OMEGA, GAMMAS, LZ_OMEGA0, LZ_OMEGAX, READOUT_ERROR, DeutschParams, LZParams,
    deutsch_model, deutsch_target, lz_model,
)
from .spectral import SpectralPath, decompose, track

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

WINDOW_THRESHOLD = 0.95
LZ_HORIZON = 3e-3
FIG3_HORIZON = 3e-3
FIG4_HORIZON = 2e-3


@dataclass(frozen=True)
class Option:
    type: type
    help: str
    scope: str = "shared"  # shared | lz | deutsch | tomo | command


def _u64(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _bit(s):
    v = int(s)
    if v not in (0, 1):
        raise ValueError("must be 0 or 1")
    return v


OPTIONS = {
    "model": Option(str, "lz or deutsch"),
    "out": Option(str, "output CSV path (default stdout)"),
    "seed": Option(_u64, "master seed for tomography sampling"),
    "samples": Option(int, "number of grid points"),
    "tmax": Option(float, "time horizon in s (sweeps: largest tau)"),
    "rel_tol": Option(float, "integrator relative tolerance"),
    "abs_tol": Option(float, "integrator absolute tolerance"),
    "omega0": Option(float, "LZ level splitting, rad/s", "lz"),
    "omegax": Option(float, "LZ drive amplitude, rad/s", "lz"),
    "omega": Option(float, "LZ drive frequency, rad/s (default: omega0)", "lz"),
    "gamma": Option(float, "dephasing rate, 1/s"),
    "omega_d": Option(float, "Deutsch drive strength, rad/s", "deutsch"),
    "f0": Option(_bit, "Deutsch f(0)", "deutsch"),
    "f1": Option(_bit, "Deutsch f(1)", "deutsch"),
    "tau": Option(float, "Deutsch total time, s", "deutsch"),
    "shots": Option(int, "tomography shots per axis (enables tomography)", "tomo"),
    "repeats": Option(int, "tomography repeats", "tomo"),
    "readout_error": Option(float, "tomography readout flip probability", "tomo"),
    "pairs": Option(str, "xi label pairs, e.g. 21,31", "command"),
    "threshold": Option(float, "AQC threshold on max xi", "command"),
    "gammas": Option(str, "comma-separated gamma list for sweeps", "command"),
    "taus": Option(str, "comma-separated tau list for sweeps", "command"),
    "window_threshold": Option(float, "fid_target level defining a window", "command"),
    "jobs": Option(int, "worker processes for sweeps", "command"),
}

DEFAULTS = {
    "model": "lz", "seed": 0, "samples": 101, "rel_tol": 1e-9, "abs_tol": 1e-12,
    "omega0": LZ_OMEGA0, "omegax": LZ_OMEGAX, "gamma": GAMMAS[0],
    "omega_d": DEUTSCH_OMEGA, "f0": 0, "f1": 1, "tau": 1e-3,
    "repeats": 10, "readout_error": READOUT_ERROR, "pairs": "21,31",
    "threshold": AQC_THRESHOLD, "window_threshold": WINDOW_THRESHOLD, "jobs": 1,
}

PRESETS = {
    "fig2": {"model": "lz", "gammas": ",".join(f"{g:g}" for g in GAMMAS), "tmax": LZ_HORIZON,
             "shots": 2000},
    "fig3": {"model": "deutsch", "gammas": ",".join(f"{g:g}" for g in GAMMAS),
             "tmax": FIG3_HORIZON, "shots": 2000},
    "fig4": {"model": "deutsch", "gammas": ",".join(f"{g:g}" for g in GAMMAS),
             "tmax": FIG4_HORIZON},
}

COMMANDS = ("spectrum", "xi", "evolve", "sweep", "fig2", "fig3", "fig4", "tomo")


# -- configuration ------------------------------------------------------------


def _convert(key, raw):
    try:
        return OPTIONS[key].type(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {raw!r} for {key}: {exc}") from None


def read_config(path):
    """Parse ``key = value`` lines; keys are long flag names.

    ``-`` and ``_`` are interchangeable in keys; ``#`` starts a comment.
    """
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "config":
            raise ConfigError(f"{path}:{n}: config files cannot include other configs")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{n}: duplicate key {key!r}")
        out[key] = _convert(key, val)
    return out


def resolve(command, cli_values, config_values=None):
    """Merge defaults, preset, config file and flags (later wins) and validate."""
    explicit = dict(config_values or {})
    explicit.update({k: v for k, v in cli_values.items() if v is not None})
    merged = dict(DEFAULTS)
    merged.update(PRESETS.get(command, {}))
    merged.update(explicit)
    model = merged["model"]
    if model not in ("lz", "deutsch"):
        raise ConfigError(f"model must be 'lz' or 'deutsch', got {model!r}")
    if command in PRESETS and merged["model"] != PRESETS[command]["model"]:
        raise ConfigError(f"{command} is a {PRESETS[command]['model']} preset")
    other = "deutsch" if model == "lz" else "lz"
    bad = sorted(k for k in explicit if OPTIONS[k].scope == other)
    if bad:
        raise ConfigError(f"keys {bad} do not apply to model {model!r}")
    if model == "lz" and "omega" not in merged:
        merged["omega"] = merged["omega0"]
    if model == "deutsch" and "tmax" in explicit and command not in ("sweep", "fig3", "fig4"):
        raise ConfigError("deutsch runs span [0, tau]; set --tau instead of --tmax")
    if merged["samples"] < 2:
        raise ConfigError("samples must be >= 2")
    if merged["jobs"] < 1:
        raise ConfigError("jobs must be >= 1")
    merged.setdefault("tmax", LZ_HORIZON if model == "lz" else merged["tau"])
    if not merged["tmax"] > 0:
        raise ConfigError("tmax must be positive")
    try:
        merged["integrator"] = IntegratorConfig(merged["rel_tol"], merged["abs_tol"])
        merged["params"] = _params(merged)
        merged["protocol"] = None
        if merged.get("shots"):
            merged["protocol"] = TomographyProtocol(merged["shots"], merged["repeats"],
                                                    merged["seed"], merged["readout_error"])
    except InputError as exc:
        raise ConfigError(str(exc)) from None
    return merged


def _params(cfg, gamma=None, tau=None):
    g = cfg["gamma"] if gamma is None else gamma
    if cfg["model"] == "lz":
        return LZParams(cfg["omega0"], cfg["omegax"], cfg["omega"], g)
    return DeutschParams(cfg["omega_d"], cfg["f0"], cfg["f1"], cfg["tau"] if tau is None else tau, g)


def _model(params):
    if isinstance(params, LZParams):
        return lz_model(params)
    # intermediate-s comparisons need the sign the dynamics actually produce
    return deutsch_model(params, reference_variant="dynamics")


def _float_list(cfg, key):
    raw = cfg.get(key)
    if raw is None:
        return None
    try:
        vals = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of numbers") from None
    if not vals:
        raise ConfigError(f"{key} is empty")
    return vals


def parse_pairs(text):
    """``"21,31"`` -> ``[(2, 1), (3, 1)]``."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if len(tok) != 2 or not tok.isdigit() or tok[0] == tok[1]:
            raise ConfigError(f"bad pair {tok!r}; use two distinct label digits like 21")
        out.append((int(tok[0]), int(tok[1])))
    return out


# -- output -------------------------------------------------------------------


def fmt(x):
    return f"{x:.17g}" if isinstance(x, (float, np.floating)) else str(x)


class Table:
    """Streaming CSV writer; rows are flushed as they are produced."""

    def __init__(self, fh, columns, comments=()):
        self.fh = fh
        self.columns = list(columns)
        self.rows = 0
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(self.columns) + "\n")
        fh.flush()

    def row(self, values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match header")
        self.fh.write(",".join(fmt(v) for v in values) + "\n")
        self.fh.flush()
        self.rows += 1

    def comment(self, text):
        self.fh.write(f"# {text}\n")
        self.fh.flush()


def _describe(command, cfg):
    swept = cfg.get("gammas") is not None and command in ("sweep", "fig2", "fig3", "fig4")
    keys = ["model", "gammas" if swept else "gamma", "samples", "tmax", "rel_tol", "abs_tol"]
    keys += ["omega0", "omegax", "omega"] if cfg["model"] == "lz" else ["omega_d", "f0", "f1"]
    if cfg["model"] == "deutsch" and command not in ("sweep", "fig3", "fig4"):
        keys.append("tau")
    if cfg.get("taus") is not None:
        keys.append("taus")
    if cfg["protocol"] is not None:
        keys += ["shots", "repeats", "readout_error", "seed"]
    return f"{command} " + " ".join(f"{k}={fmt(cfg[k])}" for k in keys)


# -- commands -----------------------------------------------------------------


def _grid(cfg):
    return np.linspace(0.0, cfg["tmax"], cfg["samples"])


def cmd_spectrum(cfg, fh):
    """Eigenvalues, smallest gap and condition number on the time grid."""
    model = _model(cfg["params"])
    L = model.superop()
    cols = ["t"] + [f"{p}_l{a}" for a in range(4) for p in ("re", "im")] + ["min_gap", "cond"]
    tab = Table(fh, cols, [_describe("spectrum", cfg)])
    path = SpectralPath(superop=L)
    for k, t in enumerate(_grid(cfg)):
        ref = model.reference_eigenvalues(t) if k == 0 else None
        track(path, decompose(L(t), t, reference=ref))
        fr = path.frames[-1]
        gaps = fr.pair_gaps()
        vals = [x for v in fr.values for x in (v.real, v.imag)]
        tab.row([t, *vals, min(gaps.values()) if gaps else 0.0, fr.condition])
    return tab


def _xi_rows(params, grid, pairs):
    model = _model(params)
    L = model.superop()
    path = SpectralPath(superop=L)
    for k, t in enumerate(grid):
        ref = model.reference_eigenvalues(t) if k == 0 else None
        track(path, decompose(L(t), t, reference=ref))
    return xi_table(path, pairs, on_gap="flag")


def cmd_xi(cfg, fh):
    """Adiabatic parameters with running maxima and an AQC verdict footer."""
    pairs = parse_pairs(cfg["pairs"])
    names = [f"{b}{a}" for b, a in pairs]
    cols = ["t"] + [f"xi_{n}" for n in names] + [f"max_{n}" for n in names] + ["gap_ok"]
    grid = _grid(cfg)
    xi, _, ok = _xi_rows(cfg["params"], grid, pairs)
    tab = Table(fh, cols, [_describe("xi", cfg)])
    run = np.maximum.accumulate(xi, axis=0)
    for k, t in enumerate(grid):
        tab.row([t, *xi[k], *run[k], int(ok[k])])
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} rows hit a vanishing gap; xi set to 0 there",
                      stacklevel=2)
    verdict = bool(ok.all() and np.all(run[-1] < cfg["threshold"]))
    tab.comment(f"aqc_verdict={str(verdict).lower()} threshold={fmt(cfg['threshold'])} "
                + " ".join(f"max_{n}={fmt(m)}" for n, m in zip(names, run[-1])))
    return tab


def _evolve_columns(model, protocol):
    cols = ["t", "fid_adiabatic"]
    if model.name == "deutsch":
        cols.append("fid_target")
    cols += ["trace_err", "purity", "bloch_x", "bloch_y", "bloch_z"]
    if protocol is not None:
        cols += ["fid_expt_mean", "fid_expt_std"]
    return cols


def _evolve_rows(params, grid, icfg, protocol, point0=0):
    model = _model(params)
    tr = integrate_master(model.hamiltonian, model.channel, model.rho0, grid[-1], icfg, grid=grid)
    b = tr.bloch()
    rows = []
    for k, t in enumerate(tr.times):
        rho = tr.states[k]
        ref = model.adiabatic_reference(t)
        row = [t, fidelity(ref, rho, check=False)]
        if model.name == "deutsch":
            row.append(fidelity(deutsch_target(params.f0, params.f1), rho, check=False))
        row += [tr.trace_error[k], tr.purity[k], *b[k]]
        if protocol is not None:
            _, res = tomography(_physical(rho), protocol, truth=ref, point=point0 + k)
            row += [res.fidelity_mean, res.fidelity_std]
        rows.append(row)
    return rows


def _physical(rho):
    # integration noise can leave eigenvalues at -1e-13; sampling needs a valid state
    return project_physical(rho)


def cmd_evolve(cfg, fh):
    """Exact trajectory compared with the adiabatic reference."""
    params = cfg["params"]
    model = _model(params)
    tab = Table(fh, _evolve_columns(model, cfg["protocol"]), [_describe("evolve", cfg)])
    for row in _evolve_rows(params, _grid(cfg), cfg["integrator"], cfg["protocol"]):
        tab.row(row)
    return tab


def cmd_tomo(cfg, fh):
    """Virtual tomography counts along the exact trajectory."""
    protocol = cfg["protocol"] or TomographyProtocol(2000, cfg["repeats"], cfg["seed"],
                                                     cfg["readout_error"])
    cfg = dict(cfg, protocol=protocol, shots=protocol.shots)
    model = _model(cfg["params"])
    grid = _grid(cfg)
    tr = integrate_master(model.hamiltonian, model.channel, model.rho0, grid[-1],
                          cfg["integrator"], grid=grid)
    tab = Table(fh, ["t", "repeat", "axis", "shots", "up", "down"], [_describe("tomo", cfg)])
    for k, t in enumerate(tr.times):
        rho = _physical(tr.states[k])
        counts = {a: sample_counts(rho, a, protocol, point=k) for a in AXES}
        for r in range(protocol.repeats):
            for a in AXES:
                up = int(counts[a][r])
                tab.row([t, r, a, protocol.shots, up, protocol.shots - up])
    return tab


def find_windows(x, y, level):
    """Maximal runs with ``y >= level`` as ``[(x_start, x_end), ...]`` plus run ids."""
    ids = np.zeros(len(y), dtype=int)
    out = []
    cur = 0
    for k, v in enumerate(y):
        if v >= level:
            if k == 0 or y[k - 1] < level:
                cur += 1
                out.append([x[k], x[k]])
            ids[k] = cur
            out[-1][1] = x[k]
    return [tuple(w) for w in out], ids


def local_maxima(y):
    y = np.asarray(y)
    m = np.zeros(y.size, dtype=int)
    if y.size >= 3:
        m[1:-1] = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])
    return m


def _sweep_point(args):
    params, icfg, protocol, point = args
    model = _model(params)
    tau = params.tau
    tr = integrate_master(model.hamiltonian, model.channel, model.rho0, tau, icfg, grid=[0.0, tau])
    rho = tr.states[-1]
    ref = model.adiabatic_reference(tau)
    row = [fidelity(ref, rho, check=False),
           fidelity(deutsch_target(params.f0, params.f1), rho, check=False)]
    if protocol is not None:
        _, res = tomography(_physical(rho), protocol, truth=ref, point=point)
        row += [res.fidelity_mean, res.fidelity_std]
    return row


def _lz_sweep(cfg, gammas, taus, tab):
    for j, g in enumerate(gammas):
        params = _params(cfg, gamma=g)
        grid = np.asarray(taus)
        if grid[0] > 0:
            grid = np.r_[0.0, grid]
        rows = _evolve_rows(params, grid, cfg["integrator"], cfg["protocol"], j * len(grid))
        for row in rows[len(rows) - len(taus):]:
            tab.row([g, *row])


def cmd_sweep(cfg, fh, name="sweep"):
    """Final fidelities over a (gamma, tau) grid with window detection."""
    gammas = _float_list(cfg, "gammas") or [cfg["gamma"]]
    taus = _float_list(cfg, "taus")
    if taus is None:
        n = cfg["samples"]
        taus = list(np.linspace(cfg["tmax"] / n, cfg["tmax"], n))
    if any(t <= 0 for t in taus) or np.any(np.diff(taus) <= 0):
        raise ConfigError("taus must be positive and strictly increasing")
    if any(g < 0 for g in gammas):
        raise ConfigError("gammas must be non-negative")
    proto = cfg["protocol"]
    if cfg["model"] == "lz":
        model = _model(cfg["params"])
        tab = Table(fh, ["gamma"] + _evolve_columns(model, proto), [_describe(name, cfg)])
        _lz_sweep(cfg, gammas, taus, tab)
        return tab
    cols = ["gamma", "tau", "fid_adiabatic", "fid_target"]
    if proto is not None:
        cols += ["fid_expt_mean", "fid_expt_std"]
    cols += ["window", "local_max"]
    tab = Table(fh, cols, [_describe(name, cfg)])
    level = cfg["window_threshold"]
    jobs = [(_params(cfg, gamma=g, tau=t), cfg["integrator"], proto, j * len(taus) + k)
            for j, g in enumerate(gammas) for k, t in enumerate(taus)]
    results = _run_jobs(jobs, cfg["jobs"])
    summary = []
    for j, g in enumerate(gammas):
        block = results[j * len(taus):(j + 1) * len(taus)]
        target = [r[1] for r in block]
        wins, ids = find_windows(taus, target, level)
        peaks = local_maxima(target)
        for k, (t, r) in enumerate(zip(taus, block)):
            tab.row([g, t, *r, int(ids[k]), int(peaks[k])])
        spans = " ".join(f"[{fmt(a)},{fmt(b)}]" for a, b in wins) or "none"
        summary.append(f"windows gamma={fmt(g)} level={fmt(level)} count={len(wins)} {spans}")
    for s in summary:
        tab.comment(s)
    return tab


def _run_jobs(jobs, n_workers):
    if n_workers == 1:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        # map preserves submission order, so output is independent of scheduling
        return list(ex.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))


def cmd_fig2(cfg, fh):
    """LZ fidelity to the adiabatic state for each preset gamma."""
    gammas = _float_list(cfg, "gammas")
    grid = _grid(cfg)
    model = _model(cfg["params"])
    tab = Table(fh, ["gamma"] + _evolve_columns(model, cfg["protocol"]), [_describe("fig2", cfg)])
    for j, g in enumerate(gammas):
        for row in _evolve_rows(_params(cfg, gamma=g), grid, cfg["integrator"], cfg["protocol"],
                                j * len(grid)):
            tab.row([g, *row])
    return tab


def cmd_fig3(cfg, fh):
    """Deutsch final fidelities over the preset gammas and total times up to 3 ms."""
    return cmd_sweep(cfg, fh, "fig3")


def cmd_fig4(cfg, fh):
    """Deutsch fidelity windows over the preset gammas and total times up to 2 ms."""
    return cmd_sweep(cfg, fh, "fig4")


HANDLERS = {
    "spectrum": cmd_spectrum, "xi": cmd_xi, "evolve": cmd_evolve, "sweep": cmd_sweep,
    "fig2": cmd_fig2, "fig3": cmd_fig3, "fig4": cmd_fig4, "tomo": cmd_tomo,
}


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="lindblad-adiabatic", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HANDLERS[name].__doc__.split("\n")[0] if HANDLERS[name].__doc__
                            else name)
        sp.add_argument("--config", help="key = value file; flags override it")
        for key, opt in OPTIONS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=opt.type, default=None,
                            help=opt.help)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        values = vars(args)
        command = values.pop("command")
        path = values.pop("config")
        cfg = resolve(command, values, read_config(path) if path else None)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.get("out")
    fh = sys.stdout if out in (None, "-") else None
    try:
        if fh is None:
            fh = open(out, "w", newline="")
    except OSError as exc:
        print(f"error: cannot open {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        HANDLERS[command](cfg, fh)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        fh.write(f"# error: {type(exc).__name__}: {exc}\n")
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, AdiabaticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``); stop quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    finally:
        if fh is not sys.stdout:
            fh.close()


if __name__ == "__main__":
    sys.exit(main())
