"""Command-line front end: simulate / reduce / optimize / verify / sweep / figures.

All user-facing quantities are the dimensionless ratios Gamma/omega0,
gamma/omega0 and omega0*T.  Outputs are plot-ready CSV files plus JSON
summaries; every output embeds the configuration and seed that produced it,
and identical configuration + seed produce byte-identical files.

Exit codes: 0 success (and all checks passed), 1 usage error, 2 numerical
failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analytic, optimizer
from .model import (
    HALF_PI,
    ControlSignal,
    IntegrationError,
    SystemParams,
    integrate_full,
    optical_pumping_control,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3

ENV_OUT = "LAMBDA_CONTROL_OUT"

PMP_RESIDUAL_GATE = 1e-10

# Regimes emitted by the `figures` command: (gamma, [(panel, gamma_diff, T)]).
FIGURE_REGIMES = {
    "fig2": (0.1, [("T5", 0.0, 5.0), ("T10", 0.0, 10.0), ("T20", 0.0, 20.0)]),
    "fig3": (10.0, [("T35", 0.0, 35.0), ("T50", 0.0, 50.0),
                    ("T100", 0.0, 100.0)]),
    "fig4": (2.0, [("T10", 0.0, 10.0), ("T20", 0.0, 20.0), ("T40", 0.0, 40.0)]),
    "fig5": (10.0, [("gm8", -8.0, 100.0), ("gm2", -2.0, 100.0),
                    ("gp2", 2.0, 100.0), ("gp8", 8.0, 100.0)]),
}


class UsageError(Exception):
    pass


class VerificationFailure(Exception):
    def __init__(self, message: str, offenders=None):
        super().__init__(message)
        self.offenders = offenders or []


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Configuration plumbing
# ---------------------------------------------------------------------------

_CASTS = {
    "gamma": float,
    "gamma_diff": float,
    "duration": float,
    "tprime": float,
    "intervals": int,
    "seed": int,
    "n": int,
    "starts": int,
    "max_iters": int,
    "format": str,
    "out": str,
    "control": str,
    "control_file": str,
    "jumps": str,
    "arcs": str,
    "gammas": str,
    "gamma_diffs": str,
    "durations": str,
    "selector": str,
}


def read_config_file(path: Path) -> dict:
    """Parse a `key = value` file mirroring the flags ('#' starts a comment)."""
    data = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (expected key = value): {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            data[key] = _CASTS[key](value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key!r}: {value!r}") from exc
    return data


def _effective(args, defaults: dict) -> dict:
    """Merge defaults < config file < explicit flags."""
    eff = dict(defaults)
    filecfg = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in filecfg.items():
        if key in eff:
            eff[key] = value
    for key in eff:
        value = getattr(args, key, None)
        if value is not None:
            eff[key] = value
    return eff


def _require(eff: dict, *keys):
    for key in keys:
        if eff.get(key) is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")


def _out_dir(args) -> Path:
    out = getattr(args, "out", None)
    if out is None:
        out = os.environ.get(ENV_OUT, "out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _params(eff: dict) -> SystemParams:
    return SystemParams(gamma_total=eff["gamma"], gamma_diff=eff["gamma_diff"])


def _floats(text: str, option: str) -> list[float]:
    try:
        return [float(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad {option} list: {text!r}") from exc


# ---------------------------------------------------------------------------
# Deterministic writers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _config_comment(cfg: dict) -> str:
    return "config: " + json.dumps(cfg, sort_keys=True)


def write_csv(path: Path, cfg: dict, header: str, rows):
    lines = [f"# {_config_comment(cfg)}", header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def load_control_file(path: Path, duration: float) -> ControlSignal:
    """CSV of `t,theta` rows: interval start times and angles; last interval
    extends to the requested duration."""
    starts, thetas = [], []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read control file {path}: {exc}") from exc
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) < 2:
            raise UsageError(f"bad control row (expected t,theta): {raw!r}")
        try:
            t, th = float(parts[0]), float(parts[1])
        except ValueError:
            continue  # header row
        starts.append(t)
        thetas.append(th)
    if not starts:
        raise UsageError(f"control file {path} contains no samples")
    try:
        return ControlSignal.piecewise(starts, thetas, duration)
    except ValueError as exc:
        raise UsageError(f"invalid control file {path}: {exc}") from exc


def _named_control(name: str, duration: float, intervals: int) -> ControlSignal:
    if name == "pumping":
        return optical_pumping_control(duration)
    if name == "theta0":
        return ControlSignal.constant(0.0, duration)
    if name == "ramp_up":
        return ControlSignal.linear_ramp(0.0, HALF_PI, duration, intervals)
    if name == "ramp_down":
        return ControlSignal.linear_ramp(HALF_PI, 0.0, duration, intervals)
    raise UsageError(f"unknown control {name!r}")


def cmd_simulate(args) -> int:
    defaults = {"gamma": None, "gamma_diff": 0.0, "duration": None,
                "intervals": 100, "seed": 0, "format": "csv",
                "control": None, "control_file": None}
    eff = _effective(args, defaults)
    _require(eff, "gamma", "duration")
    if eff["control"] and eff["control_file"]:
        raise UsageError("--control and --control-file are mutually exclusive")
    params = _params(eff)
    T = float(eff["duration"])
    if eff["control_file"]:
        control = load_control_file(eff["control_file"], T)
        control_name = f"file:{Path(eff['control_file']).name}"
    else:
        control_name = eff["control"] or "pumping"
        control = _named_control(control_name, T, int(eff["intervals"]))

    cfg = {"command": "simulate", "gamma": eff["gamma"],
           "gamma_diff": eff["gamma_diff"], "duration": T,
           "intervals": int(eff["intervals"]), "seed": int(eff["seed"]),
           "control": control_name, "format": eff["format"]}

    trajectory = integrate_full(control, params, T)
    out = _out_dir(args)
    outputs = {}
    if eff["format"] == "json":
        payload = {
            "config": cfg,
            "t": trajectory.times.tolist(),
            "rho11": trajectory.rho11.tolist(),
            "rho22": trajectory.rho22.tolist(),
            "rho33": trajectory.rho33.tolist(),
            "x4": trajectory.states[:, 3].tolist(),
            "x5": trajectory.states[:, 4].tolist(),
            "x6": trajectory.states[:, 5].tolist(),
            "theta": trajectory.thetas.tolist(),
            "omega_p": np.sin(trajectory.thetas).tolist(),
            "omega_s": np.cos(trajectory.thetas).tolist(),
        }
        write_json(out / "trajectory.json", payload)
        outputs["trajectory"] = "trajectory.json"
    else:
        trajectory.write_csv(out / "trajectory.csv", omega0=params.omega0,
                             comment=_config_comment(cfg))
        outputs["trajectory"] = "trajectory.csv"

    final = trajectory.final_state
    summary = {
        "command": "simulate",
        "config": cfg,
        "final": {"rho11": float(final[0]), "rho22": float(final[1]),
                  "rho33": float(final[2])},
        "trace_drift": trajectory.trace_drift(),
        "max_y": trajectory.max_y(),
        "outputs": outputs,
    }
    write_json(out / "summary.json", summary)
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reduce
# ---------------------------------------------------------------------------

def cmd_reduce(args) -> int:
    defaults = {"tprime": 5.0, "jumps": None, "arcs": None, "seed": 0,
                "format": "csv"}
    eff = _effective(args, defaults)
    tprime = float(eff["tprime"])
    if eff["jumps"] is None and eff["arcs"] is None:
        seq = analytic.BangSingularSequence.optical_pumping(tprime)
    else:
        _require(eff, "jumps", "arcs")
        seq = analytic.BangSingularSequence(
            jumps=_floats(eff["jumps"], "--jumps"),
            arcs=_floats(eff["arcs"], "--arcs"),
        )
        tprime = seq.total_time

    cfg = {"command": "reduce", "tprime": tprime,
           "jumps": [float(j) for j in seq.jumps],
           "arcs": [float(a) for a in seq.arcs], "seed": int(eff["seed"])}

    rows = [(0.0, -1.0, 0.0, 0.0)]
    t = 0.0
    theta = 0.0
    x, y = -1.0, 0.0
    samples_per_arc = max(2, math.ceil(512 / seq.n))
    for jump, arc in zip(seq.jumps, seq.arcs):
        theta += float(jump)
        x, y = analytic.apply_bang(x, y, jump)
        rows.append((t, x, y, theta))
        if arc > 0.0:
            for tau in np.linspace(0.0, arc, samples_per_arc)[1:]:
                decay = math.exp(-tau)
                rows.append((t + tau, decay * (x + 1.0) - 1.0, decay * y, theta))
            x, y = analytic.apply_singular(x, y, arc)
            t += float(arc)

    out = _out_dir(args)
    write_csv(out / "reduced.csv", cfg, "tprime,x,y,theta", rows)
    summary = {"command": "reduce", "config": cfg,
               "final": {"x": x, "y": y, "theta": theta},
               "outputs": {"trajectory": "reduced.csv"}}
    write_json(out / "reduced_summary.json", summary)
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def _opt_config(eff: dict) -> optimizer.OptimizationConfig:
    return optimizer.OptimizationConfig(
        n_intervals=int(eff["intervals"]),
        max_iters=int(eff["max_iters"]),
        n_starts=int(eff["starts"]),
        seed=int(eff["seed"]),
    )


def _control_rows(control: ControlSignal):
    """Step-plot rows: one per interval left edge plus a closing row at T."""
    rows = []
    for t, th in zip(control.grid[:-1], control.theta):
        rows.append((float(t), float(th), math.sin(th), math.cos(th)))
    last = float(control.theta[-1])
    rows.append((control.duration, last, math.sin(last), math.cos(last)))
    return rows


def cmd_optimize(args) -> int:
    defaults = {"gamma": None, "gamma_diff": 0.0, "duration": None,
                "intervals": 100, "seed": 0, "starts": 6, "max_iters": 300,
                "format": "csv"}
    eff = _effective(args, defaults)
    _require(eff, "gamma", "duration")
    params = _params(eff)
    T = float(eff["duration"])
    config = _opt_config(eff)

    cfg = {"command": "optimize", "gamma": eff["gamma"],
           "gamma_diff": eff["gamma_diff"], "duration": T,
           "intervals": config.n_intervals, "seed": config.seed,
           "starts": config.n_starts, "max_iters": config.max_iters}

    result = optimizer.optimize(config, params, T)
    baseline = optimizer.pumping_baseline(params, T)

    out = _out_dir(args)
    write_csv(out / "optimized_control.csv", cfg, "t,theta,omega_p,omega_s",
              _control_rows(result.control))
    summary = {
        "command": "optimize",
        "config": cfg,
        "params": {"gamma": eff["gamma"], "gamma_diff": eff["gamma_diff"]},
        "T": T,
        "objective": result.objective,
        "pumping_baseline": baseline,
        "converged": result.converged,
        "iterations": result.iterations,
        "start_label": result.start_label,
        "outputs": {"control": "optimized_control.csv"},
    }
    write_json(out / "optimize.json", summary)
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    defaults = {"tprime": 5.0, "n": 10000, "seed": 0, "format": "json"}
    eff = _effective(args, defaults)
    tprime = float(eff["tprime"])
    count = int(eff["n"])
    if count < 1:
        raise UsageError("--n must be at least 1")
    seed = int(eff["seed"])
    cfg = {"command": "verify", "tprime": tprime, "n": count, "seed": seed}

    rng = np.random.default_rng(seed)
    records = []
    violations = []
    for index in range(count):
        if index == 0:
            seq = analytic.BangSingularSequence.optical_pumping(tprime)
        else:
            seq = analytic.random_sequence(rng, int(rng.integers(1, 11)), tprime)
        check = analytic.verify_bound(seq)
        record = {
            "n": seq.n,
            "thetas": [float(v) for v in seq.jumps],
            "arcs": [float(v) for v in seq.arcs],
            "xn": check.xn,
            "x1": check.x1,
            "margin": check.margin,
        }
        records.append(record)
        if not check.satisfied:
            violations.append(record)

    pump = analytic.BangSingularSequence.optical_pumping(tprime)
    report = analytic.pmp_residual(pump)
    pmp_ok = (report.max_phi <= PMP_RESIDUAL_GATE
              and report.max_lambda_y <= PMP_RESIDUAL_GATE)

    out = _out_dir(args)
    with open(out / "verify_sequences.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    summary = {
        "command": "verify",
        "config": cfg,
        "n_sequences": count,
        "n_violations": len(violations),
        "pmp": {"max_phi": report.max_phi,
                "max_lambda_y": report.max_lambda_y,
                "mu": report.mu,
                "passed": pmp_ok},
        "all_passed": pmp_ok and not violations,
        "outputs": {"sequences": "verify_sequences.jsonl"},
    }
    write_json(out / "verify_summary.json", summary)
    _emit(summary)

    if violations:
        raise VerificationFailure(
            f"{len(violations)} sequence(s) violate the pumping bound",
            offenders=violations,
        )
    if not pmp_ok:
        raise VerificationFailure(
            f"pumping PMP residuals exceed {PMP_RESIDUAL_GATE:g} "
            f"(max_phi={report.max_phi:g}, max_lambda_y={report.max_lambda_y:g})"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    defaults = {"gammas": None, "gamma_diffs": "0", "durations": None,
                "intervals": 100, "seed": 0, "starts": 6, "max_iters": 300,
                "format": "csv"}
    eff = _effective(args, defaults)
    _require(eff, "gammas", "durations")
    gammas = _floats(eff["gammas"], "--gammas")
    gamma_diffs = _floats(eff["gamma_diffs"], "--gamma-diffs")
    durations = _floats(eff["durations"], "--durations")
    config = _opt_config(eff)

    cfg = {"command": "sweep", "gammas": gammas, "gamma_diffs": gamma_diffs,
           "durations": durations, "intervals": config.n_intervals,
           "seed": config.seed, "starts": config.n_starts,
           "max_iters": config.max_iters}

    cells = optimizer.grid_cells(gammas, gamma_diffs, durations)
    rows = optimizer.sweep(cells, config)

    csv_rows = []
    detail = []
    for row in rows:
        if row.error is None:
            winner = row.winner_start
        else:
            # Keep the fixed column layout: no separators inside the field.
            reason = row.error.replace(",", ";").replace("\n", " ")
            winner = f"error:{reason}"
        csv_rows.append((row.gamma, row.gamma_diff, row.duration,
                         row.objective, row.pumping_baseline, winner))
        detail.append({
            "gamma": row.gamma, "gamma_diff": row.gamma_diff,
            "duration": row.duration, "objective": row.objective,
            "pumping_baseline": row.pumping_baseline,
            "winner_start": row.winner_start, "converged": row.converged,
            "error": row.error,
        })

    out = _out_dir(args)
    write_csv(out / "sweep.csv", cfg,
              "gamma_over_omega0,gamma_diff_over_omega0,omega0T,"
              "objective,pumping_baseline,winner_start", csv_rows)
    failures = [d for d in detail if d["error"] is not None]
    summary = {"command": "sweep", "config": cfg, "n_cells": len(rows),
               "n_failures": len(failures), "cells": detail,
               "outputs": {"table": "sweep.csv"}}
    write_json(out / "sweep_summary.json", summary)
    _emit(summary)
    if failures and len(failures) == len(rows):
        raise IntegrationError("every sweep cell failed", last_time=0.0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def cmd_figures(args) -> int:
    defaults = {"intervals": 100, "seed": 0, "starts": 6, "max_iters": 300,
                "format": "csv"}
    eff = _effective(args, defaults)
    selector = args.selector
    if selector not in FIGURE_REGIMES:
        raise UsageError(
            f"unknown figure selector {selector!r}; "
            f"choose from {sorted(FIGURE_REGIMES)}"
        )
    gamma, panels = FIGURE_REGIMES[selector]
    config = _opt_config(eff)
    out = _out_dir(args)

    panel_summaries = []
    for name, gamma_diff, T in panels:
        params = SystemParams(gamma_total=gamma, gamma_diff=gamma_diff)
        cfg = {"command": "figures", "selector": selector, "panel": name,
               "gamma": gamma, "gamma_diff": gamma_diff, "duration": T,
               "intervals": config.n_intervals, "seed": config.seed,
               "starts": config.n_starts, "max_iters": config.max_iters}
        result = optimizer.optimize(config, params, T)
        trajectory = integrate_full(result.control, params, T)
        controls_name = f"{selector}_{name}_controls.csv"
        populations_name = f"{selector}_{name}_populations.csv"
        write_csv(out / controls_name, cfg, "t,theta,omega_p,omega_s",
                  _control_rows(result.control))
        trajectory.write_csv(out / populations_name, omega0=params.omega0,
                             comment=_config_comment(cfg))
        panel_summaries.append({
            "panel": name, "gamma": gamma, "gamma_diff": gamma_diff,
            "duration": T, "objective": result.objective,
            "pumping_baseline": optimizer.pumping_baseline(params, T),
            "winner_start": result.start_label,
            "outputs": {"controls": controls_name,
                        "populations": populations_name},
        })

    summary = {"command": "figures", "selector": selector,
               "seed": config.seed, "panels": panel_summaries}
    write_json(out / f"{selector}_summary.json", summary)
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, metavar="FILE",
                   help="key = value configuration file; flags take precedence")
    p.add_argument("--gamma", type=float, help="decay ratio Gamma/omega0")
    p.add_argument("--gamma-diff", type=float,
                   help="decay asymmetry gamma/omega0 (default 0)")
    p.add_argument("--duration", type=float, help="window omega0*T")
    p.add_argument("--intervals", type=int, help="control grid size")
    p.add_argument("--seed", type=int, help="seed recorded in every output")
    p.add_argument("--out", type=Path,
                   help=f"output directory (default ${ENV_OUT} or ./out)")
    p.add_argument("--format", choices=("csv", "json"), help="trajectory format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lambda-control",
                     description="Lambda-system simulation, pulse optimization "
                                 "and optimality verification.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="integrate the full model")
    _add_common(p)
    p.add_argument("--control",
                   choices=("pumping", "theta0", "ramp_up", "ramp_down"),
                   help="named control schedule (default pumping)")
    p.add_argument("--control-file", type=Path,
                   help="CSV of t,theta interval start times")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reduce", help="sample a jump/arc schedule of the "
                                      "reduced model")
    _add_common(p)
    p.add_argument("--tprime", type=float, help="normalized duration T'")
    p.add_argument("--jumps", type=str, help="comma-separated jump angles")
    p.add_argument("--arcs", type=str, help="comma-separated arc durations")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("optimize", help="multi-start pulse optimization")
    _add_common(p)
    p.add_argument("--starts", type=int, help="number of starts (default 6)")
    p.add_argument("--max-iters", type=int, help="iteration cap per start")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("verify", help="randomized bound checks and PMP "
                                      "residuals")
    _add_common(p)
    p.add_argument("--tprime", type=float, help="normalized duration T'")
    p.add_argument("--n", type=int, help="number of sequences (default 10000; "
                                         "sequence 0 is always pumping)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="optimize a grid of regimes")
    _add_common(p)
    p.add_argument("--gammas", type=str, help="comma-separated Gamma/omega0")
    p.add_argument("--gamma-diffs", type=str,
                   help="comma-separated gamma/omega0 (default 0)")
    p.add_argument("--durations", type=str, help="comma-separated omega0*T")
    p.add_argument("--starts", type=int)
    p.add_argument("--max-iters", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figures", help="regenerate figure-data bundles")
    p.add_argument("selector", help="fig2 | fig3 | fig4 | fig5")
    _add_common(p)
    p.add_argument("--starts", type=int)
    p.add_argument("--max-iters", type=int)
    p.set_defaults(func=cmd_figures)

    return parser


def _fail(message: str, code: int, extra: dict | None = None) -> int:
    payload = {"error": message, "exit_code": code}
    if extra:
        payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except OSError as exc:
        return _fail(f"file system error: {exc}", EXIT_USAGE)
    except VerificationFailure as exc:
        return _fail(str(exc), EXIT_VERIFICATION,
                     {"offenders": exc.offenders[:10]})
    except (IntegrationError, FloatingPointError, OverflowError,
            np.linalg.LinAlgError) as exc:
        return _fail(str(exc), EXIT_NUMERICAL)


if __name__ == "__main__":
    raise SystemExit(main())
