"""Command-line front end.

Every run writes its result files plus ``manifest.json`` into ``--out``.
Numbers are written with 9 significant digits and each file carries the
parameter hash, so identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import State5
from .equilibria import ExceptionalEquilibria, equilibria5, solve_pl_pr
from .errors import ConfigError, SynchronverterError
from .geometry import build_geometry, sample_circle
from .params import config_to_dict, derived_constants, load_config
from .sim import SimConfig, convergence_metric, integrate
from .stability import (
    SweepGrid,
    classify_equilibria,
    default_sweep_grid,
    stability_sweep,
)

EXIT_OK, EXIT_INFEASIBLE, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


def fmt(x) -> str:
    return format(float(x), ".9g")


def _clean(obj):
    """Round floats to 9 significant digits and turn non-finite values into null."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(fmt(obj)) if math.isfinite(obj) else None
    if isinstance(obj, complex):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if hasattr(obj, "value"):
        return obj.value
    return str(obj)


def param_hash(config: dict, subcommand: str, options: dict) -> str:
    blob = json.dumps(
        {"config": _clean(config), "subcommand": subcommand, "options": _clean(options)},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode()).hexdigest()


class OutputDir:
    def __init__(self, path, digest):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.digest = digest
        self.files = []

    def _write(self, name, text):
        with open(self.path / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(name)

    def json(self, name, payload):
        payload = {"param_hash": self.digest, **payload}
        self._write(name, json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")

    def csv(self, name, header, rows):
        lines = [f"# param_hash={self.digest}", ",".join(header)]
        for row in rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        self._write(name, "\n".join(lines) + "\n")

    def manifest(self, config_path, subcommand):
        self.json(
            "manifest.json",
            {
                "config": str(config_path),
                "subcommand": subcommand,
                "tool_version": __version__,
                "outputs": list(self.files),
            },
        )


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return fmt(v) if math.isfinite(v) else "nan"


def _point_dict(point):
    s = point.state
    out = {
        "branch": point.branch.value,
        "i_d": s.i_d,
        "i_q": s.i_q,
        "w": s.w,
        "delta_rad": s.delta,
        "delta_deg": math.degrees(s.delta),
        "i_f": s.i_f,
        "P": point.pq.P,
        "Q": point.pq.Q,
        "stability": point.stability.value,
    }
    if point.eigenvalues is not None:
        out["max_real"] = max(e.real for e in point.eigenvalues)
        out["eigenvalues"] = sorted(point.eigenvalues, key=lambda e: (e.real, e.imag))
    return out


def _derived_dict(dc):
    return {
        "R": dc.R,
        "L": dc.L,
        "K_tilde": dc.K_tilde,
        "k": dc.k,
        "p": dc.p,
        "phi_deg": math.degrees(dc.phi),
        "Tm_tilde": dc.Tm_tilde,
        "Q_tilde": dc.Q_tilde,
    }


def _with_ktilde(params, ktilde):
    return params if ktilde is None else params.with_ktilde(ktilde)


# --- subcommands -------------------------------------------------------------


def cmd_equilibria(args, params, grid, out: OutputDir):
    params = _with_ktilde(params, args.ktilde)
    dc = derived_constants(params, grid)
    P_l, P_r = solve_pl_pr(params, grid)
    found = equilibria5(params, grid)
    payload = {"derived": _derived_dict(dc), "P_l": P_l, "P_r": P_r}
    if isinstance(found, ExceptionalEquilibria):
        payload["exceptional"] = {"P": found.pq.P, "Q": found.pq.Q, "i_f": 0.0}
        found = list(found.others)
    points = classify_equilibria(found, params, grid)
    payload["equilibria"] = [_point_dict(p) for p in points]
    out.json("equilibria.json", payload)


def cmd_geometry(args, params, grid, out: OutputDir):
    dc0 = derived_constants(params, grid)
    torques = args.torques if args.torques else [dc0.Tm_tilde]
    circles = []
    for i, Tt in enumerate(torques):
        # the torque list is given as effective torque; undo the droop offset
        p = replace(params, T_m=Tt - params.D_p * (grid.w_n - grid.w_g))
        geo = build_geometry(p, grid)
        name = f"geometry_{i}.csv"
        out.csv(name, ["i_f", "P1", "Q1", "P2", "Q2"], sample_circle(p, grid, 512))
        circles.append(
            {
                "Tm_tilde": Tt,
                "center": list(geo.center),
                "radius": geo.radius,
                "impedance": list(geo.impedance),
                "pivot": list(geo.pivot),
                "phi_deg": math.degrees(geo.phi),
                "if_minus": geo.if_minus,
                "if_plus": geo.if_plus,
                "if_zero": geo.if_zero,
                "If_plus_interval": list(geo.if_increasing),
                "interval_kind": geo.interval_kind.value,
                "orientation": geo.orientation.value,
                "samples_csv": name,
            }
        )
    out.json("geometry.json", {"circles": circles})


def cmd_stability_map(args, params, grid, out: OutputDir):
    n_P, n_Q = args.grid
    if args.p_range or args.q_range:
        base = default_sweep_grid(params, grid, n_P, n_Q)
        sweep = SweepGrid(args.p_range or base.P_range, args.q_range or base.Q_range, n_P, n_Q)
    else:
        sweep = default_sweep_grid(params, grid, n_P, n_Q)
    ktildes = args.ktilde_list if args.order == 5 else [None]
    if args.order == 5 and not ktildes:
        ktildes = [params.K_tilde]
    maps = stability_sweep(sweep, params, grid, ktildes, args.order, threads=args.threads)
    header = ["P_set", "Q_set", "verdict", "max_real", "i_f_e", "delta_e_deg", "in_sector", "g_prime_sign"]
    summary = []
    for smap in maps:
        tag = f"order{smap.order}" + ("" if smap.K_tilde is None else f"_ktilde_{fmt(smap.K_tilde)}")
        name = f"stability_map_{tag}.csv"
        out.csv(name, header, smap.rows())
        summary.append(
            {
                "file": name,
                "K_tilde": smap.K_tilde,
                "order": smap.order,
                "cells": smap.cell_count,
                "stable": smap.count("stable"),
                "unstable": smap.count("unstable"),
                "marginal": smap.count("marginal"),
                "no_equilibrium": smap.count("no-equilibrium"),
                "stable_area": smap.stable_area(),
            }
        )
    out.json(
        "stability_map.json",
        {"P_range": list(sweep.P_range), "Q_range": list(sweep.Q_range), "grid": [n_P, n_Q], "maps": summary},
    )


def cmd_simulate(args, params, grid, out: OutputDir):
    params = _with_ktilde(params, args.ktilde)
    if args.clamp:
        params = replace(params, u_min=args.clamp[0], u_max=args.clamp[1])
    target = None
    if args.initial in ("right", "left"):
        found = equilibria5(params, grid)
        if isinstance(found, ExceptionalEquilibria):
            found = list(found.others)
        branch = "right" if args.initial == "right" else "left"
        target = next(p for p in found if p.branch.value == branch)
        start = State5(*(v * (1.0 + args.perturb) for v in target.state))
    else:
        start = State5(*args.state)
    config = SimConfig(args.t_end, start, args.dt, args.stride, args.mode)
    traj = integrate(config, params, grid)
    rows = (
        (t, *z, P, Q) for t, z, P, Q in zip(traj.t, traj.states, traj.P, traj.Q)
    )
    out.csv("trajectory.csv", ["t", "i_d", "i_q", "w", "delta", "i_f", "P", "Q"], rows)
    payload = {
        "events": [{"t": e.t, "from": e.before.value, "to": e.after.value} for e in traj.events],
        "max_projection": traj.max_projection,
        "final_state": list(traj.final),
    }
    if target is not None:
        report = convergence_metric(traj, target, args.threshold)
        payload["target"] = _point_dict(target)
        payload["convergence"] = {
            "converged": report.converged,
            "final_error": report.final_error,
            "t_settle": report.t_settle,
            "max_error": float(np.max(report.errors)),
            "initial_error": float(report.errors[0]),
        }
    out.json("simulation.json", payload)


# --- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors count as bad configuration; 2 is reserved for infeasible models
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


_SUFFIXES = {"k": 1e3, "kw": 1e3, "kvar": 1e3, "m": 1e6, "mw": 1e6, "mvar": 1e6}


def _quantity(text: str) -> float:
    t = text.strip().lower()
    for suffix in sorted(_SUFFIXES, key=len, reverse=True):
        if t.endswith(suffix):
            return float(t[: -len(suffix)]) * _SUFFIXES[suffix]
    return float(t)


def _float_list(text: str):
    try:
        return [_quantity(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _range(text: str):
    values = _float_list(text)
    if len(values) != 2 or not values[0] < values[1]:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi' with lo < hi, got {text!r}")
    return tuple(values)


def _grid_spec(text: str):
    try:
        n_P, n_Q = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected <nP>x<nQ>, got {text!r}") from exc
    if n_P < 2 or n_Q < 2:
        raise argparse.ArgumentTypeError("grid needs at least 2 points per axis")
    return n_P, n_Q


def _ktilde_list(text: str):
    # gains are given in kA*H
    return [v * 1e3 for v in _float_list(text)]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synchronverter", description="Synchronverter equilibria, geometry and stability.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config (bundled: low_voltage, high_voltage)")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("equilibria", help="all 5th-order equilibria with stability verdicts")
    common(p)
    p.add_argument("--ktilde", type=lambda s: _quantity(s) * 1e3, help="gain K*M_f in kA*H")

    p = sub.add_parser("geometry", help="power-plane circles and field-current intervals")
    common(p)
    p.add_argument("--torques", type=_float_list, help="effective torques in N*m, comma separated")

    p = sub.add_parser("stability-map", help="stability over a (P_set, Q_set) grid")
    common(p)
    p.add_argument("--ktilde", dest="ktilde_list", type=_ktilde_list, default=[], help="gains in kA*H")
    p.add_argument("--order", type=int, choices=(4, 5), default=5)
    p.add_argument("--grid", type=_grid_spec, default=(201, 201), help="<nP>x<nQ>")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--p-range", type=_range, help="lo,hi in W (k/M suffixes allowed)")
    p.add_argument("--q-range", type=_range, help="lo,hi in VAr (k/M suffixes allowed)")

    p = sub.add_parser("simulate", help="time-domain run of the closed loop")
    common(p)
    p.add_argument("--ktilde", type=lambda s: _quantity(s) * 1e3, help="gain K*M_f in kA*H")
    p.add_argument("--initial", choices=("right", "left", "state"), default="right",
                   help="start near the right/left equilibrium or at --state")
    p.add_argument("--perturb", type=float, default=0.01, help="relative offset on every component")
    p.add_argument("--state", type=_float_list, help="i_d,i_q,w,delta,i_f for --initial state")
    p.add_argument("--t-end", type=float, default=20.0)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--stride", type=int, default=100, help="steps per recorded sample")
    p.add_argument("--mode", choices=("saturated", "unsaturated", "fourth_order"), default="saturated")
    p.add_argument("--clamp", type=_range, help="u_min,u_max overriding the config")
    p.add_argument("--threshold", type=float, default=1e-4, help="convergence threshold")
    return parser


COMMANDS = {
    "equilibria": cmd_equilibria,
    "geometry": cmd_geometry,
    "stability-map": cmd_stability_map,
    "simulate": cmd_simulate,
}
_NOT_HASHED = {"command", "config", "out", "threads"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate" and args.initial == "state" and (not args.state or len(args.state) != 5):
            raise ConfigError("--initial state needs --state with 5 values")
        params, grid = load_config(args.config)
        options = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_HASHED}
        digest = param_hash(config_to_dict(params, grid), args.command, options)
        out = OutputDir(args.out, digest)
        COMMANDS[args.command](args, params, grid, out)
        out.manifest(args.config, args.command)
        for name in out.files:
            print(out.path / name)
    except SynchronverterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
