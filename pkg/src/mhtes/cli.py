"""Command-line entry point for the simulation and control studies.

Dispatches the study runners over parameter and scenario files and writes
their trajectories and metric reports to an output directory. Every run
writes the metrics twice: a machine-readable structured text file
(``*_metrics.toml``, one record per window and variable) and a
human-readable table (``*_metrics.txt``). All file contents are
deterministic functions of the inputs, so repeated runs are byte-identical.

Exit codes: 0 on success, 2 on malformed configuration or arguments
(diagnostic names the offending field), 3 on numeric failure (diagnostic
carries the failure time and state where available).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .core import MODE_A_TO_B, MODE_B_TO_A, DomainError
from .linearize import linearize, to_grouped
from .metrics import conservation_drift, settling_report, windowed_rmse
from .mpc import MPCError
from .params import ConfigError, load_params, default_params_path
from .plant import DEFAULT_RTOL, PlantConfig
from .qp import QPError
from .scenarios import (
    packaged_scenario,
    resolve_scenario,
    run_closed_loop,
    run_open_loop,
    run_relin_study,
    run_validation,
)
from .stiff import IntegrationError

__all__ = ["main"]

_STATE_KEYS = ("T_hyd_A", "T_hyd_B", "P_H_A", "P_H_B", "w_A", "w_B")
_INPUT_KEYS = ("mdot_wg_A", "mdot_wg_B", "dP_comp")
_DIST_KEYS = ("T_wg_in_A", "T_wg_in_B")
_STATE_UNITS = ("K", "K", "Pa", "Pa", "-", "-")


def _fmt(x: float) -> str:
    return repr(float(x))


def _toml_list(values) -> str:
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def _toml_matrix(mat: np.ndarray) -> str:
    rows = ", ".join(_toml_list(row) for row in np.atleast_2d(mat))
    return "[" + rows + "]"


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _window_edges(t: np.ndarray, window_s: float, n_windows: int):
    t0 = float(t[0])
    t_end = float(t[-1])
    for w in range(n_windows):
        hi = t0 + (w + 1) * window_s
        yield t0 + w * window_s, t_end if w == n_windows - 1 else hi


def _metric_records(records) -> str:
    lines = []
    for rec in records:
        lines.append("[[record]]")
        for key, val in rec:
            if isinstance(val, str):
                lines.append(f'{key} = "{val}"')
            elif isinstance(val, int):
                lines.append(f"{key} = {val}")
            else:
                lines.append(f"{key} = {_fmt(val)}")
        lines.append("")
    return "\n".join(lines)


def _cmd_validate(args, out: Path) -> int:
    case = args.case
    params = load_params(args.params)
    sc = packaged_scenario(f"case{case}")
    companion = packaged_scenario(sc.companion)
    res = run_validation(sc, companion, params)

    res.nonlinear.to_csv(out / f"case{case}_nonlinear.csv")
    res.linear.to_csv(out / f"case{case}_linear.csv")

    rmse = windowed_rmse(res.nonlinear.t, res.nonlinear.states,
                         res.linear.states, res.window_s)
    n_windows = rmse.shape[0]
    edges = list(_window_edges(res.nonlinear.t, res.window_s, n_windows))

    records = []
    for w, (lo, hi) in enumerate(edges):
        for j, name in enumerate(_STATE_KEYS):
            records.append([
                ("window_start_s", lo),
                ("window_end_s", hi),
                ("variable", name),
                ("rmse", float(rmse[w, j])),
                ("nrmse", float(res.nrmse[w, j])),
            ])
    _write_text(out / f"case{case}_metrics.toml", _metric_records(records))

    lines = [f"Linear-model fit, case {case} ({sc.mode}), "
             f"{res.window_s:.0f} s windows", ""]
    lines.append("RMSE per window (state units)")
    header = "window".ljust(16) + "".join(k.rjust(13) for k in _STATE_KEYS)
    lines.append(header)
    for w, (lo, hi) in enumerate(edges):
        row = f"{lo:6.0f}-{hi:6.0f} s " + "".join(
            f"{rmse[w, j]:13.4g}" for j in range(6))
        lines.append(row)
    lines.append("")
    lines.append("NRMSE per window (percent of pooled type excursion)")
    lines.append(header)
    for w, (lo, hi) in enumerate(edges):
        row = f"{lo:6.0f}-{hi:6.0f} s " + "".join(
            f"{100.0 * res.nrmse[w, j]:12.2f}%" for j in range(6))
        lines.append(row)
    lines.append("")
    lines.append(f"worst NRMSE: {100.0 * float(res.nrmse.max()):.2f}%")
    lines.append("")
    _write_text(out / f"case{case}_metrics.txt", "\n".join(lines))
    print(f"case {case}: worst NRMSE {100.0 * float(res.nrmse.max()):.2f}% "
          f"over {n_windows} windows; outputs in {out}")
    return 0


def _period_tag(period: float) -> str:
    return "never" if period == 0.0 else f"{period:.0f}s"


def _cmd_relin_study(args, out: Path) -> int:
    params = load_params(args.params)
    sc = resolve_scenario(args.scenario)
    res = run_relin_study(sc, params)
    name = sc.name

    res.nonlinear.to_csv(out / f"{name}_nonlinear.csv")
    for period, traj in res.variants.items():
        traj.to_csv(out / f"{name}_linear_{_period_tag(period)}.csv")

    periods = sorted(res.heat_rmse)
    any_tbl = np.asarray(res.heat_rmse[periods[0]])
    n_windows = any_tbl.shape[0]
    edges = list(_window_edges(res.nonlinear.t, res.window_s, n_windows))

    records = []
    for period in periods:
        tbl = np.asarray(res.heat_rmse[period])
        for w, (lo, hi) in enumerate(edges):
            for j, name_q in enumerate(("Q_A", "Q_B")):
                records.append([
                    ("variant_period_s", period),
                    ("window_start_s", lo),
                    ("window_end_s", hi),
                    ("variable", name_q),
                    ("rmse", float(tbl[w, j])),
                ])
    _write_text(out / f"{name}_metrics.toml", _metric_records(records))

    lines = [f"Heat-rate RMSE (W) against the nonlinear run, "
             f"{res.window_s:.0f} s windows", ""]
    header = "variant".ljust(12) + "output".ljust(8) + "".join(
        f"{lo / 60.0:4.0f}-{hi / 60.0:3.0f} min".rjust(13) for lo, hi in edges)
    lines.append(header)
    for period in periods:
        tbl = np.asarray(res.heat_rmse[period])
        for j, name_q in enumerate(("Q_A", "Q_B")):
            lines.append(_period_tag(period).ljust(12) + name_q.ljust(8)
                         + "".join(f"{tbl[w, j]:13.4g}" for w in range(n_windows)))
    lines.append("")
    _write_text(out / f"{name}_metrics.txt", "\n".join(lines))
    print(f"{name}: {len(periods)} variants x {n_windows} windows x 2 heat rates; "
          f"outputs in {out}")
    return 0


def _cmd_closed_loop(args, out: Path) -> int:
    params = load_params(args.params)
    sc = resolve_scenario(args.scenario)
    res = run_closed_loop(sc, params, rtol=args.rtol)
    name = sc.name
    tr, cl = res.trajectory, res.control

    tr.to_csv(out / f"{name}_trajectory.csv")
    cl.to_csv(out / f"{name}_control.csv")

    reports = settling_report(tr.t, tr.heat_rates, cl.references)
    records = []
    for seg in reports:
        for j, rep in enumerate(seg):
            rec = [
                ("segment_start_s", rep.t_start),
                ("segment_end_s", rep.t_end),
                ("variable", ("Q_A", "Q_B")[j]),
                ("reference", rep.reference),
                ("band", rep.band),
                ("tail_max_error", rep.tail_max_error),
            ]
            if rep.settle_time is not None:
                rec.append(("settle_time_s", rep.settle_time))
            records.append(rec)
    _write_text(out / f"{name}_metrics.toml", _metric_records(records))

    lines = [f"Closed-loop tracking, scenario {name} ({sc.mode})", ""]
    lines.append("segment".ljust(18) + "output".ljust(8) + "reference W".rjust(13)
                 + "settle s".rjust(10) + "tail err W".rjust(12) + "band W".rjust(10))
    for seg in reports:
        for j, rep in enumerate(seg):
            settle = f"{rep.settle_time:.0f}" if rep.settle_time is not None else "never"
            lines.append(
                f"{rep.t_start:7.0f}-{rep.t_end:7.0f} s "
                + ("Q_A", "Q_B")[j].ljust(8)
                + f"{rep.reference:13.1f}" + settle.rjust(10)
                + f"{rep.tail_max_error:12.2f}" + f"{rep.band:10.2f}")
    lines.append("")
    lines.append(f"QP holds: {int(cl.held.sum())}; "
                 f"relinearizations: {int(cl.relinearized.sum())}")
    lines.append("")
    _write_text(out / f"{name}_metrics.txt", "\n".join(lines))
    worst_tail = max(rep.tail_max_error / rep.band for seg in reports for rep in seg)
    print(f"{name}: {len(reports)} reference segments, worst tail error "
          f"{worst_tail:.2f}x band; outputs in {out}")
    return 0


def _cmd_simulate(args, out: Path) -> int:
    params = load_params(args.params)
    sc = resolve_scenario(args.scenario)
    traj = run_open_loop(sc, params, rtol=args.rtol)
    name = sc.name
    traj.to_csv(out / f"{name}_trajectory.csv")

    cfg = PlantConfig(params, sc.mode)
    drift = conservation_drift(traj, cfg)
    records = [[
        ("window_start_s", float(traj.t[0])),
        ("window_end_s", float(traj.t[-1])),
        ("variable", "hydrogen_inventory"),
        ("relative_drift", drift),
    ]]
    _write_text(out / f"{name}_metrics.toml", _metric_records(records))
    _write_text(out / f"{name}_metrics.txt",
                f"Open-loop run, scenario {name} ({sc.mode})\n\n"
                f"duration: {float(traj.t[-1]):.0f} s, {traj.t.size} samples\n"
                f"hydrogen inventory relative drift: {drift:.3e}\n")
    print(f"{name}: {traj.t.size} samples, inventory drift {drift:.3e}; "
          f"outputs in {out}")
    return 0


def _load_point_file(path: Path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    if not path.is_file():
        raise ConfigError(str(path), "operating-point file not found")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    mode = doc.pop("mode", None)
    if mode not in (MODE_B_TO_A, MODE_A_TO_B):
        raise ConfigError("mode", f"must be {MODE_B_TO_A!r} or {MODE_A_TO_B!r}, "
                                  f"got {mode!r}")

    def vector(section: str, keys) -> np.ndarray:
        tbl = doc.pop(section, None)
        if not isinstance(tbl, dict):
            raise ConfigError(section, "missing required table")
        out_v = np.empty(len(keys))
        for i, k in enumerate(keys):
            if k not in tbl:
                raise ConfigError(f"{section}.{k}", "missing required value")
            v = tbl.pop(k)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{section}.{k}", f"expected a number, got {v!r}")
            out_v[i] = float(v)
        if tbl:
            raise ConfigError(f"{section}.{sorted(tbl)[0]}", "unknown field")
        return out_v

    x0 = vector("state", _STATE_KEYS)
    u0 = vector("input", _INPUT_KEYS)
    d0 = vector("disturbance", _DIST_KEYS)
    if doc:
        raise ConfigError(sorted(doc)[0], "unknown field")
    return mode, x0, u0, d0


def _cmd_linearize(args, out: Path) -> int:
    params = load_params(args.params)
    point = Path(args.at)
    mode, x0, u0, d0 = _load_point_file(point)
    cfg = PlantConfig(params, mode)
    lm = linearize(x0, u0, d0, cfg)
    name = point.stem

    blocks = [
        f'mode = "{mode}"',
        f"x0 = {_toml_list(lm.x0)}",
        f"u0 = {_toml_list(lm.u0)}",
        f"d0 = {_toml_list(lm.d0)}",
        f"f0 = {_toml_list(lm.f0)}",
        f"g0 = {_toml_list(lm.g0)}",
        f"A = {_toml_matrix(lm.A)}",
        f"B = {_toml_matrix(lm.B)}",
        f"B_d = {_toml_matrix(lm.B_d)}",
        f"C = {_toml_matrix(lm.C)}",
        f"D = {_toml_matrix(lm.D)}",
        f"D_d = {_toml_matrix(lm.D_d)}",
        "warnings = [" + ", ".join(f'"{w}"' for w in lm.warnings) + "]",
        "",
    ]
    _write_text(out / f"{name}_matrices.toml", "\n".join(blocks))

    def pretty(label: str, mat) -> str:
        return label + " =\n" + np.array2string(
            np.asarray(mat), precision=6, suppress_small=False,
            max_line_width=120) + "\n"

    lines = [f"Affine model about the operating point in {point.name} (mode {mode})", ""]
    for label, mat in (("A", lm.A), ("B", lm.B), ("B_d", lm.B_d),
                       ("C", lm.C), ("D", lm.D), ("D_d", lm.D_d),
                       ("f0", lm.f0), ("g0", lm.g0)):
        lines.append(pretty(label, mat))
    lines.append("Reactor-grouped state order [T_A, P_A, w_A, T_B, P_B, w_B]:")
    lines.append("")
    lines.append(pretty("A_grouped", to_grouped(lm.A)))
    lines.append(pretty("C_grouped", to_grouped(lm.C)))
    if lm.warnings:
        lines.append("warnings:")
        for w in lm.warnings:
            lines.append(f"  - {w}")
        lines.append("")
    _write_text(out / f"{name}_matrices.txt", "\n".join(lines))
    print(f"{name}: matrices written to {out}"
          + (f" ({len(lm.warnings)} warning(s))" if lm.warnings else ""))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhtes",
        description="Two-reactor hydride plant: simulation and control studies.")
    parser.add_argument("--params", default=None,
                        help="parameter file (default: the packaged file)")
    parser.add_argument("--out", default=".",
                        help="output directory (default: current directory)")
    parser.add_argument("--rtol", type=float, default=DEFAULT_RTOL,
                        help="relative tolerance for plant integration where "
                             "the study accepts an override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="open-loop linear-model validation")
    p.add_argument("--case", type=int, choices=(1, 2), required=True)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("relin-study", help="re-linearization frequency study")
    p.add_argument("--scenario", default="relin",
                   help="scenario name or path (default: relin)")
    p.set_defaults(fn=_cmd_relin_study)

    p = sub.add_parser("track", help="closed-loop reference tracking")
    p.add_argument("--scenario", required=True, help="scenario name or path")
    p.set_defaults(fn=_cmd_closed_loop)

    p = sub.add_parser("disturb", help="closed-loop disturbance rejection")
    p.add_argument("--scenario", required=True, help="scenario name or path")
    p.set_defaults(fn=_cmd_closed_loop)

    p = sub.add_parser("simulate", help="raw open-loop nonlinear run")
    p.add_argument("--scenario", required=True, help="scenario name or path")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("linearize", help="dump the affine model at a point")
    p.add_argument("--at", required=True,
                   help="TOML file with mode plus state/input/disturbance tables")
    p.set_defaults(fn=_cmd_linearize)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    if args.params is None:
        args.params = default_params_path()
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 2

    try:
        return args.fn(args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, IntegrationError, MPCError, QPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
