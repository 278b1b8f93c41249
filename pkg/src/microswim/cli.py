"""Command-line interface: experiment orchestration and report files.

One JSON config document in, machine-readable reports out: CSV tables,
a JSON summary on stdout, two-column plot data for external plotting.
Numeric output uses shortest round-trip float formatting, so reruns with
the same config and seed produce byte-identical CSV bodies; volatile
fields (timestamps, file lists) live only in the JSON meta file.

Commands:
  verify-model  series-expansion oracle checks for parameter sets
  constants     derived constants (a's, b's, c's, c0, q) per parameter set
  classify      controllability regime per parameter set
  simulate      integrate one control signal and export the trajectory
  loop-sweep    loop search across decreasing control bounds, with verdict
  obstruction   random-control displacement-ratio convergence study

Exit codes: 0 success, 1 check failure, 2 usage or config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .controllability import classify, epsilon_sweep
from .errors import MicroswimError
from .expansion import expansion_report
from .model import PhysParams
from .simulator import ControlSignal, integrate
from .transform import c0_closed_form, derived_constants, obstruction_ratio

PARAM_FIELDS = ("ell", "xi", "eta", "kappa", "m1", "m2")
CANONICAL_CONSTANTS = ("a1", "a2", "b1", "b2", "b3", "b4")

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    """The config file is missing, malformed, or inconsistent."""


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _require_number(value, label):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{label} must be a number, got {value!r}")
    return float(value)


def _param_rows(cfg):
    """Parameter mappings from the config: explicit rows or a cartesian grid.

    A "grid" key holds explicit row mappings.  Otherwise "params" holds one
    mapping whose list-valued entries fan out as a cartesian product, in
    sorted key order so row order is reproducible.
    """
    if "grid" in cfg:
        rows = cfg["grid"]
        if not isinstance(rows, list) or any(
                not isinstance(r, dict) for r in rows):
            raise ConfigError("'grid' must be a list of parameter objects")
        return [dict(r) for r in rows]
    if "params" not in cfg:
        raise ConfigError("config needs a 'params' object or a 'grid' list")
    base = cfg["params"]
    if not isinstance(base, dict):
        raise ConfigError("'params' must be an object")
    unknown = sorted(set(base) - set(PARAM_FIELDS))
    if unknown:
        raise ConfigError(f"unknown parameter keys: {', '.join(unknown)}")
    keys = sorted(base)
    options = []
    for k in keys:
        v = base[k]
        if isinstance(v, list):
            options.append([_require_number(x, f"params.{k}") for x in v])
        else:
            options.append([_require_number(v, f"params.{k}")])
    return [dict(zip(keys, combo)) for combo in itertools.product(*options)]


def _params_from_mapping(row):
    missing = [k for k in PARAM_FIELDS if k not in row]
    if missing:
        raise ConfigError(f"parameter set missing: {', '.join(missing)}")
    unknown = sorted(set(row) - set(PARAM_FIELDS))
    if unknown:
        raise ConfigError(f"unknown parameter keys: {', '.join(unknown)}")
    return PhysParams(**{k: _require_number(row[k], k) for k in PARAM_FIELDS})


def _single_param_set(cfg):
    rows = _param_rows(cfg)
    if len(rows) != 1:
        raise ConfigError("this command expects exactly one parameter set")
    return _params_from_mapping(rows[0])


def _eps_list(cfg, key="eps_list", default=None):
    raw = cfg.get(key, default)
    if raw is None:
        raise ConfigError(f"config needs '{key}'")
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"'{key}' must be a non-empty list")
    vals = [_require_number(v, key) for v in raw]
    if any(v <= 0.0 for v in vals):
        raise ConfigError(f"'{key}' entries must be positive")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"'{key}' must be strictly decreasing")
    return vals


def _signal_from_config(d):
    if not isinstance(d, dict):
        raise ConfigError("'signal' must be an object")
    kind = d.get("kind", "zero")
    try:
        if kind == "zero":
            return ControlSignal.zero()
        if kind == "piecewise_constant":
            return ControlSignal.piecewise_constant(
                d["edges"], d["values"], bound=d.get("bound"))
        if kind == "sinusoidal":
            phase = d.get("phase", (0.0, 0.0))
            return ControlSignal.sinusoidal(
                d["amp_perp"], d["amp_par"], d["freq"],
                phase=(float(phase[0]), float(phase[1])),
                bound=d.get("bound"))
    except KeyError as exc:
        raise ConfigError(f"signal is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad signal: {exc}") from exc
    raise ConfigError(f"unknown signal kind {kind!r}")


def _cell(v):
    """Shortest round-trip text for one CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "True" if v else "False"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _plot_text(label_x, label_y, pairs):
    lines = [f"# {label_x} {label_y}"]
    for x, y in pairs:
        lines.append(f"{_cell(x)} {_cell(y)}")
    return "\n".join(lines) + "\n"


class _Reporter:
    """Collects artifacts for one command run and emits them at the end."""

    def __init__(self, command, cfg, out_dir):
        self.command = command
        self.cfg = cfg
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.files = {}
        self.summary = {}

    def add_file(self, name, text):
        self.files[name] = text

    def finish(self, resolved):
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (self.out_dir / name).write_text(text, encoding="utf-8")
            meta = {
                "command": self.command,
                "version": __version__,
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "config": self.cfg,
                "resolved": resolved,
                "outputs": sorted(self.files),
            }
            (self.out_dir / "meta.json").write_text(
                json.dumps(meta, sort_keys=True, indent=2) + "\n",
                encoding="utf-8")
        self.summary.update(resolved)
        print(json.dumps(self.summary, sort_keys=True, indent=2))


def ratio_convergence(params, eps_levels, n_signals=50, seed=0, tol=1e-10):
    """Median deviation of the displacement ratio from c0, per bound level.

    Draws sinusoidal control signals with amplitudes in [0.3 eps, eps],
    random phases, and one to a few oscillations over the horizon T = eps,
    integrates each from the origin, and evaluates the displacement ratio.
    Returns one row per level: (eps, median absolute deviation from the
    closed-form c0, number of defined ratios).
    """
    c0 = c0_closed_form(params)
    rows = []
    for li, eps in enumerate(eps_levels):
        devs = []
        for i in range(n_signals):
            rng = np.random.default_rng((seed, li, i))
            amp_perp, amp_par = rng.uniform(0.3 * eps, eps, 2)
            freq = rng.uniform(0.5, 2.5) / eps
            phase = rng.uniform(0.0, 2.0 * np.pi, 2)
            sig = ControlSignal.sinusoidal(
                amp_perp, amp_par, freq, phase=(phase[0], phase[1]),
                bound=eps)
            traj = integrate(params, np.zeros(4), sig, eps, tol=tol,
                             atol=tol * eps * eps)
            r = obstruction_ratio(traj, params, energy_floor=0.0)
            if r.defined and math.isfinite(r.ratio):
                devs.append(abs(r.ratio - c0))
        median = float(np.median(devs)) if devs else math.nan
        rows.append((float(eps), median, len(devs)))
    return rows


def _cmd_verify_model(cfg, args, reporter):
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-6)
    rows = _param_rows(cfg)
    if not rows:
        raise ConfigError("verify-model needs at least one parameter set")
    csv_rows = []
    notices = []
    first_fail = None
    all_ok = True
    fn_names = set()
    for idx, row in enumerate(rows):
        params = _params_from_mapping(row)
        rep = expansion_report(params, tol=tol, raise_on_mismatch=False)
        for c in rep.coefficients:
            fn_names.add(c.function)
            csv_rows.append((idx, "function", f"{c.function}[{c.order}]",
                             c.computed, c.expected,
                             abs(c.computed - c.expected), c.ok))
        for c in rep.constants:
            kind = ("constant" if c.name in CANONICAL_CONSTANTS
                    else "consistency")
            csv_rows.append((idx, kind, c.name, c.computed, c.expected,
                             abs(c.computed - c.expected), c.ok))
        for s in rep.slopes:
            csv_rows.append((idx, "remainder", s.function, s.slope,
                             float(s.claimed), abs(s.slope - s.claimed),
                             s.ok))
        if rep.degenerate:
            notices.append(f"set {idx} degenerate: b4=0")
        if not rep.ok:
            all_ok = False
            if first_fail is None:
                first_fail = f"set {idx}: {rep.failures()[0]}"
    reporter.add_file("verify_model.csv", _csv_text(
        ("set", "kind", "name", "computed", "expected", "error", "ok"),
        csv_rows))
    reporter.finish({
        "ok": all_ok,
        "sets": len(rows),
        "function_checks": len(fn_names),
        "constants": len(CANONICAL_CONSTANTS),
        "tol": tol,
        "notices": notices,
    })
    if not all_ok:
        print(f"verify-model failed: {first_fail}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _cmd_constants(cfg, args, reporter):
    rows = _param_rows(cfg)
    csv_rows = []
    for row in rows:
        params = _params_from_mapping(row)
        base = [params.ell, params.xi, params.eta, params.kappa,
                params.m1, params.m2]
        try:
            dc = derived_constants(params, strict=False)
            csv_rows.append(base + [
                dc.a1, dc.a2, dc.b1, dc.b2, dc.b3, dc.b4,
                dc.c1, dc.c2, dc.c3, dc.c0, dc.q, dc.fit_residual,
                dc.available, dc.note, ""])
        except MicroswimError as exc:
            csv_rows.append(base + [math.nan] * 12 + [False, "", str(exc)])
    header = (PARAM_FIELDS + ("a1", "a2", "b1", "b2", "b3", "b4",
                              "c1", "c2", "c3", "c0", "q", "fit_residual",
                              "available", "note", "error"))
    reporter.add_file("constants.csv", _csv_text(header, csv_rows))
    reporter.finish({"sets": len(rows)})
    return EXIT_OK


def _cmd_classify(cfg, args, reporter):
    rows = _param_rows(cfg)
    csv_rows = []
    regimes = []
    for row in rows:
        try:
            params = _params_from_mapping(row)
            base = [params.ell, params.xi, params.eta, params.kappa,
                    params.m1, params.m2]
            cls = classify(params)
            csv_rows.append(base + [cls.regime.value, cls.q, cls.c0, ""])
            regimes.append(cls.regime.value)
        except (ConfigError, MicroswimError) as exc:
            base = [row.get(k, math.nan) for k in PARAM_FIELDS]
            csv_rows.append(base + ["", math.nan, math.nan, str(exc)])
            regimes.append("error")
    header = PARAM_FIELDS + ("regime", "q", "c0", "error")
    reporter.add_file("classify.csv", _csv_text(header, csv_rows))
    reporter.finish({"sets": len(rows), "regimes": regimes})
    return EXIT_OK


def _cmd_simulate(cfg, args, reporter):
    params = _single_param_set(cfg)
    if "T" not in cfg:
        raise ConfigError("simulate needs a horizon 'T'")
    T = _require_number(cfg["T"], "T")
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-10)
    z0_raw = cfg.get("initial_state", [0.0, 0.0, 0.0, 0.0])
    if not isinstance(z0_raw, list) or len(z0_raw) != 4:
        raise ConfigError("'initial_state' must be a list of 4 numbers")
    z0 = np.array([_require_number(v, "initial_state") for v in z0_raw])
    n_samples = int(cfg.get("n_samples", 401))
    if n_samples < 2:
        raise ConfigError("'n_samples' must be at least 2")
    signal = _signal_from_config(cfg.get("signal", {"kind": "zero"}))
    traj = integrate(params, z0, signal, T, tol=tol)
    ts, states = traj.dense(n_samples)
    csv_rows = [(t, s[0], s[1], s[2], s[3]) for t, s in zip(ts, states)]
    reporter.add_file("trajectory.csv", _csv_text(
        ("t", "x", "y", "theta", "alpha"), csv_rows))
    reporter.finish({
        "T": T,
        "tol": tol,
        "steps": len(traj.t) - 1,
        "final_state": [float(v) for v in traj.y[-1]],
        "samples": n_samples,
    })
    return EXIT_OK


def _cmd_loop_sweep(cfg, args, reporter):
    params = _single_param_set(cfg)
    eps_list = _eps_list(cfg)
    t_rule = cfg.get("T_rule", "eps")
    if t_rule != "eps":
        t_rule = _require_number(t_rule, "T_rule")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-10)
    n = int(cfg.get("n", 40))
    n_starts = int(cfg.get("n_starts", 8))
    sw = epsilon_sweep(params, eps_list, T_rule=t_rule, n=n, seed=seed,
                       n_starts=n_starts, tol=tol)
    csv_rows = [(r.eps, r.T, r.objective, r.defect, r.feasible,
                 r.nontrivial, r.ratio, r.z4_energy, r.n_feasible_starts)
                for r in sw.rows]
    reporter.add_file("loop_sweep.csv", _csv_text(
        ("eps", "T", "objective", "defect", "feasible", "nontrivial",
         "ratio", "z4_energy", "n_feasible_starts"), csv_rows))
    reporter.add_file("loop_sweep_plot.dat", _plot_text(
        "eps", "objective", [(r.eps, r.objective) for r in sw.rows]))
    reporter.finish({
        "regime": sw.classification.regime.value,
        "q": sw.classification.q,
        "c0": sw.classification.c0,
        "seed": seed,
        "objectives": [r.objective for r in sw.rows],
        "objectives_nonincreasing": sw.objectives_nonincreasing,
        "final_below_threshold": sw.final_below_threshold,
        "verdict": sw.verdict,
    })
    return EXIT_OK


def _cmd_obstruction(cfg, args, reporter):
    params = _single_param_set(cfg)
    eps_list = _eps_list(cfg, default=[1e-1, 1e-2, 1e-3])
    n_signals = int(cfg.get("signals_per_level", 50))
    if n_signals < 1:
        raise ConfigError("'signals_per_level' must be positive")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-10)
    rows = ratio_convergence(params, eps_list, n_signals, seed, tol)
    medians = [r[1] for r in rows]
    monotone = all(b < a for a, b in zip(medians, medians[1:])
                   if not (math.isnan(a) or math.isnan(b)))
    reporter.add_file("obstruction.csv", _csv_text(
        ("eps", "median_abs_deviation", "n_defined"), rows))
    reporter.add_file("obstruction_plot.dat", _plot_text(
        "eps", "median_abs_deviation", [(r[0], r[1]) for r in rows]))
    reporter.finish({
        "c0": c0_closed_form(params),
        "seed": seed,
        "signals_per_level": n_signals,
        "medians": medians,
        "monotone_decreasing": monotone,
    })
    return EXIT_OK


_COMMANDS = {
    "verify-model": _cmd_verify_model,
    "constants": _cmd_constants,
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "loop-sweep": _cmd_loop_sweep,
    "obstruction": _cmd_obstruction,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="microswim",
        description="Planar two-link magnetic swimmer experiments.")
    sub = parser.add_subparsers(dest="command")
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True,
                       help="path to the JSON config")
        p.add_argument("--out", default=None,
                       help="directory for report files")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--tol", type=float, default=None,
                       help="override the config tolerance")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config(args.config)
        reporter = _Reporter(args.command, cfg, args.out)
        return _COMMANDS[args.command](cfg, args, reporter)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MicroswimError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
