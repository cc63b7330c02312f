"""visco-decay command line front end.

    visco-decay <simulate|check-kernel|fit|validate|sweep> --config PATH
                [--out DIR] [--jobs N] [key=value ...]

The config is a JSON object holding the simulation parameters; the optional
sections ``fit``, ``validate`` and ``sweep`` hold mode options.  Overrides
use dotted keys (``kernel.a=0.4``, ``fit.window_fraction=0.5``) and values are
read as JSON when possible, else as strings.

Exit status: 0 success, 2 configuration or parse errors, 3 certificate
failures, 4 numerical or I/O failures.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .analysis import (
    ValidationReport,
    convergence_order,
    cross_validate_delay,
    cross_validate_memory,
    fit_decay,
    fit_trajectory,
    stability_sweep,
)
from .energy import equivalence_ratios
from .errors import ConfigError, ViscoDecayError
from .kernels import rate_function, validate_kernel
from .solver import CSV_COLUMNS, SimConfig, run

COMMANDS = ("simulate", "check-kernel", "fit", "validate", "sweep")
SECTIONS = ("fit", "validate", "sweep")

FIT_DEFAULTS = {"window_fraction": 0.6, "trajectory": None}
VALIDATE_DEFAULTS = {"T": 2.0, "delay": True, "memory": True, "convergence": True,
                     "refinements": 2}
SWEEP_DEFAULTS = {"ratios": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.5], "d": [0.0, 0.2, 0.5],
                  "window_fraction": 0.6}


class CliError(ConfigError):
    pass


# -- configuration ----------------------------------------------------------------

def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: top level must be a JSON object")
    return data


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    """Return a copy of ``data`` with dotted ``key=value`` assignments applied."""
    data = copy.deepcopy(data)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise CliError(f"override {item!r}: expected key=value")
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise CliError(f"override {item!r}: {p} is not an object")
            node = nxt
        node[parts[-1]] = _parse_value(raw)
    return data


def split_config(data):
    """(SimConfig, {section: options}) from a parsed config object."""
    sim = {k: v for k, v in data.items() if k not in SECTIONS}
    options = {}
    for name, defaults in (("fit", FIT_DEFAULTS), ("validate", VALIDATE_DEFAULTS),
                           ("sweep", SWEEP_DEFAULTS)):
        given = data.get(name, {})
        if not isinstance(given, dict):
            raise CliError(f"{name}: expected an object")
        unknown = set(given) - set(defaults)
        if unknown:
            raise CliError(f"{name}: unknown keys {sorted(unknown)}")
        options[name] = {**defaults, **given}
    return SimConfig.from_dict(sim), options


# -- output -------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_csv(path, columns):
    """Write the trajectory columns at full double precision."""
    data = np.column_stack([np.asarray(columns[c], dtype=float) for c in CSV_COLUMNS])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=",".join(CSV_COLUMNS),
               comments="")


def read_csv(path):
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, comments="#", ndmin=2)
    except OSError as exc:
        raise OSError(f"cannot read trajectory {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError(f"{path}: malformed trajectory ({exc})") from None
    missing = {"t", "E_total"} - set(header)
    if missing:
        raise CliError(f"{path}: missing columns {sorted(missing)}")
    return {name: data[:, i] for i, name in enumerate(header)}


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# -- commands -----------------------------------------------------------------------

def cmd_check_kernel(config, options, args):
    spec = config.kernel
    cert = validate_kernel(spec, config.t0, horizon=max(config.T, 100.0))
    xi_start = float(rate_function(spec, 0.0))
    xi_end = float(rate_function(spec, max(config.T, 100.0)))
    constant = math.isclose(xi_start, xi_end, rel_tol=1e-12)
    print(f"kernel: {json.dumps(spec.to_dict(), sort_keys=True)}")
    print(f"l = {cert.l:.12g}")
    print(f"g0 = int_0^t0 g = {cert.g0:.12g} (t0 = {cert.t0:g})")
    if constant:
        print(f"xi = {xi_start:.12g} constant")
    else:
        print(f"xi: {xi_start:.6g} at s = 0 decreasing to {xi_end:.6g}")
    print(f"xi nonincreasing: {cert.xi_nonincreasing}; int xi diverges: {cert.xi_diverges}")
    return 0


def _report(config, traj, fit, extra=None):
    meta = traj.meta
    lo, hi = equivalence_ratios(traj)
    validation = ValidationReport(alpha1_hat=lo, alpha2_hat=hi,
                                  dissipation_violations=meta["dissipation"]["violations"])
    report = {
        "config": config.to_dict(),
        "certificates": {"kernel": meta["kernel_certificate"], "d": meta["d"],
                         "delay_regime": meta["delay_regime"],
                         "guaranteed": meta["guaranteed"]},
        "zeta_selection": meta["zeta_selection"],
        "decay_fit": fit,
        "validation": validation.to_dict(),
        "dissipation": meta["dissipation"],
        "compression": meta["compression"],
        "lyapunov": meta["lyapunov"],
        "timings": meta["timings"],
    }
    if extra:
        report.update(extra)
    return report


def _fit_or_reason(fn):
    try:
        return fn().to_dict()
    except ViscoDecayError as exc:
        return {"error": type(exc).__name__, "message": str(exc)}


def cmd_simulate(config, options, args):
    traj = run(config)
    fit = _fit_or_reason(lambda: fit_trajectory(traj, config,
                                                options["fit"]["window_fraction"]))
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "trajectory.csv"), traj.columns)
    _write(os.path.join(args.out, "report.json"), dump_json(_report(config, traj, fit)))
    print(f"wrote {len(traj)} samples to {os.path.join(args.out, 'trajectory.csv')}")
    if "k" in fit:
        print(f"zeta = {traj.meta['zeta']:.6g}; K = {fit['K']:.6g}, k = {fit['k']:.6g}, "
              f"r2 = {fit['r2']:.4f}")
    return 0


def cmd_fit(config, options, args):
    path = options["fit"]["trajectory"] or os.path.join(args.out, "trajectory.csv")
    cols = read_csv(path)
    fit = fit_decay(cols["t"], cols["E_total"], config.kernel, t0=config.t0,
                    window_fraction=options["fit"]["window_fraction"])
    d = fit.to_dict()
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("# decay_fit " + json.dumps(_clean(d), sort_keys=True) + "\n")
    _write(os.path.join(os.path.dirname(path) or ".", "fit.json"), dump_json(d))
    print(f"K = {fit.K:.6g}, k = {fit.k:.6g}, r2 = {fit.r2:.4f}"
          + (" (no decay detected)" if fit.no_decay else ""))
    return 0


def cmd_validate(config, options, args):
    opts = options["validate"]
    traj = run(config)
    lo, hi = equivalence_ratios(traj)
    rep = ValidationReport(alpha1_hat=lo, alpha2_hat=hi,
                           dissipation_violations=traj.meta["dissipation"]["violations"])
    short = replace(config, T=min(config.T, float(opts["T"])))
    notes = {}
    if opts["delay"]:
        if config.delay.tau_min > 0:
            dv = cross_validate_delay(short)
            rep.delay_sup_error = dv.sup_error
            rep.delay_refined_sup_error = dv.refined_sup_error
            rep.delay_ratio = dv.ratio
        else:
            notes["delay"] = "skipped: the delay reaches zero"
    if opts["memory"]:
        if config.kernel.is_expsum:
            mv = cross_validate_memory(short)
            rep.memory_field_error = mv.field_error
            rep.memory_energy_error = mv.energy_error
        else:
            notes["memory"] = "skipped: kernel is not an exp-sum"
    if opts["convergence"]:
        try:
            rep.order_time, rep.order_space = convergence_order(
                short, refinements=int(opts["refinements"]))
        except ViscoDecayError as exc:
            notes["convergence"] = f"{type(exc).__name__}: {exc}"
    fit = _fit_or_reason(lambda: fit_trajectory(traj, config,
                                                options["fit"]["window_fraction"]))
    report = _report(config, traj, fit, extra={"validation": rep.to_dict(), "notes": notes})
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "validation.json"), dump_json(report))
    for key, val in rep.to_dict().items():
        print(f"{key:26s} {val}")
    return 0


def cmd_sweep(config, options, args):
    opts = options["sweep"]
    points = stability_sweep(config, [float(r) for r in opts["ratios"]],
                             [float(d) for d in opts["d"]], jobs=args.jobs,
                             window_fraction=float(opts["window_fraction"]))
    os.makedirs(args.out, exist_ok=True)
    header = "ratio,d,feasible,k,r2,no_decay,status"
    lines = [header]
    for p in points:
        lines.append(",".join([f"{p.ratio:.17g}", f"{p.d:.17g}", str(p.feasible).lower(),
                               "" if p.k is None else f"{p.k:.17g}",
                               "" if p.r2 is None else f"{p.r2:.17g}",
                               "" if p.no_decay is None else str(p.no_decay).lower(),
                               p.status]))
    _write(os.path.join(args.out, "sweep.csv"), "\n".join(lines) + "\n")
    _write(os.path.join(args.out, "sweep.json"),
           dump_json({"config": config.to_dict(), "points": [p.to_dict() for p in points]}))
    print(f"{'mu2/mu1':>8} {'d':>5} {'feasible':>8} {'k':>10} {'r2':>7}  status")
    for p in points:
        k = "-" if p.k is None else f"{p.k:.5g}"
        r2 = "-" if p.r2 is None else f"{p.r2:.4f}"
        print(f"{p.ratio:8.4g} {p.d:5.3g} {str(p.feasible):>8} {k:>10} {r2:>7}  {p.status}")
    return 0


HANDLERS = {"simulate": cmd_simulate, "check-kernel": cmd_check_kernel, "fit": cmd_fit,
            "validate": cmd_validate, "sweep": cmd_sweep}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def build_parser():
    p = _Parser(prog="visco-decay", description="Viscoelastic wave decay simulator.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs in sweep mode")
    p.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_intermixed_args(argv)
        if args.jobs < 1:
            raise CliError("--jobs must be >= 1")
        data = apply_overrides(load_config(args.config), args.overrides)
        config, options = split_config(data)
        return HANDLERS[args.command](config, options, args)
    except ViscoDecayError as exc:
        print(f"visco-decay: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"visco-decay: error: I/O failure: {exc}", file=sys.stderr)
        return 4
    except (TypeError, ValueError) as exc:
        # stray type problems in user-supplied values
        print(f"visco-decay: error: invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
