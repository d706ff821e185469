"""Command-line front end.

Usage: ``latticeh2 {validate,variance,sweep,tune,simulate,lemma5} ...``

Exit codes: 0 success, 1 usage or configuration error, 2 model or stability
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .densities import Controller, Output, SystemSpec, is_stable, per_site_variance
from .errors import LatticeH2Error, UnstableStep
from .lattice import LatticeShape, absolute_kernel, kernel_from_dict, load_kernel, nearest_neighbor_kernel
from .scaling import (LEMMA5_COLUMNS, SWEEP_COLUMNS, Strategy, TuneReference, fit_exponent, lemma5_check,
                      sweep_variance, tune)
from .sim import (InputMode, empirical_variance, load_graph, output_energy, platoon_system, simulate_sde)

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_IO = 0, 1, 2, 3

OVERRIDE_KEYS = {
    "c0": float, "epsilon": float, "L": int, "d": int, "seed": int, "dt": float, "T": float,
    "strategy": str, "cbar": float, "controller": str, "output": str,
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    spec: str | None = None
    output_path: str | None = None
    format: str = "json"
    overrides: dict = field(default_factory=dict)

    def resolved(self, **extra) -> dict:
        out = {"command": self.command, "spec": self.spec, "output_path": self.output_path,
               "format": self.format, "overrides": self.overrides}
        out.update(extra)
        return out


def parse_overrides(items) -> dict:
    """Turn ``["c0=0.5", "L=64"]`` into a typed dict; unknown keys are rejected."""
    result = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in OVERRIDE_KEYS:
            raise ConfigError(f"unknown override key {key!r}; allowed: {sorted(OVERRIDE_KEYS)}")
        try:
            result[key] = OVERRIDE_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return result


def _int_list(text) -> list:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"expected comma separated integers, got {text!r}") from exc


def _kernel(entry, base: Path, default):
    if entry is None:
        return default
    if isinstance(entry, str):
        path = Path(entry)
        return load_kernel(path if path.is_absolute() else base / path)
    if isinstance(entry, dict):
        return kernel_from_dict(entry)
    raise ConfigError(f"kernel must be a file path or an object, got {entry!r}")


def load_spec_document(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def build_spec(doc: dict, overrides: dict, base: Path) -> tuple:
    """Resolve a spec document plus overrides into ``(SystemSpec, Output, resolved_dict)``."""
    params = dict(doc)
    for key in ("c0", "epsilon", "L", "d", "controller", "output"):
        if key in overrides:
            params[key] = overrides[key]
    try:
        d, L = int(params.get("d", 1)), int(params["L"])
    except KeyError as exc:
        raise ConfigError("spec needs a lattice side length 'L'") from exc
    try:
        controller = Controller(params.get("controller", "static"))
        output = Output(params.get("output", "global"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    epsilon = float(params.get("epsilon", 0.0))
    if controller is Controller.DAPI_NOISELESS and epsilon != 0.0:
        raise ConfigError("dapi_noiseless requires epsilon = 0")
    try:
        f = _kernel(params.get("f"), base, nearest_neighbor_kernel(d))
        g = _kernel(params.get("g"), base, absolute_kernel(d, 1.0))
        a = _kernel(params.get("a"), base, nearest_neighbor_kernel(d))
        spec = SystemSpec(shape=LatticeShape(d, L), f=f, g=g, controller=controller, a=a,
                          c0=float(params.get("c0", 1.0)), epsilon=epsilon)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read kernel: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    resolved = {"d": d, "L": L, "controller": controller.value, "output": output.value,
                "c0": spec.c0, "epsilon": spec.epsilon,
                "f": _kernel_summary(f), "g": _kernel_summary(g), "a": _kernel_summary(a)}
    return spec, output, resolved


def _kernel_summary(k) -> dict:
    return {"kind": k.kind.value, "q": k.q, "beta": k.beta,
            "entries": [{"offset": list(o), "gain": g} for o, g in zip(k.offsets, k.gains)]}


def atomic_write(path, data) -> None:
    """Write ``data`` to ``path`` through a temp file in the same directory and rename.

    ``data`` is a str, bytes, or a callable that writes to the path it is given.
    """
    path = Path(path)
    if path.exists() and not path.is_file():
        # devices and pipes cannot be replaced by a rename
        if callable(data):
            data(str(path))
        else:
            with open(path, "wb" if isinstance(data, bytes) else "w") as fh:
                fh.write(data)
        return
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        if callable(data):
            os.close(fd)
            data(tmp)
        else:
            with os.fdopen(fd, "wb" if isinstance(data, bytes) else "w") as fh:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text, path):
    if path:
        atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _json_doc(config: dict, payload: dict) -> str:
    doc = {"tool": "latticeh2", "version": __version__, "config": config}
    doc.update(payload)
    return json.dumps(doc, indent=2, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _csv_doc(config: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# latticeh2 {__version__}\n")
    buf.write("# config: " + json.dumps(config, default=_jsonable) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _spec_from_args(args, cfg: RunConfig):
    if not args.spec:
        raise ConfigError("a spec file is required")
    doc = load_spec_document(args.spec)
    return build_spec(doc, cfg.overrides, Path(args.spec).resolve().parent)


def cmd_validate(args, cfg: RunConfig) -> int:
    spec, output, resolved = _spec_from_args(args, cfg)
    ok, worst, theta = is_stable(spec)
    payload = {"valid": True, "stable": ok, "worst_real_part": worst, "worst_theta": theta}
    _emit(_json_doc(cfg.resolved(spec=resolved), payload), cfg.output_path)
    return EXIT_OK if ok else EXIT_MODEL


def cmd_variance(args, cfg: RunConfig) -> int:
    spec, output, resolved = _spec_from_args(args, cfg)
    report = per_site_variance(spec, output, per_theta=args.per_theta or cfg.format == "csv")
    config = cfg.resolved(spec=resolved)
    if cfg.format == "csv":
        header, rows = report.csv_rows()
        text = _csv_doc(dict(config, **report.to_dict()), header, rows)
    else:
        text = _json_doc(config, {"report": report.to_dict()})
    _emit(text, cfg.output_path)
    return EXIT_OK


def _reference(args, spec: SystemSpec, cbar: float) -> TuneReference:
    L_ref = args.L_ref or spec.shape.L
    abar = args.abar_ref if args.abar_ref is not None else (spec.a.beta if spec.a is not None else 1.0)
    return TuneReference(L_ref=L_ref, c0_ref=spec.c0, abar_ref=abar, cbar=cbar, a_min=args.a_min)


def _strategy(name) -> Strategy:
    try:
        return Strategy.parse(name)
    except ValueError as exc:
        raise ConfigError(f"unknown strategy {name!r}") from exc


def cmd_sweep(args, cfg: RunConfig) -> int:
    spec, output, resolved = _spec_from_args(args, cfg)
    L_list = _int_list(args.L_list)
    if not L_list:
        raise ConfigError("--L-list is required for a sweep")
    strategy = args.tune or cfg.overrides.get("strategy")
    reference = _reference(args, spec, cfg.overrides.get("cbar", args.cbar)) if strategy else None
    strategy = _strategy(strategy) if strategy else None
    rows = sweep_variance(spec, L_list, output, strategy=strategy, reference=reference)
    config = cfg.resolved(spec=resolved, L_list=L_list, tune=strategy.value if strategy else None,
                          reference=reference.__dict__ if reference else None, fit_on=args.fit_on)
    table = [[r.as_dict()[c] for c in SWEEP_COLUMNS] for r in rows]
    _emit(_csv_doc(config, SWEEP_COLUMNS, table), cfg.output_path)
    if len(rows) >= 4:
        fit = fit_exponent(rows, lambda r: getattr(r.report, args.fit_on)).to_dict()
    else:
        fit = {"error": "fewer than 4 sizes; no fit"}
    fit_text = _json_doc(config, {"fit": fit})
    if args.fit_path:
        atomic_write(args.fit_path, fit_text)
    elif cfg.output_path:
        atomic_write(str(cfg.output_path) + ".fit.json", fit_text)
    else:
        sys.stdout.write(fit_text)
    return EXIT_OK


def cmd_tune(args, cfg: RunConfig) -> int:
    spec, output, resolved = _spec_from_args(args, cfg)
    strategy = args.strategy or cfg.overrides.get("strategy")
    if not strategy:
        raise ConfigError("tune needs --strategy")
    strategy = _strategy(strategy)
    L = cfg.overrides.get("L", spec.shape.L) if args.target_L is None else args.target_L
    if args.L_ref is None and args.target_L is None and "L" in cfg.overrides:
        # the size in the input file is the reference when only the target is overridden
        args.L_ref = int(doc_L) if (doc_L := load_spec_document(args.spec).get("L")) else None
    reference = _reference(args, spec, cfg.overrides.get("cbar", args.cbar))
    try:
        params = tune(strategy, L, reference)
    except LatticeH2Error:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    config = cfg.resolved(spec=resolved, strategy=strategy.value, L=L,
                          reference=reference.__dict__)
    _emit(_json_doc(config, {"parameters": params}), cfg.output_path)
    return EXIT_OK


def cmd_lemma5(args, cfg: RunConfig) -> int:
    cbar = cfg.overrides.get("cbar", args.cbar)
    if not args.a_min > 0 or not cbar > 0:
        raise ConfigError("a_min and cbar must be positive")
    L_list = _int_list(args.L_list)
    rows = lemma5_check(args.a_min, cbar, L_list, fixed_q=args.fixed_q)
    config = cfg.resolved(a_min=args.a_min, cbar=cbar, L_list=L_list, fixed_q=args.fixed_q)
    table = [[r.as_dict()[c] for c in LEMMA5_COLUMNS] for r in rows]
    if cfg.format == "json":
        text = _json_doc(config, {"rows": [r.as_dict() for r in rows]})
    else:
        text = _csv_doc(config, LEMMA5_COLUMNS, table)
    _emit(text, cfg.output_path)
    return EXIT_OK if all(r.ok for r in rows) else EXIT_MODEL


def cmd_simulate(args, cfg: RunConfig) -> int:
    ov = cfg.overrides
    seed = ov.get("seed", args.seed)
    dt = ov.get("dt", args.dt)
    T = ov.get("T", args.T)
    controller = ov.get("controller", args.controller)
    extra = {}
    if args.graph:
        params = {"c0": ov.get("c0", 1.0), "epsilon": ov.get("epsilon", 0.0)}
        if controller:
            params["controller"] = controller
        try:
            system = load_graph(Path(args.graph), **params)
        except OSError as exc:
            raise IOError(str(exc)) from exc
        resolved = {"graph": str(args.graph), "n_nodes": system.n_nodes, "m": system.m, "dmp": system.dmp,
                    "controller": system.controller.value, "c0": system.c0, "epsilon": system.epsilon}
    elif args.platoon:
        params = {"c0": ov.get("c0", 1.0), "epsilon": ov.get("epsilon", 0.0), "q_A": args.q_A,
                  "a_min": args.a_min}
        if controller:
            params["controller"] = controller
        system = platoon_system(args.platoon, args.gain_low, args.gain_high, args.g_o,
                                seed=args.platoon_seed, **params)
        resolved = {"platoon": args.platoon, "gain_low": args.gain_low, "gain_high": args.gain_high,
                    "g_o": args.g_o, "platoon_seed": args.platoon_seed, "q_A": args.q_A, "a_min": args.a_min,
                    "controller": system.controller.value, "c0": system.c0, "epsilon": system.epsilon}
        extra["gains"] = system.gains()
    else:
        if controller:
            ov = dict(ov, controller=controller)
        spec, _, resolved = _spec_from_args(args, RunConfig(cfg.command, overrides=ov))
        system = spec
    mode = InputMode.parse(args.mode)
    traj = simulate_sde(system, dt, T, seed=seed, input_mode=mode, record_every=args.record_every,
                        ic_channels=args.ic_channels)
    output = Output(ov.get("output", args.output))
    config = cfg.resolved(system=resolved, seed=seed, dt=dt, T=T, mode=mode.value, output=output.value,
                          record_every=args.record_every, ic_channels=args.ic_channels)
    summary = {"seed": seed, "time_constant": traj.time_constant}
    if mode is InputMode.WHITE_NOISE:
        burn_in = args.burn_in if args.burn_in is not None else 0.2 * T
        summary["burn_in"] = burn_in
        summary["empirical_variance"] = empirical_variance(
            traj, output, burn_in=burn_in, min_time_constants=args.min_time_constants)
    else:
        energy = output_energy(traj, output)
        summary["energy_integral"] = float(np.trapezoid(energy, traj.times))
        summary["energy"] = {"time": traj.times.tolist(), "value": energy.tolist()}
    summary.update(extra)
    if cfg.output_path:
        if cfg.format == "bin":
            atomic_write(cfg.output_path, traj.write_binary)
        else:
            header = [f"latticeh2 {__version__}", "config: " + json.dumps(config, default=_jsonable)]
            atomic_write(cfg.output_path, lambda path: traj.write_csv(path, comments=header))
    _emit(_json_doc(config, {"summary": summary}), args.summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latticeh2", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, spec=True, fmt=("json", "csv")):
        if spec:
            p.add_argument("spec", nargs="?" if p.prog.endswith("simulate") else None, help="system spec JSON")
        p.add_argument("-o", "--output-path", help="output file (default: stdout)")
        p.add_argument("--format", choices=fmt, default=fmt[0])
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help=f"override one of: {', '.join(OVERRIDE_KEYS)}")

    p = sub.add_parser("validate", help="check a spec file and its stability")
    common(p)

    p = sub.add_parser("variance", help="per-site variance of a spec")
    common(p)
    p.add_argument("--per-theta", action="store_true", help="include per-frequency densities")

    p = sub.add_parser("sweep", help="variance over a ladder of lattice sizes")
    common(p, fmt=("csv",))
    p.add_argument("--L-list", required=True, help="comma separated side lengths")
    p.add_argument("--tune", help="tuning strategy applied at each size")
    p.add_argument("--L-ref", type=int)
    p.add_argument("--abar-ref", type=float)
    p.add_argument("--cbar", type=float, default=1.0)
    p.add_argument("--a-min", type=float, default=1.0)
    p.add_argument("--fit-on", choices=("V_N", "V_w", "V_eta"), default="V_N")
    p.add_argument("--fit-path", help="where to write the fit JSON")

    p = sub.add_parser("tune", help="size-dependent controller parameters")
    common(p, fmt=("json",))
    p.add_argument("--strategy")
    p.add_argument("--target-L", type=int)
    p.add_argument("--L-ref", type=int)
    p.add_argument("--abar-ref", type=float)
    p.add_argument("--cbar", type=float, default=1.0)
    p.add_argument("--a-min", type=float, default=1.0)

    p = sub.add_parser("simulate", help="stochastic or initial-condition simulation")
    common(p, fmt=("csv", "bin"))
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--platoon", type=int, help="number of vehicles in a random platoon")
    p.add_argument("--gain-low", type=float, default=0.5)
    p.add_argument("--gain-high", type=float, default=1.5)
    p.add_argument("--g-o", type=float, default=1.0)
    p.add_argument("--platoon-seed", type=int, default=0)
    p.add_argument("--q-A", dest="q_A", type=int, default=1)
    p.add_argument("--a-min", type=float, default=1.0)
    p.add_argument("--controller", choices=[c.value for c in Controller])
    p.add_argument("--mode", default="white-noise", choices=("white-noise", "initial-condition"))
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", choices=("global", "local"), default="global")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--ic-channels", choices=("all", "disturbance", "noise"), default="all",
                   help="input channels that shape the initial state in initial-condition mode")
    p.add_argument("--burn-in", type=float)
    p.add_argument("--min-time-constants", type=float, default=10.0)
    p.add_argument("--summary", help="summary JSON path (default: stdout)")

    p = sub.add_parser("lemma5", help="growing communication window bound")
    common(p, spec=False, fmt=("csv", "json"))
    p.add_argument("--a-min", type=float, default=1.0)
    p.add_argument("--cbar", type=float, default=1.0)
    p.add_argument("--L-list", default="8,16,32,64,128,256,512")
    p.add_argument("--fixed-q", type=int, default=1)
    return parser


COMMANDS = {"validate": cmd_validate, "variance": cmd_variance, "sweep": cmd_sweep, "tune": cmd_tune,
            "simulate": cmd_simulate, "lemma5": cmd_lemma5}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(command=args.command, spec=getattr(args, "spec", None),
                        output_path=args.output_path, format=args.format,
                        overrides=parse_overrides(args.overrides))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnstableStep as exc:
        hint = f" (try dt <= {exc.suggested_dt:.3g})" if exc.suggested_dt else ""
        print(f"model error: UnstableStep: {exc}{hint}", file=sys.stderr)
        return EXIT_MODEL
    except LatticeH2Error as exc:
        theta = getattr(exc, "theta", None)
        where = f" at theta={theta}" if theta is not None else ""
        print(f"model error: {type(exc).__name__}: {exc}{where}", file=sys.stderr)
        return EXIT_MODEL
    except (OSError, IOError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
