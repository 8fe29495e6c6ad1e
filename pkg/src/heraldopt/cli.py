"""Command-line entry point: ``heraldopt optimize|validate|loss-sweep|wigner|targets``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .circuit import CircuitParams, VoidOutcome, build_state, herald
from .fock import wigner
from .noise import loss_sweep
from .objective import LossConfig
from .search import (
    BasinConfig, CircuitSpec, OptConfig, classify_rotation, result_to_dict, run_beam, run_fixed,
)
from .targets import TargetState, make_target

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


class NumericError(Exception):
    pass


_NUM = {"type": "number"}
_TARGET_SPEC = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["cat", "binomial", "gkp_core", "gkp_ideal", "cubic", "fock"]},
        "label": {"type": "string"},
        "alpha": {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]},
        "r": _NUM, "parity": {"enum": ["even", "odd"]},
        "N": {"type": "integer", "minimum": 1}, "S": {"type": "integer", "minimum": 0},
        "mu": {"type": "integer", "minimum": 0, "maximum": 1},
        "n_max": {"type": "integer", "minimum": 0}, "envelope_db": _NUM,
        "mapping": {"enum": ["log", "linear"]}, "gamma": _NUM,
        "max_leakage": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}, "n": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "heraldopt run configuration",
    "type": "object",
    "required": ["circuit", "mode", "targets"],
    "properties": {
        "name": {"type": "string"},
        "mode": {"enum": ["fixed", "harvest", "beam"]},
        "circuit": {
            "type": "object",
            "required": ["num_modes"],
            "properties": {
                "num_modes": {"type": "integer", "minimum": 2, "maximum": 4},
                "cutoff": {"type": "integer", "minimum": 2, "maximum": 80},
                "displaced": {"type": "boolean"},
                "alpha_max": {"type": "number", "minimum": 0},
                "free_out_phase": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "targets": {"type": "object", "minProperties": 1, "additionalProperties": _TARGET_SPEC},
        "assignment": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["pattern", "target"],
                "properties": {
                    "pattern": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                    "target": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "beam": {
            "type": "object",
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "min_fidelity": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "optimizer": {
            "type": "object",
            "properties": {
                "hops": {"type": "integer", "minimum": 0},
                "step": {"type": "number", "minimum": 0},
                "temperature": {"type": "number", "minimum": 0},
                "restarts": {"type": "integer", "minimum": 1},
                "local_maxiter": {"type": "integer", "minimum": 1},
                "grad_step": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "loss": {
            "type": "object",
            "properties": {
                "alpha": {"type": "number", "minimum": 0},
                "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "delta": {"type": "number", "minimum": 0},
                "lam": {"type": "number", "minimum": 0},
                "w_trunc": {"type": "number", "minimum": 0},
                "lambda_mode": {"enum": ["as-printed", "normalized"]},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "x0": {"type": "array", "items": {"type": "number"}},
        "output_dir": {"type": "string"},
    },
    "additionalProperties": False,
}


_SCORE = {
    "type": "object",
    "required": ["pattern", "target", "probability", "fidelity", "phi_star"],
    "properties": {
        "pattern": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "target": {"type": "string"},
        "probability": {"type": "number", "minimum": 0, "maximum": 1},
        "fidelity": {"type": "number", "minimum": 0},
        "phi_star": {"type": "number", "minimum": 0},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "heraldopt optimization report",
    "type": "object",
    "required": ["config", "config_hash", "code_version", "seed", "wall_time_s", "result", "rotation_class"],
    "properties": {
        "config": {"type": "object"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "code_version": {"type": "string"},
        "seed": {"type": "integer"},
        "wall_time_s": {"type": "number", "minimum": 0},
        "rotation_class": {"enum": ["invariant", "variant", None]},
        "result": {
            "type": "object",
            "required": [
                "mode", "num_modes", "cutoff", "seed", "x", "labels", "loss", "leakage", "p_agg",
                "patterns", "periods", "trace", "notes",
            ],
            "properties": {
                "mode": {"enum": ["fixed", "beam"]},
                "num_modes": {"type": "integer"},
                "cutoff": {"type": "integer"},
                "x": {"type": "array", "items": {"type": "number"}},
                "labels": {"type": "array", "items": {"type": "string"}},
                "loss": {"type": "number"},
                "leakage": {"type": "number"},
                "p_agg": {"type": "number"},
                "patterns": {"type": "array", "items": _SCORE},
                "periods": {"type": "object", "additionalProperties": {"type": "number"}},
                "trace": {"type": "array", "items": {"type": "number"}},
                "notes": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}


# ---------------------------------------------------------------- config helpers


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def validate_config(config: dict) -> dict:
    """Schema plus cross-field checks; raises ConfigError with every problem found."""
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(config), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    N = config["circuit"]["num_modes"]
    if config["mode"] in ("fixed", "harvest"):
        if "assignment" not in config:
            raise ConfigError(f"mode {config['mode']!r} needs an 'assignment' list")
        for item in config["assignment"]:
            if len(item["pattern"]) != N - 1:
                raise ConfigError(f"pattern {item['pattern']} needs {N - 1} entries")
            if item["target"] not in config["targets"]:
                raise ConfigError(f"assignment refers to unknown target {item['target']!r}")
    if "x0" in config and len(config["x0"]) != CircuitParams.vector_size(N):
        raise ConfigError(f"x0 needs {CircuitParams.vector_size(N)} entries")
    return config


def build_targets(config: dict, D: int) -> dict[str, TargetState]:
    out = {}
    for label, spec in config["targets"].items():
        try:
            out[label] = make_target({**spec, "label": label}, D)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"target {label!r}: {exc}") from exc
    return out


def circuit_spec(config: dict, cutoff: int | None = None) -> CircuitSpec:
    c = config["circuit"]
    return CircuitSpec(
        c["num_modes"], cutoff or c.get("cutoff", 30), c.get("displaced", False),
        c.get("alpha_max", 3.0), c.get("free_out_phase", False),
    )


def opt_config(config: dict) -> OptConfig:
    mode = "beam" if config["mode"] == "beam" else "fixed"
    return OptConfig(
        mode=mode,
        beam_width=config.get("beam", {}).get("width", 150),
        basin=BasinConfig(seed=config.get("seed", 0), **config.get("optimizer", {})),
        loss=LossConfig(**config.get("loss", {})),
    )


def assignment_of(config: dict, targets: dict[str, TargetState]):
    return [(tuple(a["pattern"]), targets[a["target"]]) for a in config["assignment"]]


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _emit(payload: dict, output: str | None) -> None:
    if output:
        _write_json(Path(output), payload)
    else:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------- subcommands


def optimize(config: dict, checkpoint: str | None = None) -> dict:
    """Run the configured optimization and return the report mapping."""
    validate_config(config)
    spec = circuit_spec(config)
    targets = build_targets(config, spec.cutoff)
    cfg = opt_config(config)
    x0 = config.get("x0")
    t0 = time.perf_counter()
    if cfg.mode == "beam":
        result = run_beam(spec, list(targets.values()), cfg, x0, checkpoint, config_hash(config))
        floor = config.get("beam", {}).get("min_fidelity")
        if floor is not None:
            result.scores = [s for s in result.scores if s.fidelity >= floor]
    else:
        result = run_fixed(spec, assignment_of(config, targets), cfg, x0, checkpoint, config_hash(config))
    wall = time.perf_counter() - t0
    if not math.isfinite(result.loss) or not np.all(np.isfinite(result.x)):
        raise NumericError(f"optimization ended with non-finite loss {result.loss}")
    report = {
        "config": config,
        "config_hash": config_hash(config),
        "code_version": __version__,
        "seed": cfg.basin.seed,
        "wall_time_s": wall,
        "result": result_to_dict(result),
    }
    try:
        report["rotation_class"] = classify_rotation(result)
    except ValueError:
        report["rotation_class"] = None
    return report


def cmd_optimize(args) -> int:
    config = read_json(args.config)
    out_dir = Path(args.output_dir or config.get("output_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "basin_checkpoint.json"
    if not args.resume:
        checkpoint.unlink(missing_ok=True)
    report = optimize(config, str(checkpoint))
    _write_json(out_dir / "report.json", report)
    r = report["result"]
    for s in r["patterns"]:
        print(f"{tuple(s['pattern'])} -> {s['target']}: p={s['probability']:.4%} F={s['fidelity']:.5f}")
    print(f"P_agg={r['p_agg']:.4%} loss={r['loss']:.6f} report={out_dir / 'report.json'}")
    return EXIT_OK


def load_report(path) -> dict:
    report = read_json(path)
    errors = list(Draft202012Validator(REPORT_SCHEMA).iter_errors(report))
    if errors:
        raise ConfigError(f"{path} is not an optimization report: {errors[0].message}")
    validate_config(report["config"])
    return report


def _params(report) -> CircuitParams:
    r = report["result"]
    return CircuitParams.from_vector(r["x"], r["num_modes"])


def validate_report(report: dict, cutoff_hi: int) -> dict:
    """Infidelity between each heralded output at the run cutoff and at ``cutoff_hi``."""
    D = report["result"]["cutoff"]
    if cutoff_hi < D:
        raise ConfigError(f"validation cutoff {cutoff_hi} is below the run cutoff {D}")
    params = _params(report)
    lo, hi = build_state(params, D), build_state(params, cutoff_hi)
    rows = []
    for s in report["result"]["patterns"]:
        pattern = tuple(s["pattern"])
        a, b = herald(lo, pattern).output.amplitudes, herald(hi, pattern).output.amplitudes
        overlap = np.vdot(np.pad(a, (0, cutoff_hi - D)), b)
        rows.append({"pattern": list(pattern), "infidelity": float(max(0.0, 1 - abs(overlap) ** 2))})
    return {
        "report_hash": report["config_hash"], "cutoff": D, "cutoff_hi": cutoff_hi,
        "patterns": rows, "max_infidelity": max(r["infidelity"] for r in rows),
    }


def cmd_validate(args) -> int:
    _emit(validate_report(load_report(args.report), args.cutoff), args.output)
    return EXIT_OK


def sweep_report(report: dict, etas, cutoff: int) -> list[dict]:
    targets = build_targets(report["config"], cutoff)
    assignment = [(tuple(s["pattern"]), targets[s["target"]]) for s in report["result"]["patterns"]]
    return loss_sweep(_params(report), assignment, etas, cutoff)


def cmd_loss_sweep(args) -> int:
    if any(not 0 <= e <= 1 for e in args.eta):
        raise ConfigError("transmissivities must lie in [0, 1]")
    rows = sweep_report(load_report(args.report), args.eta, args.cutoff)
    stream = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["target", "pattern", "eta", "p", "fidelity"])
        for r in rows:
            pattern = " ".join(str(n) for n in r["pattern"])
            writer.writerow([r["target"], pattern, repr(r["eta"]), repr(r["p"]), repr(r["fidelity"])])
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


def wigner_report(report: dict, pattern, extent: float, points: int, align: bool = True):
    """Wigner grid of the heralded output; ``align`` undoes the best rotation phi*."""
    D = report["result"]["cutoff"]
    state = build_state(_params(report), D)
    if len(pattern) != state.num_modes - 1 or any(not 0 <= n < D for n in pattern):
        raise ConfigError(f"pattern {tuple(pattern)} does not fit {state.num_modes - 1} ancillas at cutoff {D}")
    out = herald(state, tuple(pattern)).output.amplitudes
    if align:
        match = [s for s in report["result"]["patterns"] if tuple(s["pattern"]) == tuple(pattern)]
        if match:
            out = out * np.exp(1j * match[0]["phi_star"] * np.arange(D))
    axis = np.linspace(-extent, extent, points)
    return wigner(out, axis, axis)


def cmd_wigner(args) -> int:
    grid = wigner_report(load_report(args.report), args.pattern, args.extent, args.points, not args.no_align)
    stream = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["x", "p", "W"])
        for i, x in enumerate(grid.x_axis):
            for j, p in enumerate(grid.p_axis):
                writer.writerow([repr(float(x)), repr(float(p)), repr(float(grid.values[i, j]))])
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def target_summary(target: TargetState) -> dict:
    amps = target.amplitudes
    support = [int(n) for n in np.flatnonzero(np.abs(amps) > 1e-12)]
    parities = {n % 2 for n in support}
    parity = "even" if parities == {0} else "odd" if parities == {1} else "mixed"
    return {
        "label": target.label,
        "cutoff": target.cutoff,
        "params": json.loads(target.to_json())["params"],
        "norm": float(np.vdot(amps, amps).real),
        "parity": parity,
        "support": support,
        "mean_photon_number": float(np.sum(np.arange(amps.size) * np.abs(amps) ** 2)),
        "amplitudes": [[float(z.real), float(z.imag)] for z in amps],
    }


def cmd_targets(args) -> int:
    spec = {"family": args.family}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        spec[key] = _parse_value(value)
    errors = list(Draft202012Validator(_TARGET_SPEC).iter_errors(spec))
    if errors:
        raise ConfigError("; ".join(e.message for e in errors))
    try:
        target = make_target(spec, args.cutoff)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    _emit(target_summary(target), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heraldopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run a fixed, harvest or beam optimization")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", help="re-simulate a report at a larger cutoff")
    p.add_argument("report")
    p.add_argument("--cutoff", type=int, default=50)
    p.add_argument("--output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("loss-sweep", help="heralded p and fidelity under photon loss (CSV)")
    p.add_argument("report")
    p.add_argument("--eta", type=float, nargs="+", default=[1.0, 0.99, 0.9])
    p.add_argument("--cutoff", type=int, default=15)
    p.add_argument("--output")
    p.set_defaults(func=cmd_loss_sweep)

    p = sub.add_parser("wigner", help="Wigner grid of a heralded output (CSV)")
    p.add_argument("report")
    p.add_argument("--pattern", type=int, nargs="+", required=True)
    p.add_argument("--extent", type=float, default=6.0)
    p.add_argument("--points", type=int, default=121)
    p.add_argument("--no-align", action="store_true", help="keep the raw output phase")
    p.add_argument("--output")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("targets", help="print target amplitudes and diagnostics (JSON)")
    p.add_argument("family")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--cutoff", type=int, default=30)
    p.add_argument("--output")
    p.set_defaults(func=cmd_targets)
    return parser


def _apply_thread_override() -> None:
    threads = os.environ.get("HERALDOPT_THREADS")
    if threads:
        import numba

        try:
            n = int(threads)
        except ValueError as exc:
            raise ConfigError(f"HERALDOPT_THREADS must be an integer, got {threads!r}") from exc
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_thread_override()
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, VoidOutcome, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
