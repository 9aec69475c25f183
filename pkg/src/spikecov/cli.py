"""Command-line interface.

Exit status: 0 on success, 1 on input errors (bad flags, unreadable or
malformed files), 2 on numerical or estimator failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .errors import InputError, NumericError
from .estimators import estimate
from .io import dumps, envelope, load_data, write_data
from .models import draw_sample, get_distribution, spike_truths
from .montecarlo import (
    ExperimentConfig,
    McTable,
    default_workers,
    resolve_model,
    run_clt_check,
    run_estimator_quality,
    run_independence_check,
    run_power,
    run_size,
)
from .twosample import two_sample_test

_SIM_DEFAULTS: dict[str, Any] = {
    "p": [100],
    "n": 100,
    "n2": None,
    "dist": "normal",
    "reps": 500,
    "seed": 0,
    "level": 0.05,
    "o1": None,
    "statistics": None,
    "format": "json",
    "out": None,
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "test": {"a": None, "b": None, "out": None},
    "estimate": {"data": None, "spike": 0, "out": None},
    "truth": {"model": None, "p": None, "n": None, "gamma4": None, "dist": "normal", "o1": None, "out": None},
    "draw": {"model": None, "p": None, "n": 100, "dist": "normal", "seed": 0, "o1": None, "out": None},
    "simulate-size": {**_SIM_DEFAULTS, "model": None},
    "simulate-power": {**_SIM_DEFAULTS, "model_a": None, "model_b": None},
    "simulate-estimator": {**_SIM_DEFAULTS, "model": None},
    "verify-clt": {**_SIM_DEFAULTS, "model": 1, "p": [200], "n": 400, "reps": 2000},
    "verify-independence": {**_SIM_DEFAULTS, "model": 1, "p": [200], "n": 400, "reps": 2000},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_sim_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--p", help="dimension(s), comma separated")
    sp.add_argument("--n", type=int, help="sample size (first sample)")
    sp.add_argument("--n2", type=int, help="second sample size (defaults to --n)")
    sp.add_argument("--dist", help="entry distribution: normal, t10, rademacher")
    sp.add_argument("--reps", type=int, help="Monte Carlo replications")
    sp.add_argument("--seed", type=int, help="base seed")
    sp.add_argument("--level", type=float, help="nominal level")
    sp.add_argument("--o1", help="3x3 orthogonal block for models 3/4, 9 comma-separated numbers")
    sp.add_argument("--statistics", help="comma-separated statistics to report")
    sp.add_argument("--format", choices=["json", "csv"], help="stdout format")
    sp.add_argument("--workers", type=int, help="worker processes (default $SPIKECOV_WORKERS or 1)")
    sp.add_argument("--out", help="write result to this path (.csv or .json)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikecov", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="flat JSON file of flag values; command-line flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("test", help="two-sample covariance equality test on two CSV files")
    sp.add_argument("--a", help="CSV of the first sample (rows = observations)")
    sp.add_argument("--b", help="CSV of the second sample")
    sp.add_argument("--out")

    sp = sub.add_parser("estimate", help="single-sample spike, eigenvector and moment estimates")
    sp.add_argument("--data", help="CSV sample")
    sp.add_argument("--spike", type=int, help="0-based spike index for the L4 estimate")
    sp.add_argument("--out")

    sp = sub.add_parser("truth", help="theoretical spike quantities of a population model")
    sp.add_argument("--model", help="model id 1..5, JSON document, or path to a JSON model file")
    sp.add_argument("--p", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--gamma4", type=float, help="fourth moment of the entries (default from --dist)")
    sp.add_argument("--dist")
    sp.add_argument("--o1")
    sp.add_argument("--out")

    sp = sub.add_parser("draw", help="draw a sample from a model and write it as CSV")
    sp.add_argument("--model")
    sp.add_argument("--p", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--dist")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--o1")
    sp.add_argument("--out", help="output CSV path (stdout when omitted)")

    for name, helptext in (
        ("simulate-size", "empirical size of the tests under a null model"),
        ("simulate-estimator", "Monte Carlo mean/variance of the estimators"),
        ("verify-clt", "check the spike CLT variance"),
        ("verify-independence", "check spike/LSS asymptotic independence"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--model")
        _add_sim_flags(sp)

    sp = sub.add_parser("simulate-power", help="empirical power between two models")
    sp.add_argument("--model-a", dest="model_a")
    sp.add_argument("--model-b", dest="model_b")
    _add_sim_flags(sp)
    return parser


def _parse_model_spec(spec: Any) -> int | dict:
    if isinstance(spec, (int, dict)):
        return spec
    if spec is None:
        raise InputError("a model is required (--model)")
    text = str(spec).strip()
    if text.isdigit():
        return int(text)
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid model JSON: {exc}") from exc
    path = Path(text)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid model JSON in {path}: {exc}") from exc


def _floats(value: Any) -> list[float] | None:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",")]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {value!r}") from exc


def _ints(value: Any) -> list[int]:
    vals = _floats(value) or []
    if any(v != int(v) for v in vals):
        raise InputError(f"expected integers, got {value!r}")
    return [int(v) for v in vals]


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, the config file and explicit flags (in increasing precedence)."""
    cmd = args.command
    cfg: dict[str, Any] = dict(DEFAULTS[cmd])
    cfg["workers"] = default_workers()
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid config JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError("config file must hold a JSON object")
        for k, v in doc.items():
            key = k.lstrip("-").replace("-", "_")
            if key not in cfg:
                raise InputError(f"unknown config key {k!r} for {cmd}")
            cfg[key] = v
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    return cfg


def _emit(cfg: dict[str, Any], kind: str, payload: Any, table: McTable | None = None) -> None:
    doc = envelope(kind, cfg, payload)
    out = cfg.get("out")
    if out:
        text = table.to_csv() if table is not None and str(out).endswith(".csv") else dumps(doc) + "\n"
        Path(out).write_text(text)
        print(f"wrote {out}", file=sys.stderr)
        return
    if table is not None and cfg.get("format") == "csv":
        sys.stdout.write(table.to_csv())
    else:
        sys.stdout.write(dumps(doc) + "\n")


def _experiment(cfg: dict[str, Any], model: Any, model_b: Any = None) -> ExperimentConfig:
    o1 = _floats(cfg.get("o1"))
    stats = cfg.get("statistics")
    if isinstance(stats, str):
        stats = [s for s in stats.split(",") if s]
    return ExperimentConfig(
        model=_parse_model_spec(model),
        model_b=None if model_b is None else _parse_model_spec(model_b),
        p_grid=tuple(_ints(cfg["p"])),
        n1=int(cfg["n"]),
        n2=None if cfg.get("n2") is None else int(cfg["n2"]),
        dist=cfg["dist"],
        reps=int(cfg["reps"]),
        level=float(cfg["level"]),
        seed=int(cfg["seed"]),
        statistics=tuple(stats or ()),
        o1=None if o1 is None else tuple(o1),
        workers=int(cfg.get("workers") or 1),
    )


def dispatch(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    cmd = args.command
    if cmd == "test":
        if not cfg["a"] or not cfg["b"]:
            raise InputError("test needs --a and --b")
        res = two_sample_test(load_data(cfg["a"]), load_data(cfg["b"]))
        _emit(cfg, "test", res)
    elif cmd == "estimate":
        if not cfg["data"]:
            raise InputError("estimate needs --data")
        spikes, moments = estimate(load_data(cfg["data"]), int(cfg["spike"]))
        _emit(cfg, "estimate", {"spike": spikes, "moments": moments})
    elif cmd in ("truth", "draw"):
        spec = _parse_model_spec(cfg["model"])
        if cfg.get("p") is None and not (isinstance(spec, dict) and "p" in spec):
            raise InputError(f"{cmd} needs --p")
        model = resolve_model(spec, cfg["p"], _floats(cfg.get("o1")))
        if cfg.get("n") is None:
            raise InputError(f"{cmd} needs --n")
        if cmd == "truth":
            g4 = cfg["gamma4"] if cfg.get("gamma4") is not None else get_distribution(cfg["dist"]).gamma4
            cfg["gamma4"] = g4
            truths = spike_truths(model, int(cfg["n"]), float(g4))
            _emit(cfg, "truth", {"model": model.to_json(), "truths": truths})
        else:
            data = draw_sample(model, int(cfg["n"]), cfg["dist"], int(cfg["seed"]))
            if cfg.get("out"):
                write_data(cfg["out"], data)
            else:
                write_data("/dev/stdout", data)
    elif cmd == "simulate-size":
        exp = _experiment(cfg, cfg["model"])
        table = run_size(exp)
        _emit(cfg, cmd, table, table)
    elif cmd == "simulate-power":
        exp = _experiment(cfg, cfg["model_a"], cfg["model_b"])
        table = run_power(exp)
        _emit(cfg, cmd, table, table)
    elif cmd == "simulate-estimator":
        exp = _experiment(cfg, cfg["model"])
        table = run_estimator_quality(exp)
        _emit(cfg, cmd, table, table)
    elif cmd == "verify-clt":
        exp = _experiment(cfg, cfg["model"])
        _emit(cfg, cmd, run_clt_check(exp))
    elif cmd == "verify-independence":
        exp = _experiment(cfg, cfg["model"])
        _emit(cfg, cmd, run_independence_check(exp))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return dispatch(args)
    except InputError as exc:
        print(f"spikecov: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except NumericError as exc:
        print(f"spikecov: numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
