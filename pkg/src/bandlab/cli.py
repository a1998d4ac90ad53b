"""Command line entry point: ``bandlab {sample,profile,verify,sweep}``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 failure while computing.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, load_config, physical_check
from .harness import SWEEP_AXES, SpecError, _closed_profile, _envelope, _tag, default_threads, run_experiment, sweep, validate_spec
from .io import fmt, write_bundle, write_fit_summary, write_json, write_table
from .lattice import BandwidthWarning
from .semicircle import msc

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
SERIES_TOLERANCE = 1e-12
SERIES_CAP = 20_000


def _err(msg: str) -> None:
    print(f"bandlab: {msg}", file=sys.stderr)


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def _load(args):
    doc = load_config(args.config)
    spec, notes = physical_check(doc, args.seed)
    for n in notes:
        _err(f"warning: {n}")
    return doc, spec


def _out_dir(args, doc) -> Path:
    return Path(args.out if args.out is not None else doc.output.directory)


def cmd_sample(args) -> int:
    doc, spec = _load(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        record = run_experiment(spec, _threads(args))
    files = write_bundle(record, _out_dir(args, doc), doc.model_dump(by_alias=True), formats=doc.output.formats)
    for f in files:
        print(f)
    return EXIT_OK


def _series_terms(z: complex) -> int:
    m2 = abs(complex(msc(z))) ** 2
    n = math.log(SERIES_TOLERANCE * (1 - m2)) / math.log(m2) - 1
    return int(min(SERIES_CAP, max(1, math.ceil(n))))


def cmd_profile(args) -> int:
    from .profile import theta_exact_dense, theta_exact_dft, theta_series

    doc, spec = _load(args)
    out = _out_dir(args, doc)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        S = validate_spec(spec)
    reps = S.lattice.representatives()
    written = []
    for z in spec.z_grid():
        table = {}
        for k in range(spec.d):
            table["x" if spec.d == 1 else f"x{k + 1}"] = reps[:, k].tolist()
        n_terms = _series_terms(z)
        series = theta_series(S, z, n_terms)
        table["Theta_dense"] = theta_exact_dense(S, z).column.tolist()
        table["Theta_dft"] = theta_exact_dft(S, z).column.tolist()
        table["Theta_series"] = series.column.tolist()
        table["theta_closed"] = np.asarray(_closed_profile(spec, S, z, S.lattice)).tolist()
        table["Upsilon"] = np.asarray(_envelope(spec, S, z, S.lattice)).tolist()
        p = out / f"profile_{_tag(z)}.csv"
        write_table(table, p)
        written.append({"file": p.name, "E": z.real, "eta": z.imag, "series_terms": n_terms,
                        "series_tail_bound": series.tail_bound})
        print(p)
    write_json({"config": doc.model_dump(by_alias=True), "version": __version__, "profiles": written},
               out / "manifest.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import SUITES, run_suite

    if args.suite not in SUITES:
        _err(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
        return EXIT_INVALID
    results = run_suite(args.suite, report=lambda r: print(r.line(), flush=True))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAILED if failed else EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be a comma separated list of numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("--values is empty")
    return vals


def cmd_sweep(args) -> int:
    doc, spec = _load(args)
    values = _parse_values(args.values)
    if args.axis == "W":
        too_wide = [v for v in values if v > spec.L]
        if too_wide:
            raise ConfigError(f"band width values {too_wide} exceed the torus side L={spec.L}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        result = sweep(spec, args.axis, values, _threads(args))
    out = _out_dir(args, doc)
    out.mkdir(parents=True, exist_ok=True)
    for v, rec in zip(values, result.records):
        sub = out / f"{args.axis}_{fmt(v)}"
        write_bundle(rec, sub, doc.model_dump(by_alias=True), extra={"sweep": {"axis": args.axis, "value": v}},
                     formats=doc.output.formats)
        print(sub)
    write_fit_summary(result, out / "fit_summary.csv")
    print(out / "fit_summary.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandlab", description="Random band matrix experiments.")
    parser.add_argument("--version", action="version", version=f"bandlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON configuration file")
            p.add_argument("--out", help="output directory (defaults to output.directory)")
            p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--threads", type=int, help="worker threads (default: BANDLAB_THREADS or 1)")

    p = sub.add_parser("sample", help="Monte Carlo run writing a result bundle")
    common(p)
    p.set_defaults(func=cmd_sample)
    p = sub.add_parser("profile", help="deterministic profile comparison")
    common(p)
    p.set_defaults(func=cmd_profile)
    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("suite", help="identities, profile, lde, deloc or all")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("sweep", help="repeat a run along one axis and fit log-log slopes")
    common(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma separated axis values")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    if getattr(args, "threads", None) is not None and args.threads < 1:
        _err("--threads must be at least 1")
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, SpecError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # reported, not re-raised: the exit code carries the outcome
        _err(f"runtime failure: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
