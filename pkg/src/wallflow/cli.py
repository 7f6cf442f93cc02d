"""Command-line entry point ``wallflow``.

Exit codes: 0 pass, 2 numeric failure, 3 configuration error, 4 divergence
(smallness condition violated).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

EXIT_PASS, EXIT_NUMERIC, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 2, 3, 4

COMMANDS = {
    "alpha-solve": "alpha-solve",
    "decay": "decay",
    "contraction": "contraction",
    "oracle-solve": "oracle-solve",
    "oracle-sweep": "oracle-sweep",
    "verify": "verify",
    "weak-strong": "weak-strong",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wallflow", description="Half-plane obstacle flow verification harness")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output directory for reports, tables and containers")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--threads", type=int, help="cap on BLAS/LAPACK threads")
        if name == "verify":
            p.add_argument("--suite", action="append",
                           choices=["hardy", "antisymmetry", "manufactured", "collocation", "convolution"],
                           help="run only this suite (repeatable)")
            p.add_argument("--count", type=int, help="fields per randomized batch")
        if name == "oracle-sweep":
            p.add_argument("--sweep", choices=["invading", "epsilon"])
    return ap


def _load_config(args):
    from .pipelines import PipelineConfig

    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            from .pipelines import ConfigError
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(base, dict):
        from .pipelines import ConfigError
        raise ConfigError("config must be a JSON object")
    base = dict(base)
    base["pipeline"] = COMMANDS[args.command]
    opts = dict(base.get("options") or {})
    if getattr(args, "suite", None):
        opts["suites"] = args.suite
    if getattr(args, "count", None):
        opts["count"] = args.count
    if getattr(args, "sweep", None):
        opts["sweep"] = args.sweep
    if opts:
        base["options"] = opts
    return PipelineConfig.from_dict(base, out=args.out, seed=args.seed)


def _dispatch(cfg):
    from . import pipelines as pl

    name = cfg.pipeline
    if name == "weak-strong":
        rep = pl.run_weak_strong(cfg)
        return rep.as_dict(), rep.passed
    run = {"alpha-solve": pl.run_alpha_solve, "decay": pl.run_decay, "contraction": pl.run_contraction,
           "oracle-solve": pl.run_oracle, "oracle-sweep": pl.run_oracle_sweep,
           "verify": pl.run_property_suites}[name]
    rep = run(cfg)
    return rep, rep.get("passed", True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .pipelines import ConfigError, StageError

    limiter = None
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(args.threads)
    try:
        cfg = _load_config(args)
        report, passed = _dispatch(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE if exc.kind == "divergence" else EXIT_NUMERIC
    finally:
        if limiter is not None:
            limiter.unregister()
    from .io import to_jsonable
    summary = {k: v for k, v in to_jsonable(report).items() if k not in ("config", "rows")}
    print(json.dumps(summary, indent=1, sort_keys=True))
    print("PASS" if passed else "FAIL")
    return EXIT_PASS if passed else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
