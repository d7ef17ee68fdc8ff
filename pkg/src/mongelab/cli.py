"""Command-line entry point: ``mongelab run | sweep | verify``.

Exit status is 0 when every check passes, 1 when a check fails and 2 when
a stage raised an error or the configuration is invalid.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import ConfigError, UnknownSuite
from .io import to_jsonable
from .verify import SUITES


def _parser():
    p = argparse.ArgumentParser(prog="mongelab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="config file path or bundled config name")
        sp.add_argument("--out", help="output directory (default: [output] directory)")
        sp.add_argument("--workers", type=int, help="parallel runs for sweeps")
        sp.add_argument("--seed", type=int, help="seed for randomized parts")
        sp.add_argument("--spacing-override", type=float, help="replace the configured grid spacings")

    r = sub.add_parser("run", help="run one experiment")
    common(r)
    s = sub.add_parser("sweep", help="run one experiment per parameter value")
    common(s)
    s.add_argument("--parameter", required=True, choices=sorted(harness.SWEEP_PARAMETERS))
    s.add_argument("--values", required=True, help="comma-separated values")
    v = sub.add_parser("verify", help="run self-verification suites")
    v.add_argument("suite", nargs="?", default="all", help=f"one of {sorted(SUITES) + ['all']}")
    v.add_argument("--out", help="write verify.json here")
    v.add_argument("--seed", type=int, default=0)
    return p


def _report_failures(result):
    for f in result.failures:
        print(f"stage {f['stage']} failed: {f['error']}: {f['message']}", file=sys.stderr)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            result = harness.run(args.config, args.out, args.spacing_override, args.seed)
            _report_failures(result)
            print(json.dumps({"passed": result.passed, "directory": result.directory}, sort_keys=True))
            return result.exit_code
        if args.command == "sweep":
            cfg = harness.load_config(args.config)
            if args.spacing_override is not None:
                cfg = cfg.with_overrides(**{"grid.spacing": [args.spacing_override]})
            values = [float(v) for v in args.values.split(",") if v.strip()]
            results, agg = harness.sweep(cfg, args.parameter, values, args.out, args.workers, args.seed)
            for r in results:
                _report_failures(r)
            print(json.dumps(to_jsonable({"passed": agg["passed"], "fit": agg["fit"]}), sort_keys=True))
            return max(r.exit_code for r in results)
        summary = harness.verify(args.suite, args.seed, args.out)
        for suite, recs in summary["suites"].items():
            for rec in recs:
                status = "PASS" if rec["passed"] else "FAIL"
                print(f"{status} {suite}: {rec['criterion']} (measured {rec['measured']}, threshold {rec['threshold']})")
        return 0 if summary["passed"] else 1
    except (ConfigError, UnknownSuite) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
