"""Command line entry point: ``centroid-bootstrap {ci,wasserstein,bandit,validate}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from . import experiments, validation
from .config import SCHEMAS, ConfigError, load
from .core import ContractError, NumericalAbort

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4

_COLUMN_HELP = {
    "ci": ("columns: " + ",".join(experiments.CI_COLUMNS) + ". abs_error is |coverage - alpha|;"
           " mc_sd is the binomial Monte Carlo sd of the coverage. method 'centroid' uses"
           " learned centroid probabilities, 'centroid_uniform' equal masses."),
    "wasserstein": ("columns: " + ",".join(experiments.WASS_COLUMNS) + ". se_w2 is the standard"
                    " error of mean_w2; p_vs_iid is a one-sided paired t-test p-value."),
    "bandit": ("columns: " + ",".join(experiments.BANDIT_COLUMNS) + ". paired statistics compare"
               " each centroid arm with naive at the same m on shared context sequences."),
    "validate": "prints one PASS/FAIL line per check; exits 3 if any check fails.",
}


def _keys_help(command):
    return "config keys: " + ", ".join(SCHEMAS[command])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="centroid-bootstrap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ci", "wasserstein", "bandit", "validate"):
        p = sub.add_parser(name, help=_COLUMN_HELP[name],
                           description=_COLUMN_HELP[name] + " " + _keys_help(name)
                           + ". Env override: CBOOT_<SECTION>__<KEY>.")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        if name == "validate":
            p.add_argument("--corrupt-h", action="store_true",
                           help="test hook: give the D-metric check an indefinite H")
    return parser


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(command: str, cfg: dict, rows: list, columns: list) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps({"command": command, "config": cfg}, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.command, args.config, seed=args.seed)
        if args.command == "validate" and args.corrupt_h:
            cfg["validate.corrupt_h"] = True
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate":
            results = validation.run_checks(cfg["seed"], cfg["validate.corrupt_h"])
            lines = [f"# {json.dumps({'command': 'validate', 'config': cfg}, sort_keys=True)}"]
            lines += [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in results]
            _emit("\n".join(lines) + "\n", args.out)
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VALIDATION
        runner, columns = {
            "ci": (experiments.ci_experiment, experiments.CI_COLUMNS),
            "wasserstein": (experiments.wasserstein_experiment, experiments.WASS_COLUMNS),
            "bandit": (experiments.bandit_experiment, experiments.BANDIT_COLUMNS),
        }[args.command]
        rows = runner(cfg, jobs=args.jobs)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ContractError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(render_csv(args.command, cfg, rows, columns), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
