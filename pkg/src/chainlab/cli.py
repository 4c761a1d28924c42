"""Command-line experiment runner.

Configs are line-oriented ``key = value`` files with bracketed sections, so
experiment snapshots are diffable and can live in the repo:

    [experiment]
    id = crb_gaussian_mean
    seed = 3

    [params]
    sigma_x = 1.0
    m = 10

Commands: ``run <config>`` (flags --seed, --out, --set key=value, --jobs),
``list``, ``validate <config>``. Exit codes: 0 all verdicts pass, 1 a verdict
failed, 2 config error. Outputs per run: report.json, tables/*.csv,
plotdata/*.csv under <out>/<experiment id>/; the CHAINLAB_OUT environment
variable sets the default output root. Reports are byte-identical across
runs with the same (id, seed, overrides).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .errors import ChainlabError, InvalidOverride
from .experiments import CATALOG, list_experiments, run_experiment

DEFAULT_OUT = "chainlab-runs"


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


class ConfigReport:
    def __init__(self):
        self.errors: list = []
        self.warnings: list = []
        self.exp_id: str | None = None
        self.seed: int = 0
        self.overrides: dict = {}

    @property
    def ok(self) -> bool:
        return not self.errors


def load_config(path: str) -> ConfigReport:
    rep = ConfigReport()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        rep.errors.append(f"{path}: {exc}")
        return rep
    except configparser.Error as exc:
        rep.errors.append(f"{path}: {exc}")
        return rep
    for section in parser.sections():
        if section not in ("experiment", "params"):
            rep.errors.append(f"[{section}]: unknown section")
    if not parser.has_section("experiment"):
        rep.errors.append("[experiment]: section missing")
        return rep
    exp = dict(parser.items("experiment"))
    extra = set(exp) - {"id", "seed"}
    for key in sorted(extra):
        rep.errors.append(f"[experiment] {key}: unknown key")
    if "id" not in exp:
        rep.errors.append("[experiment] id: required")
        return rep
    rep.exp_id = exp["id"].strip()
    if rep.exp_id not in CATALOG:
        rep.errors.append(f"[experiment] id: unknown experiment {rep.exp_id!r}")
        return rep
    if "seed" in exp:
        try:
            seed = int(exp["seed"])
            if not (0 <= seed < 2**64):
                raise ValueError
            rep.seed = seed
        except ValueError:
            rep.errors.append(f"[experiment] seed: must be an unsigned 64-bit integer, got {exp['seed']!r}")
    else:
        rep.warnings.append("[experiment] seed: missing, defaulted to 0")
    if parser.has_section("params"):
        rep.overrides = dict(parser.items("params"))
    return rep


def _validate_overrides(rep: ConfigReport) -> None:
    if rep.exp_id is None or rep.exp_id not in CATALOG:
        return
    schema = CATALOG[rep.exp_id].schema
    for key, raw in sorted(rep.overrides.items()):
        if key not in schema:
            rep.errors.append(f"[params] {key}: unknown key for experiment {rep.exp_id!r}")
            continue
        try:
            schema[key].coerce(key, raw)
        except InvalidOverride as exc:
            rep.errors.append(f"[params] {exc}")


def cmd_list() -> int:
    for exp_id, description, operation in list_experiments():
        print(f"{exp_id:28s} {description} [{operation}]")
    return 0


def cmd_validate(path: str) -> int:
    rep = load_config(path)
    _validate_overrides(rep)
    for w in rep.warnings:
        print(f"warning: {w}")
    for e in rep.errors:
        print(f"error: {e}", file=sys.stderr)
    if rep.ok:
        print(f"{path}: valid (experiment {rep.exp_id}, seed {rep.seed})")
        return 0
    return 2


def cmd_run(path: str, seed: int | None, out: str | None, sets: list, jobs: int) -> int:
    rep = load_config(path)
    if rep.ok:
        for item in sets:
            if "=" not in item:
                rep.errors.append(f"--set {item!r}: expected key=value")
                continue
            key, _, value = item.partition("=")
            rep.overrides[key.strip()] = value.strip()
        _validate_overrides(rep)
    for w in rep.warnings:
        print(f"warning: {w}")
    if not rep.ok:
        for e in rep.errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    if seed is not None:
        rep.seed = seed
    out_root = Path(out or os.environ.get("CHAINLAB_OUT") or DEFAULT_OUT)
    target = out_root / rep.exp_id
    try:
        report, tables, plotdata = run_experiment(rep.exp_id, rep.seed, rep.overrides, jobs=jobs)
    except ChainlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_root.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{rep.exp_id}-", dir=out_root))
    try:
        with open(staging / "report.json", "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        if tables:
            (staging / "tables").mkdir()
            for name, (header, rows) in tables.items():
                write_csv(staging / "tables" / f"{name}.csv", header, rows)
        if plotdata:
            (staging / "plotdata").mkdir()
            for name, (header, rows) in plotdata.items():
                write_csv(staging / "plotdata" / f"{name}.csv", header, rows)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    staging.rename(target)
    for name, passed in report["verdicts"].items():
        print(f"{'PASS' if passed else 'FAIL'}  {rep.exp_id}.{name}")
    print(f"report: {target / 'report.json'}")
    return 0 if report["all_passed"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chainlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="show the experiment catalog")
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config")
    p_run = sub.add_parser("run", help="run an experiment from a config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output root (default $CHAINLAB_OUT or ./chainlab-runs)")
    p_run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a parameter (repeatable)")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for independent replicates (same results for any value)")
    args = parser.parse_args(argv)
    if args.command == "list":
        return cmd_list()
    if args.command == "validate":
        return cmd_validate(args.config)
    return cmd_run(args.config, args.seed, args.out, args.set, max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
