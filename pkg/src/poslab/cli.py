"""Command-line front end.

Subcommands: run, reproduce, list-scenarios, validate-config.
Exit codes: 0 ok, 1 reproduction failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

from .netsim import ConfigError, ScenarioConfig, load_config, run_scenario
from .scenarios import (REPRODUCTIONS, SCENARIOS, get_scenario,
                        run_reproduction, scenario_names)

EXIT_OK = 0
EXIT_REPRO_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_config(spec: str, seed_override: Optional[int]) -> ScenarioConfig:
    if os.path.exists(spec):
        config = load_config(spec)
    elif spec in SCENARIOS:
        config = get_scenario(spec)
    else:
        raise ConfigError("--config", "no such file or bundled scenario: %r" % spec)
    if seed_override is not None:
        config = dataclasses.replace(config, seed=seed_override)
    return config


def cmd_run(args) -> int:
    config = _resolve_config(args.config, args.seed)
    trace = run_scenario(config)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []

    events_path = os.path.join(out_dir, "events.jsonl")
    _atomic_write(events_path, trace.events_jsonl())
    artifacts.append(events_path)

    if args.format == "json":
        metrics_path = os.path.join(out_dir, "metrics.json")
        _atomic_write(metrics_path,
                      json.dumps(trace.metrics, sort_keys=True, indent=2) + "\n")
    else:
        metrics_path = os.path.join(out_dir, "metrics.csv")
        _atomic_write(metrics_path, trace.metrics_csv())
    artifacts.append(metrics_path)

    manifest = {
        "command": "run",
        "config": args.config,
        "scenario": config.name,
        "seed": config.seed,
        "out": out_dir,
        "artifacts": [os.path.basename(a) for a in artifacts],
        "trace_digest": trace.digest(),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    _atomic_write(manifest_path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print("scenario %s: digest %s" % (config.name, trace.digest()))
    for key in sorted(trace.metrics):
        print("  %s = %s" % (key, trace.metrics[key]))
    return EXIT_OK


def _run_one_repro(repro_id: str, seed: int):
    return run_reproduction(repro_id, seed)


def cmd_reproduce(args) -> int:
    ids = list(REPRODUCTIONS) if args.id == "all" else [args.id]
    for repro_id in ids:
        if repro_id not in REPRODUCTIONS:
            print("unknown reproduction id %r; known: %s"
                  % (repro_id, ", ".join(REPRODUCTIONS)), file=sys.stderr)
            return EXIT_CONFIG_ERROR
    seed = args.seed if args.seed is not None else 0
    if args.jobs > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one_repro, ids, [seed] * len(ids)))
    else:
        results = [run_reproduction(i, seed) for i in ids]

    rows = [r.row() for r in results]
    header = ["id", "expected", "computed", "tolerance", "verdict"]
    if args.format == "json":
        payload = [dict(zip(header, row)) for row in rows]
        text = json.dumps(payload, indent=2) + "\n"
    else:
        import io
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(rows)
        text = buf.getvalue()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "reproduce." + args.format)
        _atomic_write(path, text)
    print(text, end="")
    if all(r.passed for r in results):
        return EXIT_OK
    return EXIT_REPRO_FAILURE


def cmd_list_scenarios(args) -> int:
    for name in scenario_names():
        config = SCENARIOS[name]
        kind = config.attack["kind"] if config.attack else config.protocol
        print("%-28s %s" % (name, kind))
    print()
    print("reproduction ids: " + ", ".join(REPRODUCTIONS))
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        config = _resolve_config(args.config, args.seed)
    except ConfigError as exc:
        print("invalid config: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print("ok: scenario %r, protocol %s, seed %d"
          % (config.name, config.protocol, config.seed))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poslab",
        description="Proof-of-stake protocol simulator and attack calculator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario rng seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for batch work")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("--config", required=True,
                       help="config file path or bundled scenario name")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("reproduce", help="re-derive a quantitative result")
    p_rep.add_argument("id", help="reproduction id, or 'all'")
    common(p_rep)
    p_rep.set_defaults(func=cmd_reproduce)

    p_ls = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p_ls.set_defaults(func=cmd_list_scenarios)

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--seed", type=int, default=None)
    p_val.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except KeyError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
