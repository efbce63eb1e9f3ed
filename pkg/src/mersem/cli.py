"""
Command line harness.

Examples::

    mersem run --preset desk --seeds 5 --out results/desk
    mersem run --config baseline.json --set optimizer.ls_fraction=0.5
    mersem sweep --preset desk --grid optimizer.ls_fraction=0.1,0.3,0.5,0.7 --budget wallclock:2
    mersem baseline --preset desk --method greedy_sla
    mersem presets --write configs/

Exit status: 0 on success, 1 for configuration errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiment as ex
from .baselines import METHODS
from .infra import InfraError
from .workload import WorkloadError

logger = logging.getLogger("mersem")


def _common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="experiment config JSON")
    src.add_argument("--preset", help="bundled scenario preset (see `mersem presets`)")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    seeds.add_argument("--seed-list", help="comma-separated seeds, e.g. 1,5,9")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable), e.g. optimizer.ls_fraction=0.5")
    p.add_argument("--out", help="output directory (default: $MERSEM_OUT_DIR or ./results)")
    p.add_argument("--budget", help="generations:N or wallclock:SECONDS per epoch")
    p.add_argument("--workers", type=int, default=1, help="seeds run in parallel processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mersem", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run MERSEM on a scenario for each seed")
    _common(run)
    run.add_argument("--variant", choices=["sla", "carbon", "balanced", "all"], default="all")
    run.add_argument("--dump-qtable", action="store_true", help="write qtable_seed<N>.csv per seed")

    sweep = sub.add_parser("sweep", help="one-parameter sensitivity sweep reporting PHV")
    _common(sweep)
    sweep.add_argument("--grid", required=True, metavar="KEY=V1,V2,...")

    base = sub.add_parser("baseline", help="run a reference placement policy")
    _common(base)
    base.add_argument("--method", choices=METHODS, required=True)

    pre = sub.add_parser("presets", help="list bundled scenario presets")
    pre.add_argument("--write", metavar="DIR", help="write each preset as DIR/<name>.json")
    return parser


def _resolve(args) -> tuple[dict, Path, list[int], list[str]]:
    config, base_dir = ex.load_config(args.config, args.preset)
    for assignment in args.set:
        ex.apply_override(config, assignment)
    if args.budget:
        ex.apply_budget(config, args.budget)
    if args.seeds is not None:
        seeds = list(range(args.seeds))
    elif args.seed_list:
        try:
            seeds = [int(s) for s in args.seed_list.split(",") if s.strip()]
        except ValueError:
            raise ex.ConfigError(f"--seed-list must be comma-separated integers: {args.seed_list}") from None
    else:
        seeds = [int(s) for s in config["seeds"]]
    if not seeds:
        raise ex.ConfigError("no seeds to run")
    config["seeds"] = seeds
    return config, base_dir, seeds, list(args.set)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("MERSEM_OUT_DIR") or "results")


def cmd_run(args) -> None:
    config, base_dir, seeds, overrides = _resolve(args)
    variants = list(ex.VARIANTS) if args.variant == "all" else [args.variant]
    config["variants"] = variants
    ex.validate(config, base_dir, seeds)
    outputs = ex.run_seeds(config, base_dir, seeds, workers=args.workers)
    tables = ex.run_results(outputs, config, variants)
    header = ex.manifest(config, "run", seeds, {"overrides": overrides})
    out = _out_dir(args)
    ex.write_run_outputs(out, tables, header)
    if args.dump_qtable:
        for o in outputs:
            o.qtable.dump_csv(out / f"qtable_seed{o.seed}.csv")
    print(f"wrote results for {len(seeds)} seed(s) to {out}")


def cmd_baseline(args) -> None:
    config, base_dir, seeds, overrides = _resolve(args)
    config["baselines"] = [args.method]
    ex.validate(config, base_dir, seeds)
    outputs = ex.run_seeds(config, base_dir, seeds, workers=args.workers, mersem=False,
                           baselines=[args.method])
    tables = ex.run_results(outputs, config, [])
    header = ex.manifest(config, f"baseline:{args.method}", seeds, {"overrides": overrides})
    out = _out_dir(args)
    ex.write_run_outputs(out, tables, header)
    print(f"wrote {args.method} results for {len(seeds)} seed(s) to {out}")


def cmd_sweep(args) -> None:
    config, base_dir, seeds, overrides = _resolve(args)
    key, sep, values = args.grid.partition("=")
    key = key.strip()
    grid = [ex._parse_value(v.strip()) for v in values.split(",") if v.strip()] if sep else []
    if not key or not grid:
        raise ex.UnknownParameter(f"--grid needs a parameter name and at least one value, got '{args.grid}'")
    ex.set_path(config, key, grid[0])  # validates the name
    ex.validate(config, base_dir, seeds)
    grid_outputs = {}
    for value in grid:
        cfg = json.loads(json.dumps(config))
        ex.set_path(cfg, key, value)
        grid_outputs[json.dumps(value)] = (value, ex.run_seeds(cfg, base_dir, seeds, workers=args.workers,
                                                               baselines=[]))
    rows, per_run = ex.sweep_table(grid_outputs, key, config["metrics"]["ref_point"])
    header = ex.manifest(config, "sweep", seeds, {"grid": {key: grid}, "overrides": overrides})
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_csv(out / "sweep_phv.csv", header, ex.SWEEP_COLUMNS, rows)
    ex.write_csv(out / "sweep_runs.csv", header, ["parameter", "value", "seed", "epoch", "phv"], per_run)
    print(f"wrote sweep over {key} ({len(grid)} values x {len(seeds)} seeds) to {out}")


def cmd_presets(args) -> None:
    presets = ex.scenario_presets()
    if args.write:
        d = Path(args.write)
        d.mkdir(parents=True, exist_ok=True)
        for name, cfg in presets.items():
            (d / f"{name}.json").write_text(json.dumps(cfg, indent=2) + "\n")
    for name in presets:
        print(name)


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "baseline": cmd_baseline, "presets": cmd_presets}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ex.ConfigError, InfraError, WorkloadError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error ({type(err).__module__}): {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
