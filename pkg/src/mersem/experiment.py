"""
Experiment configuration, scenario presets and the seeded run/sweep/baseline
drivers behind the command line. Every output is a tidy CSV whose first line
is a ``#``-prefixed JSON manifest.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__, metrics
from .baselines import METHODS, run_baseline
from .infra import (build_topology, default_topology_config, desk_topology_config,
                    make_topology_config, Topology)
from .optimizer import MersemParams, run_epoch, _rng
from .rlsearch import EpsilonSchedule, QTable
from .simkernel import EpochProblem
from .workload import JobClass, DEFAULT_JOB_CLASSES, WorkloadTrace, generate_synthetic, load_workload

VARIANTS = ("sla", "carbon", "balanced")


class ConfigError(ValueError):
    pass


class UnknownParameter(ConfigError):
    pass


DEFAULT_EXPERIMENT: dict[str, Any] = {
    "scenario": "custom",
    "topology": {"preset": "default"},
    "workload": {"profile": "mixed", "jobs_per_epoch": 500, "epochs": 3, "seed": None,
                 "file": None, "classes": {}},
    "optimizer": {
        "population": 20, "generations": 30, "wallclock_s": None, "ls_fraction": 0.3,
        "genetic_rate": 1.0, "offspring": None, "mutation_rate": None,
        "search": {"alpha": 0.15, "gamma": 0.9, "epsilon0": 0.4, "epsilon_decay": 0.95,
                   "epsilon_floor": 0.05, "episodes": 10, "steps_per_episode": 1,
                   "global_decay": False, "jobs_scale": 1100},
    },
    "metrics": {"ref_point": [1.01, 1.01]},
    "seeds": [0],
    "variants": list(VARIANTS),
    "baselines": [],
}


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k != "classes":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _preset(scenario: str, topology: Mapping, jobs: int, profile: str = "mixed", **extra) -> dict:
    cfg = {"scenario": scenario, "topology": dict(topology),
           "workload": {"profile": profile, "jobs_per_epoch": jobs, "epochs": 3}}
    return _merge(cfg, extra)


def scenario_presets() -> dict[str, dict]:
    """Bundled scenarios: desk-scale acceptance setup and the full-scale experiment families."""
    presets = {
        "desk": _preset("desk", {"preset": "desk"}, 100, seeds=list(range(10)), baselines=["random"]),
        "baseline_500jobs": _preset("baseline_500jobs", {"preset": "default"}, 500,
                                    baselines=["random", "greedy_sla", "greedy_carbon"]),
    }
    for n in range(100, 1101, 200):
        presets[f"scale_jobs_{n}"] = _preset(f"scale_jobs_{n}", {"preset": "default"}, n)
    for n_edge, n_fog in [(300, 2), (500, 4), (700, 6), (900, 8)]:
        name = f"scale_infra_{n_edge}ed{n_fog}fdc"
        presets[name] = _preset(name, {"generate": {"n_edge": n_edge, "n_fog": n_fog}}, 500)
    for prof in ("small", "large", "mixed"):
        presets[f"gnn_{prof}"] = _preset(f"gnn_{prof}", {"preset": "default"}, 500, profile=prof)
    return presets


def load_config(path: str | Path | None = None, preset: str | None = None) -> tuple[dict, Path]:
    """Resolve a config file or preset name against the defaults. Returns (config, base directory)."""
    if preset is not None:
        presets = scenario_presets()
        if preset not in presets:
            raise ConfigError(f"unknown preset '{preset}' (known: {', '.join(sorted(presets))})")
        return _merge(DEFAULT_EXPERIMENT, presets[preset]), Path.cwd()
    if path is None:
        raise ConfigError("either --config or --preset is required")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        user = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{p}: invalid JSON ({err})") from err
    if "preset" in user:
        base = _merge(DEFAULT_EXPERIMENT, load_config(preset=user.pop("preset"))[0])
    else:
        base = DEFAULT_EXPERIMENT
    return _merge(base, user), p.resolve().parent


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> dict:
    """Apply ``dotted.key=value``; the key must already exist in the resolved config."""
    if "=" not in assignment:
        raise ConfigError(f"override '{assignment}' must look like key=value")
    key, value = assignment.split("=", 1)
    set_path(config, key.strip(), _parse_value(value.strip()))
    return config


def _alias(key: str) -> str:
    # the ls_fraction etc. shorthands live in optimizer.search
    head, _, tail = key.partition(".")
    if head == "optimizer" and tail in DEFAULT_EXPERIMENT["optimizer"]["search"]:
        return f"optimizer.search.{tail}"
    return key


def set_path(config: dict, key: str, value: Any) -> None:
    parts = _alias(key).split(".")
    node = config
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise UnknownParameter(f"unknown parameter '{key}'")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise UnknownParameter(f"unknown parameter '{key}'")
    node[parts[-1]] = value


def apply_budget(config: dict, budget: str) -> None:
    kind, _, amount = budget.partition(":")
    try:
        if kind == "generations":
            config["optimizer"]["generations"] = int(amount)
            config["optimizer"]["wallclock_s"] = None
        elif kind == "wallclock":
            config["optimizer"]["wallclock_s"] = float(amount)
        else:
            raise ValueError
    except ValueError:
        raise ConfigError(f"--budget must be generations:N or wallclock:SECONDS, got '{budget}'") from None


# ---------------------------------------------------------------------------


def build_scenario_topology(config: Mapping, base_dir: Path) -> Topology:
    topo_cfg = config["topology"]
    if isinstance(topo_cfg, str):
        path = (base_dir / topo_cfg) if not os.path.isabs(topo_cfg) else Path(topo_cfg)
        if not path.is_file():
            raise ConfigError(f"topology file not found: {path}")
        try:
            return build_topology(json.loads(path.read_text()))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from err
    if "datacenters" in topo_cfg:
        return build_topology(topo_cfg)
    if "generate" in topo_cfg:
        return build_topology(make_topology_config(**topo_cfg["generate"]))
    preset = topo_cfg.get("preset", "default")
    if preset == "default":
        return build_topology(default_topology_config())
    if preset == "desk":
        return build_topology(desk_topology_config())
    raise ConfigError(f"topology: unknown preset '{preset}'")


def build_workload(config: Mapping, topology: Topology, base_dir: Path, seed: int) -> WorkloadTrace:
    wl = config["workload"]
    if wl.get("file"):
        path = base_dir / wl["file"]
        if not path.is_file():
            raise ConfigError(f"workload file not found: {path}")
        return load_workload(path)
    classes = dict(DEFAULT_JOB_CLASSES)
    for name, d in (wl.get("classes") or {}).items():
        base = {k: v for k, v in vars(classes[name]).items() if k != "name"} if name in classes else {}
        classes[name] = JobClass.from_dict(name, {**base, **d})
    wseed = wl["seed"] if wl.get("seed") is not None else seed
    return generate_synthetic(wl["profile"], int(wl["jobs_per_epoch"]), int(wl["epochs"]), wseed,
                              origin_devices=topology.edge_nodes, job_classes=classes)


def optimizer_params(config: Mapping) -> MersemParams:
    d = dict(config["optimizer"])
    d["ref_point"] = tuple(config["metrics"]["ref_point"])
    return MersemParams.from_dict(d)


def validate(config: Mapping, base_dir: Path, seeds: Sequence[int]) -> None:
    """Build everything a run needs once, turning any failure into a ConfigError naming the section."""
    for section, check in [
        ("topology", lambda: build_scenario_topology(config, base_dir)),
        ("workload", lambda: build_workload(config, build_scenario_topology(config, base_dir), base_dir, seeds[0])),
        ("optimizer", lambda: optimizer_params(config)),
    ]:
        try:
            check()
        except ConfigError:
            raise
        except Exception as err:
            raise ConfigError(f"{section}: {err}") from err
    for b in config.get("baselines", []):
        if b not in METHODS:
            raise ConfigError(f"baselines: unknown method '{b}' (choose from {', '.join(METHODS)})")
    bad = [v for v in config.get("variants", []) if v not in VARIANTS]
    if bad:
        raise ConfigError(f"variants: unknown {bad}")


@dataclass
class SeedOutput:
    seed: int
    # (epoch, variant) -> objectives dict
    rows: list[dict]
    # (epoch, tag, sla, co2)
    archive: list[tuple[int, str, float, float]]
    qtable: QTable | None


def _row(seed, epoch, variant, outcome, n_jobs) -> dict:
    return {
        "seed": seed, "epoch": epoch, "variant": variant,
        "sla_rate": outcome.sla_rate, "co2_g": outcome.co2_total_g,
        "co2_edge_g": outcome.co2_by_layer["edge"], "co2_fog_g": outcome.co2_by_layer["fog"],
        "co2_cloud_g": outcome.co2_by_layer["cloud"], "n_jobs": n_jobs,
    }


def run_seed(config: Mapping, base_dir: Path, seed: int, mersem: bool = True,
             baselines: Sequence[str] | None = None) -> SeedOutput:
    """Run MERSEM (optional) and the requested baselines on every epoch for one seed."""
    topology = build_scenario_topology(config, base_dir)
    trace = build_workload(config, topology, base_dir, seed)
    params = optimizer_params(config)
    baselines = list(config.get("baselines", [])) if baselines is None else list(baselines)
    for b in baselines:
        if b not in METHODS:
            raise ConfigError(f"unknown baseline '{b}' (choose from {', '.join(METHODS)})")
    q = QTable()
    eps = EpsilonSchedule(params.search) if params.search.global_decay else None
    rows, archive = [], []
    for e in sorted(trace.epochs):
        jobs = trace.jobs(e)
        if not jobs:
            continue
        problem = EpochProblem(jobs, topology, e)
        if mersem:
            res = run_epoch(problem, params, seed, q, eps)
            for o in sorted(res.archive.points):
                archive.append((e, "archive", o.sla_rate, o.co2_g))
            for v in VARIANTS:
                sol = res.solutions[v]
                archive.append((e, v, sol.objectives.sla_rate, sol.objectives.co2_g))
                rows.append(_row(seed, e, v, sol.outcome, problem.n_jobs))
        for b in baselines:
            genes = run_baseline(problem, b, _rng(seed, e, 7919))
            out = problem.evaluate(genes)
            archive.append((e, b, out.sla_rate, out.co2_total_g))
            rows.append(_row(seed, e, b, out, problem.n_jobs))
    return SeedOutput(seed, rows, archive, q if mersem else None)


def run_seeds(config: Mapping, base_dir: Path, seeds: Sequence[int], workers: int = 1,
              **kw) -> list[SeedOutput]:
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_seed, config, base_dir, s, **kw) for s in seeds]
            outs = [f.result() for f in futures]
    else:
        outs = [run_seed(config, base_dir, s, **kw) for s in seeds]
    return sorted(outs, key=lambda o: o.seed)


# ---------------------------------------------------------------------------
# PHV and reports


def phv_table(outputs: Sequence[SeedOutput], ref: Sequence[float], tags: Sequence[str] = ("archive",),
              group_key=lambda o: o.seed) -> dict[tuple, float]:
    """PHV per (group, epoch) after min-max normalizing each epoch over every compared point set."""
    by_epoch: dict[int, list[tuple[float, float]]] = {}
    for o in outputs:
        for e, tag, s, c in o.archive:
            if tag in tags:
                by_epoch.setdefault(e, []).append((s, c))
    bounds = {}
    for e, pts in by_epoch.items():
        arr = np.array(pts)
        bounds[e] = (arr.min(axis=0), arr.max(axis=0))
    out = {}
    for o in outputs:
        per_epoch: dict[int, list] = {}
        for e, tag, s, c in o.archive:
            if tag in tags:
                per_epoch.setdefault(e, []).append((s, c))
        for e, pts in per_epoch.items():
            lo, hi = bounds[e]
            out[(group_key(o), e)] = metrics.hypervolume(metrics.normalize_points(pts, lo, hi), ref)
    return out


def manifest(config: Mapping, command: str, seeds: Sequence[int], extra: Mapping | None = None) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    m = {"command": command, "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
         "seeds": list(seeds), "version": __version__}
    if extra:
        m.update(extra)
    return "# manifest: " + json.dumps(m, sort_keys=True)


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header_line: str, columns: Sequence[str], rows: Sequence[Mapping]) -> None:
    buf = io.StringIO()
    buf.write(header_line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(path)


RESULT_COLUMNS = ["seed", "epoch", "variant", "sla_rate", "co2_g", "co2_edge_g", "co2_fog_g", "co2_cloud_g", "n_jobs"]
ARCHIVE_COLUMNS = ["seed", "epoch", "sla_rate", "co2_g", "tag"]
PHV_COLUMNS = ["seed", "epoch", "phv"]
SWEEP_COLUMNS = ["parameter", "value", "n_runs", "phv_mean", "phv_ci", "ci_defined"]


def run_results(outputs: Sequence[SeedOutput], config: Mapping, variants: Sequence[str]) -> dict[str, Any]:
    """Tables for results.csv, archive.csv, phv.csv and summary.csv."""
    ref = config["metrics"]["ref_point"]
    keep = set(variants) | set(config.get("baselines", [])) | set(METHODS)
    results = [r for o in outputs for r in o.rows if r["variant"] in keep]
    archive = [{"seed": o.seed, "epoch": e, "sla_rate": s, "co2_g": c, "tag": t}
               for o in outputs for (e, t, s, c) in o.archive if t in keep or t == "archive"]
    has_archive = any(t == "archive" for o in outputs for (_, t, _, _) in o.archive)
    tags = ("archive",) if has_archive else tuple(sorted({t for o in outputs for (_, t, _, _) in o.archive}))
    phv = phv_table(outputs, ref, tags)
    phv_rows = [{"seed": s, "epoch": e, "phv": v} for (s, e), v in sorted(phv.items())]

    final_epoch = {o.seed: max((r["epoch"] for r in o.rows), default=0) for o in outputs}
    runs = []
    scenario = config["scenario"]
    by_seed_variant: dict[tuple[int, str], list[dict]] = {}
    for r in results:
        by_seed_variant.setdefault((r["seed"], r["variant"]), []).append(r)
    for (seed, variant), rs in sorted(by_seed_variant.items()):
        runs.append(metrics.RunResult(
            scenario=scenario, variant=variant, seed=seed,
            sla_rate=float(np.mean([r["sla_rate"] for r in rs])),
            co2_g=float(np.mean([r["co2_g"] for r in rs])),
            co2_by_layer={layer: float(np.mean([r[f"co2_{layer}_g"] for r in rs])) for layer in ("edge", "fog", "cloud")},
            phv=phv.get((seed, final_epoch[seed]), math.nan),
        ))
    return {"results": results, "archive": archive, "phv": phv_rows,
            "summary": metrics.aggregate_runs(runs) if runs else [], "runs": runs}


def write_run_outputs(out_dir: Path, tables: Mapping[str, Any], header: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "results.csv", header, RESULT_COLUMNS, tables["results"])
    write_csv(out_dir / "archive.csv", header, ARCHIVE_COLUMNS, tables["archive"])
    write_csv(out_dir / "phv.csv", header, PHV_COLUMNS, tables["phv"])
    write_csv(out_dir / "summary.csv", header, metrics.SUMMARY_COLUMNS, tables["summary"])


@dataclass
class _GridRun:
    key: str
    value: Any
    seed: int
    archive: list


def sweep_table(grid_outputs: Mapping[str, tuple[Any, Sequence[SeedOutput]]], parameter: str,
                ref) -> tuple[list[dict], list[dict]]:
    """Mean final-epoch PHV and 95% CI per grid value.

    ``grid_outputs`` maps a value key to (value, seed outputs). Each epoch is
    normalized over the archives of every grid value together.
    """
    runs = [_GridRun(key, value, o.seed, o.archive)
            for key, (value, outs) in grid_outputs.items() for o in outs]
    phv = phv_table(runs, ref, ("archive",), group_key=lambda r: (r.key, r.seed))
    rows, per_run = [], []
    for key, (value, outs) in grid_outputs.items():
        samples = []
        for o in outs:
            last = max(e for (e, _, _, _) in o.archive)
            v = phv[((key, o.seed), last)]
            samples.append(v)
            per_run.append({"parameter": parameter, "value": value, "seed": o.seed, "epoch": last, "phv": v})
        if len(samples) >= 2:
            mean, ci = metrics.confidence_interval(samples)
            defined = 1
        else:
            mean, ci, defined = samples[0], 0.0, 0
        rows.append({"parameter": parameter, "value": value, "n_runs": len(samples),
                     "phv_mean": mean, "phv_ci": ci, "ci_defined": defined})
    return rows, per_run
