"""Parameter sweeps over the simulator and the CSV reports they produce."""
from __future__ import annotations

import csv
import itertools
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import ScenarioConfig
from .core import CacheContents, ChunkId, PopularityLevel, assign_colors
from .engine import InvariantViolation, SimConfig, run

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("slice", "mode", "lambda", "cs_size", "policy", "seed", "throughput", "delay_pkt",
                  "delay_req", "hit_ratio_interest", "hit_ratio_chunk", "tx_coded", "tx_uncoded")
SUMMARY_METRICS = ("throughput", "delay_pkt", "delay_req", "hit_ratio_interest", "hit_ratio_chunk",
                   "tx_coded", "tx_uncoded", "tx_total", "completed", "requests")
SUMMARY_COLUMNS = (("mode", "lambda", "cs_size", "policy", "seed") + SUMMARY_METRICS
                   + tuple(f"{m}_std" for m in SUMMARY_METRICS))
GAIN_COLUMNS = ("scenario", "lambda", "cs_size", "policy",
                "baseline_throughput", "coded_throughput", "throughput_gain",
                "baseline_delay_pkt", "coded_delay_pkt", "baseline_delay_req", "coded_delay_req",
                "baseline_hit_ratio", "coded_hit_ratio", "hit_ratio_gain",
                "baseline_server_tx", "coded_server_tx", "coding_gain",
                "baseline_link_tx", "coded_link_tx", "tx_gain")


@dataclass(frozen=True)
class Point:
    mode: str
    lam: str
    cs_size: int
    policy: str
    seed: int


@dataclass
class RunResult:
    point: Point
    summary: dict
    rows: list[dict]


@dataclass
class ResultSet:
    scenario: str
    runs: list[RunResult] = field(default_factory=list)


def lambda_label(lam) -> str:
    if isinstance(lam, (int, float)):
        return format(float(lam), "g")
    return "/".join(format(float(x), "g") for x in lam)


# -- the two-user examples on fixed cache contents ------------------------------

def figure_caches(K: int = 4, files: int = 4, chunks: int = 12) -> CacheContents:
    """Cache 0 and 2 (first color) hold chunks {1,2,4,5} of every file,
    caches 1 and 3 hold {8,9,10,11}."""
    colors, _ = assign_colors(K, 2)
    picks = {0: (1, 2, 4, 5), 1: (8, 9, 10, 11)}
    stored = tuple(frozenset(ChunkId(f, j) for f in range(files) for j in picks[c]) for c in colors)
    return CacheContents(tuple(colors), stored)


def micro_config(scenario: str, mode: str, cs_size: int = 150, policy: str = "priority-lru",
                 seed: int = 1) -> SimConfig:
    """Two users, two 12-chunk files: one user per orange and green cache
    (``fig2a``, degree 1) or one per pair of caches (``fig2b``, degree 2)."""
    levels = [PopularityLevel(1, 2, 1, 1), PopularityLevel(2, 2, 1, 2)]
    # minimal profile: server 0, router 1, caches 2..5, sinks 6..9
    if scenario == "fig2a":
        script = ((0, 6, 1, 0), (0, 9, 1, 1))
    elif scenario == "fig2b":
        script = ((0, 6, 2, 2), (0, 8, 2, 3))
    else:
        raise ValueError(f"unknown micro-scenario {scenario!r}")
    return SimConfig(mode=mode, levels=levels, lambdas=(0.0, 0.0), cache_memory=0, cs_capacity=cs_size,
                     chunks=12, policy=policy, slices=1, cooldown=20, drain=True, seed=seed,
                     profile="minimal", K=4, node_count=10, placement=figure_caches(), script=script)


# -- sweeps -----------------------------------------------------------------

def sim_config(cfg: ScenarioConfig, mode: str, lam, cs_size: int, policy: str, seed: int) -> SimConfig:
    topo = cfg.topology
    return SimConfig(mode=mode, levels=cfg.popularity_levels(), lambdas=cfg.lambda_vector(lam),
                     cache_memory=cfg.memory, cs_capacity=cs_size, chunks=cfg.chunks, policy=policy,
                     slices=cfg.slices, cooldown=cfg.cooldown, wait_slices=cfg.wait_slices,
                     recode=cfg.recode, payload_bytes=cfg.chunk_bytes, seed=seed,
                     profile=topo["profile"], K=topo["K"], node_count=topo["node_count"],
                     link_capacity=topo["link_capacity"], overrides=list(topo.get("overrides") or []),
                     edges=topo.get("edges"), kinds=topo.get("kinds"))


def plan(cfg: ScenarioConfig) -> list[tuple[Point, SimConfig]]:
    jobs = []
    if cfg.scenario in ("fig2a", "fig2b"):
        for mode, cs, policy, seed in itertools.product(cfg.modes, cfg.cs_sizes, cfg.policies, cfg.seeds):
            jobs.append((Point(mode, "script", cs, policy, seed),
                         micro_config(cfg.scenario, mode, cs, policy, seed)))
        return jobs
    for lam, cs, policy, mode, seed in itertools.product(cfg.lambdas, cfg.cs_sizes, cfg.policies,
                                                         cfg.modes, cfg.seeds):
        jobs.append((Point(mode, lambda_label(lam), cs, policy, seed),
                     sim_config(cfg, mode, lam, cs, policy, seed)))
    return jobs


def _slice_rows(ledger) -> list[dict]:
    out = []
    hits = interests = chunk_hits = 0
    for r in ledger.rows[:ledger.window]:
        interests += r["interests"]
        hits += r["interest_hits"]
        chunk_hits += r["chunk_hits"]
        out.append({
            "slice": r["slice"],
            "throughput": r["delivered"],
            "delay_pkt": statistics.fmean(r["pkt_delays"]) if r["pkt_delays"] else math.nan,
            "delay_req": statistics.fmean(r["req_delays"]) if r["req_delays"] else math.nan,
            "hit_ratio_interest": hits / interests if interests else 0.0,
            "hit_ratio_chunk": chunk_hits / (interests * ledger.chunks) if interests else 0.0,
            "tx_coded": r["tx_coded"],
            "tx_uncoded": r["tx_uncoded"],
        })
    return out


def execute(job: tuple[Point, SimConfig]) -> RunResult:
    point, sim = job
    ledger = run(sim)
    if ledger.violations:
        raise InvariantViolation(f"{point}: {dict(ledger.violations)}")
    return RunResult(point, ledger.summary(), _slice_rows(ledger))


def run_experiment(cfg: ScenarioConfig, workers: int | None = None) -> ResultSet:
    """Run every (point x seed) of ``cfg``; results come back in plan order."""
    jobs = plan(cfg)
    workers = workers or cfg.workers
    log.info("running %d simulations on %d worker(s)", len(jobs), workers)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(execute, jobs))
    else:
        runs = [execute(j) for j in jobs]
    return ResultSet(cfg.scenario, runs)


# -- reports -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(round(x, 9))
    return str(x)


def _mean(xs):
    xs = [x for x in xs if not (isinstance(x, float) and math.isnan(x))]
    return statistics.fmean(xs) if xs else math.nan


def _std(xs):
    xs = [x for x in xs if not (isinstance(x, float) and math.isnan(x))]
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def aggregate(results: ResultSet) -> dict[tuple, dict]:
    """Mean and standard deviation over seeds, per (mode, lambda, cs, policy)."""
    groups: dict[tuple, list[RunResult]] = {}
    for r in results.runs:
        p = r.point
        groups.setdefault((p.mode, p.lam, p.cs_size, p.policy), []).append(r)
    out = {}
    for key, runs in groups.items():
        agg = {}
        for m in SUMMARY_METRICS:
            vals = [r.summary[m] for r in runs]
            agg[m] = _mean(vals)
            agg[f"{m}_std"] = _std(vals)
        out[key] = agg
    return out


def _ratio(a, b) -> float:
    if b == 0 or math.isnan(a) or math.isnan(b):
        return math.nan
    return a / b


def gain_rows(results: ResultSet) -> list[dict]:
    agg = aggregate(results)
    rows = []
    for (mode, lam, cs, policy), coded in agg.items():
        if mode != "coded" or ("baseline", lam, cs, policy) not in agg:
            continue
        base = agg[("baseline", lam, cs, policy)]
        b_srv = base["tx_coded"] + base["tx_uncoded"]
        c_srv = coded["tx_coded"] + coded["tx_uncoded"]
        rows.append({
            "scenario": results.scenario, "lambda": lam, "cs_size": cs, "policy": policy,
            "baseline_throughput": base["throughput"], "coded_throughput": coded["throughput"],
            "throughput_gain": _ratio(coded["throughput"], base["throughput"]),
            "baseline_delay_pkt": base["delay_pkt"], "coded_delay_pkt": coded["delay_pkt"],
            "baseline_delay_req": base["delay_req"], "coded_delay_req": coded["delay_req"],
            "baseline_hit_ratio": base["hit_ratio_interest"], "coded_hit_ratio": coded["hit_ratio_interest"],
            "hit_ratio_gain": _ratio(coded["hit_ratio_interest"], base["hit_ratio_interest"]),
            "baseline_server_tx": b_srv, "coded_server_tx": c_srv, "coding_gain": _ratio(b_srv, c_srv),
            "baseline_link_tx": base["tx_total"], "coded_link_tx": coded["tx_total"],
            "tx_gain": _ratio(base["tx_total"], coded["tx_total"]),
        })
    return rows


def _write(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def emit_reports(results: ResultSet, out_dir: str | Path) -> dict[str, Path]:
    """Write metrics.csv, summary.csv and gains.csv into ``out_dir``."""
    if not results.runs:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("metrics", "summary", "gains")}

    metric_rows = []
    for r in results.runs:
        p = r.point
        for row in r.rows:
            metric_rows.append({"mode": p.mode, "lambda": p.lam, "cs_size": p.cs_size,
                                "policy": p.policy, "seed": p.seed, **row})
    _write(paths["metrics"], METRIC_COLUMNS, metric_rows)

    summary_rows = []
    blank = {f"{m}_std": "" for m in SUMMARY_METRICS}
    for r in results.runs:
        p = r.point
        summary_rows.append({"mode": p.mode, "lambda": p.lam, "cs_size": p.cs_size, "policy": p.policy,
                             "seed": p.seed, **{m: r.summary[m] for m in SUMMARY_METRICS}, **blank})
    for (mode, lam, cs, policy), agg in aggregate(results).items():
        summary_rows.append({"mode": mode, "lambda": lam, "cs_size": cs, "policy": policy,
                             "seed": "all", **agg})
    _write(paths["summary"], SUMMARY_COLUMNS, summary_rows)

    _write(paths["gains"], GAIN_COLUMNS, gain_rows(results))
    return paths
