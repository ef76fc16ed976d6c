"""Seeded sweeps over modes and device counts."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from ..config import Mode, ScenarioConfig
from ..engine import RunMetrics, simulate
from ..engine.metrics import METRIC_NAMES
from .audit import audit_log
from .scenarios import build_scenario


class SweepError(RuntimeError):
    def __init__(self, message: str, partial: "SweepTable"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class RunKey:
    series: str
    device_count: int
    seed: int


@dataclass
class RunResult:
    key: RunKey
    metrics: RunMetrics
    log_digest: str
    audit: dict


@dataclass
class SweepTable:
    runs: list[RunResult] = field(default_factory=list)
    configs: dict[str, dict] = field(default_factory=dict)

    def series(self) -> list[str]:
        return sorted({r.key.series for r in self.runs})

    def counts(self) -> list[int]:
        return sorted({r.key.device_count for r in self.runs})

    def values(self, series: str, count: int, metric: str) -> list[float]:
        return [r.metrics.value(metric) for r in self.runs
                if r.key.series == series and r.key.device_count == count]

    def aggregate(self, series: str, count: int, metric: str) -> tuple[float, float]:
        """Mean and population standard deviation over seeds (0 for one seed)."""
        vals = self.values(series, count, metric)
        if not vals:
            raise KeyError((series, count, metric))
        return statistics.fmean(vals), statistics.pstdev(vals)

    def rows(self, metrics: Sequence[str] = METRIC_NAMES) -> list[dict]:
        out = []
        for s in self.series():
            for n in self.counts():
                if not self.values(s, n, "join_ratio"):
                    continue
                row = {"series": s, "device_count": n}
                for m in metrics:
                    row[m] = self.aggregate(s, n, m)
                out.append(row)
        return out


def series_name(mode: Mode, altruist: bool, tag_selfish: bool) -> str:
    if tag_selfish:
        return f"{mode.value}/{'altruist' if altruist else 'selfish'}"
    return mode.value


def _one(job) -> RunResult:
    key, cfg = job
    metrics, log = simulate(cfg, key.seed)
    return RunResult(key, metrics, log.digest(), audit_log(log, cfg))


def run_sweep(modes: Iterable[Mode | str], device_counts: Iterable[int], repeats: int = 3,
              seeds: Sequence[int] | None = None, *, altruist: Sequence[bool] = (True,),
              builder: Callable[..., ScenarioConfig] = build_scenario, workers: int = 1,
              **scenario_kw) -> SweepTable:
    """Run every (mode, altruist flag, count, seed) combination.

    ``seeds`` defaults to ``1..repeats``. The altruist flag only matters for
    the federation; a sweep over both flags yields two federation series.
    """
    seeds = list(seeds) if seeds is not None else list(range(1, repeats + 1))
    seeds = seeds[:repeats]
    tag = len(set(altruist)) > 1
    jobs = []
    table = SweepTable()
    for mode in map(Mode, modes):
        flags = altruist if mode is Mode.FEDERATION else altruist[:1]
        for alt in flags:
            name = series_name(mode, alt, tag and mode is Mode.FEDERATION)
            for n in device_counts:
                for seed in seeds:
                    cfg = builder(mode, n, seed, altruist=alt, **scenario_kw)
                    table.configs.setdefault(f"{name}/{n}", cfg.to_dict())
                    jobs.append((RunKey(name, n, seed), cfg))
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                for res in pool.map(_one, jobs):
                    table.runs.append(res)
        else:
            for job in jobs:
                table.runs.append(_one(job))
    except Exception as exc:
        raise SweepError(f"sweep aborted after {len(table.runs)} runs: {exc}", table) from exc
    return table
