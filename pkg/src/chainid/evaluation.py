"""Benchmark trials on certified instances and their summary tables.

A sweep runs ``n_trials`` trials for every size in ``d_list``. Trial ``i``
(counted across the whole sweep) uses seed ``base_seed ^ i`` and is fully
determined by it. Timings are kept out of the deterministic outputs and go to
a separate sidecar file.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ChainIdError
from .graph import ChainGraph, is_topological, shd
from .learning import (
    DEFAULT_ALPHA,
    LearnResult,
    empirical_covariance,
    learn_order_known,
    learn_unknown,
    recover_edges,
)
from .sem import (
    generate_certified_known_instance,
    generate_certified_unknown_instance,
    make_rng,
    population_covariance,
    sample,
    split_seed,
)

__all__ = [
    "BenchmarkConfig",
    "TrialReport",
    "run_trial",
    "run_trials",
    "aggregate",
    "format_table",
    "summary_json",
    "summary_csv",
    "reports_jsonl",
    "write_outputs",
    "SUMMARY_COLUMNS",
]

SUMMARY_COLUMNS = [
    "d",
    "mode",
    "algorithm",
    "mean_shd",
    "sd_shd",
    "order_rate",
    "partition_rate",
    "mean_seconds",
    "n_trials",
    "n_failures",
]
# columns of the deterministic summary; mean_seconds lives in the timing sidecar
DETERMINISTIC_COLUMNS = [c for c in SUMMARY_COLUMNS if c != "mean_seconds"]


@dataclass(frozen=True)
class BenchmarkConfig:
    d_list: tuple[int, ...] = (10, 20, 30, 40, 50)
    n_samples: int = 1000
    n_trials: int = 20
    base_seed: int = 0
    mode: str = "population"
    algorithm: str = "known"
    stat: str = "determinant"
    margin: float = 0.2
    component_size: int = 2
    expected_neighbors: float = 2.0
    sfm_method: str = "auto"
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        object.__setattr__(self, "d_list", tuple(int(d) for d in self.d_list))
        if not self.d_list or any(d < 1 for d in self.d_list):
            raise ValueError("d_list must hold positive sizes")
        if list(self.d_list) != sorted(self.d_list):
            raise ValueError("d_list must be sorted ascending")
        if self.n_samples < 1 or self.n_trials < 1 or self.component_size < 1:
            raise ValueError("n_samples, n_trials and component_size must be positive")
        if self.mode not in ("population", "empirical"):
            raise ValueError(f"mode must be population or empirical, got {self.mode!r}")
        if self.algorithm not in ("known", "unknown"):
            raise ValueError(f"algorithm must be known or unknown, got {self.algorithm!r}")
        if self.margin <= 0:
            raise ValueError("margin must be positive")

    @property
    def total_trials(self) -> int:
        return len(self.d_list) * self.n_trials

    def to_dict(self) -> dict:
        out = asdict(self)
        out["d_list"] = list(self.d_list)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrialReport:
    index: int
    d: int
    seed: int
    mode: str
    algorithm: str
    shd: int | None = None
    order_correct: bool = False
    partition_correct: bool = False
    wall_time: float = 0.0
    error: str | None = None
    true_graph: ChainGraph | None = None
    learned: LearnResult | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "index": self.index,
            "d": self.d,
            "seed": self.seed,
            "mode": self.mode,
            "algorithm": self.algorithm,
            "shd": self.shd,
            "order_correct": self.order_correct,
            "partition_correct": self.partition_correct,
            "error": self.error,
            "true_graph": self.true_graph.to_dict() if self.true_graph is not None else None,
            "learned": self.learned.to_dict() if self.learned is not None else None,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


def _n_components(config: BenchmarkConfig, d: int) -> int:
    return max(1, d // config.component_size)


def score(true_graph: ChainGraph, learned: LearnResult) -> tuple[int, bool, bool]:
    """(SHD, order correct, partition correct) of a learned result."""
    partition_correct = {frozenset(c) for c in learned.partition} == {frozenset(c) for c in true_graph.components}
    order_correct = False
    if partition_correct:
        index = {frozenset(c): i for i, c in enumerate(true_graph.components)}
        mapped = [index[frozenset(c)] for c in learned.ordered_components]
        order_correct = is_topological(true_graph, mapped)
    graph = learned.recovered_graph
    distance = shd(true_graph, graph) if graph is not None else None
    return distance, order_correct, partition_correct


def run_trial(config: BenchmarkConfig, trial_index: int) -> TrialReport:
    """Generate, learn and score one trial; library errors are recorded, not raised."""
    if not 0 <= trial_index < config.total_trials:
        raise ValueError(f"trial index {trial_index} out of range")
    d = config.d_list[trial_index // config.n_trials]
    seed = split_seed(config.base_seed, trial_index)
    report = TrialReport(trial_index, d, seed, config.mode, config.algorithm)
    start = time.perf_counter()
    try:
        rng = make_rng(seed)
        n_comp = _n_components(config, d)
        if config.algorithm == "known":
            sem = generate_certified_known_instance(d, n_comp, rng, config.expected_neighbors)
        else:
            sem = generate_certified_unknown_instance(
                d, n_comp, rng, margin=config.margin, expected_neighbors=config.expected_neighbors
            )
        report.true_graph = sem.graph
        if config.mode == "population":
            sigma, n = population_covariance(sem), None
        else:
            sigma, n = empirical_covariance(sample(sem, config.n_samples, rng)), config.n_samples
        if config.algorithm == "known":
            learned = learn_order_known(sigma, sem.graph.components, config.stat)
        else:
            learned = learn_unknown(sigma, config.sfm_method)
        learned.mode = config.mode
        learned.recovered_graph = recover_edges(sigma, learned.partition, learned.order, config.alpha, n)
        report.learned = learned
        report.shd, report.order_correct, report.partition_correct = score(sem.graph, learned)
    except ChainIdError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
    report.wall_time = time.perf_counter() - start
    return report


def _run_one(args):
    return run_trial(*args)


def run_trials(config: BenchmarkConfig, jobs: int = 1, indices: Iterable[int] | None = None) -> list[TrialReport]:
    """Run trials (all by default), in a process pool when ``jobs > 1``; sorted by index."""
    indices = list(range(config.total_trials)) if indices is None else sorted(indices)
    if jobs <= 1:
        reports = [run_trial(config, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_one, [(config, i) for i in indices], chunksize=1))
    return sorted(reports, key=lambda r: r.index)


def aggregate(reports: Sequence[TrialReport]) -> list[dict]:
    """One row per (d, mode, algorithm) present in ``reports``, sorted by that key.

    Failed trials count as incorrect and are excluded from the SHD mean and
    standard deviation (sample sd; 0 for a single value, None with no values).
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    groups: dict[tuple, list[TrialReport]] = {}
    for r in sorted(reports, key=lambda r: r.index):
        groups.setdefault((r.d, r.mode, r.algorithm), []).append(r)
    rows = []
    for (d, mode, algorithm), group in sorted(groups.items()):
        shds = [r.shd for r in group if not r.failed and r.shd is not None]
        n = len(group)
        rows.append(
            {
                "d": d,
                "mode": mode,
                "algorithm": algorithm,
                "mean_shd": float(np.mean(shds)) if shds else None,
                "sd_shd": (float(np.std(shds, ddof=1)) if len(shds) > 1 else 0.0) if shds else None,
                "order_rate": sum(r.order_correct for r in group) / n,
                "partition_rate": sum(r.partition_correct for r in group) / n,
                "mean_seconds": float(np.mean([r.wall_time for r in group])),
                "n_trials": n,
                "n_failures": sum(r.failed for r in group),
            }
        )
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def format_table(rows: Sequence[dict]) -> str:
    """Aligned plain-text table of summary rows."""
    header = list(SUMMARY_COLUMNS)
    body = []
    for row in rows:
        cells = []
        for c in header:
            v = row.get(c)
            cells.append("-" if v is None else f"{v:.4g}" if isinstance(v, float) else str(v))
        body.append(cells)
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(cells, widths)) for cells in body]
    return "\n".join(lines) + "\n"


def summary_json(config: BenchmarkConfig, rows: Sequence[dict]) -> str:
    """Deterministic summary document (no timings)."""
    clean = [{k: row[k] for k in DETERMINISTIC_COLUMNS} for row in rows]
    return json.dumps({"config": config.to_dict(), "rows": clean}, indent=2, sort_keys=True) + "\n"


def summary_csv(rows: Sequence[dict], columns: Sequence[str] = DETERMINISTIC_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def reports_jsonl(reports: Sequence[TrialReport]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in sorted(reports, key=lambda r: r.index))


def write_outputs(out_dir, config: BenchmarkConfig, reports: Sequence[TrialReport]) -> list[dict]:
    """Write reports.jsonl, summary.json, summary.csv and the timing sidecar.

    The first three are byte-identical across reruns with the same config;
    ``timing.json`` and ``summary_timed.csv`` carry the wall-clock columns.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = aggregate(reports)
    (out / "reports.jsonl").write_text(reports_jsonl(reports))
    (out / "summary.json").write_text(summary_json(config, rows))
    (out / "summary.csv").write_text(summary_csv(rows))
    (out / "summary_timed.csv").write_text(summary_csv(rows, SUMMARY_COLUMNS))
    timing = {
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "rows": [{k: row[k] for k in ("d", "mode", "algorithm", "mean_seconds")} for row in rows],
        "trials": [{"index": r.index, "wall_time": r.wall_time} for r in sorted(reports, key=lambda r: r.index)],
    }
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return rows
