"""Batch experiment runner.

Reads a flat TOML config, sweeps the chosen policy over a list of system
sizes with independent replications, and emits a results table (CSV or
JSON) with measured delays, message rates, declared resources, probe
verdicts, and a trend classification of the delay column.

Unknown config keys are hard errors: a silent typo corrupts a sweep.
Re-running with the same config and seed produces byte-identical output.

Exit codes: 0 success, 1 config error, 2 invariant violation,
3 only inconclusive results under --strict.
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .arrivals import FAMILIES, SizeSpec
from .core import ConfigError, PolicyContractError
from .engine import estimate_delay, estimate_message_rate, run
from .policies import CATALOG_NAMES, catalog_entry
from .probe import probe_window_bounds

__all__ = ["ExperimentConfig", "load_config", "classify_trend", "run_experiment", "main"]

RESULTS_HEADER = "# dispatchsim-results v1"

_CSV_COLUMNS = (
    "policy",
    "n",
    "load",
    "replications",
    "jobs",
    "delay_status",
    "mean_delay",
    "delay_half_width",
    "msg_rate_total",
    "msg_rate_query",
    "msg_rate_response",
    "msg_rate_spontaneous",
    "msg_rate_departure",
    "memory_bits",
    "declared_msg_rate",
    "rate_is_upper_bound",
    "probe_status",
    "probe_all_passed",
    "trend",
)


@dataclass
class ExperimentConfig:
    """Validated experiment description; fields mirror the config keys."""

    policy: str
    n: list
    load: float
    jobs: int
    replications: int = 3
    seed: int = 0
    d: Optional[int] = None
    b: Optional[int] = None
    sita_cuts: Optional[list] = None
    arrival: str = "exponential"
    arrival_p: float = 0.5
    arrival_ratio: float = 10.0
    arrival_half_width: float = 0.5
    size: str = "exponential"
    size_p: float = 0.5
    size_ratio: float = 10.0
    size_half_width: float = 0.5
    warmup: float = 0.2
    batches: int = 20
    census_rate: float = 10.0
    census_gamma: float = 0.1
    probe: bool = False
    probe_gamma: float = 0.1
    probe_windows: int = 20000
    probe_spacing: float = 0.01
    probe_c: int = 1
    output: str = "out"
    format: str = "csv"
    strict: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.policy not in CATALOG_NAMES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {CATALOG_NAMES}")
        if not isinstance(self.n, list) or not self.n:
            raise ConfigError("n must be a nonempty list of system sizes")
        if any((not isinstance(v, int)) or v < 1 for v in self.n):
            raise ConfigError("every entry of n must be a positive integer")
        if not 0.0 < self.load < 1.0:
            raise ConfigError(f"load must be in (0, 1), got {self.load}")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        if self.arrival not in FAMILIES or self.size not in FAMILIES:
            raise ConfigError(f"arrival and size families must be one of {FAMILIES}")
        if not 0.0 <= self.warmup < 1.0:
            raise ConfigError("warmup must be in [0, 1)")
        if self.batches < 10:
            raise ConfigError("batches must be at least 10")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.census_rate < 0 or self.probe_windows < 0:
            raise ConfigError("census_rate and probe_windows must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def policy_params(self) -> dict:
        params = {}
        if self.d is not None:
            params["d"] = self.d
        if self.b is not None:
            params["b"] = self.b
        if self.sita_cuts is not None:
            params["cuts"] = tuple(self.sita_cuts)
        return params

    def arrival_params(self) -> dict:
        if self.arrival == "hyperexponential":
            return {"p": self.arrival_p, "ratio": self.arrival_ratio}
        if self.arrival == "uniform":
            return {"half_width": self.arrival_half_width}
        return {}

    def size_spec(self):
        if self.size == "hyperexponential":
            return SizeSpec(self.size, p=self.size_p, ratio=self.size_ratio)
        if self.size == "uniform":
            return SizeSpec(self.size, half_width=self.size_half_width)
        return SizeSpec(self.size)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}")
    return ExperimentConfig.from_dict(data)


def classify_trend(means, half_widths) -> str:
    """Classify a delay-vs-n series.

    VANISHING: every successive mean drops by more than the two intervals
    combined, and the last mean is below a tenth of the first.  POSITIVE:
    every interval stays above half of the series minimum.  Anything else is
    INCONCLUSIVE.
    """
    if len(means) != len(half_widths):
        raise ConfigError("means and half-widths must align")
    if len(means) < 3:
        raise ConfigError("trend classification needs at least 3 points")
    drops = all(
        means[i + 1] < means[i] - (half_widths[i] + half_widths[i + 1])
        for i in range(len(means) - 1)
    )
    if drops and means[-1] < 0.1 * means[0]:
        return "VANISHING"
    floor = 0.5 * min(means)
    if all(means[i] - half_widths[i] > floor for i in range(len(means))):
        return "POSITIVE"
    return "INCONCLUSIVE"


def _replication_seed(base_seed: int, policy: str, n: int, rep: int) -> tuple:
    return (base_seed, zlib.crc32(policy.encode()), n, rep)


def _run_replication(payload: dict) -> dict:
    """One replication; takes and returns primitives so it can cross a
    process boundary."""
    cfg = ExperimentConfig.from_dict(payload["config"])
    n = payload["n"]
    rep = payload["rep"]
    entry = catalog_entry(cfg.policy, n, cfg.load, **cfg.policy_params())
    log = run(
        entry.policy,
        n,
        cfg.load,
        jobs=cfg.jobs,
        seed=_replication_seed(cfg.seed, cfg.policy, n, rep),
        arrival_family=cfg.arrival,
        arrival_params=cfg.arrival_params(),
        size_spec=cfg.size_spec(),
        census_rate=cfg.census_rate,
        census_gamma=cfg.census_gamma,
    )
    est = estimate_delay(log, warmup_fraction=cfg.warmup, batches=cfg.batches)
    rate = estimate_message_rate(log)
    return {
        "n": n,
        "rep": rep,
        "jobs": log.job_count,
        "delay_status": est.status,
        "delay_mean": est.mean,
        "delay_half_width": est.half_width,
        "rate_total": rate.total,
        "rate_query": rate.query,
        "rate_response": rate.response,
        "rate_spontaneous": rate.spontaneous,
        "rate_departure": rate.departure,
    }


def _aggregate(reps: list) -> dict:
    """Combine replication summaries; the cross-replication CI uses the
    Student-t on replication means when there are at least two."""
    import math

    from scipy import stats as _stats

    ok = [r for r in reps if r["delay_status"] == "ok"]
    out = {
        "jobs": sum(r["jobs"] for r in reps),
        "replications": len(reps),
    }
    for key in ("rate_total", "rate_query", "rate_response", "rate_spontaneous", "rate_departure"):
        out[key] = sum(r[key] for r in reps) / len(reps)
    if not ok:
        out.update(delay_status="inconclusive", delay_mean=None, delay_half_width=None)
        return out
    means = [r["delay_mean"] for r in ok]
    if len(means) == 1:
        out.update(
            delay_status="ok",
            delay_mean=means[0],
            delay_half_width=ok[0]["delay_half_width"],
        )
        return out
    m = sum(means) / len(means)
    sd = math.sqrt(sum((x - m) ** 2 for x in means) / (len(means) - 1))
    tq = float(_stats.t.ppf(0.975, len(means) - 1))
    out.update(
        delay_status="ok",
        delay_mean=m,
        delay_half_width=tq * sd / math.sqrt(len(means)),
    )
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list = field(default_factory=list)  # one dict per (policy, n)
    trend: Optional[str] = None

    def conclusive(self) -> bool:
        any_ok = any(r["delay_status"] == "ok" for r in self.rows)
        trend_ok = self.trend is not None and self.trend != "INCONCLUSIVE"
        return any_ok or trend_ok


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the sweep described by the config; deterministic given seeds."""
    payloads = [
        {"config": config.to_dict(), "n": n, "rep": rep}
        for n in config.n
        for rep in range(config.replications)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            summaries = list(pool.map(_run_replication, payloads))
    else:
        summaries = [_run_replication(p) for p in payloads]

    by_n = {}
    for s in summaries:
        by_n.setdefault(s["n"], []).append(s)

    result = ExperimentResult(config=config)
    for n in config.n:
        reps = sorted(by_n[n], key=lambda r: r["rep"])
        agg = _aggregate(reps)
        entry = catalog_entry(config.policy, n, config.load, **config.policy_params())
        row = {
            "policy": config.policy,
            "n": n,
            "load": config.load,
            "replications": agg["replications"],
            "jobs": agg["jobs"],
            "delay_status": agg["delay_status"],
            "mean_delay": agg["delay_mean"],
            "delay_half_width": agg["delay_half_width"],
            "msg_rate_total": agg["rate_total"],
            "msg_rate_query": agg["rate_query"],
            "msg_rate_response": agg["rate_response"],
            "msg_rate_spontaneous": agg["rate_spontaneous"],
            "msg_rate_departure": agg["rate_departure"],
            "memory_bits": entry.memory_bits,
            "declared_msg_rate": entry.message_rate(),
            "rate_is_upper_bound": entry.rate_is_upper_bound,
            "probe_status": "",
            "probe_all_passed": "",
        }
        if config.probe and config.probe_windows > 0:
            report = probe_window_bounds(
                entry.policy,
                n,
                config.load,
                config.probe_gamma,
                config.probe_windows,
                c=config.probe_c,
                spacing=config.probe_spacing,
                seed=_replication_seed(config.seed, config.policy + "/probe", n, 0),
                arrival_family=config.arrival,
                arrival_params=config.arrival_params(),
                size_spec=config.size_spec(),
            )
            row["probe_status"] = report.status
            row["probe_all_passed"] = str(report.all_passed).lower()
        result.rows.append(row)

    if len(config.n) >= 3 and all(r["delay_status"] == "ok" for r in result.rows):
        result.trend = classify_trend(
            [r["mean_delay"] for r in result.rows],
            [r["delay_half_width"] for r in result.rows],
        )
    return result


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def write_results_csv(result: ExperimentResult, path) -> None:
    lines = [RESULTS_HEADER, ",".join(_CSV_COLUMNS)]
    for row in result.rows:
        full = dict(row)
        full["trend"] = result.trend or ""
        lines.append(",".join(_fmt(full.get(col)) for col in _CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def write_results_json(result: ExperimentResult, path) -> None:
    payload = {
        "schema": "dispatchsim-results/1",
        "config": result.config.to_dict(),
        "rows": result.rows,
        "trend": result.trend,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_results(result: ExperimentResult, output_dir) -> Path:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if result.config.format == "json":
        path = out / "results.json"
        write_results_json(result, path)
    else:
        path = out / "results.csv"
        write_results_csv(result, path)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dispatchsim",
        description="Run load-balancing policy sweeps from a TOML config.",
    )
    parser.add_argument("config", help="path to the experiment config (TOML)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--replications", type=int, help="override replication count")
    parser.add_argument("--output-dir", help="override the output directory")
    parser.add_argument("--format", choices=("csv", "json"), help="override output format")
    parser.add_argument("--workers", type=int, help="override worker count")
    parser.add_argument(
        "--strict",
        action="store_true",
        help="exit 3 when no conclusive delay estimate or trend was produced",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.replications is not None:
            config.replications = args.replications
        if args.output_dir is not None:
            config.output = args.output_dir
        if args.format is not None:
            config.format = args.format
        if args.workers is not None:
            config.workers = args.workers
        if args.strict:
            config.strict = True
        config = ExperimentConfig.from_dict(config.to_dict())  # re-validate overrides
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        result = run_experiment(config)
        path = write_results(result, config.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (PolicyContractError, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2

    if args.verbose:
        for row in result.rows:
            print(
                f"{row['policy']} n={row['n']}: delay={_fmt(row['mean_delay'])} "
                f"+/- {_fmt(row['delay_half_width'])} ({row['delay_status']}), "
                f"msg_rate={_fmt(row['msg_rate_total'])}"
            )
        if result.trend:
            print(f"trend: {result.trend}")
    print(f"wrote {path}")

    if config.strict and not result.conclusive():
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
