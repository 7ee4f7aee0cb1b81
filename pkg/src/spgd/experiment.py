"""Multi-seed experiment orchestration, manifests and A/B comparison."""

from __future__ import annotations

import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from ._validation import ComparisonError, ConfigurationError, InputError
from .config import RunConfig, parse_config
from .diagnostics import compute_diagnostics
from .engine import Trajectory, run_spgd, sidecar_path
from .schedule import validate_schedule

MANIFEST_NAME = "manifest.json"
AGGREGATE_NAME = "aggregate.json"
MANIFEST_FORMAT = "spgd-manifest/1"


def _versions():
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _dump(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _finite(v):
    return v if isinstance(v, (int, float)) and math.isfinite(v) else None


@dataclass
class SeedResult:
    seed: int
    directory: str
    trajectory: str
    sidecar: str
    diagnostics: str
    series: list = field(default_factory=list)
    status: str = "ok"
    n_steps: int = 0
    error: str | None = None
    seconds: float = 0.0

    def files(self):
        return [self.trajectory, self.sidecar, self.diagnostics, *self.series]


@dataclass
class ExperimentManifest:
    """Index of everything one experiment wrote. Paths are relative to ``root``."""

    config_hash: str
    config: dict
    seeds: list
    validation: dict
    versions: dict
    wall_clock: float
    aggregate: str
    dim: int
    root: str = "."
    format: str = MANIFEST_FORMAT

    @property
    def seed_results(self):
        return [s if isinstance(s, SeedResult) else SeedResult(**s) for s in self.seeds]

    @property
    def ok(self):
        return all(s.status == "ok" for s in self.seed_results)

    def path(self, rel):
        return Path(self.root) / rel

    def files(self):
        out = [self.aggregate]
        for s in self.seed_results:
            out.extend(s.files())
        return out

    def to_dict(self):
        d = asdict(self)
        d.pop("root")
        return d

    def write(self, directory):
        return _dump(Path(directory) / MANIFEST_NAME, self.to_dict())

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        data = json.loads(path.read_text())
        if data.get("format") != MANIFEST_FORMAT:
            raise InputError(f"{path}: not an experiment manifest")
        data["root"] = str(path.parent)
        return cls(**data)

    def check(self):
        """Confirm every listed file exists and parses; return the problems found."""
        problems = []
        for rel in self.files():
            p = self.path(rel)
            if not p.exists():
                problems.append(f"missing {p}")
                continue
            try:
                if p.suffix == ".json":
                    json.loads(p.read_text())
                elif rel in {s.trajectory for s in self.seed_results}:
                    Trajectory.from_csv(p)
                else:
                    np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
            except (ValueError, OSError, KeyError) as exc:
                problems.append(f"unreadable {p}: {exc}")
        return problems


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def check_validation(cfg: RunConfig, override=False):
    """Validate the schedule against the noise order; raise unless allowed to run."""
    schedule, noise = cfg.build_schedule(), cfg.build_noise()
    report = validate_schedule(schedule, noise.q, horizon=max(1000, min(cfg.n_iters, 10**6)))
    exempt = noise.is_zero and report.failed_conditions == ["noise_summability"]
    if not (report.passed or override or exempt):
        raise ConfigurationError(f"{report.summary()}; rerun with --override to proceed", "/schedule")
    return {
        "schedule": report.to_dict(),
        "noise": noise.describe(),
        "summary": report.summary(),
        "overridden": bool(override and not report.passed and not exempt),
    }


def _run_seed(cfg_json, seed, out_dir, override):
    cfg = parse_config(cfg_json)
    seed_dir = Path(out_dir) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    problem, schedule, noise = cfg.build_problem(), cfg.build_schedule(), cfg.build_noise()
    keep = cfg.keep_regions() if cfg.thinning else ()
    traj = run_spgd(problem, schedule, noise, cfg.x0, cfg.n_iters, cfg.bound, seed,
                    override=True, thinning=cfg.thinning, keep_regions=keep)
    traj_path = traj.to_csv(seed_dir / "trajectory.csv")
    report = compute_diagnostics(traj, problem, schedule, cfg.diagnostics)
    diag_path = report.write_json(seed_dir / "diagnostics.json")
    series = report.write_series_csv(seed_dir, "series")
    status = "ok"
    if traj.bound_violated:
        status = "bound_violated"
    elif traj.error is not None:
        status = "nonfinite"
    rel = lambda p: str(Path(p).relative_to(out_dir))
    return SeedResult(
        seed=seed, directory=rel(seed_dir), trajectory=rel(traj_path),
        sidecar=rel(sidecar_path(traj_path)), diagnostics=rel(diag_path),
        series=[rel(p) for p in series], status=status, n_steps=traj.n_steps,
        error=traj.error, seconds=time.perf_counter() - start,
    )


def run_experiment(cfg: RunConfig, n_seeds=1, *, override=False, out_dir=None, workers=1):
    """Validate, run seeds ``cfg.seed, cfg.seed + 1, ...`` and write every output.

    Each seed gets its own directory with ``trajectory.csv`` (plus sidecar),
    ``diagnostics.json`` and series CSVs. ``aggregate.json`` collects trend
    statistics across seeds and ``manifest.json`` is written last.
    """
    n_seeds = int(n_seeds)
    if n_seeds < 1:
        raise InputError("n_seeds must be >= 1")
    if cfg.seed + n_seeds > 2**64:
        raise ConfigurationError("seed range exceeds 64 bits", "/seed")
    validation = check_validation(cfg, override)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    out = out.resolve()
    start = time.perf_counter()
    seeds = [cfg.seed + i for i in range(n_seeds)]
    text = cfg.to_json()
    if workers > 1 and n_seeds > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, [text] * n_seeds, seeds, [out] * n_seeds,
                                    [override] * n_seeds))
    else:
        results = [_run_seed(text, sd, out, override) for sd in seeds]
    agg = aggregate(results, out)
    agg_path = _dump(out / AGGREGATE_NAME, agg)
    manifest = ExperimentManifest(
        config_hash=cfg.config_hash, config=cfg.canonical(),
        seeds=[asdict(r) for r in results], validation=validation, versions=_versions(),
        wall_clock=time.perf_counter() - start, aggregate=agg_path.name,
        dim=len(cfg.x0), root=str(out),
    )
    manifest.write(out)
    return manifest


def rediagnose(manifest_path, cfg: RunConfig | None = None):
    """Recompute diagnostics from stored trajectories and rewrite the reports.

    Without ``cfg`` the diagnostic blocks stored in the manifest are reused.
    """
    manifest = ExperimentManifest.load(manifest_path)
    root = Path(manifest.root)
    if cfg is None:
        cfg = parse_config(json.dumps(manifest.config))
    elif len(cfg.x0) != manifest.dim:
        raise ComparisonError(f"config dimension {len(cfg.x0)} does not match stored runs ({manifest.dim})")
    problem, schedule = cfg.build_problem(), cfg.build_schedule()
    start = time.perf_counter()
    results = []
    for res in manifest.seed_results:
        traj = Trajectory.from_csv(root / res.trajectory)
        report = compute_diagnostics(traj, problem, schedule, cfg.diagnostics)
        report.write_json(root / res.diagnostics)
        for old in res.series:
            (root / old).unlink(missing_ok=True)
        series = report.write_series_csv(root / res.directory, "series")
        res.series = [str(Path(p).relative_to(root)) for p in series]
        results.append(res)
    _dump(root / manifest.aggregate, aggregate(results, root))
    config = dict(manifest.config, diagnostics=cfg.canonical()["diagnostics"])
    manifest.config = config
    manifest.config_hash = parse_config(json.dumps(config)).config_hash
    manifest.seeds = [asdict(r) for r in results]
    manifest.wall_clock = time.perf_counter() - start
    manifest.write(root)
    return manifest


# ---------------------------------------------------------------------------
# Aggregation and comparison
# ---------------------------------------------------------------------------


def _seed_stats(diag):
    """Flatten the trend statistics of one diagnostics report into ``name -> number``."""
    out = {}
    for key, sec in sorted(diag.items()):
        if "long_intervals" in sec:
            trend = sec["long_intervals"]["trend"]
            out[f"{key}.intervals"] = len(sec["intervals"])
            out[f"{key}.spearman"] = trend.get("spearman")
            out[f"{key}.quartile_ratio"] = trend.get("quartile_ratio")
            osc = sec.get("oscillation", {})
            out[f"{key}.prefix_ratio"] = osc.get("prefix", {}).get("ratio_final_to_first")
            out[f"{key}.count_ratio"] = osc.get("count_ratio")
        elif "values" in sec and "T" in sec:
            for row in sec["values"]:
                out[f"{key}.drift_sup@{row['n']}"] = row.get("drift_sup")
                out[f"{key}.noise_sup@{row['n']}"] = row.get("noise_sup")
        elif "trend" in sec:
            out[f"{key}.count"] = sec["trend"].get("count")
            out[f"{key}.spearman"] = sec["trend"].get("spearman")
            out[f"{key}.quartile_ratio"] = sec["trend"].get("quartile_ratio")
        elif "tail_std" in sec:
            out[f"{key}.tail_mean"] = sec.get("tail_mean")
            out[f"{key}.tail_std"] = sec.get("tail_std")
        elif "centers" in sec:
            out[f"{key}.centers"] = len(sec["centers"])
            if sec.get("stationarity"):
                out[f"{key}.max_stationarity"] = max(sec["stationarity"])
    return {k: _finite(v) for k, v in out.items()}


def aggregate(results, root):
    root = Path(root)
    per_seed = {}
    for res in results:
        diag = json.loads((root / res.diagnostics).read_text())
        per_seed[str(res.seed)] = {"status": res.status, "n_steps": res.n_steps, **_seed_stats(diag)}
    keys = sorted({k for stats in per_seed.values() for k in stats if k not in ("status", "n_steps")})
    summary = {}
    for k in keys:
        vals = np.array([s[k] for s in per_seed.values() if s.get(k) is not None], dtype=float)
        summary[k] = {
            "n": int(vals.size),
            "median": float(np.median(vals)) if vals.size else None,
            "mean": float(np.mean(vals)) if vals.size else None,
            "min": float(np.min(vals)) if vals.size else None,
            "max": float(np.max(vals)) if vals.size else None,
        }
    return {"per_seed": per_seed, "summary": summary}


@dataclass
class ComparisonReport:
    header: list
    rows: list
    a: str
    b: str

    def to_dict(self):
        return {"header": self.header, "a": self.a, "b": self.b, "rows": self.rows}

    def to_text(self):
        lines = list(self.header)
        lines.append(f"{'statistic':<40} {'A':>14} {'B':>14} {'B - A':>14}")

        def fmt(v):
            return f"{v:>14.6g}" if v is not None else f"{'-':>14}"

        for r in self.rows:
            lines.append(f"{r['statistic']:<40} {fmt(r['a'])} {fmt(r['b'])} {fmt(r['delta'])}")
        return "\n".join(lines) + "\n"


def _label(manifest):
    s = manifest.config["schedule"]
    args = ", ".join(f"{k}={v:g}" for k, v in s.items() if k != "kind")
    noise = manifest.config["noise"]
    nargs = ", ".join(f"{k}={v:g}" for k, v in noise.items() if k not in ("kind", "q"))
    return (f"{manifest.config['problem']['name']}, {s['kind']}({args}), "
            f"{noise['kind']}({nargs}), {len(manifest.seeds)} seed(s)")


def compare_runs(manifest_a, manifest_b) -> ComparisonReport:
    """Tabulate median trend statistics of two experiments side by side."""
    ma, mb = ExperimentManifest.load(manifest_a), ExperimentManifest.load(manifest_b)
    if ma.dim != mb.dim:
        raise ComparisonError(f"incompatible dimensions: {ma.dim} vs {mb.dim}")
    sa = json.loads(ma.path(ma.aggregate).read_text())["summary"]
    sb = json.loads(mb.path(mb.aggregate).read_text())["summary"]
    header = [
        f"A: {_label(ma)}: {ma.validation['summary']}",
        f"B: {_label(mb)}: {mb.validation['summary']}",
    ]
    rows = []
    for key in sorted(set(sa) | set(sb)):
        a = sa.get(key, {}).get("median")
        b = sb.get(key, {}).get("median")
        delta = b - a if a is not None and b is not None else None
        rows.append({"statistic": f"median {key}", "a": a, "b": b, "delta": delta})
    return ComparisonReport(header, rows, str(manifest_a), str(manifest_b))
