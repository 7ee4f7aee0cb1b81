"""Trajectory statistics: maximal intervals, oscillation ratios, windowed
drift and noise sums, travel times, objective series and limit-set estimates.

Every function is a pure read of an immutable :class:`~spgd.engine.Trajectory`.
Asymptotic behaviour is summarized by finite-run trend statistics (quartile
ratios and Spearman rank correlations) rather than asserted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import spearmanr

from ._validation import (
    ConfigurationError,
    ConsistencyError,
    DataCompletenessError,
    DomainError,
    InputError,
    UndefinedRatioError,
    check_point,
    check_positive,
)
from .engine import FLOAT_FORMAT, Trajectory

CONSISTENCY_TOL = 1e-10
INSUFFICIENT = "insufficient data"


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


class Ball:
    """Euclidean ball; membership includes the boundary sphere."""

    kind = "ball"

    def __init__(self, center, radius):
        self.center = check_point(center, name="center")
        self.radius = check_positive(radius, "radius")

    def contains_many(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, self.center.size)
        return np.linalg.norm(points - self.center, axis=1) <= self.radius

    def contains(self, x):
        return bool(self.contains_many(x)[0])

    def describe(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __eq__(self, other):
        return isinstance(other, Ball) and self.describe() == other.describe()

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius})"


class Box:
    """Axis-aligned box; membership includes the faces."""

    kind = "box"

    def __init__(self, lower, upper):
        self.lower = check_point(lower, name="lower")
        self.upper = check_point(upper, self.lower.size, "upper")
        if np.any(self.lower >= self.upper):
            raise InputError("box needs lower < upper in every coordinate")

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def contains_many(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, self.lower.size)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)

    def contains(self, x):
        return bool(self.contains_many(x)[0])

    def describe(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __eq__(self, other):
        return isinstance(other, Box) and self.describe() == other.describe()

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


def region_from_dict(desc):
    desc = dict(desc)
    kind = desc.pop("kind", None)
    if kind == "ball":
        return Ball(desc["center"], desc["radius"])
    if kind == "box":
        return Box(desc["lower"], desc["upper"])
    raise ConfigurationError(f"unknown region kind {kind!r}; valid: ball, box")


def closure_inside(inner, outer):
    """Whether ``inner`` sits strictly inside ``outer`` (no shared boundary)."""
    if inner.center.size != outer.center.size:
        raise InputError("regions live in different dimensions")
    if isinstance(inner, Ball):
        if isinstance(outer, Ball):
            return bool(np.linalg.norm(inner.center - outer.center) + inner.radius < outer.radius)
        return bool(np.all(inner.center - inner.radius > outer.lower)
                    and np.all(inner.center + inner.radius < outer.upper))
    if isinstance(outer, Box):
        return bool(np.all(inner.lower > outer.lower) and np.all(inner.upper < outer.upper))
    # farthest point of a box from a given center is one of its corners
    far = np.maximum(np.abs(inner.lower - outer.center), np.abs(inner.upper - outer.center))
    return bool(np.linalg.norm(far) < outer.radius)


def regions_disjoint(a, b):
    if isinstance(a, Ball) and isinstance(b, Ball):
        return bool(np.linalg.norm(a.center - b.center) > a.radius + b.radius)
    if isinstance(a, Box) and isinstance(b, Box):
        return bool(np.any((a.upper < b.lower) | (b.upper < a.lower)))
    ball, box = (a, b) if isinstance(a, Ball) else (b, a)
    nearest = np.clip(ball.center, box.lower, box.upper)
    return bool(np.linalg.norm(nearest - ball.center) > ball.radius)


@dataclass(frozen=True)
class NeighborhoodPair:
    """Regions ``U`` and ``V`` with ``U`` strictly inside ``V``."""

    U: object
    V: object

    def __post_init__(self):
        if not closure_inside(self.U, self.V):
            raise ConfigurationError(
                f"closure of U is not contained in V (U={self.U!r}, V={self.V!r})"
            )

    def describe(self):
        return {"U": self.U.describe(), "V": self.V.describe()}


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _as_points(data, taus=None, schedule=None):
    """Return ``(points, index, times, trajectory_or_None)``."""
    if isinstance(data, Trajectory):
        return data.points, data.point_index, data.taus, data
    points = np.asarray(data, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    index = np.arange(points.shape[0])
    if taus is None:
        taus = schedule.taus(0, points.shape[0]) if schedule is not None else index.astype(float)
    return points, index, np.asarray(taus, dtype=float), None


def _require_complete(traj, lo, hi):
    """Refuse when steps ``lo..hi`` (inclusive) are not all stored."""
    if not traj.is_thinned:
        return
    i0 = np.searchsorted(traj.n, lo)
    i1 = np.searchsorted(traj.n, hi, side="right")
    if i1 - i0 != hi - lo + 1:
        raise DataCompletenessError(f"steps {lo}..{hi} were dropped by thinning")


def _row(traj, n):
    return int(np.searchsorted(traj.n, n)) if traj.is_thinned else int(n)


def trend_summary(values):
    """Spearman correlation against position and last/first quartile mean ratio."""
    values = np.asarray(values, dtype=float)
    out = {"count": int(values.size)}
    if values.size < 4:
        out.update(status=INSUFFICIENT, spearman=None, quartile_ratio=None)
        return out
    q = max(values.size // 4, 1)
    first, last = float(np.mean(values[:q])), float(np.mean(values[-q:]))
    if first > 0:
        ratio = last / first
    else:
        ratio = math.inf if last > 0 else math.nan
    if np.all(values == values[0]):
        rho = math.nan
    else:
        rho = float(spearmanr(np.arange(values.size), values)[0])
    out.update(status="ok", spearman=rho, quartile_ratio=ratio,
               first_quartile_mean=first, last_quartile_mean=last)
    return out


def _window_end_from_taus(taus, T, n):
    target = T - 1e-12 * max(1.0, T)
    rel = taus[n:] - taus[n]
    hit = np.nonzero(rel >= target)[0]
    if not hit.size:
        raise DomainError(f"window of length {T} from step {n} runs past the trajectory")
    return int(n + hit[0])


# ---------------------------------------------------------------------------
# Maximal intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaximalInterval:
    """Block ``n1..n2`` (inclusive) of consecutive iterates in ``V`` touching ``U``.

    ``boundary_kind`` is ``truncated_at_trajectory_end`` when the block is
    still open at the last iterate; otherwise ``entered_from_outside`` when
    the iterate before ``n1`` lies outside ``V``, and ``exits_after`` when
    the block starts at the first iterate.
    """

    n1: int
    n2: int
    duration: float
    touched_U: bool = True
    boundary_kind: str = "entered_from_outside"

    @property
    def truncated(self):
        return self.boundary_kind == "truncated_at_trajectory_end"

    def to_dict(self):
        return {"n1": self.n1, "n2": self.n2, "duration": self.duration,
                "touched_U": self.touched_U, "boundary_kind": self.boundary_kind}


class IntervalList(list):
    """List of :class:`MaximalInterval`; ``discarded`` counts V-excursions missing U."""

    def __init__(self, items=(), discarded=0):
        super().__init__(items)
        self.discarded = discarded


def find_maximal_intervals(data, nb: NeighborhoodPair, taus=None, schedule=None):
    """Maximal runs of consecutive iterates inside ``V`` that visit ``U``.

    ``data`` is a :class:`Trajectory` or an array of points; for raw points
    the times come from ``taus``, ``schedule`` or the index itself.
    """
    points, index, times, traj = _as_points(data, taus, schedule)
    if traj is not None and traj.is_thinned and not any(r == nb.V for r in traj.keep_regions):
        raise DataCompletenessError("trajectory was thinned without keeping V; intervals would be inexact")
    in_v = nb.V.contains_many(points)
    in_u = nb.U.contains_many(points) & in_v
    last = int(index[-1])
    # run boundaries: V membership changes or stored indices are not consecutive
    breaks = np.ones(points.shape[0] + 1, dtype=bool)
    breaks[1:-1] = (in_v[1:] != in_v[:-1]) | (np.diff(index) != 1)
    edges = np.nonzero(breaks)[0]
    out, discarded = [], 0
    u_cum = np.concatenate(([0], np.cumsum(in_u)))
    for a, b in zip(edges[:-1], edges[1:]):
        if not in_v[a]:
            continue
        if u_cum[b] - u_cum[a] == 0:
            discarded += 1
            continue
        n1, n2 = int(index[a]), int(index[b - 1])
        if n2 == last:
            kind = "truncated_at_trajectory_end"
        elif n1 == 0:
            kind = "exits_after"
        else:
            kind = "entered_from_outside"
        out.append(MaximalInterval(n1, n2, float(times[b - 1] - times[a]), True, kind))
    return IntervalList(out, discarded)


@dataclass
class LongIntervalSeries:
    durations: list
    truncated: list
    trend: dict

    def to_dict(self):
        return {"durations": self.durations, "truncated": self.truncated, "trend": self.trend}


def long_interval_series(intervals, s=None):
    """Durations ``tau_{n2} - tau_{n1}`` with a trend over the complete intervals.

    With a schedule the durations are recomputed from it; censored (truncated)
    intervals are reported but left out of the trend.
    """
    if s is not None:
        durations = [s.tau(iv.n2) - s.tau(iv.n1) for iv in intervals]
    else:
        durations = [iv.duration for iv in intervals]
    truncated = [iv.truncated for iv in intervals]
    complete = [d for d, t in zip(durations, truncated) if not t]
    trend = trend_summary(complete)
    trend["excluded_truncated"] = int(sum(truncated))
    return LongIntervalSeries(durations, truncated, trend)


# ---------------------------------------------------------------------------
# Oscillation compensation
# ---------------------------------------------------------------------------


def drift_ratio(gamma, w, mask=None):
    """``sum gamma_i w_i 1_A(i) / sum gamma_i 1_A(i)``."""
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(gamma.size, -1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        gamma, w = gamma[mask], w[mask]
    den = float(np.sum(gamma))
    if den <= 0:
        raise UndefinedRatioError("empty index set: the denominator vanishes")
    return np.sum(gamma[:, None] * w, axis=0) / den


@dataclass
class OscillationReport:
    """Weighted drift averages over unions of maximal intervals.

    ``u`` and ``b`` hold, for ``N = 1..len``, the ratio and denominator over
    the union ``A_N`` of the first ``N`` intervals (``nan`` where ``A_N``
    has no step). ``prefix_u`` runs over the steps of ``A`` (all selected
    intervals) in order: entry ``k`` is the ratio over the first ``k + 1``
    such steps. ``plain_u`` is the same prefix ratio with the indicator of
    ``U`` alone, the variant that is not expected to vanish in general.
    """

    u: np.ndarray
    b: np.ndarray
    counts: list
    prefix_index: np.ndarray
    prefix_u: np.ndarray
    plain_u_final: Optional[np.ndarray]
    plain_u_first: Optional[np.ndarray]
    plain_den: float

    @property
    def norms(self):
        return np.linalg.norm(self.u, axis=1)

    def u_at(self, N):
        val = self.u[N - 1]
        if not np.all(np.isfinite(val)):
            raise UndefinedRatioError(f"A_{N} contains no step")
        return val

    @property
    def count_ratio(self):
        """``||u_N|| / ||u_1||`` at the final interval count."""
        first = self._first_defined()
        last = self.u[-1] if len(self.u) else None
        if first is None or last is None or not np.all(np.isfinite(last)):
            return math.nan
        den = np.linalg.norm(first)
        return float(np.linalg.norm(last) / den) if den > 0 else math.nan

    def _first_defined(self):
        for row in self.u:
            if np.all(np.isfinite(row)):
                return row
        return None

    @property
    def prefix_ratio(self):
        """``||u|| / ||u||`` between the last and first prefixes over ``A``."""
        if len(self.prefix_u) == 0:
            return math.nan
        den = np.linalg.norm(self.prefix_u[0])
        return float(np.linalg.norm(self.prefix_u[-1]) / den) if den > 0 else math.nan

    def to_dict(self, max_points=200):
        take = _subsample(len(self.prefix_u), max_points)
        return {
            "interval_count": int(len(self.u)),
            "u": _nan_list(self.u),
            "u_norm": _nan_list(self.norms),
            "b": _nan_list(self.b),
            "subdivision_counts": self.counts,
            "count_ratio": _nan_float(self.count_ratio),
            "prefix": {
                "n": self.prefix_index[take].tolist(),
                "u": _nan_list(self.prefix_u[take]),
                "ratio_final_to_first": _nan_float(self.prefix_ratio),
            },
            "plain_U": {
                "u_first": None if self.plain_u_first is None else self.plain_u_first.tolist(),
                "u_final": None if self.plain_u_final is None else self.plain_u_final.tolist(),
                "denominator": self.plain_den,
                "note": "indicator of U alone; reported without a threshold",
            },
        }


def _subsample(n, k):
    if n <= k:
        return np.arange(n)
    return np.unique(np.concatenate((np.geomspace(1, n, k).astype(np.int64) - 1, [n - 1])))


def _nan_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _nan_list(arr):
    arr = np.asarray(arr, dtype=float)
    return np.where(np.isfinite(arr), arr, np.nan).astype(object).tolist() if arr.size else []


def oscillation_ratio(traj: Trajectory, intervals, upto_N=None, nb=None, T=None):
    """Weighted average drift over the first ``upto_N`` maximal intervals.

    Membership in ``A`` is by step index: step ``i`` counts when ``n1 <= i
    <= n2`` for a selected interval and the step exists (the final iterate
    carries no step). ``nb`` adds the plain-``U`` variant; ``T`` adds the
    chunk counts of :func:`interval_subdivision` per interval.
    """
    if upto_N is None:
        upto_N = len(intervals)
    if upto_N > len(intervals):
        raise InputError("upto_N exceeds the number of intervals")
    N = traj.n_steps
    d = traj.dim
    if traj.is_thinned:
        for iv in intervals[:upto_N]:
            _require_complete(traj, iv.n1, min(iv.n2, N - 1))
    gw = traj.gamma[:, None] * traj.w
    steps = traj.n
    u = np.full((upto_N, d), np.nan)
    b = np.zeros(upto_N)
    num = np.zeros(d)
    den = 0.0
    mask = np.zeros(len(traj), dtype=bool)
    for k, iv in enumerate(intervals[:upto_N]):
        lo = np.searchsorted(steps, iv.n1)
        hi = np.searchsorted(steps, min(iv.n2, N - 1), side="right")
        if hi > lo:
            num = num + gw[lo:hi].sum(axis=0)
            den += float(traj.gamma[lo:hi].sum())
            mask[lo:hi] = True
        b[k] = den
        if den > 0:
            u[k] = num / den
    sel = np.nonzero(mask)[0]
    cum_num = np.cumsum(gw[sel], axis=0)
    cum_den = np.cumsum(traj.gamma[sel])
    prefix_u = cum_num / cum_den[:, None] if sel.size else np.zeros((0, d))

    plain_first = plain_final = None
    plain_den = 0.0
    if nb is not None:
        in_u = nb.U.contains_many(traj.x)
        if np.any(in_u):
            first = int(np.argmax(in_u))
            plain_first = traj.w[first].copy()
            plain_den = float(traj.gamma[in_u].sum())
            plain_final = drift_ratio(traj.gamma, traj.w, in_u)

    counts = []
    if T is not None and not traj.is_thinned:
        taus = traj.taus
        counts = [len(_subdivide(taus, iv.n1, iv.n2, T, None)) - 1 for iv in intervals[:upto_N]]
    return OscillationReport(u, b, counts, steps[sel], prefix_u, plain_final, plain_first, plain_den)


# ---------------------------------------------------------------------------
# Windowed sums
# ---------------------------------------------------------------------------


def _window(traj, T, n):
    T = check_positive(T, "T")
    if n < 0 or n >= traj.n_steps:
        raise DomainError(f"step {n} is outside the trajectory")
    if traj.is_thinned:
        raise DataCompletenessError("windowed sums need an untinned trajectory")
    j = _window_end_from_taus(traj.taus, T, n)
    if j >= traj.n_steps:
        raise DomainError(f"window N(T={T}, n={n}) = {j} needs steps past the trajectory end")
    return j


def windowed_drift_sup(traj: Trajectory, T, n, check=True):
    """``max_{n <= j <= N(T, n)} ||sum_{i=n}^{j} gamma_i w_i||``.

    With ``check`` the partial sums are recomputed from the update identity as
    ``x_n - x_{j+1} + sum gamma_i eta_{i+1}`` and must agree to ``1e-10``.
    """
    j = _window(traj, T, n)
    g = traj.gamma[n: j + 1, None]
    partial = np.cumsum(g * traj.w[n: j + 1], axis=0)
    if check:
        noise = np.cumsum(g * traj.eta[n: j + 1], axis=0)
        other = traj.x[n] - traj.x_next[n: j + 1] + noise
        scale = max(1.0, float(np.max(np.abs(partial))), float(np.max(np.abs(other))))
        gap = float(np.max(np.abs(partial - other)))
        if gap > CONSISTENCY_TOL * scale:
            raise ConsistencyError(f"drift sums disagree by {gap:.3e} on window starting at {n}")
    return float(np.max(np.linalg.norm(partial, axis=1)))


def windowed_noise_sup(traj: Trajectory, T, n):
    """``max_{n <= j <= N(T, n)} ||sum_{i=n}^{j} gamma_i eta_{i+1}||``."""
    j = _window(traj, T, n)
    partial = np.cumsum(traj.gamma[n: j + 1, None] * traj.eta[n: j + 1], axis=0)
    return float(np.max(np.linalg.norm(partial, axis=1)))


def windowed_sum_sup(gamma, values):
    """Max norm of running sums of ``gamma_i * values_i``; for hand-built windows."""
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(gamma.size, -1)
    return float(np.max(np.linalg.norm(np.cumsum(gamma[:, None] * values, axis=0), axis=1)))


# ---------------------------------------------------------------------------
# Travel times
# ---------------------------------------------------------------------------


@dataclass
class TravelTimeSeries:
    times: list
    pairs: list
    trend: dict
    empty: bool

    def to_dict(self):
        return {"times": self.times, "pairs": self.pairs, "trend": self.trend, "empty": self.empty}


def travel_times(data, ball_x, ball_y, s=None, taus=None):
    """Greedy first-arrival travel times from ``ball_x`` to ``ball_y``.

    Each visit to ``ball_x`` is matched with the next arrival in ``ball_y``;
    the scan then resumes after that arrival.
    """
    if not regions_disjoint(ball_x, ball_y):
        raise InputError("the two regions must be disjoint")
    points, index, times, _ = _as_points(data, taus, s)
    xs = np.nonzero(ball_x.contains_many(points))[0]
    ys = np.nonzero(ball_y.contains_many(points))[0]
    out, pairs = [], []
    pos = 0
    while True:
        k = np.searchsorted(xs, pos)
        if k >= xs.size:
            break
        i = xs[k]
        m = np.searchsorted(ys, i, side="right")
        if m >= ys.size:
            break
        j = ys[m]
        out.append(float(times[j] - times[i]))
        pairs.append((int(index[i]), int(index[j])))
        pos = j + 1
    return TravelTimeSeries(out, pairs, trend_summary(out), not out)


# ---------------------------------------------------------------------------
# Objective series and limit sets
# ---------------------------------------------------------------------------


@dataclass
class LyapunovSeries:
    values: np.ndarray
    tail_mean: float
    tail_std: float
    tail_start: int

    def to_dict(self, max_points=200):
        take = _subsample(len(self.values), max_points)
        return {"n": take.tolist(), "values": self.values[take].tolist(),
                "tail_mean": self.tail_mean, "tail_std": self.tail_std,
                "tail_start": self.tail_start}


def lyapunov_series(traj: Trajectory, tail_fraction=0.1):
    """``(f + g)(x_n)`` with mean and standard deviation over the tail."""
    values = traj.objective_values
    k = max(int(math.ceil(tail_fraction * len(values))), 1)
    tail = values[-k:]
    return LyapunovSeries(values, float(np.mean(tail)), float(np.std(tail)), len(values) - k)


@dataclass(frozen=True)
class Cluster:
    center: np.ndarray
    mass: float
    mean: np.ndarray


def accumulation_estimate(data, tail_fraction=0.1, eps=0.05):
    """Greedy ``eps``-net of the tail iterates.

    Centers are tail iterates taken in time order; each one absorbs every
    still-uncovered tail point within ``eps``. ``mass`` is the fraction of
    tail points a center absorbed and ``mean`` their average.
    """
    if not 0 < tail_fraction <= 1:
        raise InputError("tail_fraction must lie in (0, 1]")
    eps = check_positive(eps, "eps")
    points = data.points if isinstance(data, Trajectory) else np.asarray(data, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 100:
        raise InputError("need at least 100 iterates")
    k = max(int(math.ceil(tail_fraction * points.shape[0])), 1)
    tail = points[-k:]
    uncovered = np.ones(k, dtype=bool)
    clusters = []
    while np.any(uncovered):
        i = int(np.argmax(uncovered))
        c = tail[i]
        near = uncovered & (np.linalg.norm(tail - c, axis=1) <= eps)
        clusters.append(Cluster(c.copy(), float(near.sum()) / k, tail[near].mean(axis=0)))
        uncovered &= ~near
    return clusters


# ---------------------------------------------------------------------------
# Interval subdivision
# ---------------------------------------------------------------------------


def _subdivide(taus, n1, n2, T, schedule):
    points = [int(n1)]
    a = int(n1)
    while a < n2:
        if taus is not None:
            try:
                j = _window_end_from_taus(taus, T, a)
            except DomainError:
                j = n2
        else:
            j = schedule.window_end(T, a)
        a = min(j, int(n2))
        points.append(a)
    if len(points) == 1:
        points.append(int(n2))
    return points


def interval_subdivision(interval, s, T):
    """Breakpoints ``a_1 = n1 < a_2 < ... = n2`` with ``a_{k+1} = min(N(T, a_k), n2)``.

    Returns ``(breakpoints, K)``; chunk ``k`` is ``[a_k, a_{k+1}]``.
    """
    T = check_positive(T, "T")
    n1, n2 = (interval.n1, interval.n2) if isinstance(interval, MaximalInterval) else interval
    bp = _subdivide(None, n1, n2, T, s)
    return bp, len(bp) - 1


def chunk_drift_sums(traj: Trajectory, breakpoints):
    """``sum_{a_k <= i < a_{k+1}} gamma_i w_i`` for each chunk (half-open)."""
    gw = np.cumsum(np.vstack((np.zeros(traj.dim), traj.gamma[:, None] * traj.w)), axis=0)
    bp = np.minimum(np.asarray(breakpoints), traj.n_steps)
    return gw[bp[1:]] - gw[bp[:-1]]


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    """Collected diagnostics for one trajectory; keys mirror the requested blocks."""

    sections: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def to_dict(self):
        return _plain(self.sections)

    def write_json(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n")
        return path

    def write_series_csv(self, directory, stem):
        """One CSV per named series (columns ``index`` and the values)."""
        directory = Path(directory)
        written = []
        for name, values in sorted(self.series.items()):
            path = directory / f"{stem}.{name}.csv"
            arr = np.asarray(values, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            with open(path, "w", newline="") as fh:
                out = csv.writer(fh, lineterminator="\n")
                out.writerow(["index"] + [f"v{i}" for i in range(arr.shape[1])])
                for i, row in enumerate(arr):
                    out.writerow([str(i)] + [format(v, FLOAT_FORMAT) for v in row])
            written.append(path)
        return written


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def compute_diagnostics(traj: Trajectory, problem, schedule, blocks):
    """Evaluate a list of diagnostic requests (as parsed from a run config).

    Each block is a dict with a ``kind`` among ``intervals``, ``windowed``,
    ``travel_times``, ``lyapunov`` and ``accumulation``.
    """
    report = DiagnosticsReport()
    for k, blk in enumerate(blocks):
        kind = blk["kind"]
        key = blk.get("name", f"{kind}_{k}")
        if kind == "intervals":
            nb = NeighborhoodPair(region_from_dict(blk["U"]), region_from_dict(blk["V"]))
            ivs = find_maximal_intervals(traj, nb)
            lis = long_interval_series(ivs)
            sec = {"neighborhoods": nb.describe(), "intervals": [iv.to_dict() for iv in ivs],
                   "discarded_excursions": ivs.discarded, "long_intervals": lis.to_dict()}
            if ivs:
                osc = oscillation_ratio(traj, ivs, nb=nb, T=blk.get("T"))
                sec["oscillation"] = osc.to_dict()
                report.series[f"{key}.u_prefix"] = osc.prefix_u
            report.series[f"{key}.durations"] = lis.durations
            report.sections[key] = sec
        elif kind == "windowed":
            T = blk.get("T", 1.0)
            rows = []
            for n in blk.get("n", []):
                try:
                    rows.append({"n": n, "drift_sup": windowed_drift_sup(traj, T, n),
                                 "noise_sup": windowed_noise_sup(traj, T, n)})
                except DomainError as exc:
                    rows.append({"n": n, "error": str(exc)})
            report.sections[key] = {"T": T, "values": rows}
        elif kind == "travel_times":
            tt = travel_times(traj, region_from_dict(blk["from"]), region_from_dict(blk["to"]))
            report.sections[key] = tt.to_dict()
            report.series[f"{key}.times"] = tt.times
        elif kind == "lyapunov":
            ly = lyapunov_series(traj, blk.get("tail_fraction", 0.1))
            report.sections[key] = ly.to_dict()
            report.series[f"{key}.values"] = ly.values
        elif kind == "accumulation":
            cl = accumulation_estimate(traj, blk.get("tail_fraction", 0.1), blk.get("eps", 0.05))
            entry = {"centers": [c.center.tolist() for c in cl],
                     "mass": [c.mass for c in cl], "means": [c.mean.tolist() for c in cl]}
            if problem.stationarity is not None:
                entry["stationarity"] = [problem.stationarity(c.center) for c in cl]
            if problem.critical_set is not None:
                entry["distance_to_critical_set"] = [problem.critical_set.distance(c.center) for c in cl]
            report.sections[key] = entry
        else:
            raise ConfigurationError(f"unknown diagnostic kind {kind!r}")
    return report
