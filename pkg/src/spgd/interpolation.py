"""Continuous-time interpolation of iterates and a reference subgradient flow.

The iterates are placed at their discrete times ``tau_n`` and joined by
straight segments. The reference flow solves
``x'(t) in -df(x) - dg(x) - N_X(x)`` either in closed form (when the problem
provides one) or by a projected Euler scheme with minimal-norm selections.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import (
    DataCompletenessError,
    DomainError,
    InputError,
    IntegratorError,
    check_point,
    check_positive,
)
from .engine import FLOAT_FORMAT

_TIME_TOL = 1e-12


def _piecewise_linear(times, points, t):
    """Evaluate the polygon through ``(times[k], points[k])`` at sorted or unsorted ``t``."""
    t = np.asarray(t, dtype=float)
    k = np.searchsorted(times, t, side="right") - 1
    k = np.clip(k, 0, len(times) - 2)
    t0, t1 = times[k], times[k + 1]
    lam = ((t - t0) / (t1 - t0))[..., None]
    lam = np.clip(lam, 0.0, 1.0)
    out = points[k] + lam * (points[k + 1] - points[k])
    # nodes are returned exactly, not as 1.0-weighted combinations
    at_node = t == t1
    out[at_node] = points[k + 1][at_node]
    at_start = lam[..., 0] == 0.0
    out[at_start] = points[k][at_start]
    return out


class InterpolatedProcess:
    """Piecewise-linear path through ``(tau_n, x_n)``.

    ``ip(t)`` accepts a scalar or an array of times in ``[0, tau_N]``.
    """

    def __init__(self, trajectory):
        if trajectory.is_thinned:
            raise DataCompletenessError("interpolation needs every step of the trajectory")
        self.trajectory = trajectory
        self.times = trajectory.taus
        self.points = trajectory.points
        if len(self.times) < 2:
            raise InputError("need at least one step to interpolate")

    @property
    def horizon(self):
        return float(self.times[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon):
            raise DomainError(f"t must lie in [0, {self.horizon}]")
        out = _piecewise_linear(self.times, self.points, t_arr.reshape(-1))
        return out[0] if t_arr.ndim == 0 else out

    def breakpoints(self, lo, hi):
        """Node times inside ``[lo, hi]``."""
        i0 = np.searchsorted(self.times, lo, side="left")
        i1 = np.searchsorted(self.times, hi, side="right")
        return self.times[i0:i1]


def interpolate(ip, t):
    return ip(t)


@dataclass
class FlowSolution:
    times: np.ndarray
    points: np.ndarray
    method: str
    h: float
    selection: str = "minimal-norm"
    problem: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return float(self.times[-1])

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < -_TIME_TOL) or np.any(t_arr > self.horizon + _TIME_TOL):
            raise DomainError(f"flow is defined on [0, {self.horizon}]")
        if len(self.times) == 1:
            out = np.repeat(self.points[:1], t_arr.size, axis=0)
        else:
            out = _piecewise_linear(self.times, self.points, t_arr.reshape(-1))
        return out[0] if t_arr.ndim == 0 else out

    def to_csv(self, path):
        path = Path(path)
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["t"] + [f"x{i}" for i in range(d)])
            for t, x in zip(self.times, self.points):
                out.writerow([format(t, FLOAT_FORMAT)] + [format(v, FLOAT_FORMAT) for v in x])
        return path

    @classmethod
    def from_csv(cls, path, method="file", h=float("nan")):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].copy(), data[:, 1:].copy(), method, h)


def _grid(T, h):
    n = int(np.ceil(T / h - 1e-9))
    times = np.arange(n + 1, dtype=float) * h
    times[-1] = T
    return times


def integrate_flow(p, x0, T, h, method="auto"):
    """Solve the subgradient flow of ``f + g`` on ``X`` from ``x0`` over ``[0, T]``.

    ``method`` is ``"exact"`` (closed form, when the problem has one),
    ``"euler"`` (projected explicit Euler with step ``h``) or ``"auto"``.
    The Euler update is ``y <- P_X(y - h (v_f(y) + v_g(y)))`` with the
    problem's subgradient selections.
    """
    T = check_positive(T, "T")
    h = check_positive(h, "h")
    if h > T:
        raise InputError("h must not exceed T")
    x0 = check_point(x0, p.dim, "x0")
    if not p.constraint.contains(x0):
        raise InputError("x0 is not in the constraint set")
    times = _grid(T, h)
    if method == "auto":
        method = "exact" if p.exact_flow is not None else "euler"
    if method == "exact":
        if p.exact_flow is None:
            raise InputError(f"{p.name} has no closed-form flow")
        points = np.asarray(p.exact_flow(x0, times), dtype=float).reshape(len(times), p.dim)
    elif method == "euler":
        if p.g.subgrad is None:
            raise InputError("Euler flow needs a subgradient selection for g")
        points = np.empty((len(times), p.dim))
        points[0] = x0
        y = x0
        for k in range(len(times) - 1):
            dt = times[k + 1] - times[k]
            y = p.constraint.project(y - dt * (p.subgrad(y) + p.g.subgrad(y)))
            if not np.all(np.isfinite(y)):
                raise IntegratorError("non-finite flow state", k + 1)
            points[k + 1] = y
    else:
        raise InputError(f"unknown method {method!r}")
    return FlowSolution(times, points, method, h, problem=p.name)


def shifted_sup_distance(ip, t0, flow, T):
    """``sup_{0 <= s <= T} ||X(t0 + s) - flow(s)||`` on the union of breakpoints.

    Both paths are piecewise linear, so their difference is too and the sup
    over the union grid is exact.
    """
    T = check_positive(T, "T")
    if t0 < 0 or t0 + T > ip.horizon * (1 + _TIME_TOL) + _TIME_TOL:
        raise DomainError("window extends past the interpolated process")
    if flow.horizon < T * (1 - _TIME_TOL) - _TIME_TOL:
        raise DomainError("flow does not cover the window")
    hi = min(t0 + T, ip.horizon)
    span = hi - t0
    grid = np.concatenate((
        [0.0, span],
        flow.times[flow.times <= span],
        ip.breakpoints(t0, hi) - t0,
    ))
    grid = np.unique(np.clip(grid, 0.0, span))
    diff = ip(t0 + grid) - flow(grid)
    return float(np.max(np.linalg.norm(diff, axis=1)))


@dataclass
class LyapunovReport:
    max_discrepancy: float
    decrease: float
    dissipation: float
    values: np.ndarray
    integral: np.ndarray
    nonincreasing: bool

    def to_dict(self):
        return {
            "max_discrepancy": self.max_discrepancy,
            "decrease": self.decrease,
            "dissipation": self.dissipation,
            "nonincreasing": self.nonincreasing,
        }


def lyapunov_decrease_check(flow, p, tol=1e-9):
    """Compare ``(f+g)(x(t_k)) - (f+g)(x(0))`` with ``-sum h ||dx/h||^2``."""
    if len(flow.times) == 0:
        raise InputError("empty flow")
    values = np.array([p.objective(x) for x in flow.points])
    dt = np.diff(flow.times)
    speed2 = np.sum(np.diff(flow.points, axis=0) ** 2, axis=1) / np.where(dt > 0, dt, 1.0) ** 2
    integral = np.concatenate(([0.0], np.cumsum(dt * speed2)))
    gap = (values - values[0]) + integral
    return LyapunovReport(
        max_discrepancy=float(np.max(np.abs(gap))),
        decrease=float(values[-1] - values[0]),
        dissipation=float(integral[-1]),
        values=values,
        integral=integral,
        nonincreasing=bool(np.all(np.diff(values) <= tol)),
    )
