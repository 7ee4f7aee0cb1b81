"""Composite problems ``min f(x) + g(x)`` over a closed convex set.

A :class:`ProblemSpec` bundles three oracles:

* ``f``: value and one Clarke subgradient per point (a deterministic selection),
* ``g``: value and the proximal map restricted to the constraint set,
* ``X``: a :class:`ConstraintSet` with projection and a normal-cone element.

The built-in catalogue (:func:`builtin_problem`) contains small path
differentiable problems with analytic critical sets, used throughout the
tests and the command-line experiments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._validation import (
    ConfigurationError,
    InputError,
    ProxWarning,
    check_point,
    check_positive,
)

BOUNDARY_TOL = 1e-10


# ---------------------------------------------------------------------------
# Constraint sets
# ---------------------------------------------------------------------------


def _project_polyhedron(y, normals, offsets, tol=1e-14, max_iter=200_000):
    """Euclidean projection onto ``{x : normals @ x <= offsets}`` (Dykstra)."""
    if np.all(normals @ y <= offsets):
        return y.copy()
    sq = np.einsum("ij,ij->i", normals, normals)
    if normals.shape[0] == 1:
        viol = normals[0] @ y - offsets[0]
        return y - (viol / sq[0]) * normals[0]
    x = y.copy()
    incr = np.zeros_like(normals)
    for _ in range(max_iter):
        x_prev = x
        for i in range(normals.shape[0]):
            z = x + incr[i]
            viol = normals[i] @ z - offsets[i]
            xi = z - (max(viol, 0.0) / sq[i]) * normals[i]
            incr[i] = z - xi
            x = xi
        if np.linalg.norm(x - x_prev) <= tol * (1.0 + np.linalg.norm(x)):
            break
    return x


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Closed convex set with projection and a normal-cone selection.

    Use the constructors :meth:`whole_space`, :meth:`box`, :meth:`ball` and
    :meth:`halfspaces` rather than the raw initializer.
    """

    kind: str
    dim: Optional[int] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    normals: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None

    @classmethod
    def whole_space(cls, dim=None):
        return cls("whole_space", dim=dim)

    @classmethod
    def box(cls, lower, upper):
        lower = np.array(lower, dtype=float).reshape(-1)
        upper = np.array(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise InputError("box bounds must have the same length")
        if np.any(lower > upper) or np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise InputError("box requires lower <= upper")
        return cls("box", dim=lower.size, lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius):
        center = check_point(center, name="center")
        radius = check_positive(radius, "radius")
        return cls("ball", dim=center.size, center=center, radius=radius)

    @classmethod
    def halfspaces(cls, normals, offsets):
        normals = np.atleast_2d(np.array(normals, dtype=float))
        offsets = np.array(offsets, dtype=float).reshape(-1)
        if normals.shape[0] != offsets.size:
            raise InputError("one offset is needed per halfspace normal")
        if np.any(np.linalg.norm(normals, axis=1) == 0):
            raise InputError("halfspace normals must be nonzero")
        return cls("halfspaces", dim=normals.shape[1], normals=normals, offsets=offsets)

    def _check(self, x, name="x"):
        return check_point(x, self.dim, name)

    def project(self, y):
        y = self._check(y, "y")
        if self.kind == "whole_space":
            return y
        if self.kind == "box":
            return np.clip(y, self.lower, self.upper)
        if self.kind == "ball":
            d = y - self.center
            nd = np.linalg.norm(d)
            if nd <= self.radius:
                return y
            return self.center + (self.radius / nd) * d
        return _project_polyhedron(y, self.normals, self.offsets)

    def contains(self, x, tol=BOUNDARY_TOL):
        x = self._check(x)
        if self.kind == "whole_space":
            return True
        if self.kind == "box":
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        if self.kind == "ball":
            return bool(np.linalg.norm(x - self.center) <= self.radius + tol)
        return bool(np.all(self.normals @ x <= self.offsets + tol))

    def normal_cone_witness(self, x, tol=BOUNDARY_TOL):
        """One element of the normal cone at ``x``; zero in the interior.

        Faces within ``tol`` of ``x`` are treated as active.
        """
        x = self._check(x)
        v = np.zeros_like(x)
        if self.kind == "box":
            v[x >= self.upper - tol] += 1.0
            v[x <= self.lower + tol] -= 1.0
            # degenerate coordinates (lower == upper) accept any sign; keep 0
            v[self.upper - self.lower <= tol] = 0.0
        elif self.kind == "ball":
            d = x - self.center
            nd = np.linalg.norm(d)
            if nd >= self.radius - tol * max(1.0, self.radius) and nd > 0:
                v = d / nd
        elif self.kind == "halfspaces":
            active = self.normals @ x >= self.offsets - tol
            for a in self.normals[active]:
                v += a / np.linalg.norm(a)
        return v

    def describe(self):
        out = {"kind": self.kind}
        if self.kind == "box":
            out.update(lower=self.lower.tolist(), upper=self.upper.tolist())
        elif self.kind == "ball":
            out.update(center=self.center.tolist(), radius=self.radius)
        elif self.kind == "halfspaces":
            out.update(normals=self.normals.tolist(), offsets=self.offsets.tolist())
        return out


# ---------------------------------------------------------------------------
# Regularizers
# ---------------------------------------------------------------------------


def soft_threshold(y, t):
    """Proximal map of ``t * ||.||_1``."""
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


@dataclass(frozen=True, eq=False)
class Regularizer:
    """The nonsmooth term ``g``.

    ``prox(gamma, y)`` is the unconstrained proximal map, when known in closed
    form. ``subgrad`` returns the minimal-norm element of the subdifferential
    and is only needed by the reference flow integrator.
    """

    name: str
    value: Callable[[np.ndarray], float]
    prox: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    subgrad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    convex: bool = True
    separable: bool = False
    lam: float = 0.0

    @property
    def is_zero(self):
        return self.name == "zero"


def zero_regularizer():
    return Regularizer(
        "zero",
        value=lambda x: 0.0,
        prox=lambda gamma, y: y,
        subgrad=lambda x: np.zeros_like(x),
        separable=True,
    )


def l1_regularizer(lam):
    lam = check_positive(lam, "lam", allow_zero=True)
    return Regularizer(
        "l1",
        value=lambda x: lam * float(np.sum(np.abs(x))),
        prox=lambda gamma, y: soft_threshold(y, gamma * lam),
        subgrad=lambda x: lam * np.sign(x),
        separable=True,
        lam=lam,
    )


def _local_prox_search(phi, x0, scale, tol=1e-10, max_sweeps=200):
    """Coordinate descent with a shrinking pattern step; minimizes ``phi``."""
    x = x0.copy()
    best = phi(x)
    step = scale
    for _ in range(max_sweeps):
        improved = 0.0
        for i in range(x.size):
            for direction in (1.0, -1.0):
                trial = x.copy()
                trial[i] += direction * step
                val = phi(trial)
                if val < best:
                    improved += best - val
                    x, best = trial, val
                    break
        if improved <= tol:
            step *= 0.5
            if step < tol:
                break
    return x, best


def numeric_prox(g, gamma, y, constraint, n_starts=8, seed=0):
    """Prox of ``g`` on ``constraint`` by multistart local search.

    Starts from the projection of ``y`` plus ``n_starts`` perturbed copies;
    the perturbations come from a fixed generator so the result is a
    deterministic function of the inputs.
    """
    def phi(z):
        p = constraint.project(z)
        return g.value(p) + float(np.sum((p - y) ** 2)) / (2.0 * gamma)

    base = constraint.project(y)
    base_val = phi(base)
    scale = max(math.sqrt(gamma), 1e-3)
    rng = np.random.default_rng(seed)
    starts = [base] + [base + scale * rng.standard_normal(y.size) for _ in range(n_starts)]
    best_x, best_val = base, base_val
    for s0 in starts:
        z, val = _local_prox_search(phi, s0, scale)
        if val < best_val:
            best_x, best_val = constraint.project(z), val
    if not g.convex and best_val >= base_val:
        warnings.warn("prox search did not improve on the projection", ProxWarning, stacklevel=3)
    return best_x


# ---------------------------------------------------------------------------
# Critical sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CriticalSet:
    """Analytic description of ``{x : 0 in df(x) + dg(x) + N_X(x)}``."""

    kind: str  # "points" or "circle"
    points: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    note: str = ""

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        dists = []
        if self.points is not None and len(self.points):
            dists.append(np.min(np.linalg.norm(self.points - x, axis=1)))
        if self.kind == "circle":
            dists.append(abs(np.linalg.norm(x - self.center) - self.radius))
        return float(min(dists))

    def describe(self):
        out = {"kind": self.kind, "note": self.note}
        if self.points is not None:
            out["points"] = self.points.tolist()
        if self.kind == "circle":
            out.update(center=self.center.tolist(), radius=self.radius)
        return out


# ---------------------------------------------------------------------------
# Problem specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A composite problem with its oracles.

    Parameters
    ----------
    dim : int
        Ambient dimension.
    f_value, f_subgrad : callable
        Value of ``f`` and a deterministic selection from its Clarke
        subdifferential.
    g : Regularizer
        The proximable term.
    constraint : ConstraintSet
    lipschitz_g : float, optional
        Lipschitz bound of ``g`` on the region the trajectories visit.
    critical_set : CriticalSet, optional
    stationarity : callable, optional
        ``x -> ||min-norm element of df(x) + dg(x) + N_X(x)||`` when it is
        available analytically.
    exact_flow : callable, optional
        ``(x0, times) -> points`` closed-form solution of the subgradient
        flow, used instead of the Euler scheme when present.
    nonsmooth_locus : callable, optional
        ``x -> distance to the set where f may fail to be differentiable``.
    """

    dim: int
    f_value: Callable[[np.ndarray], float]
    f_subgrad: Callable[[np.ndarray], np.ndarray]
    g: Regularizer = field(default_factory=zero_regularizer)
    constraint: ConstraintSet = field(default_factory=ConstraintSet.whole_space)
    lipschitz_g: Optional[float] = None
    critical_set: Optional[CriticalSet] = None
    stationarity: Optional[Callable[[np.ndarray], float]] = None
    exact_flow: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    nonsmooth_locus: Optional[Callable[[np.ndarray], float]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    kernel: Optional[tuple] = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InputError("dim must be a positive integer")
        if self.constraint.dim is not None and self.constraint.dim != self.dim:
            raise InputError("constraint dimension does not match problem dimension")

    def objective(self, x):
        x = check_point(x, self.dim)
        return float(self.f_value(x)) + float(self.g.value(x))

    def subgrad(self, x):
        x = check_point(x, self.dim)
        return np.asarray(self.f_subgrad(x), dtype=float)

    def prox(self, gamma, y):
        gamma = check_positive(gamma, "gamma")
        y = check_point(y, self.dim, "y")
        g, X = self.g, self.constraint
        if g.prox is not None:
            if X.kind == "whole_space":
                return np.asarray(g.prox(gamma, y), dtype=float)
            if g.is_zero:
                return X.project(y)
            if X.kind == "box" and g.separable and g.convex:
                # separable convex 1-d problems: clipping the free minimizer is exact
                return np.clip(g.prox(gamma, y), X.lower, X.upper)
        return numeric_prox(g, gamma, y, X)

    def describe(self):
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        return {
            "name": self.name,
            "dim": self.dim,
            "params": {k: plain(v) for k, v in self.params.items()},
            "regularizer": self.g.name,
            "constraint": self.constraint.describe(),
            "lipschitz_g": self.lipschitz_g,
        }


def eval_objective(p, x):
    """Return ``f(x) + g(x)``."""
    return p.objective(x)


def clarke_subgrad_selection(p, x):
    """Return the problem's deterministic element of ``df(x)``."""
    return p.subgrad(x)


def prox_map(p, gamma, y):
    """Return a minimizer of ``g(z) + ||z - y||^2 / (2 gamma)`` over ``X``."""
    return p.prox(gamma, y)


# ---------------------------------------------------------------------------
# Built-in catalogue
# ---------------------------------------------------------------------------

KERNEL_ABS1D = 0
KERNEL_NORM = 1
KERNEL_LASSO = 2
KERNEL_BOX_LINEAR = 3
KERNEL_CIRCLE = 4


def _empty():
    return np.zeros(0)


def _kernel(kind, dim, A=None, b=None, lam=0.0, cvec=None, lower=None, upper=None, eps=0.0):
    A = np.zeros((0, dim)) if A is None else np.ascontiguousarray(A, dtype=float)
    return (
        kind,
        A,
        _empty() if b is None else np.ascontiguousarray(b, dtype=float),
        float(lam),
        _empty() if cvec is None else np.ascontiguousarray(cvec, dtype=float),
        _empty() if lower is None else np.ascontiguousarray(lower, dtype=float),
        _empty() if upper is None else np.ascontiguousarray(upper, dtype=float),
        float(eps),
    )


def _abs1d(params):
    _reject_unknown("abs1d", params, set())

    def flow(x0, times):
        x0 = float(x0[0])
        return (np.sign(x0) * np.maximum(abs(x0) - times, 0.0))[:, None]

    return ProblemSpec(
        dim=1,
        f_value=lambda x: abs(float(x[0])),
        f_subgrad=lambda x: np.sign(x),
        lipschitz_g=0.0,
        critical_set=CriticalSet("points", points=np.zeros((1, 1))),
        stationarity=lambda x: 0.0 if x[0] == 0 else 1.0,
        exact_flow=flow,
        nonsmooth_locus=lambda x: abs(float(x[0])),
        name="abs1d",
        kernel=_kernel(KERNEL_ABS1D, 1),
    )


def _norm_nd(params):
    _reject_unknown("norm_nd", params, {"dim"})
    dim = int(params.get("dim", 2))
    if dim < 1:
        raise ConfigurationError("norm_nd: dim must be >= 1")

    def subgrad(x):
        nx = np.linalg.norm(x)
        return x / nx if nx > 0 else np.zeros_like(x)

    def flow(x0, times):
        nx = np.linalg.norm(x0)
        if nx == 0:
            return np.tile(x0, (len(times), 1))
        shrink = np.maximum(nx - times, 0.0) / nx
        return shrink[:, None] * x0[None, :]

    return ProblemSpec(
        dim=dim,
        f_value=lambda x: float(np.linalg.norm(x)),
        f_subgrad=subgrad,
        lipschitz_g=0.0,
        critical_set=CriticalSet("points", points=np.zeros((1, dim))),
        stationarity=lambda x: 0.0 if not np.any(x) else 1.0,
        exact_flow=flow,
        nonsmooth_locus=lambda x: float(np.linalg.norm(x)),
        name="norm_nd",
        params={"dim": dim},
        kernel=_kernel(KERNEL_NORM, dim),
    )


def lasso_solution_diagonal(diag, b, lam):
    """Closed-form minimizer of ``0.5 ||diag(a) x - b||^2 + lam ||x||_1``."""
    diag = np.asarray(diag, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        sol = soft_threshold(diag * b, lam) / diag**2
    return np.where(diag == 0, 0.0, sol)


def _lasso(params):
    _reject_unknown("lasso", params, {"A", "b", "lam"})
    A = np.atleast_2d(np.array(params.get("A", np.eye(2)), dtype=float))
    m, dim = A.shape
    b = np.array(params.get("b", np.zeros(m)), dtype=float).reshape(-1)
    if b.size != m:
        raise ConfigurationError(f"lasso: b must have length {m}")
    lam = float(params.get("lam", 1.0))
    if lam < 0:
        raise ConfigurationError("lasso: lam must be >= 0")
    g = l1_regularizer(lam)
    AtA = A.T @ A
    Atb = A.T @ b

    def f_value(x):
        r = A @ x - b
        return 0.5 * float(r @ r)

    def f_subgrad(x):
        return A.T @ (A @ x - b)

    def stationarity(x):
        grad = f_subgrad(x)
        res = np.where(x != 0, grad + lam * np.sign(x), soft_threshold(grad, lam))
        return float(np.linalg.norm(res))

    critical = None
    is_diag = m == dim and np.allclose(A, np.diag(np.diag(A)))
    if is_diag:
        critical = CriticalSet("points", points=lasso_solution_diagonal(np.diag(A), b, lam)[None, :])

    exact_flow = None
    if lam == 0:
        evals, Q = np.linalg.eigh(AtA)
        rhs = Q.T @ Atb

        def exact_flow(x0, times):
            z0 = Q.T @ x0
            t = np.asarray(times, dtype=float)[:, None]
            pos = evals > 1e-14 * max(1.0, evals.max())
            z = np.empty((t.shape[0], dim))
            zstar = np.where(pos, rhs / np.where(pos, evals, 1.0), 0.0)
            decay = np.exp(-np.where(pos, evals, 0.0)[None, :] * t)
            z[:] = np.where(pos, zstar + decay * (z0 - zstar), z0 + t * rhs)
            return z @ Q.T

    return ProblemSpec(
        dim=dim,
        f_value=f_value,
        f_subgrad=f_subgrad,
        g=g,
        lipschitz_g=lam * math.sqrt(dim),
        critical_set=critical,
        stationarity=stationarity,
        exact_flow=exact_flow,
        name="lasso",
        params={"A": A, "b": b, "lam": lam},
        kernel=_kernel(KERNEL_LASSO, dim, A=A, b=b, lam=lam),
    )


def _box_linear(params):
    _reject_unknown("box_linear", params, {"c", "lower", "upper"})
    c = np.array(params.get("c", [1.0, -1.0]), dtype=float).reshape(-1)
    dim = c.size
    lower = np.array(params.get("lower", -np.ones(dim)), dtype=float).reshape(-1)
    upper = np.array(params.get("upper", np.ones(dim)), dtype=float).reshape(-1)
    if lower.size != dim or upper.size != dim:
        raise ConfigurationError("box_linear: c, lower and upper must have equal length")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ConfigurationError("box_linear: bounds must be finite")
    X = ConstraintSet.box(lower, upper)

    def stationarity(x):
        res = c.copy()
        at_low = x <= lower + BOUNDARY_TOL
        at_up = x >= upper - BOUNDARY_TOL
        res[at_low] = np.maximum(-c[at_low], 0.0)
        res[at_up] = np.maximum(c[at_up], 0.0)
        res[at_low & at_up] = 0.0
        return float(np.linalg.norm(res))

    critical = None
    if np.all(c != 0):
        vertex = np.where(c > 0, lower, upper)
        critical = CriticalSet("points", points=vertex[None, :])

    return ProblemSpec(
        dim=dim,
        f_value=lambda x: float(c @ x),
        f_subgrad=lambda x: c.copy(),
        constraint=X,
        lipschitz_g=0.0,
        critical_set=critical,
        stationarity=stationarity,
        name="box_linear",
        params={"c": c, "lower": lower, "upper": upper},
        kernel=_kernel(KERNEL_BOX_LINEAR, dim, cvec=c, lower=lower, upper=upper),
    )


def circle_value(x, eps, kink=0.0):
    r = math.hypot(x[0], x[1])
    h = 2.0 * x[1] / (1.0 + r * r)
    s = r - 1.0
    return (s * s + kink * abs(s)) * (1.0 + eps * h)


def circle_grad(x, eps, kink=0.0):
    """Gradient of ``phi(r) (1 + eps * 2 y / (1 + r^2))`` with ``phi(r) = (r-1)^2 + kink |r-1|``.

    On the circle the minimal-norm Clarke element is 0. At the origin the
    Clarke subdifferential is the disc of radius ``2 + kink`` around
    ``(0, 2 eps (1 + kink))``, which contains 0 under the parameter bounds
    enforced by :func:`builtin_problem`; the selection returns 0 there too.
    """
    px, py = float(x[0]), float(x[1])
    r2 = px * px + py * py
    if r2 == 0.0:
        return np.zeros(2)
    r = math.sqrt(r2)
    s = r - 1.0
    den = 1.0 + r2
    h = 2.0 * py / den
    dh_x = -4.0 * py * px / (den * den)
    dh_y = 2.0 / den - 4.0 * py * py / (den * den)
    phi = s * s + kink * abs(s)
    dphi = 2.0 * s + (0.0 if s == 0.0 else math.copysign(kink, s))
    radial = dphi * (1.0 + eps * h) / r
    return np.array([radial * px + phi * eps * dh_x, radial * py + phi * eps * dh_y])


def _circle_oscillator(params):
    _reject_unknown("circle_oscillator", params, {"eps", "kink"})
    eps = float(params.get("eps", 0.1))
    kink = float(params.get("kink", 0.0))
    if kink < 0:
        raise ConfigurationError("circle_oscillator: kink must be >= 0")
    # keeps the radial derivative away from zero off the circle, so the
    # critical set is exactly the circle and the origin
    eps_max = (2.0 + kink) / (4.0 + 3.0 * kink)
    if not 0 <= eps < eps_max:
        raise ConfigurationError(f"circle_oscillator: eps must lie in [0, {eps_max:.4g})")

    def stationarity(x):
        return float(np.linalg.norm(circle_grad(x, eps, kink)))

    return ProblemSpec(
        dim=2,
        f_value=lambda x: circle_value(x, eps, kink),
        f_subgrad=lambda x: circle_grad(x, eps, kink),
        lipschitz_g=0.0,
        critical_set=CriticalSet(
            "circle",
            points=np.zeros((1, 2)),
            center=np.zeros(2),
            radius=1.0,
            note="unit circle plus the origin (a local maximum)",
        ),
        stationarity=stationarity,
        nonsmooth_locus=lambda x: float(
            min(np.linalg.norm(x), abs(np.linalg.norm(x) - 1.0)) if kink > 0 else np.linalg.norm(x)
        ),
        name="circle_oscillator",
        params={"eps": eps, "kink": kink},
        kernel=_kernel(KERNEL_CIRCLE, 2, lam=kink, eps=eps),
    )


BUILTINS = {
    "abs1d": _abs1d,
    "norm_nd": _norm_nd,
    "lasso": _lasso,
    "box_linear": _box_linear,
    "circle_oscillator": _circle_oscillator,
}


def _reject_unknown(name, params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise ConfigurationError(
            f"{name}: unknown parameter(s) {sorted(extra)}; allowed: {sorted(allowed)}"
        )


def builtin_problem(name, params=None):
    """Build a catalogue problem by name.

    >>> builtin_problem("abs1d").objective([-2.0])
    2.0
    """
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; valid names: {', '.join(sorted(BUILTINS))}"
        ) from None
    return factory(dict(params or {}))
