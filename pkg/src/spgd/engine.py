"""The stochastic proximal subgradient iteration and its trajectory records.

One step from ``x_n`` with step ``gamma_n`` and noise ``eta_{n+1}``::

    v      = selection from df(x_n)
    x_half = x_n - gamma_n v + gamma_n eta_{n+1}
    x_next = prox_{gamma_n g, X}(x_half)
    w      = (x_n - x_next) / gamma_n + eta_{n+1}

``w`` is the combined drift (subgradient of ``f`` plus the implicit
subgradient of ``g`` and normal-cone element at ``x_next``), defined so that
``x_next = x_n - gamma_n w + gamma_n eta_{n+1}`` holds by construction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import (
    ConfigurationError,
    InputError,
    NumericalBlowupError,
    check_point,
    check_positive,
)
from .problems import BOUNDARY_TOL, ProblemSpec
from .schedule import NoiseModel, Schedule, _accumulate, validate_schedule

DEFAULT_BOUND = 1e6
MAX_STORED_STEPS = 10**7
FLOAT_FORMAT = ".17g"


@dataclass(frozen=True)
class StepRecord:
    n: int
    x: np.ndarray
    gamma: float
    v: np.ndarray
    eta: np.ndarray
    x_half: np.ndarray
    x_next: np.ndarray
    w: np.ndarray
    tau: float
    fg: float


def _step(p, x, gamma, eta):
    v = p.subgrad(x)
    x_half = x - gamma * v + gamma * eta
    x_next = p.prox(gamma, x_half)
    w = (x - x_next) / gamma + eta
    return v, x_half, x_next, w


def spgd_step(p: ProblemSpec, x, gamma, eta, n=0, tau=math.nan) -> StepRecord:
    """One proximal subgradient step; raises on any non-finite field."""
    gamma = check_positive(gamma, "gamma")
    x = check_point(x, p.dim)
    eta = check_point(eta, p.dim, "eta")
    if not p.constraint.contains(x, BOUNDARY_TOL):
        raise InputError("x is not in the constraint set")
    v, x_half, x_next, w = _step(p, x, gamma, eta)
    fg = p.objective(x)
    for arr in (v, x_half, x_next, w):
        if not np.all(np.isfinite(arr)):
            raise NumericalBlowupError("non-finite value in step", n)
    if not math.isfinite(fg):
        raise NumericalBlowupError("non-finite objective", n)
    return StepRecord(n, x, gamma, v, eta, x_half, x_next, w, tau, fg)


def step_bound_check(rec: StepRecord, L_g) -> bool:
    """``||x_next - x|| <= gamma L_g + ||x - x_half|| + 1e-9``."""
    jump = np.linalg.norm(rec.x_next - rec.x)
    return bool(jump <= rec.gamma * L_g + np.linalg.norm(rec.x - rec.x_half) + 1e-9)


def step_bound_slack(traj, L_g):
    """Per-step ``gamma L_g + ||x - x_half|| - ||x_next - x||``."""
    jump = np.linalg.norm(traj.x_next - traj.x, axis=1)
    return traj.gamma * L_g + np.linalg.norm(traj.x - traj.x_half, axis=1) - jump


class _RecordView(Sequence):
    def __init__(self, traj):
        self._traj = traj

    def __len__(self):
        return len(self._traj)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._traj.record(j) for j in range(*i.indices(len(self)))]
        return self._traj.record(i)


class Trajectory:
    """Columnar storage of the step records of one run.

    Row ``i`` describes step ``n[i]``: ``x[i]`` is ``x_n``, ``x_next[i]`` is
    ``x_{n+1}``, ``eta[i]`` the noise added during the step and ``tau[i]``
    the discrete time ``tau_n``. The iterate reached after the last step is
    ``x_end`` at index ``n_steps``.

    Untinned runs keep every step, so ``n[i] == i`` and ``points`` is the
    full sequence ``x_0, ..., x_N``.
    """

    def __init__(self, n, x, gamma, v, eta, x_half, x_next, w, tau, fg,
                 x_end, tau_end, fg_end, n_steps, metadata=None,
                 bound_violated=False, error=None, error_step=None, thinning=1,
                 keep_regions=()):
        self.n = n
        self.x = x
        self.gamma = gamma
        self.v = v
        self.eta = eta
        self.x_half = x_half
        self.x_next = x_next
        self.w = w
        self.tau = tau
        self.fg = fg
        self.x_end = x_end
        self.tau_end = float(tau_end)
        self.fg_end = float(fg_end)
        self.n_steps = int(n_steps)
        self.metadata = dict(metadata or {})
        self.bound_violated = bool(bound_violated)
        self.error = error
        self.error_step = error_step
        self.thinning = int(thinning)
        self.keep_regions = tuple(keep_regions)

    def __len__(self):
        return self.n.shape[0]

    @property
    def dim(self):
        return self.x_end.shape[0]

    @property
    def is_thinned(self):
        return len(self) != self.n_steps

    @property
    def records(self):
        return _RecordView(self)

    def record(self, i) -> StepRecord:
        if i < 0:
            i += len(self)
        return StepRecord(
            int(self.n[i]), self.x[i].copy(), float(self.gamma[i]), self.v[i].copy(),
            self.eta[i].copy(), self.x_half[i].copy(), self.x_next[i].copy(),
            self.w[i].copy(), float(self.tau[i]), float(self.fg[i]),
        )

    @property
    def points(self):
        """Stored iterates followed by the final one, shape ``(len + 1, dim)``."""
        return np.vstack((self.x, self.x_end[None, :]))

    @property
    def point_index(self):
        return np.append(self.n, self.n_steps)

    @property
    def taus(self):
        return np.append(self.tau, self.tau_end)

    @property
    def objective_values(self):
        return np.append(self.fg, self.fg_end)

    def update_residuals(self):
        """``||x_next - x + gamma w - gamma eta||`` per step."""
        g = self.gamma[:, None]
        return np.linalg.norm(self.x_next - self.x + g * self.w - g * self.eta, axis=1)

    # --- persistence -----------------------------------------------------

    def columns(self):
        d = self.dim
        return (["n", "tau", "gamma"]
                + [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)]
                + [f"eta{i}" for i in range(d)] + [f"w{i}" for i in range(d)] + ["fg"])

    def sidecar(self):
        return {
            "format": "spgd-trajectory/1",
            "dim": self.dim,
            "n_steps": self.n_steps,
            "stored_rows": len(self),
            "thinning": self.thinning,
            "keep_regions": [r.describe() for r in self.keep_regions],
            "bound_violated": self.bound_violated,
            "error": self.error,
            "error_step": self.error_step,
            "final": {"n": self.n_steps, "x": self.x_end.tolist(),
                      "tau": self.tau_end, "fg": self.fg_end},
            "metadata": self.metadata,
        }

    def to_csv(self, path, sidecar=True):
        """Write one row per stored step plus a ``.json`` metadata sidecar."""
        path = Path(path)
        fmt = FLOAT_FORMAT
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(self.columns())
            for i in range(len(self)):
                row = [str(int(self.n[i])), format(self.tau[i], fmt), format(self.gamma[i], fmt)]
                for arr in (self.x, self.v, self.eta, self.w):
                    row.extend(format(val, fmt) for val in arr[i])
                row.append(format(self.fg[i], fmt))
                out.writerow(row)
        if sidecar:
            sidecar_path(path).write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_csv(cls, path):
        """Read a trajectory written by :meth:`to_csv` (needs the sidecar)."""
        path = Path(path)
        meta = json.loads(sidecar_path(path).read_text())
        d = int(meta["dim"])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] == 0:
            data = np.zeros((0, 3 + 4 * d + 1))
        if data.shape[1] != 3 + 4 * d + 1:
            raise InputError(f"{path}: expected {3 + 4 * d + 1} columns, found {data.shape[1]}")
        n = data[:, 0].astype(np.int64)
        tau, gamma = data[:, 1], data[:, 2]
        x, v, eta, w = (data[:, 3 + k * d: 3 + (k + 1) * d] for k in range(4))
        fg = data[:, -1]
        g = gamma[:, None]
        x_half = x - g * v + g * eta
        final = meta["final"]
        x_end = np.array(final["x"], dtype=float)
        x_next = np.empty_like(x)
        if len(n):
            x_next[:-1] = x[1:]
            x_next[-1] = x_end
            gaps = np.nonzero(np.diff(n) != 1)[0]
            if n[-1] + 1 != meta["n_steps"]:
                gaps = np.append(gaps, len(n) - 1)
            x_next[gaps] = x[gaps] - g[gaps] * w[gaps] + g[gaps] * eta[gaps]
        return cls(
            n, x, gamma, v, eta, x_half, x_next, w, tau, fg,
            x_end, final["tau"], final["fg"], meta["n_steps"], meta.get("metadata"),
            meta.get("bound_violated", False), meta.get("error"), meta.get("error_step"),
            meta.get("thinning", 1),
        )


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json") if path.suffix != ".csv" else path.with_suffix(".json")


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def _python_chunk(p, x0, gammas, etas, bound, X, V, XH, W, FG):
    from ._kernels import STATUS_BOUND, STATUS_NONFINITE, STATUS_OK

    X[0] = x0
    FG[0] = p.objective(x0)
    for n in range(gammas.shape[0]):
        v, x_half, x_next, w = _step(p, X[n], gammas[n], etas[n])
        fg = p.objective(x_next)
        V[n], XH[n], W[n], X[n + 1] = v, x_half, w, x_next
        finite = all(np.all(np.isfinite(a)) for a in (v, x_half, x_next, w))
        if not finite or not math.isfinite(fg):
            return STATUS_NONFINITE, n
        FG[n + 1] = fg
        if np.linalg.norm(x_next) > bound:
            return STATUS_BOUND, n + 1
    return STATUS_OK, gammas.shape[0]


def _compiled_chunk(p, x0, gammas, etas, bound, X, V, XH, W, FG):
    from ._kernels import run_chunk

    X[0] = x0
    return run_chunk(*p.kernel, gammas, etas, float(bound), X, V, XH, W, FG)


def _check_schedule(s, m, n_iters, override):
    report = validate_schedule(s, m.q, horizon=max(1000, min(n_iters, 10**6)))
    if report.passed or override:
        return report
    if m.is_zero and report.failed_conditions == ["noise_summability"]:
        # without noise the moment condition has nothing to control
        return report
    raise ConfigurationError(
        f"{report.summary()}; pass override=True to run anyway"
    )


def run_spgd(p: ProblemSpec, s: Schedule, m: NoiseModel, x0, n_iters, bound=DEFAULT_BOUND,
             seed=0, *, override=False, thinning=None, keep_regions=(), compiled=None,
             chunk_size=1 << 16) -> Trajectory:
    """Run ``n_iters`` steps from ``x0``.

    The run stops early when an iterate leaves the ball of radius ``bound``
    (``bound_violated`` is set) or when a value becomes non-finite (``error``
    is set and the offending step is dropped). Results depend only on the
    arguments, including ``seed``.

    Parameters
    ----------
    override : bool
        Run even if the schedule fails validation. Zero-noise runs only need
        the divergence condition.
    thinning : int, optional
        Keep every ``thinning``-th step plus every step whose start or end
        iterate lies in one of ``keep_regions``. Runs longer than ``10**7``
        steps are thinned automatically.
    compiled : bool, optional
        Force (or forbid) the compiled loop. By default it is used whenever
        the problem provides a kernel.
    """
    n_iters = int(n_iters)
    if n_iters < 1:
        raise InputError("n_iters must be >= 1")
    bound = check_positive(bound, "bound")
    x0 = check_point(x0, p.dim, "x0")
    if not p.constraint.contains(x0, BOUNDARY_TOL):
        raise InputError("x0 is not in the constraint set")
    report = _check_schedule(s, m, n_iters, override)
    if thinning is None:
        thinning = 1 if n_iters <= MAX_STORED_STEPS else -(-n_iters // MAX_STORED_STEPS)
    thinning = int(thinning)
    if thinning < 1:
        raise InputError("thinning must be >= 1")
    if compiled is None:
        compiled = p.kernel is not None
    if compiled and p.kernel is None:
        raise InputError("this problem has no compiled kernel")
    advance = _compiled_chunk if compiled else _python_chunk

    d = p.dim
    metadata = {
        "problem": p.describe(),
        "schedule": s.describe(),
        "noise": m.describe(),
        "seed": int(seed),
        "x0": x0.tolist(),
        "n_iters": n_iters,
        "bound": bound,
        "thinning": thinning,
        "validation": report.to_dict(),
        "engine": "compiled" if compiled else "python",
    }

    parts = {k: [] for k in ("n", "x", "gamma", "v", "eta", "x_half", "x_next", "w", "tau", "fg")}
    x = x0
    carry = 0.0
    bound_violated = False
    error = error_step = None
    done = 0
    fg_end = p.objective(x0)
    if np.linalg.norm(x0) > bound:
        bound_violated = True
        n_iters = 0

    while done < n_iters:
        k = min(chunk_size, n_iters - done)
        g_ext = s.gammas(done, done + k + 1)
        gam = g_ext[:k]
        if np.any(gam <= 0):
            raise InputError("step sizes must be positive")
        etas = m.block(seed, done, done + k, d)
        taus = np.concatenate(([carry], _accumulate(carry, g_ext[1:])))
        X = np.empty((k + 1, d))
        V = np.empty((k, d))
        XH = np.empty((k, d))
        W = np.empty((k, d))
        FG = np.empty(k + 1)
        status, count = advance(p, x, gam, etas, bound, X, V, XH, W, FG)
        if status == 2:
            error = f"non-finite value at step {done + count}"
            error_step = done + count

        idx = np.arange(done, done + count)
        keep = slice(0, count)
        if thinning > 1:
            mask = (idx % thinning) == 0
            for region in keep_regions:
                inside = region.contains_many(X[: count + 1])
                mask |= inside[:count] | inside[1: count + 1]
            keep = np.nonzero(mask)[0]
        parts["n"].append(idx[keep])
        parts["x"].append(X[:count][keep])
        parts["x_next"].append(X[1: count + 1][keep])
        parts["gamma"].append(gam[:count][keep])
        parts["v"].append(V[:count][keep])
        parts["eta"].append(etas[:count][keep])
        parts["x_half"].append(XH[:count][keep])
        parts["w"].append(W[:count][keep])
        parts["tau"].append(taus[:count][keep])
        parts["fg"].append(FG[:count][keep])

        x = X[count].copy()
        fg_end = FG[count]
        carry = taus[count]
        done += count
        if status == 1:
            bound_violated = True
            metadata["bound_step"] = done
        if status != 0:
            break

    if error is not None:
        metadata["error"] = error
    cols = {}
    for key, chunks in parts.items():
        if chunks:
            cols[key] = np.concatenate(chunks)
        elif key in ("n",):
            cols[key] = np.zeros(0, dtype=np.int64)
        elif key in ("gamma", "tau", "fg"):
            cols[key] = np.zeros(0)
        else:
            cols[key] = np.zeros((0, d))
    return Trajectory(
        cols["n"], cols["x"], cols["gamma"], cols["v"], cols["eta"], cols["x_half"],
        cols["x_next"], cols["w"], cols["tau"], cols["fg"],
        x, carry, fg_end, done, metadata, bound_violated, error, error_step,
        thinning, keep_regions,
    )
