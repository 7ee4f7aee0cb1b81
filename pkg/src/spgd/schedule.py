"""Step-size schedules, martingale noise models and their validators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from ._validation import (
    ConfigurationError,
    InputError,
    SummableScheduleError,
    check_positive,
)

_BLOCK = 1 << 16
_CACHE_LIMIT = 1 << 23
_STREAM_BLOCK = 1 << 20
WINDOW_CAP = 10**9


def _accumulate(carry, steps):
    """Sequential running sums ``carry + s_1, carry + s_1 + s_2, ...``.

    ``np.cumsum`` adds left to right, so splitting a long sum into blocks
    that are seeded with the previous block's last value gives the same bits
    as one pass over the whole sequence.
    """
    return np.cumsum(np.concatenate(([carry], steps)))[1:]


class Schedule:
    """Step-size sequence ``gamma_n``, the step taken from ``x_n`` to ``x_{n+1}``.

    Use :meth:`power`, :meth:`constant` or :meth:`custom`. Power schedules use
    ``gamma_n = c * max(n, 1) ** -alpha`` so that ``gamma_0 = c``.

    The discrete time ``tau_n = gamma_1 + ... + gamma_n`` (with ``tau_0 = 0``)
    comes from a lazily grown prefix-sum table.
    """

    def __init__(self, kind, c=1.0, alpha=None, func=None, vectorized=False, label=None):
        self.kind = kind
        self.c = c
        self.alpha = alpha
        self._func = func
        self._vectorized = vectorized
        self._label = label
        self._tau = np.zeros(1)

    @classmethod
    def power(cls, c=1.0, alpha=0.7):
        c = check_positive(c, "c")
        alpha = float(alpha)
        if not 0 < alpha <= 1:
            raise InputError(f"alpha must lie in (0, 1], got {alpha}")
        return cls("power", c=c, alpha=alpha)

    @classmethod
    def constant(cls, c=0.1):
        return cls("constant", c=check_positive(c, "c"))

    @classmethod
    def custom(cls, func, vectorized=False, label="custom"):
        """Wrap ``func(n) -> gamma_n``.

        With ``vectorized=True`` the function receives an integer array and
        must return an array of the same length.
        """
        if not callable(func):
            raise InputError("custom schedule needs a callable")
        return cls("custom", func=func, vectorized=vectorized, label=label)

    def gammas(self, n0, n1):
        """``gamma_n`` for ``n0 <= n < n1``."""
        if n0 < 0 or n1 < n0:
            raise InputError("need 0 <= n0 <= n1")
        if self.kind == "constant":
            return np.full(n1 - n0, self.c)
        n = np.arange(n0, n1, dtype=np.float64)
        if self.kind == "power":
            return self.c * np.maximum(n, 1.0) ** (-self.alpha)
        if self._vectorized:
            out = np.asarray(self._func(np.arange(n0, n1)), dtype=np.float64)
        else:
            out = np.fromiter((self._func(i) for i in range(n0, n1)), np.float64, n1 - n0)
        if out.shape != (n1 - n0,) or np.any(~np.isfinite(out)) or np.any(out < 0):
            raise InputError("custom schedule returned negative or non-finite steps")
        return out

    def gamma(self, n):
        return float(self.gammas(n, n + 1)[0])

    def _grow(self, n):
        while self._tau.size <= n:
            start = self._tau.size
            stop = min(max(n + 1, start + _BLOCK), _CACHE_LIMIT + 1)
            block = _accumulate(self._tau[-1], self.gammas(start, stop))
            self._tau = np.concatenate((self._tau, block))

    def _stream(self, n0, n1):
        """``tau_n`` for ``n0 <= n < n1`` past the cache, without storing it."""
        top = self._tau.size - 1
        carry = self._tau[top]
        pos = top + 1
        pieces = []
        while pos < n1:
            stop = min(pos + _STREAM_BLOCK, n1)
            block = _accumulate(carry, self.gammas(pos, stop))
            carry = block[-1]
            if stop > n0:
                pieces.append(block[max(n0 - pos, 0):])
            pos = stop
        return np.concatenate(pieces) if pieces else np.zeros(0)

    def taus(self, n0, n1):
        """``tau_n`` for ``n0 <= n < n1``."""
        if n0 < 0 or n1 < n0:
            raise InputError("need 0 <= n0 <= n1")
        if n1 - 1 <= _CACHE_LIMIT:
            self._grow(n1 - 1)
            return self._tau[n0:n1].copy()
        self._grow(_CACHE_LIMIT)
        head = self._tau[n0:].copy() if n0 < self._tau.size else np.zeros(0)
        return np.concatenate((head, self._stream(max(n0, self._tau.size), n1)))

    def tau(self, n):
        if n < 0:
            raise InputError("n must be >= 0")
        return float(self.taus(n, n + 1)[0])

    def window_end(self, T, n, cap=WINDOW_CAP):
        """Smallest ``j >= n`` with ``tau_j - tau_n >= T``.

        A relative slack of ``1e-12 * max(1, T)`` absorbs rounding in the
        prefix sums so that, e.g., ten steps of 0.1 cover a window of length 1.
        """
        T = check_positive(T, "T")
        if n < 0:
            raise InputError("n must be >= 0")
        target = T - 1e-12 * max(1.0, T)
        base = self.tau(n)
        pos = n
        while pos - n <= cap:
            stop = min(pos + max(_BLOCK, pos - n), n + cap + 1)
            block = self.taus(pos, stop)
            hit = np.nonzero(block - base >= target)[0]
            if hit.size:
                return int(pos + hit[0])
            pos = stop
        raise SummableScheduleError(
            f"no window of length {T} starting at {n} within {cap} steps; "
            "the schedule looks summable"
        )

    def describe(self):
        if self.kind == "power":
            return {"kind": "power", "c": self.c, "alpha": self.alpha}
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c}
        return {"kind": "custom", "label": self._label}

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.describe().items() if k != "kind")
        return f"Schedule.{self.kind}({params})"


def tau(s, n):
    return s.tau(n)


def window_end(s, T, n, cap=WINDOW_CAP):
    return s.window_end(T, n, cap=cap)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    """Outcome of checking ``sum gamma = inf`` and ``sum gamma^(1+q/2) < inf``.

    ``step_divergence`` and ``noise_summability`` are ``True`` when the
    condition holds. ``empirical`` marks verdicts inferred from finitely many
    terms (custom schedules) rather than decided analytically.
    """

    schedule: dict
    q: float
    horizon: int
    step_divergence: bool
    noise_summability: bool
    empirical: bool
    partial_sums: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.step_divergence and self.noise_summability

    @property
    def failed_conditions(self):
        out = []
        if not self.step_divergence:
            out.append("step_divergence")
        if not self.noise_summability:
            out.append("noise_summability")
        return out

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def summary(self):
        tag = " (empirical)" if self.empirical else ""
        if self.passed:
            return f"schedule PASS{tag}"
        return f"schedule FAIL {', '.join(self.failed_conditions)}{tag}"

    def to_dict(self):
        return {
            "schedule": self.schedule,
            "q": self.q,
            "horizon": self.horizon,
            "step_divergence": self.step_divergence,
            "noise_summability": self.noise_summability,
            "empirical": self.empirical,
            "verdict": self.verdict,
            "summary": self.summary(),
            "partial_sums": self.partial_sums,
            "notes": list(self.notes),
        }


def _tail_exponent(s, horizon):
    """Least-squares slope of ``-log gamma_n`` against ``log n`` on the last decade."""
    lo = max(horizon // 10, 1)
    idx = np.unique(np.geomspace(lo, horizon, 200).astype(np.int64))
    g = np.array([s.gamma(int(i)) for i in idx])
    if np.any(g <= 0):
        return math.inf
    slope = np.polyfit(np.log(idx), -np.log(g), 1)[0]
    return float(slope)


def validate_schedule(s, q=2.0, horizon=10**6):
    """Decide the two summability conditions for ``s`` with moment order ``q``.

    Power and constant schedules are p-series and are decided exactly:
    ``sum n^-p`` converges iff ``p > 1``. Custom schedules get partial sums at
    ``horizon`` and a tail-exponent estimate; the verdict is then flagged as
    empirical and should be read as a heuristic.
    """
    q = float(q)
    if q < 2:
        raise InputError("q must be >= 2")
    if horizon < 10**3:
        raise InputError("horizon must be >= 1000")
    p = 1.0 + q / 2.0
    notes = []
    if s.kind == "constant":
        div, summ, empirical = True, False, False
    elif s.kind == "power":
        div = s.alpha <= 1.0
        summ = s.alpha * p > 1.0
        empirical = False
    else:
        empirical = True
        a = _tail_exponent(s, horizon)
        # a tail exponent within 5% of the critical value is undecidable here
        div = a <= 1.0 * 1.05
        summ = a * p > 1.0 * 1.05
        notes.append(f"estimated tail exponent {a:.4g}")
        if abs(a - 1.0) < 0.05 or abs(a * p - 1.0) < 0.05:
            notes.append("inconclusive: exponent near a critical value")
    g = s.gammas(0, horizon + 1)
    partial = {
        "sum_gamma": float(np.sum(g[1:])),
        "sum_gamma_pow": float(np.sum(g[1:] ** p)),
        "exponent": p,
    }
    return ValidationReport(
        schedule=s.describe(),
        q=q,
        horizon=int(horizon),
        step_divergence=bool(div),
        noise_summability=bool(summ),
        empirical=empirical,
        partial_sums=partial,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

_U53 = 2.0**-53


def _words(seed, n0, n1, width):
    """Raw 64-bit words for stream indices ``n0 <= k < n1``; ``width`` per index.

    The Philox counter is positioned at ``k * blocks`` so that every index
    owns a fixed, disjoint slice of the stream regardless of how the range is
    split into calls.
    """
    blocks = -(-width // 4)
    bg = Philox(key=int(seed), counter=int(n0) * blocks)
    raw = bg.random_raw((n1 - n0) * blocks * 4)
    return raw.reshape(n1 - n0, blocks * 4)[:, :width]


def _uniform(words):
    return (words >> np.uint64(11)).astype(np.float64) * _U53


class NoiseModel:
    """Martingale-difference noise ``eta_{n+1}`` with moment order ``q``.

    Built-in kinds are ``zero``, ``gaussian(sigma)`` and
    ``bounded_uniform(a)``, all i.i.d. across steps and therefore
    conditionally centred. The noise added at step ``n`` is read from the
    counter-based stream at index ``n + 1`` and depends on nothing else, so
    replaying a seed is exact.

    A custom sampler is called as ``sampler(generator, n, dim)`` with a fresh
    generator keyed by ``(seed, n + 1)``; it must return a centred draw.
    """

    KINDS = ("zero", "gaussian", "bounded_uniform", "custom")

    def __init__(self, kind="zero", sigma=0.0, a=0.0, q=2.0, sampler=None):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown noise kind {kind!r}; valid: {', '.join(self.KINDS)}")
        q = float(q)
        if not q >= 2:
            raise InputError("q must be >= 2")
        if kind == "custom" and not callable(sampler):
            raise InputError("custom noise needs a sampler")
        self.kind = kind
        self.sigma = check_positive(sigma, "sigma", allow_zero=True)
        self.a = check_positive(a, "a", allow_zero=True)
        self.q = q
        self.sampler = sampler

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def gaussian(cls, sigma, q=2.0):
        return cls("gaussian", sigma=sigma, q=q)

    @classmethod
    def bounded_uniform(cls, a, q=2.0):
        return cls("bounded_uniform", a=a, q=q)

    @classmethod
    def custom(cls, sampler, q=2.0):
        return cls("custom", sampler=sampler, q=q)

    @property
    def is_zero(self):
        return (
            self.kind == "zero"
            or (self.kind == "gaussian" and self.sigma == 0)
            or (self.kind == "bounded_uniform" and self.a == 0)
        )

    def block(self, seed, n0, n1, dim):
        """Noise rows for steps ``n0 <= n < n1`` (that is ``eta_{n0+1}, ...``)."""
        if n1 < n0 or n0 < 0:
            raise InputError("need 0 <= n0 <= n1")
        if dim < 1:
            raise InputError("dim must be >= 1")
        k = n1 - n0
        if self.is_zero:
            return np.zeros((k, dim))
        if self.kind == "custom":
            out = np.empty((k, dim))
            for j, n in enumerate(range(n0, n1)):
                gen = Generator(Philox(key=(int(seed) << 64) + n + 1))
                out[j] = np.asarray(self.sampler(gen, n, dim), dtype=np.float64).reshape(dim)
            return out
        if self.kind == "bounded_uniform":
            u = _uniform(_words(seed, n0 + 1, n1 + 1, dim))
            return self.a * (2.0 * u - 1.0)
        pairs = -(-dim // 2)
        u = _uniform(_words(seed, n0 + 1, n1 + 1, 2 * pairs)).reshape(k, pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[..., 0]))
        angle = 2.0 * np.pi * u[..., 1]
        z = np.stack((radius * np.cos(angle), radius * np.sin(angle)), axis=-1)
        return self.sigma * z.reshape(k, 2 * pairs)[:, :dim]

    def describe(self):
        out = {"kind": self.kind, "q": self.q}
        if self.kind == "gaussian":
            out["sigma"] = self.sigma
        elif self.kind == "bounded_uniform":
            out["a"] = self.a
        return out

    def __repr__(self):
        return f"NoiseModel({self.describe()})"


def sample_noise(m, seed, n, dim):
    """The noise vector added at step ``n`` (``eta_{n+1}``) for stream ``seed``."""
    return m.block(seed, n, n + 1, dim)[0]
