"""STL abstract syntax and discrete-time evaluation.

Formulas evaluate over named, uniformly sampled real signals. Evaluation
is batched: every operator maps (K, n) robustness signals to (K, n)
robustness signals, so scoring a thousand rollout traces costs the same
numpy calls as scoring one.

Time intervals are given in seconds and mapped to sample windows
[ceil(a/dt), floor(b/dt)] (with a small epsilon so exact multiples land
on the intended index). Truncation at the trace end is weak for G
(vacuously true once the window is empty) and strong for F / Until
(missing witness counts as -inf robustness).

Boolean satisfaction is robustness >= 0: exact-zero robustness counts as
satisfied (boundary convention, kept consistent everywhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_IDX_EPS = 1e-9

COMPARATORS = (">", ">=", "<", "<=")


class EvaluationError(ValueError):
    """Raised when a formula references a channel the trace lacks."""


class SignalTrace:
    """Named equal-length signals sampled every dt seconds."""

    def __init__(self, dt: float, channels: dict):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if not channels:
            raise ValueError("trace needs at least one channel")
        lengths = {len(np.atleast_1d(v)) for v in channels.values()}
        if len(lengths) != 1:
            raise ValueError(f"channel lengths differ: {sorted(lengths)}")
        self.length = lengths.pop()
        if self.length < 1:
            raise ValueError("channels must have >= 1 sample")
        self.dt = float(dt)
        self.channels = {
            name: np.asarray(vals, dtype=float) for name, vals in channels.items()
        }

    def __len__(self) -> int:
        return self.length


def _interval_indices(a: float, b: float, dt: float, n: int):
    """Map a time interval [a, b] to inclusive sample offsets."""
    lo = int(math.ceil(a / dt - _IDX_EPS))
    hi = n - 1 if math.isinf(b) else int(math.floor(b / dt + _IDX_EPS))
    return max(lo, 0), min(hi, n - 1)


def _shift_left(x: np.ndarray, d: int, fill: float) -> np.ndarray:
    """x advanced by d samples along time, padded with fill."""
    if d == 0:
        return x
    out = np.full_like(x, fill)
    if d < x.shape[1]:
        out[:, : x.shape[1] - d] = x[:, d:]
    return out


class Formula:
    """Base class; subclasses implement `_rob` over (K, n) channel arrays."""

    def robustness_signal(self, channels: dict, dt: float) -> np.ndarray:
        """Robustness at every suffix start, for a batch of traces.

        Args:
            channels: name -> (K, n) array (or (n,) for a single trace).
            dt: sample period in seconds.

        Returns:
            (K, n) robustness values; row k, column t is the robustness
            of this formula over the suffix of trace k starting at t.
        """
        shaped = {}
        for name, vals in channels.items():
            arr = np.asarray(vals, dtype=float)
            shaped[name] = arr[None, :] if arr.ndim == 1 else arr
        return self._rob(shaped, dt)

    def _rob(self, ch: dict, dt: float) -> np.ndarray:
        raise NotImplementedError

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)

    def __str__(self) -> str:
        from .parser import to_text

        return to_text(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({str(self)!r})"


@dataclass(frozen=True, repr=False)
class TrueFormula(Formula):
    def _rob(self, ch, dt):
        if not ch:
            return np.full((1, 1), np.inf)
        return np.full(next(iter(ch.values())).shape, np.inf)


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    channel: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")

    def _rob(self, ch, dt):
        if self.channel not in ch:
            raise EvaluationError(f"trace has no channel {self.channel!r}")
        sig = ch[self.channel]
        if self.comparator in (">", ">="):
            return sig - self.threshold
        return self.threshold - sig


@dataclass(frozen=True, repr=False)
class Not(Formula):
    child: Formula

    def _rob(self, ch, dt):
        return -self.child._rob(ch, dt)


@dataclass(frozen=True, repr=False)
class And(Formula):
    left: Formula
    right: Formula

    def _rob(self, ch, dt):
        return np.minimum(self.left._rob(ch, dt), self.right._rob(ch, dt))


@dataclass(frozen=True, repr=False)
class Or(Formula):
    left: Formula
    right: Formula

    def _rob(self, ch, dt):
        return np.maximum(self.left._rob(ch, dt), self.right._rob(ch, dt))


def _check_interval(a, b):
    if not (0 <= a <= b):
        raise ValueError(f"bad interval [{a}, {b}]")


@dataclass(frozen=True, repr=False)
class Globally(Formula):
    a: float
    b: float
    child: Formula

    def __post_init__(self):
        _check_interval(self.a, self.b)

    def _rob(self, ch, dt):
        rho = self.child._rob(ch, dt)
        k, n = rho.shape
        lo, hi = _interval_indices(self.a, self.b, dt, n)
        if math.isinf(self.b):
            # suffix minimum from t + lo onward; empty window is vacuous
            suffix = np.minimum.accumulate(rho[:, ::-1], axis=1)[:, ::-1]
            return _shift_left(suffix, lo, np.inf)
        if lo > hi:  # window starts beyond every trace suffix
            return np.full((k, n), np.inf)
        return -_window_max(-rho, lo, hi)


@dataclass(frozen=True, repr=False)
class Eventually(Formula):
    a: float
    b: float
    child: Formula

    def __post_init__(self):
        _check_interval(self.a, self.b)

    def _rob(self, ch, dt):
        rho = self.child._rob(ch, dt)
        k, n = rho.shape
        lo, hi = _interval_indices(self.a, self.b, dt, n)
        if math.isinf(self.b):
            suffix = np.maximum.accumulate(rho[:, ::-1], axis=1)[:, ::-1]
            return _shift_left(suffix, lo, -np.inf)
        if lo > hi:
            return np.full((k, n), -np.inf)
        return _window_max(rho, lo, hi)


def _window_max(rho: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """max over samples [t+lo, t+hi], windows clipped at the trace end."""
    k, n = rho.shape
    width = hi - lo + 1
    padded = np.full((k, n + hi), -np.inf)
    padded[:, :n] = rho
    windows = np.lib.stride_tricks.sliding_window_view(padded, width, axis=1)
    return windows[:, lo : lo + n].max(axis=2)


@dataclass(frozen=True, repr=False)
class Until(Formula):
    a: float
    b: float
    left: Formula
    right: Formula

    def __post_init__(self):
        _check_interval(self.a, self.b)

    def _rob(self, ch, dt):
        lp = self.left._rob(ch, dt)
        rp = self.right._rob(ch, dt)
        k, n = rp.shape
        lo, hi = _interval_indices(self.a, self.b, dt, n)
        if lo == 0 and math.isinf(self.b):
            # backward recursion, O(n): R(t) = max(psi(t), min(phi(t), R(t+1)))
            res = np.empty_like(rp)
            res[:, n - 1] = rp[:, n - 1]
            for t in range(n - 2, -1, -1):
                res[:, t] = np.maximum(
                    rp[:, t], np.minimum(lp[:, t], res[:, t + 1])
                )
            return res
        # general case: scan witness offsets, keeping the running prefix
        # min of the left operand over [t, t + d)
        res = np.full((k, n), -np.inf)
        runmin = np.full((k, n), np.inf)
        for d in range(hi + 1):
            if d > 0:
                runmin = np.minimum(runmin, _shift_left(lp, d - 1, np.inf))
            if d >= lo:
                cand = np.minimum(_shift_left(rp, d, -np.inf), runmin)
                res = np.maximum(res, cand)
        return res


def robustness(formula: Formula, trace: SignalTrace, t_index: int = 0) -> float:
    """Quantitative satisfaction of the trace suffix starting at t_index."""
    if not 0 <= t_index < trace.length:
        raise ValueError(f"t_index {t_index} outside trace of length {trace.length}")
    signal = formula.robustness_signal(trace.channels, trace.dt)
    return float(signal[0, t_index])


def satisfies(formula: Formula, trace: SignalTrace, t_index: int = 0) -> bool:
    """Boolean satisfaction; robustness exactly 0 counts as satisfied."""
    return robustness(formula, trace, t_index) >= 0.0
