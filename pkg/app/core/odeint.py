"""
Fixed-step numerical integration.

- `rk4_integrate`: classical 4th-order Runge-Kutta on a uniform grid; the last
  step is shortened so the final sample lands exactly on t1.
- `cumulative_integral`: I(t) = int_{t0}^{t} e, by augmenting the RK4 state.
- `MonotoneMap` / `invert_monotone`: sampled strictly increasing s(t) and its
  inverse t(s).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from app.core.errors import DomainViolation, InversionError, NonMonotoneError, OutOfRangeError, SingularityError
from app.core.expr import Expr, as_expr, eval_grid
from app.core.settings import get_default_step, get_x_min

logger = logging.getLogger(__name__)

Field = Callable[[float, np.ndarray], np.ndarray]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Trajectory:
    """Samples of a state vector at t0, t0 + step, ..., t_final."""

    t0: float
    step: float
    states: np.ndarray
    t_final: float

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if states.ndim != 2 or states.shape[0] < 1 or states.shape[1] < 1:
            raise ValueError("states must be a non-empty (samples, dimension) array")
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step!r}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def n_samples(self) -> int:
        return int(self.states.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.states.shape[1])

    def times(self) -> np.ndarray:
        ts = self.t0 + np.arange(self.n_samples, dtype=float) * self.step
        if self.n_samples > 1:
            ts[-1] = self.t_final
        return ts

    def component(self, index: int) -> np.ndarray:
        return self.states[:, index]

    def same_grid(self, other: "Trajectory") -> bool:
        return (
            self.t0 == other.t0
            and self.step == other.step
            and self.n_samples == other.n_samples
            and self.t_final == other.t_final
        )

    def interpolate(self, t: float, position: int = 0, rate: Optional[int] = None) -> float:
        """
        Value of component `position` at time t. With `rate` naming the
        component holding its time derivative, a cubic Hermite segment is
        used; otherwise linear interpolation.
        """
        ts = self.times()
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise OutOfRangeError(f"t={t!r} outside [{ts[0]!r}, {ts[-1]!r}]")
        if self.n_samples == 1:
            return float(self.states[0, position])
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, self.n_samples - 2))
        xs = self.states[:, position]
        slopes = None if rate is None else self.states[:, rate]
        return _segment_value(ts, xs, slopes, i, t)


def _segment_value(ts: np.ndarray, ys: np.ndarray, slopes: Optional[np.ndarray], i: int, t: float) -> float:
    h = ts[i + 1] - ts[i]
    u = (t - ts[i]) / h
    if slopes is None:
        return float(ys[i] + u * (ys[i + 1] - ys[i]))
    u2 = u * u
    u3 = u2 * u
    return float(
        (2 * u3 - 3 * u2 + 1) * ys[i]
        + (u3 - 2 * u2 + u) * h * slopes[i]
        + (-2 * u3 + 3 * u2) * ys[i + 1]
        + (u3 - u2) * h * slopes[i + 1]
    )


def _segment_slope(ts: np.ndarray, ys: np.ndarray, slopes: Optional[np.ndarray], i: int, t: float) -> float:
    h = ts[i + 1] - ts[i]
    if slopes is None:
        return float((ys[i + 1] - ys[i]) / h)
    u = (t - ts[i]) / h
    u2 = u * u
    return float(
        (6 * u2 - 6 * u) * ys[i] / h
        + (3 * u2 - 4 * u + 1) * slopes[i]
        + (-6 * u2 + 6 * u) * ys[i + 1] / h
        + (3 * u2 - 2 * u) * slopes[i + 1]
    )


def grid_steps(t0: float, t1: float, step: float) -> int:
    if not step > 0.0:
        raise ValueError(f"step must be positive, got {step!r}")
    if not t1 > t0:
        raise ValueError(f"t1 must exceed t0 (t0={t0!r}, t1={t1!r})")
    ratio = (t1 - t0) / step
    nearest = round(ratio)
    if nearest >= 1 and abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.ceil(ratio))


def rk4_integrate(
    field: Field,
    t0: float,
    t1: float,
    step: Optional[float],
    initial: Sequence[float],
    singular: Sequence[int] = (),
    x_min: Optional[float] = None,
) -> Trajectory:
    """
    Integrate y' = field(t, y) from t0 to t1 inclusive.

    Components listed in `singular` are guarded: if one of them drops below
    x_min in absolute value (at a sample or an intermediate stage) the run
    stops with SingularityError.
    """
    step = get_default_step() if step is None else float(step)
    x_min = get_x_min() if x_min is None else float(x_min)
    t0, t1 = float(t0), float(t1)
    n = grid_steps(t0, t1, step)

    y = np.array(initial, dtype=float).reshape(-1)
    if y.size < 1:
        raise ValueError("initial state must have at least one component")
    guarded = tuple(int(i) for i in singular)

    def guard(t: float, state: np.ndarray) -> None:
        for i in guarded:
            if not abs(state[i]) >= x_min:
                raise SingularityError(t, float(state[i]), x_min)

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        guard(t, state)
        out = np.asarray(field(t, state), dtype=float).reshape(-1)
        if out.shape != state.shape:
            raise ValueError(f"field returned shape {out.shape}, expected {state.shape}")
        if not np.all(np.isfinite(out)):
            raise DomainViolation("non-finite derivative", "field", t)
        return out

    logger.debug("rk4: t in [%r, %r], step=%r, %d steps, dim=%d", t0, t1, step, n, y.size)

    states = np.empty((n + 1, y.size), dtype=float)
    states[0] = y
    guard(t0, y)
    for i in range(n):
        t = t0 + i * step
        h = step if i < n - 1 else t1 - t
        half = 0.5 * h
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        guard(t + h, y)
        states[i + 1] = y

    return Trajectory(t0=t0, step=step, states=states, t_final=t1)


def cumulative_integral(e: Union[Expr, str], t0: float, t1: float, step: Optional[float] = None) -> Trajectory:
    """Samples of I(t) = int_{t0}^{t} e(t') dt' with I(t0) = 0."""
    integrand = as_expr(e) if isinstance(e, (str, int, float)) else e

    def field(t: float, state: np.ndarray) -> np.ndarray:
        return np.array([integrand.eval(t)])

    return rk4_integrate(field, t0, t1, step, [0.0])


@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing sampled map t -> s with a chosen interpolation order."""

    t: np.ndarray
    s: np.ndarray
    slopes: Optional[np.ndarray] = None
    order: str = "cubic"

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        s = np.array(self.s, dtype=float).reshape(-1)
        if t.size < 2 or t.size != s.size:
            raise ValueError("a monotone map needs at least two (t, s) pairs of equal length")
        if self.order not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation order {self.order!r}")
        if not np.all(np.diff(t) > 0.0):
            raise NonMonotoneError("t samples must be strictly increasing")
        if not np.all(np.diff(s) > 0.0):
            bad = int(np.argmin(np.diff(s)))
            raise NonMonotoneError(f"s samples are not strictly increasing near t={t[bad]!r}")
        slopes = None
        if self.order == "cubic":
            slopes = np.gradient(s, t) if self.slopes is None else np.array(self.slopes, dtype=float).reshape(-1)
            if slopes.size != t.size:
                raise ValueError("slopes must match the number of samples")
            slopes.setflags(write=False)
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "slopes", slopes)

    @classmethod
    def from_integral(cls, samples: Trajectory, rate: Optional[Expr] = None, order: str = "cubic") -> "MonotoneMap":
        ts = samples.times()
        slopes = eval_grid(rate, ts) if (rate is not None and order == "cubic") else None
        return cls(t=ts, s=samples.component(0), slopes=slopes, order=order)

    @property
    def s_range(self):
        return float(self.s[0]), float(self.s[-1])

    @property
    def t_range(self):
        return float(self.t[0]), float(self.t[-1])

    def __call__(self, t: float) -> float:
        t = float(t)
        lo, hi = self.t_range
        if t < lo - 1e-12 * (1.0 + abs(lo)) or t > hi + 1e-12 * (1.0 + abs(hi)):
            raise OutOfRangeError(f"t={t!r} outside [{lo!r}, {hi!r}]")
        i = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2))
        return _segment_value(self.t, self.s, self.slopes, i, t)

    def invert(self, s: float) -> float:
        return invert_monotone(self, s)


def invert_monotone(m: MonotoneMap, s: float) -> float:
    """
    t with m(t) = s: binary search for the bracketing sample interval, then
    Newton on the local interpolant, safeguarded by bisection. Raises
    InversionError when |m(t) - s| stays above 1e-10 (1 + |s|).
    """
    s = float(s)
    s_lo, s_hi = m.s_range
    slack = 1e-12 * (1.0 + abs(s))
    if not (s_lo - slack <= s <= s_hi + slack):
        raise OutOfRangeError(f"s={s!r} outside the sampled range [{s_lo!r}, {s_hi!r}]")
    if s <= s_lo:
        return float(m.t[0])
    if s >= s_hi:
        return float(m.t[-1])

    i = int(np.clip(np.searchsorted(m.s, s, side="right") - 1, 0, m.t.size - 2))
    lo, hi = float(m.t[i]), float(m.t[i + 1])
    if m.s[i] == s:
        return lo

    t = lo + (s - m.s[i]) / (m.s[i + 1] - m.s[i]) * (hi - lo)
    if m.slopes is None:
        return float(t)

    tol = 4.0 * _EPS * (1.0 + abs(s))
    for _ in range(100):
        g = _segment_value(m.t, m.s, m.slopes, i, t) - s
        if abs(g) <= tol:
            break
        if g < 0.0:
            lo = t
        else:
            hi = t
        d = _segment_slope(m.t, m.s, m.slopes, i, t)
        t_new = t - g / d if d > 0.0 else lo - 1.0
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if t_new == t or hi - lo <= 4.0 * _EPS * (1.0 + abs(t)):
            t = t_new
            break
        t = t_new

    residual = abs(_segment_value(m.t, m.s, m.slopes, i, t) - s)
    if residual > 1e-10 * (1.0 + abs(s)):
        raise InversionError(s, residual)
    return float(t)
