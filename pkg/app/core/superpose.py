"""
Ermakov invariants and the nonlinear superposition rule for

    x' = f v_x,  v_x' = -omega^2 x + f k / x^3
    y' = f v_y,  v_y' = -omega^2 y

with f = exp(-F). Velocities are the canonical v unless stated otherwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import (
    DegenerateWronskianError,
    DomainViolation,
    NegativeRadicandError,
    RealityViolation,
    SingularityError,
)
from app.core.expr import ONE, ZERO, Expr, as_expr, eval_grid
from app.core.odeint import Trajectory, rk4_integrate
from app.core.reduce import ErmakovForm
from app.core.settings import get_x_min

logger = logging.getLogger(__name__)

Phase = Tuple[float, float]

# Relative slack for the reality condition and the inner radicand.
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class LinearOscillator:
    """y' = f v, v' = -omega^2 y."""

    f: Expr
    omega_squared: Expr

    @classmethod
    def from_omega(cls, omega: Union[Expr, str, float]) -> "LinearOscillator":
        return cls(ONE, as_expr(omega) ** 2)

    @classmethod
    def from_form(cls, form: ErmakovForm) -> "LinearOscillator":
        return cls(form.f, form.omega_squared)

    def field(self):
        def rhs(t: float, state: np.ndarray) -> np.ndarray:
            return np.array([self.f.eval(t) * state[1], -self.omega_squared.eval(t) * state[0]])

        return rhs

    def integrate(self, t0: float, t1: float, step: Optional[float], y0: float, v0: float) -> Trajectory:
        return rk4_integrate(self.field(), t0, t1, step, [y0, v0])

    def ermakov_field(self, k: float):
        def rhs(t: float, state: np.ndarray) -> np.ndarray:
            x, v = state[0], state[1]
            f = self.f.eval(t)
            return np.array([f * v, -self.omega_squared.eval(t) * x + f * k / (x * x * x)])

        return rhs

    def integrate_ermakov(
        self, k: float, t0: float, t1: float, step: Optional[float], x0: float, v0: float
    ) -> Trajectory:
        """Direct RK4 solution of the nonlinear companion equation."""
        return rk4_integrate(self.ermakov_field(k), t0, t1, step, [x0, v0], singular=(0,))


def ermakov_invariant(xp: Phase, yp: Phase, k: float, F_at_t: float = 0.0, t: Optional[float] = None) -> float:
    """1/2 (e^{2F} (y v_x - x v_y)^2 + k (y/x)^2); F = 0 for canonical velocities."""
    x, vx = xp
    y, vy = yp
    if x == 0.0:
        raise DomainViolation("x vanishes", "ermakov invariant", float("nan") if t is None else t)
    cross = y * vx - x * vy
    ratio = y / x
    return 0.5 * (math.exp(2.0 * F_at_t) * cross * cross + k * ratio * ratio)


def wronskian(yp: Phase, zp: Phase) -> float:
    return yp[0] * zp[1] - zp[0] * yp[1]


@dataclass(frozen=True)
class SuperpositionConstants:
    I1: float
    I2: float
    W: float
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        if self.W == 0.0 or not math.isfinite(self.W):
            raise DegenerateWronskianError("the linear pair is dependent (W = 0)")

    def with_wronskian(self, W: float) -> "SuperpositionConstants":
        return replace(self, W=W)

    def with_sign(self, sign: int) -> "SuperpositionConstants":
        return replace(self, sign=sign)

    def discriminant(self, k: float) -> float:
        """sqrt(4 I1 I2 - k W^2), with boundary roundoff clamped to zero."""
        if k > 0.0 and (self.I1 < 0.0 or self.I2 < 0.0):
            raise RealityViolation(f"I1={self.I1!r}, I2={self.I2!r} must be non-negative for k > 0")
        prod = 4.0 * self.I1 * self.I2
        kw = k * self.W * self.W
        disc = prod - kw
        if disc < 0.0:
            if disc < -ROUNDOFF * max(abs(prod), abs(kw)):
                raise RealityViolation(f"4*I1*I2 = {prod!r} < k*W^2 = {kw!r}")
            disc = 0.0
        return math.sqrt(disc)

    def as_dict(self) -> Dict[str, Any]:
        return {"I1": self.I1, "I2": self.I2, "W": self.W, "sign": self.sign}


def _inner(y, z, consts: SuperpositionConstants, D: float):
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    a = consts.I2 * y * y
    b = consts.I1 * z * z
    c = consts.sign * D * y * z
    inner = a + b + c
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(c))
    bad = inner < -ROUNDOFF * scale
    return np.where(inner < 0.0, 0.0, inner), bad


def superpose(y: float, z: float, consts: SuperpositionConstants, k: float) -> float:
    """x = sqrt(2)/|W| * sqrt(I2 y^2 + I1 z^2 +- sqrt(4 I1 I2 - k W^2) y z)."""
    D = consts.discriminant(k)
    inner, bad = _inner(y, z, consts, D)
    if bool(bad):
        raise NegativeRadicandError(f"negative radicand at y={y!r}, z={z!r} (sign {consts.sign:+d})")
    return math.sqrt(2.0) / abs(consts.W) * math.sqrt(float(inner))


def superposed_velocity(
    yp: Phase, zp: Phase, x: float, consts: SuperpositionConstants, k: float
) -> float:
    """Canonical v_x of the superposed solution."""
    if x == 0.0:
        raise DomainViolation("x vanishes", "superposed velocity", float("nan"))
    y, vy = yp
    z, vz = zp
    D = consts.discriminant(k)
    num = 2.0 * consts.I2 * y * vy + 2.0 * consts.I1 * z * vz + consts.sign * D * (vy * z + y * vz)
    return num / (x * consts.W * consts.W)


def constants_from_state(
    x0: float, v0: float, yp0: Phase, zp0: Phase, k: float
) -> SuperpositionConstants:
    """I1, I2, W and the branch reproducing the state (x0, v0)."""
    I1 = ermakov_invariant((x0, v0), yp0, k)
    I2 = ermakov_invariant((x0, v0), zp0, k)
    W = wronskian(yp0, zp0)
    base = SuperpositionConstants(I1, I2, W, 1)

    best = base
    best_err = math.inf
    for sign in (1, -1):
        cand = base.with_sign(sign)
        x = superpose(yp0[0], zp0[0], cand, k)
        err = abs(x - abs(x0)) + abs(superposed_velocity(yp0, zp0, x, cand, k) - math.copysign(1.0, x0) * v0)
        if err < best_err:
            best, best_err = cand, err
    logger.debug("constants from state: %s (mismatch %.3e)", best.as_dict(), best_err)
    return best


@dataclass(frozen=True)
class LinearPair:
    """Two solutions (position, canonical velocity) of the same linear system."""

    y: Trajectory
    z: Trajectory
    k: float
    F: Expr = ZERO

    def __post_init__(self):
        if not self.y.same_grid(self.z):
            raise ValueError("y and z must share t0, step and length")
        if self.y.dimension < 2 or self.z.dimension < 2:
            raise ValueError("y and z must carry (position, velocity)")
        if self.wronskian_at(0) == 0.0:
            raise DegenerateWronskianError("the linear pair is dependent at t0")

    def wronskian_at(self, i: int) -> float:
        return wronskian(tuple(self.y.states[i, :2]), tuple(self.z.states[i, :2]))


@dataclass(frozen=True)
class SuperposedSolution:
    trajectory: Trajectory
    pair: LinearPair
    constants: SuperpositionConstants
    I1: np.ndarray
    I2: np.ndarray
    W: np.ndarray

    def max_constant_error(self) -> Dict[str, float]:
        c = self.constants
        return {
            "I1": float(np.max(np.abs(self.I1 - c.I1))),
            "I2": float(np.max(np.abs(self.I2 - c.I2))),
            "W": float(np.max(np.abs(self.W - c.W))),
        }


def _oscillator(system: Any) -> LinearOscillator:
    if isinstance(system, LinearOscillator):
        return system
    if isinstance(system, ErmakovForm):
        return LinearOscillator.from_form(system)
    return LinearOscillator.from_omega(system)


def general_solution(
    system: Union[LinearOscillator, ErmakovForm, Expr, str, float],
    k: Optional[float],
    consts: Optional[SuperpositionConstants],
    t0: float,
    t1: float,
    step: Optional[float] = None,
    y_init: Phase = (1.0, 0.0),
    z_init: Phase = (0.0, 1.0),
    initial: Optional[Phase] = None,
) -> SuperposedSolution:
    """
    Integrates the linear pair, then applies the superposition rule sample by
    sample. Either `consts` (I1, I2, sign; W is taken from the pair) or the
    nonlinear initial state `initial` = (x0, v0) must be given.
    """
    if k is None:
        if not isinstance(system, ErmakovForm):
            raise ValueError("k is required unless an Ermakov form is given")
        k = system.k
    osc = _oscillator(system)
    y = osc.integrate(t0, t1, step, *y_init)
    z = osc.integrate(t0, t1, step, *z_init)
    pair = LinearPair(y, z, k)
    W0 = pair.wronskian_at(0)

    if consts is None:
        if initial is None:
            raise ValueError("either constants or an initial state is required")
        consts = constants_from_state(initial[0], initial[1], tuple(y_init), tuple(z_init), k)
    consts = consts.with_wronskian(W0)

    D = consts.discriminant(k)
    ys, vys = y.component(0), y.component(1)
    zs, vzs = z.component(0), z.component(1)
    inner, bad = _inner(ys, zs, consts, D)
    ts = y.times()
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NegativeRadicandError(f"negative radicand at t={ts[i]!r} (sign {consts.sign:+d})")

    xs = math.sqrt(2.0) / abs(W0) * np.sqrt(inner)
    x_min = get_x_min()
    if np.any(xs < x_min):
        i = int(np.argmax(xs < x_min))
        raise SingularityError(float(ts[i]), float(xs[i]), x_min)

    num = 2.0 * consts.I2 * ys * vys + 2.0 * consts.I1 * zs * vzs + consts.sign * D * (vys * zs + ys * vzs)
    vxs = num / (xs * W0 * W0)

    i1 = 0.5 * ((ys * vxs - xs * vys) ** 2 + k * (ys / xs) ** 2)
    i2 = 0.5 * ((zs * vxs - xs * vzs) ** 2 + k * (zs / xs) ** 2)
    ws = ys * vzs - zs * vys

    traj = Trajectory(y.t0, y.step, np.column_stack([xs, vxs]), y.t_final)
    logger.info("superposed %d samples (sign %+d, W=%r)", traj.n_samples, consts.sign, W0)
    return SuperposedSolution(traj, pair, consts, i1, i2, ws)


def invariant_series(x: Trajectory, y: Trajectory, k: float, F: Union[Expr, str, float] = ZERO) -> np.ndarray:
    """I(t_i) for trajectories stored as (position, dx/dt)."""
    if not x.same_grid(y):
        raise ValueError("x and y must share the sample grid")
    F = as_expr(F)
    ts = x.times()
    xs, vxs = x.component(0), x.component(1)
    ys, vys = y.component(0), y.component(1)
    if np.any(xs == 0.0):
        i = int(np.argmax(xs == 0.0))
        raise DomainViolation("x vanishes", "ermakov invariant", float(ts[i]))
    weight = np.exp(2.0 * eval_grid(F, ts))
    return 0.5 * (weight * (ys * vxs - xs * vys) ** 2 + k * (ys / xs) ** 2)


def invariant_drift(x: Trajectory, y: Trajectory, k: float, F: Union[Expr, str, float] = ZERO) -> float:
    """max_i |I(t_i) - I(t_0)|."""
    series = invariant_series(x, y, k, F)
    return float(np.max(np.abs(series - series[0])))


def wronskian_drift(y: Trajectory, z: Trajectory) -> float:
    if not y.same_grid(z):
        raise ValueError("y and z must share the sample grid")
    ws = y.component(0) * z.component(1) - z.component(0) * y.component(1)
    return float(np.max(np.abs(ws - ws[0])))


def both_branches(
    system: Union[LinearOscillator, ErmakovForm, Expr, str, float],
    k: float,
    consts: SuperpositionConstants,
    t0: float,
    t1: float,
    step: Optional[float] = None,
) -> Sequence[SuperposedSolution]:
    return [general_solution(system, k, consts.with_sign(s), t0, t1, step) for s in (1, -1)]
