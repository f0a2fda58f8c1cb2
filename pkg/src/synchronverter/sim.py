"""Fixed-step time integration of the synchronverter models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import State5, powers_from_state, wrap_angle
from .dynamics import SatMode, sat_mode, vector_field
from .errors import ConfigError, NumericalError
from .params import GridParams, SynchronverterParams
from .stability import default_clamp

MODES = ("saturated", "unsaturated", "fourth_order")


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    initial: State5
    dt: float = 1e-4
    record_stride: int = 100
    mode: str = "saturated"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ConfigError(f"t_end must be at least dt, got t_end = {self.t_end}")
        if int(self.record_stride) < 1:
            raise ConfigError("record_stride must be at least 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.initial) != 5:
            raise ConfigError("initial state needs 5 components")


@dataclass(frozen=True)
class SatEvent:
    t: float
    before: SatMode
    after: SatMode


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    events: list = field(default_factory=list)
    max_projection: float = 0.0

    @property
    def samples(self):
        return [
            (float(t), State5(*map(float, z)), (float(p), float(q)))
            for t, z, p, q in zip(self.t, self.states, self.P, self.Q)
        ]

    @property
    def final(self) -> State5:
        return State5(*map(float, self.states[-1]))


def integrate(config: SimConfig, params: SynchronverterParams, grid: GridParams) -> Trajectory:
    """Classical RK4 with the clamp law applied at every stage.

    In saturated mode ``i_f`` is projected back onto ``[u_min, u_max]``
    after each step; the largest projection distance is kept as a
    diagnostic and every change of clamp mode is recorded as an event.
    Raises :class:`NumericalError` with the blow-up time on a non-finite state.
    """
    mode = config.mode
    saturated = mode == "saturated"
    if saturated:
        if params.u_min is None or params.u_max is None:
            u_min, u_max, _ = default_clamp(params, grid)
            params = replace(params, u_min=u_min, u_max=u_max)
        u_min, u_max = params.u_min, params.u_max
        if not u_min <= config.initial[4] <= u_max:
            raise ConfigError(
                f"initial i_f = {config.initial[4]} is outside [{u_min}, {u_max}]"
            )
    f = vector_field(params, grid, mode)

    dt = config.dt
    n_steps = int(round(config.t_end / dt))
    stride = int(config.record_stride)
    y = [float(v) for v in config.initial]
    times = [0.0]
    rows = [tuple(y)]
    events = []
    max_proj = 0.0
    current = sat_mode(y[4], u_min, u_max) if saturated else SatMode.INTERIOR
    half = 0.5 * dt
    sixth = dt / 6.0

    for step in range(1, n_steps + 1):
        a, b, c, d, e = y
        k1 = f(a, b, c, d, e)
        k2 = f(a + half * k1[0], b + half * k1[1], c + half * k1[2], d + half * k1[3], e + half * k1[4])
        k3 = f(a + half * k2[0], b + half * k2[1], c + half * k2[2], d + half * k2[3], e + half * k2[4])
        k4 = f(a + dt * k3[0], b + dt * k3[1], c + dt * k3[2], d + dt * k3[3], e + dt * k3[4])
        y = [y[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in range(5)]
        t = step * dt
        if not all(math.isfinite(v) for v in y):
            raise NumericalError(f"state became non-finite at t = {t:.6g} s", t=t)
        if saturated:
            clipped = min(max(y[4], u_min), u_max)
            if clipped != y[4]:
                max_proj = max(max_proj, abs(clipped - y[4]))
                y[4] = clipped
            new = sat_mode(y[4], u_min, u_max)
            if new is not current:
                events.append(SatEvent(t, current, new))
                current = new
        if step % stride == 0 or step == n_steps:
            times.append(t)
            rows.append(tuple(y))

    states = np.array(rows)
    pq = powers_from_state(states.T, grid.V)
    return Trajectory(np.array(times), states, np.asarray(pq.P), np.asarray(pq.Q), events, max_proj)


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    final_error: float
    t_settle: float
    errors: np.ndarray = field(repr=False, compare=False)


def error_series(traj: Trajectory, target) -> np.ndarray:
    """Per-sample worst component error against ``target``.

    Each component is divided by ``max(|target|, 1)`` in its own unit (A,
    rad/s, rad, A), so large components are compared relatively and small
    ones absolutely. Angle differences are wrapped first.
    """
    target = np.asarray(getattr(target, "state", target), dtype=float)
    diff = traj.states - target
    diff[:, 3] = wrap_angle(diff[:, 3])
    scale = np.maximum(np.abs(target), 1.0)
    return np.max(np.abs(diff) / scale, axis=1)


def convergence_metric(traj: Trajectory, target, threshold: float = 1e-4) -> ConvergenceReport:
    """Final error against ``target`` and the time after which it stays below ``threshold``."""
    if len(traj.t) == 0:
        raise ValueError("empty trajectory")
    errors = error_series(traj, target)
    final = float(errors[-1])
    above = np.flatnonzero(errors >= threshold)
    if above.size == 0:
        t_settle = float(traj.t[0])
    elif above[-1] == len(errors) - 1:
        t_settle = math.inf
    else:
        t_settle = float(traj.t[above[-1] + 1])
    return ConvergenceReport(final < threshold, final, t_settle, errors)
