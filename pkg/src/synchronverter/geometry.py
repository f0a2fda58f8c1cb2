"""Power-plane picture of the 4th-order equilibria.

For a fixed effective torque, the images ``S_1(i_f)`` and ``S_2(i_f)`` of
the two equilibria lie on a circle with centre ``C`` on the negative P
axis, and the distance from ``S_j(i_f)`` to a fixed pivot point ``M``
grows linearly in ``i_f``. Everything here is in W / VAr.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PowerPoint
from .equilibria import (
    Branch,
    IntervalKind,
    AngleCosineCurve,
    check_torque_condition,
    if_interval,
)
from .errors import DomainError, InfeasibleError
from .params import GridParams, SynchronverterParams, derived_constants


class Orientation(enum.Enum):
    PIVOT_RIGHT_OF_CENTER = "pivot_right_of_center"
    PIVOT_LEFT_OR_BELOW_CENTER = "pivot_left_or_below_center"


@dataclass(frozen=True)
class PowerPlaneGeometry:
    center: PowerPoint
    radius: float
    impedance: tuple
    pivot: PowerPoint
    phi: float
    line_point: PowerPoint
    line_direction: tuple
    if_minus: float
    if_plus: float
    if_zero: float
    if_increasing: tuple
    orientation: Orientation
    interval_kind: IntervalKind

    def on_circle_defect(self, pq) -> float:
        return abs(math.hypot(pq[0] - self.center.P, pq[1] - self.center.Q) - self.radius)

    def mirror_across_line(self, pq) -> PowerPoint:
        """Reflect a power point across the line through M and C."""
        d = np.asarray(self.line_direction, dtype=float)
        d = d / np.linalg.norm(d)
        v = np.asarray(pq, dtype=float) - np.asarray(self.pivot)
        reflected = 2 * np.dot(v, d) * d - v + np.asarray(self.pivot)
        return PowerPoint(float(reflected[0]), float(reflected[1]))


class CirclePoint(NamedTuple):
    i_f: float
    branch: Branch
    pq: PowerPoint
    delta: float


def circle_radius(Tm_tilde, R, V, w_g):
    """Array-friendly radius of the equilibrium circle; NaN when it does not exist."""
    with np.errstate(invalid="ignore"):
        return np.sqrt(V**4 + 4 * V**2 * R * np.asarray(Tm_tilde, dtype=float) * w_g) / (2 * R)


def exceptional_point_coords(R, L, V, w_g) -> PowerPoint:
    den = R**2 + (w_g * L) ** 2
    return PowerPoint(-(V**2) * R / den, -(V**2) * w_g * L / den)


def exceptional_point(params: SynchronverterParams, grid: GridParams):
    """Coordinates of M and whether the configured setpoint sits on it.

    Returns ``(M, hit)``; ``hit`` can only be true when the effective torque is zero.
    """
    dc = derived_constants(params, grid)
    M = exceptional_point_coords(dc.R, dc.L, grid.V, grid.w_g)
    hit = False
    if dc.Tm_tilde == 0 and math.isclose(dc.Q_tilde, M.Q, rel_tol=1e-12):
        hit = True
    return M, hit


def distance_gain(R, L, m, V, w_g) -> float:
    """Factor ``c`` with ``|S_j(i_f) - M| = c * i_f``."""
    return V * m * w_g / math.hypot(R, w_g * L)


def if_zero_from_radius(r, R, L, m, V, w_g):
    """Field current at which S_1 reaches the top (or bottom) point of the circle.

    Array-friendly. The top point is used when ``w_g L > R``, the bottom one otherwise.
    """
    M = exceptional_point_coords(R, L, V, w_g)
    cp = -(V**2) / (2 * R)
    sign = 1.0 if w_g * L > R else -1.0
    dist = np.hypot(cp - M.P, sign * np.asarray(r) - M.Q)
    return dist / distance_gain(R, L, m, V, w_g)


def build_geometry(params: SynchronverterParams, grid: GridParams) -> PowerPlaneGeometry:
    check = check_torque_condition(params, grid)
    if not check.strict:
        raise InfeasibleError("geometry needs 4 R w_g Tm_tilde > -V^2 to hold strictly")
    dc = derived_constants(params, grid)
    R, L, V, w_g = dc.R, dc.L, grid.V, grid.w_g
    C = PowerPoint(-(V**2) / (2 * R), 0.0)
    r = float(circle_radius(dc.Tm_tilde, R, V, w_g))
    M = exceptional_point_coords(R, L, V, w_g)
    interval = if_interval(params, grid)
    if_zero = float(if_zero_from_radius(r, R, L, params.m, V, w_g))
    if w_g * L > R:
        orientation = Orientation.PIVOT_RIGHT_OF_CENTER
        increasing = (interval.lower, if_zero)
    else:
        orientation = Orientation.PIVOT_LEFT_OR_BELOW_CENTER
        increasing = (if_zero, interval.upper)
    return PowerPlaneGeometry(
        center=C,
        radius=r,
        impedance=(R, w_g * L),
        pivot=M,
        phi=dc.phi,
        line_point=M,
        line_direction=(C.P - M.P, C.Q - M.Q),
        if_minus=interval.lower,
        if_plus=interval.upper,
        if_zero=if_zero,
        if_increasing=increasing,
        orientation=orientation,
        interval_kind=interval.kind,
    )


def power_image(i_f: float, branch: Branch, params: SynchronverterParams, grid: GridParams) -> CirclePoint:
    """Power-plane image of the 4th-order equilibrium on ``branch`` at ``i_f``.

    Computed from the distance/angle law around M rather than from the state.
    """
    if branch not in (Branch.DELTA1, Branch.DELTA2):
        raise ValueError(f"branch must be DELTA1 or DELTA2, got {branch}")
    interval = if_interval(params, grid)
    if i_f not in interval:
        raise DomainError(f"i_f = {i_f!r} is outside I_f = [{interval.lower}, {interval.upper}]")
    dc = derived_constants(params, grid)
    curve = AngleCosineCurve(dc.Tm_tilde, params.m, dc.L, grid.V, dc.p, grid.w_g)
    # endpoints can overshoot |Lambda| = 1 by rounding
    a = math.acos(min(1.0, max(-1.0, float(curve(i_f)))))
    delta = a - dc.phi if branch is Branch.DELTA1 else -a - dc.phi
    M = exceptional_point_coords(dc.R, dc.L, grid.V, grid.w_g)
    radius = distance_gain(dc.R, dc.L, params.m, grid.V, grid.w_g) * i_f
    pq = PowerPoint(
        M.P + radius * math.cos(dc.phi - delta), M.Q + radius * math.sin(dc.phi - delta)
    )
    return CirclePoint(i_f, branch, pq, delta)


def image_reactive_power(i_f, params: SynchronverterParams, grid: GridParams):
    """Array-friendly ``Q_1(i_f)`` from the distance/angle law."""
    dc = derived_constants(params, grid)
    curve = AngleCosineCurve(dc.Tm_tilde, params.m, dc.L, grid.V, dc.p, grid.w_g)
    lam = np.clip(curve(np.asarray(i_f, dtype=float)), -1.0, 1.0)
    M = exceptional_point_coords(dc.R, dc.L, grid.V, grid.w_g)
    gain = distance_gain(dc.R, dc.L, params.m, grid.V, grid.w_g)
    return M.Q + gain * i_f * np.sin(2 * dc.phi - np.arccos(lam))


def image_reactive_slope(i_f, Tm_tilde, R, L, m, V, w_g):
    """Array-friendly ``dQ_1/di_f``; infinite values may appear where |Lambda| = 1."""
    i_f = np.asarray(i_f, dtype=float)
    p = R / L
    phi = math.atan2(w_g * L, R)
    curve = AngleCosineCurve(Tm_tilde, m, L, V, p, w_g)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.clip(curve(i_f), -1.0, 1.0)
        theta = 2 * phi - np.arccos(lam)
        dtheta = curve.derivative(i_f) / np.sqrt(1.0 - lam**2)
        gain = distance_gain(R, L, m, V, w_g)
        return gain * (np.sin(theta) + i_f * np.cos(theta) * dtheta)


def secant_pair(lam: float, params: SynchronverterParams, grid: GridParams) -> tuple[float, float]:
    """Both positive field currents with ``Lambda(i_f) = lam``, ascending (negative torque only)."""
    curve = AngleCosineCurve.from_params(params, grid)
    if curve.Tm_tilde >= 0:
        raise DomainError("secant pairs exist only for negative effective torque", lam=lam)
    lam_min = curve.minimum()
    if not (lam_min - 1e-12 <= lam <= 1.0):
        raise DomainError(f"Lambda = {lam!r} outside attained range [{lam_min}, 1]", lam=lam)
    if lam < lam_min:
        lam = lam_min
    high, low = curve.roots(lam)
    return low, high


def sample_circle(params: SynchronverterParams, grid: GridParams, n: int = 512):
    """``n`` equispaced field currents over I_f with both images, for plotting.

    Returns rows ``(i_f, P1, Q1, P2, Q2)``.
    """
    interval = if_interval(params, grid)
    if interval.kind is IntervalKind.EMPTY:
        raise InfeasibleError("I_f is empty")
    lo = interval.lower
    if interval.kind is IntervalKind.HALF_OPEN_AT_ZERO:
        lo = interval.upper / n
    rows = []
    for i_f in np.linspace(lo, interval.upper, n):
        s1 = power_image(float(i_f), Branch.DELTA1, params, grid)
        s2 = power_image(float(i_f), Branch.DELTA2, params, grid)
        rows.append((float(i_f), s1.pq.P, s1.pq.Q, s2.pq.P, s2.pq.Q))
    return rows
