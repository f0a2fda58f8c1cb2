"""Closed-form equilibria of the 4th-order and 5th-order models.

The 4th-order model treats the field current ``i_f`` as a parameter and has
two equilibria for every ``i_f`` in ``I_f`` (or ``-I_f``). The 5th-order
model has four equilibria (two symmetric pairs) whenever the reactive
setpoint lies strictly inside the equilibrium circle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import PowerPoint, State4, State5, currents_from_powers, powers_from_state, wrap_angle
from .errors import DomainError, InfeasibleError
from .params import GridParams, SynchronverterParams, derived_constants

# |Lambda| this close to 1 is treated as the coincident-equilibria case
LAMBDA_SNAP = 1e-12
# relative tolerance for "equality holds" in the existence inequalities
BOUNDARY_RTOL = 1e-12


class Branch(enum.Enum):
    DELTA1 = "delta1"
    DELTA2 = "delta2"
    RIGHT = "right"
    LEFT = "left"
    SYM_RIGHT = "sym_right"
    SYM_LEFT = "sym_left"


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"
    NOT_COMPUTED = "not_computed"


class IntervalKind(enum.Enum):
    CLOSED = "closed"
    HALF_OPEN_AT_ZERO = "half_open_at_zero"
    EMPTY = "empty"


class Check(NamedTuple):
    holds: bool
    strict: bool


@dataclass(frozen=True)
class EquilibriumPoint:
    state: State5
    branch: Branch
    pq: PowerPoint
    stability: Stability = Stability.NOT_COMPUTED
    eigenvalues: Optional[tuple] = field(default=None, compare=False)


@dataclass(frozen=True)
class ExceptionalEquilibria:
    """The continuum of equilibria at the point M (zero field current, any angle).

    ``others`` holds the regular equilibria belonging to the other root of
    the active-power quadratic, if any.
    """

    pq: PowerPoint
    i_f: float = 0.0
    others: tuple = ()


class AngleCosineCurve:
    """The scalar curve whose value in [-1, 1] fixes the 4th-order power angles.

    Evaluation accepts scalars or numpy arrays.
    """

    def __init__(self, Tm_tilde, m, L, V, p, w_g):
        self.Tm_tilde = Tm_tilde
        self.m = m
        self.L = L
        self.V = V
        self.p = p
        self.w_g = w_g
        self._s = math.hypot(p, w_g)

    @classmethod
    def from_params(cls, params: SynchronverterParams, grid: GridParams) -> "AngleCosineCurve":
        dc = derived_constants(params, grid)
        return cls(dc.Tm_tilde, params.m, dc.L, grid.V, dc.p, grid.w_g)

    def __call__(self, i_f):
        s = self._s
        return (
            -self.Tm_tilde / (self.m * i_f) * self.L * s / self.V
            + self.m * i_f * self.w_g * self.p / (self.V * s)
        )

    def derivative(self, i_f):
        s = self._s
        return self.Tm_tilde * self.L * s / (self.m * i_f**2 * self.V) + self.m * self.w_g * self.p / (
            self.V * s
        )

    def roots(self, lam):
        """Both solutions ``(i_f1, i_f2)`` of ``Lambda(i_f) = lam``, with ``i_f1 >= i_f2``."""
        lam = np.asarray(lam, dtype=float)
        disc = lam**2 * self.V**2 + 4 * self.w_g * (self.p * self.L) * self.Tm_tilde
        # a double root may come out slightly negative
        disc = np.where((disc < 0) & (disc > -1e-12 * self.V**2), 0.0, disc)
        if np.any(disc < 0):
            raise DomainError("Lambda value not attained by any real field current", lam=lam)
        root = np.sqrt(disc)
        scale = self._s / (2 * self.m * self.w_g * self.p)
        i1 = scale * (lam * self.V + root)
        i2 = scale * (lam * self.V - root)
        if i1.ndim == 0:
            return float(i1), float(i2)
        return i1, i2

    def argmin(self) -> float:
        """Minimiser over i_f > 0, which exists only for negative torque."""
        if self.Tm_tilde >= 0:
            raise DomainError("Lambda has no interior minimum for non-negative torque")
        return math.sqrt(-self.Tm_tilde * self.L * self._s**2 / (self.m**2 * self.w_g * self.p))

    def minimum(self) -> float:
        return float(self(self.argmin()))


@dataclass(frozen=True)
class IfInterval:
    lower: float
    upper: float
    kind: IntervalKind

    def __contains__(self, i_f) -> bool:
        if self.kind is IntervalKind.EMPTY:
            return False
        if self.kind is IntervalKind.HALF_OPEN_AT_ZERO:
            return 0.0 < i_f <= self.upper
        return self.lower <= i_f <= self.upper

    @property
    def length(self) -> float:
        return 0.0 if self.kind is IntervalKind.EMPTY else self.upper - self.lower


def check_torque_condition(params: SynchronverterParams, grid: GridParams) -> Check:
    dc = derived_constants(params, grid)
    lhs = 4 * dc.R * grid.w_g * dc.Tm_tilde
    rhs = -grid.V**2
    if math.isclose(lhs, rhs, rel_tol=BOUNDARY_RTOL):
        return Check(True, False)
    return Check(lhs >= rhs, lhs > rhs)


def if_endpoints(Tm_tilde, R, L, m, V, w_g):
    """Array-friendly endpoints ``(i_f-, i_f+)`` of ``I_f``; NaN where empty.

    Positive torque: i_f- solves Lambda = -1, i_f+ solves Lambda = +1 (plus
    roots). Negative torque: both endpoints solve Lambda = +1. Zero torque:
    i_f- = 0 (excluded from the interval).
    """
    Tm_tilde = np.asarray(Tm_tilde, dtype=float)
    p = R / L
    scale = math.hypot(p, w_g) / (2 * m * w_g * p)
    disc_term = 4 * w_g * R * Tm_tilde
    with np.errstate(invalid="ignore"):
        root_plus1 = np.sqrt(V**2 + disc_term)
    hi = scale * (V + root_plus1)
    lo = np.where(
        Tm_tilde > 0,
        scale * (-V + root_plus1),
        np.where(Tm_tilde < 0, scale * (V - root_plus1), 0.0),
    )
    return lo, hi


def if_interval(params: SynchronverterParams, grid: GridParams) -> IfInterval:
    check = check_torque_condition(params, grid)
    if not check.holds:
        return IfInterval(math.nan, math.nan, IntervalKind.EMPTY)
    dc = derived_constants(params, grid)
    lo, hi = if_endpoints(dc.Tm_tilde, dc.R, dc.L, params.m, grid.V, grid.w_g)
    lo, hi = float(lo), float(hi)
    if not check.strict:
        # boundary case: the square root vanishes and the interval is one point
        lo = hi = math.hypot(dc.p, grid.w_g) * grid.V / (2 * params.m * grid.w_g * dc.p)
    if dc.Tm_tilde == 0:
        return IfInterval(0.0, hi, IntervalKind.HALF_OPEN_AT_ZERO)
    return IfInterval(lo, hi, IntervalKind.CLOSED)


def _snap_lambda(lam: float, i_f: float) -> float:
    if abs(lam) <= 1.0:
        return lam
    if abs(lam) - 1.0 <= LAMBDA_SNAP:
        return math.copysign(1.0, lam)
    raise DomainError(
        f"i_f = {i_f!r} is outside I_f and -I_f (Lambda = {lam!r})", lam=lam
    )


def equilibria4(i_f: float, params: SynchronverterParams, grid: GridParams):
    """The two equilibria ``(x1, x2)`` of the 4th-order model at field current ``i_f``.

    Each is returned as an :class:`EquilibriumPoint` whose state carries
    ``i_f`` as its fifth component.
    """
    if i_f == 0:
        raise DomainError("i_f = 0 is outside I_f and -I_f", lam=math.inf)
    dc = derived_constants(params, grid)
    curve = AngleCosineCurve(dc.Tm_tilde, params.m, dc.L, grid.V, dc.p, grid.w_g)
    lam = _snap_lambda(float(curve(i_f)), i_f)
    a = math.acos(lam)
    i_q = -dc.Tm_tilde / (params.m * i_f)
    i_d0 = -dc.Tm_tilde * grid.w_g / (params.m * i_f * dc.p)
    points = []
    for branch, delta in ((Branch.DELTA1, a - dc.phi), (Branch.DELTA2, -a - dc.phi)):
        i_d = i_d0 + grid.V * math.sin(delta) / dc.R
        x = State4(i_d, i_q, grid.w_g, delta)
        pq = powers_from_state(x, grid.V)
        points.append(
            EquilibriumPoint(State5(i_d, i_q, grid.w_g, wrap_angle(delta), i_f), branch, pq)
        )
    return points[0], points[1]


def first_branch_state(i_f: float, params: SynchronverterParams, grid: GridParams) -> State4:
    """The first 4th-order equilibrium as a function of the field current.

    The angle is kept as ``arccos(Lambda) - phi`` (in [-phi, pi - phi]), not
    re-wrapped.
    """
    dc = derived_constants(params, grid)
    curve = AngleCosineCurve(dc.Tm_tilde, params.m, dc.L, grid.V, dc.p, grid.w_g)
    lam = _snap_lambda(float(curve(i_f)), i_f)
    delta = math.acos(lam) - dc.phi
    i_q = -dc.Tm_tilde / (params.m * i_f)
    i_d = -dc.Tm_tilde * grid.w_g / (params.m * i_f * dc.p) + grid.V * math.sin(delta) / dc.R
    return State4(i_d, i_q, grid.w_g, delta)


def check_existence5(params: SynchronverterParams, grid: GridParams) -> Check:
    dc = derived_constants(params, grid)
    lhs = 4 * dc.R**2 * dc.Q_tilde**2
    rhs = grid.V**4 + 4 * dc.R * grid.V**2 * dc.Tm_tilde * grid.w_g
    if math.isclose(lhs, rhs, rel_tol=BOUNDARY_RTOL, abs_tol=BOUNDARY_RTOL * grid.V**4):
        return Check(True, False)
    return Check(lhs <= rhs, lhs < rhs)


def active_power_roots(Tm_tilde, Q_tilde, R, V, w_g):
    """Array-friendly roots ``(P_l, P_r)`` of ``Tm w_g = P + R (P^2 + Q^2) / V^2``.

    Returns NaN where the roots are complex.
    """
    Tm_tilde = np.asarray(Tm_tilde, dtype=float)
    Q_tilde = np.asarray(Q_tilde, dtype=float)
    disc = (V**4 + 4 * R * V**2 * Tm_tilde * w_g - 4 * R**2 * Q_tilde**2) / V**4
    mid = -(V**2) / (2 * R)
    with np.errstate(invalid="ignore"):
        half = (V**2 / (2 * R)) * np.sqrt(disc)
    P_l = mid - half
    # Vieta keeps P_r accurate when it is small next to |mid|
    product = (R * Q_tilde**2 / V**2 - Tm_tilde * w_g) * V**2 / R
    P_r = product / P_l
    return P_l, P_r


def solve_pl_pr(params: SynchronverterParams, grid: GridParams) -> tuple[float, float]:
    check = check_existence5(params, grid)
    if not check.holds:
        raise InfeasibleError(
            "no equilibrium: 4 R^2 Q_tilde^2 <= V^4 + 4 R V^2 Tm_tilde w_g is violated"
        )
    dc = derived_constants(params, grid)
    if not check.strict:
        P = -(grid.V**2) / (2 * dc.R)
        return P, P
    P_l, P_r = active_power_roots(dc.Tm_tilde, dc.Q_tilde, dc.R, grid.V, grid.w_g)
    return float(P_l), float(P_r)


def principal_state(P, Q_tilde, Tm_tilde, R, L, m, V, w_g):
    """Array-friendly 5th-order equilibrium with positive field current at power (P, Q_tilde).

    The angle solving the tangent relation is chosen so that
    ``m i_f w_g (cos d, sin d) = (R P + w_g L Q + V^2, w_g L P - R Q) / V``
    holds with ``i_f > 0``. Returns ``(i_d, i_q, delta, i_f)``.
    """
    P = np.asarray(P, dtype=float)
    Q_tilde = np.asarray(Q_tilde, dtype=float)
    Tm_tilde = np.asarray(Tm_tilde, dtype=float)
    num = w_g * L * P - R * Q_tilde
    den = R * P + w_g * L * Q_tilde + V**2
    delta = np.arctan2(num, den)
    i_d, i_q = currents_from_powers((P, Q_tilde), delta, V)
    with np.errstate(divide="ignore", invalid="ignore"):
        i_f = np.where(
            Tm_tilde != 0,
            -Tm_tilde / (m * i_q),
            (-w_g * L * i_d - R * i_q + V * np.cos(delta)) / (m * w_g),
        )
    return i_d, i_q, delta, i_f


def is_exceptional(P, Q_tilde, R, L, V, w_g) -> bool:
    num = w_g * L * P - R * Q_tilde
    den = R * P + w_g * L * Q_tilde + V**2
    tol = 1e-12 * V**2
    return abs(num) <= tol and abs(den) <= tol


def equilibria5(params: SynchronverterParams, grid: GridParams):
    """All equilibria of the non-saturated 5th-order model.

    Returns ``[z_r, z_l, sym_r, sym_l]`` when the existence inequality is
    strict, ``[z, sym]`` on its boundary, and an
    :class:`ExceptionalEquilibria` when one root lands on the point M.
    """
    dc = derived_constants(params, grid)
    P_l, P_r = solve_pl_pr(params, grid)
    roots = [(Branch.RIGHT, Branch.SYM_RIGHT, P_r)]
    if P_l != P_r:
        roots.append((Branch.LEFT, Branch.SYM_LEFT, P_l))

    principal, symmetric, exceptional = [], [], None
    for branch, sym_branch, P in roots:
        if is_exceptional(P, dc.Q_tilde, dc.R, dc.L, grid.V, grid.w_g):
            exceptional = PowerPoint(P, dc.Q_tilde)
            continue
        i_d, i_q, delta, i_f = (
            float(v)
            for v in principal_state(P, dc.Q_tilde, dc.Tm_tilde, dc.R, dc.L, params.m, grid.V, grid.w_g)
        )
        pq = PowerPoint(P, dc.Q_tilde)
        principal.append(EquilibriumPoint(State5(i_d, i_q, grid.w_g, delta, i_f), branch, pq))
        symmetric.append(
            EquilibriumPoint(
                State5(-i_d, -i_q, grid.w_g, wrap_angle(delta + math.pi), -i_f), sym_branch, pq
            )
        )
    points = principal + symmetric
    if exceptional is not None:
        return ExceptionalEquilibria(exceptional, 0.0, tuple(points))
    return points


def necessary_stability_angle(delta: float, phi: float) -> bool:
    """Necessary condition for a 4th-order equilibrium to be stable."""
    return math.sin(delta + phi) > 0
