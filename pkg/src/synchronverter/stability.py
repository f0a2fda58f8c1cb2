"""Linearization and local stability of the synchronverter equilibria."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .core import powers_from_state, torque_for_setpoints
from .equilibria import (
    Branch,
    EquilibriumPoint,
    ExceptionalEquilibria,
    Stability,
    active_power_roots,
    check_torque_condition,
    check_existence5,
    equilibria5,
    if_endpoints,
    if_interval,
    principal_state,
    first_branch_state,
)
from .errors import DomainError, InfeasibleError, NumericalError
from .geometry import build_geometry, circle_radius, if_zero_from_radius, image_reactive_slope
from .params import GridParams, SynchronverterParams, derived_constants, is_nominal_grid

TOL_MARGIN = 1e-6
U_EPS_SAMPLES = 64


def jacobian_batch(i_d, i_q, w, delta, i_f, R, L, m, J, D_p, V, K_tilde=None):
    """Analytic Jacobians for arrays of states, shape ``(..., 4, 4)`` or ``(..., 5, 5)``.

    The 5x5 form (non-saturated model) is built when ``K_tilde`` is given.
    """
    i_d, i_q, w, delta, i_f = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (i_d, i_q, w, delta, i_f))
    )
    n = 4 if K_tilde is None else 5
    A = np.zeros(i_d.shape + (n, n))
    s, c = np.sin(delta), np.cos(delta)
    A[..., 0, 0] = -R / L
    A[..., 0, 1] = w
    A[..., 0, 2] = i_q
    A[..., 0, 3] = V / L * c
    A[..., 1, 0] = -w
    A[..., 1, 1] = -R / L
    A[..., 1, 2] = -(i_d + m * i_f / L)
    A[..., 1, 3] = -V / L * s
    A[..., 2, 1] = m * i_f / J
    A[..., 2, 2] = -D_p / J
    A[..., 3, 2] = 1.0
    if K_tilde is not None:
        # k / m with k = sqrt(3/2) V / K reduces to V / K_tilde
        k_m = V / K_tilde
        A[..., 1, 4] = -m * w / L
        A[..., 2, 4] = m * i_q / J
        A[..., 4, 0] = k_m * c
        A[..., 4, 1] = -k_m * s
        A[..., 4, 3] = -k_m * (i_d * s + i_q * c)
    return A


def jacobian4(x, i_f: float, params: SynchronverterParams, grid: GridParams) -> np.ndarray:
    i_d, i_q, w, delta = x[:4]
    return jacobian_batch(
        i_d, i_q, w, delta, i_f, params.R, params.L, params.m, params.J, params.D_p, grid.V
    )


def jacobian5(z, params: SynchronverterParams, grid: GridParams) -> np.ndarray:
    """Jacobian of the non-saturated 5th-order model.

    Refuses states on or beyond the clamp bounds, where the saturated model
    is not differentiable.
    """
    i_d, i_q, w, delta, i_f = z[:5]
    if params.u_min is not None and i_f <= params.u_min:
        raise DomainError(f"i_f = {i_f} is clamped at u_min = {params.u_min}")
    if params.u_max is not None and i_f >= params.u_max:
        raise DomainError(f"i_f = {i_f} is clamped at u_max = {params.u_max}")
    return jacobian_batch(
        i_d, i_q, w, delta, i_f, params.R, params.L, params.m, params.J, params.D_p, grid.V,
        K_tilde=params.K_tilde,
    )


def eigenvalues(matrix) -> np.ndarray:
    """Eigenvalues of a small dense real matrix, computed after balancing.

    Raises :class:`NumericalError` when LAPACK fails to converge or the
    eigenpair residuals exceed ``1e-8 * ||A||``.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > 8:
        raise ValueError("eigenvalues() is meant for matrices of size <= 8")
    try:
        B, T = scipy.linalg.matrix_balance(A, permute=True, separate=False)
        vals, vecs = scipy.linalg.eig(B)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc
    vecs = T @ vecs
    norm_a = np.linalg.norm(A)
    for j, lam in enumerate(vals):
        v = vecs[:, j] / np.linalg.norm(vecs[:, j])
        if np.linalg.norm(A @ v - lam * v) > 1e-8 * max(norm_a, 1.0):
            raise NumericalError(f"eigenpair residual too large for eigenvalue {lam}")
    return vals


def classify(max_real, tol_margin: float = TOL_MARGIN):
    """Map the largest eigenvalue real part to a :class:`Stability` value."""
    if max_real < -tol_margin:
        return Stability.STABLE
    if max_real > tol_margin:
        return Stability.UNSTABLE
    return Stability.MARGINAL


@dataclass(frozen=True)
class StabilityVerdict:
    eigenvalues: tuple
    max_real: float
    stability: Stability


def verdict(matrix, tol_margin: float = TOL_MARGIN) -> StabilityVerdict:
    vals = eigenvalues(matrix)
    max_real = float(np.max(vals.real))
    return StabilityVerdict(tuple(complex(v) for v in vals), max_real, classify(max_real, tol_margin))


def classify_equilibria(points, params: SynchronverterParams, grid: GridParams, order: int = 5):
    """Attach eigenvalue verdicts to equilibria returned by the equilibria module.

    The clamp range is ignored here: the non-saturated linearization is used
    for every point.
    """
    unclamped = replace(params, u_min=None, u_max=None)
    out = []
    for point in points:
        if order == 5:
            A = jacobian5(point.state, unclamped, grid)
        else:
            A = jacobian4(point.state, point.state[4], params, grid)
        v = verdict(A)
        out.append(replace(point, stability=v.stability, eigenvalues=v.eigenvalues))
    return out


# --- steady-state map along the first 4th-order branch ---------------------


def steady_state_reactive_power(i_f: float, params: SynchronverterParams, grid: GridParams) -> float:
    """Reactive power of the first 4th-order equilibrium at field current ``i_f``."""
    interval = if_interval(params, grid)
    if i_f not in interval:
        raise DomainError(f"i_f = {i_f!r} is outside I_f = [{interval.lower}, {interval.upper}]")
    return float(powers_from_state(first_branch_state(i_f, params, grid), grid.V).Q)


def steady_state_reactive_slope(i_f, params: SynchronverterParams, grid: GridParams):
    dc = derived_constants(params, grid)
    return image_reactive_slope(i_f, dc.Tm_tilde, dc.R, dc.L, params.m, grid.V, grid.w_g)


def default_clamp(params: SynchronverterParams, grid: GridParams):
    """``(u_min, u_max, eps)`` from the config, defaulting from the increasing interval.

    Defaults: the middle 80% of the interval where Q_1 increases, with eps
    equal to 5% of its length.
    """
    u_min, u_max, eps = params.u_min, params.u_max, params.eps
    if u_min is None or u_max is None or eps is None:
        lo, hi = build_geometry(params, grid).if_increasing
        length = hi - lo
        if u_min is None:
            u_min = lo + 0.1 * length
        if u_max is None:
            u_max = hi - 0.1 * length
        if eps is None:
            eps = 0.05 * length
    return u_min, u_max, eps


@dataclass(frozen=True)
class SufficientConditionReport:
    torque_condition_strict: bool
    equilibrium_exists: bool
    i_f_r: float
    if_increasing: tuple
    u_min: float
    u_max: float
    eps: float
    u_eps_inside: bool
    i_f_r_with_margin: bool
    fourth_order_stable_on_u_eps: bool
    q_tilde_in_range: bool
    sufficient_conditions_met: bool
    direct_verdict: Stability
    max_real: float
    z_r: Optional[EquilibriumPoint]


def sufficient_stability_check(
    P_set: float,
    Q_set: float,
    params: SynchronverterParams,
    grid: GridParams,
    K_tilde: Optional[float] = None,
) -> SufficientConditionReport:
    """Check the large-gain sufficient conditions and, separately, the eigenvalues.

    The prime-mover torque is set from ``(P_set, Q_set)``. The sufficient
    conditions are one-directional: ``direct_verdict`` may be stable while
    the conditions fail.
    """
    dc0 = derived_constants(params, grid)
    T_m = torque_for_setpoints(P_set, Q_set, dc0.R, grid.V, grid.w_n)
    params = replace(params, T_m=T_m, Q_set=Q_set)
    if K_tilde is not None:
        params = params.with_ktilde(K_tilde)
    a1 = check_torque_condition(params, grid)
    if not check_existence5(params, grid).holds:
        raise InfeasibleError(
            "no equilibrium: 4 R^2 Q_tilde^2 <= V^4 + 4 R V^2 Tm_tilde w_g is violated"
        )
    points = equilibria5(params, grid)
    if isinstance(points, ExceptionalEquilibria):
        points = list(points.others)
    z_r = next((p for p in points if p.branch is Branch.RIGHT), None)
    if z_r is None:
        raise InfeasibleError("no regular equilibrium with positive field current")
    i_fr = z_r.state.i_f

    (z_r,) = classify_equilibria([z_r], params, grid)
    max_real = max(e.real for e in z_r.eigenvalues)

    if not a1.strict:
        lo = hi = math.nan
        u_min = u_max = eps = math.nan
        u_eps_inside = margin_ok = fourth_ok = q_ok = False
    else:
        lo, hi = build_geometry(params, grid).if_increasing
        u_min, u_max, eps = default_clamp(params, grid)
        u_eps_inside = lo < u_min - eps and u_max + eps < hi
        margin_ok = lo + eps <= i_fr <= hi - eps
        fourth_ok = False
        q_ok = False
        if u_eps_inside:
            samples = np.concatenate(
                ([u_min - eps, u_max + eps], np.linspace(u_min - eps, u_max + eps, U_EPS_SAMPLES))
            )
            fourth_ok = all(
                verdict(jacobian4(first_branch_state(float(s), params, grid), float(s), params, grid)).stability
                is Stability.STABLE
                for s in samples
            )
            q_tilde = derived_constants(params, grid).Q_tilde
            q_ok = (
                steady_state_reactive_power(u_min, params, grid)
                <= q_tilde
                <= steady_state_reactive_power(u_max, params, grid)
            )
    met = bool(a1.strict and u_eps_inside and margin_ok and fourth_ok and q_ok)
    return SufficientConditionReport(
        torque_condition_strict=a1.strict,
        equilibrium_exists=True,
        i_f_r=i_fr,
        if_increasing=(lo, hi),
        u_min=u_min,
        u_max=u_max,
        eps=eps,
        u_eps_inside=u_eps_inside,
        i_f_r_with_margin=margin_ok,
        fourth_order_stable_on_u_eps=fourth_ok,
        q_tilde_in_range=q_ok,
        sufficient_conditions_met=met,
        direct_verdict=z_r.stability,
        max_real=max_real,
        z_r=z_r,
    )


# --- (P_set, Q_set) sweeps --------------------------------------------------

NO_EQUILIBRIUM = "no-equilibrium"
VERDICT_LABELS = {
    Stability.STABLE: "stable",
    Stability.UNSTABLE: "unstable",
    Stability.MARGINAL: "marginal",
}


@dataclass(frozen=True)
class SweepGrid:
    P_range: tuple
    Q_range: tuple
    n_P: int = 201
    n_Q: int = 201

    def __post_init__(self):
        if self.n_P < 2 or self.n_Q < 2:
            raise ValueError("sweep grid needs at least 2 points per axis")
        if not (self.P_range[0] < self.P_range[1] and self.Q_range[0] < self.Q_range[1]):
            raise ValueError("sweep ranges must be increasing")

    @property
    def P_values(self) -> np.ndarray:
        return np.linspace(self.P_range[0], self.P_range[1], self.n_P)

    @property
    def Q_values(self) -> np.ndarray:
        return np.linspace(self.Q_range[0], self.Q_range[1], self.n_Q)

    @property
    def cell_area(self) -> float:
        dP = (self.P_range[1] - self.P_range[0]) / (self.n_P - 1)
        dQ = (self.Q_range[1] - self.Q_range[0]) / (self.n_Q - 1)
        return dP * dQ


def default_sweep_grid(params: SynchronverterParams, grid: GridParams, n_P=201, n_Q=201) -> SweepGrid:
    """Grid spanning ``1.2 (|C| + r)`` in P and ``1.2 r`` in Q, r from the configured torque."""
    dc = derived_constants(params, grid)
    c_norm = grid.V**2 / (2 * dc.R)
    disc = grid.V**4 + 4 * grid.V**2 * dc.R * dc.Tm_tilde * grid.w_g
    # with no circle at the configured torque, fall back to the zero-torque radius |C|
    r = math.sqrt(disc) / (2 * dc.R) if disc > 0 else c_norm
    half_P = 1.2 * (c_norm + r)
    return SweepGrid((-half_P, half_P), (-1.2 * r, 1.2 * r), n_P, n_Q)


@dataclass(frozen=True)
class StabilityMap:
    """Per-cell sweep results; arrays are indexed ``[i_Q, i_P]``."""

    sweep: SweepGrid
    order: int
    K_tilde: Optional[float]
    verdict: np.ndarray
    max_real: np.ndarray
    i_f_e: np.ndarray
    delta_e: np.ndarray
    in_sector: np.ndarray
    g_prime_sign: np.ndarray

    @property
    def shape(self):
        return self.verdict.shape

    @property
    def cell_count(self) -> int:
        return int(self.verdict.size)

    def count(self, label: str) -> int:
        return int(np.count_nonzero(self.verdict == label))

    def stable_area(self) -> float:
        return self.count("stable") * self.sweep.cell_area

    def cell_index(self, P: float, Q: float):
        """Index ``(i_Q, i_P)`` of the grid node nearest to ``(P, Q)``."""
        i_P = int(np.argmin(np.abs(self.sweep.P_values - P)))
        i_Q = int(np.argmin(np.abs(self.sweep.Q_values - Q)))
        return i_Q, i_P

    def verdict_at(self, P: float, Q: float) -> str:
        return str(self.verdict[self.cell_index(P, Q)])

    def rows(self):
        """Yield CSV rows ``(P, Q, verdict, max_real, i_f_e, delta_e_deg, in_sector, g_prime_sign)``."""
        P_vals, Q_vals = self.sweep.P_values, self.sweep.Q_values
        for iq, Q in enumerate(Q_vals):
            for ip, P in enumerate(P_vals):
                yield (
                    float(P),
                    float(Q),
                    str(self.verdict[iq, ip]),
                    float(self.max_real[iq, ip]),
                    float(self.i_f_e[iq, ip]),
                    float(np.degrees(self.delta_e[iq, ip])),
                    bool(self.in_sector[iq, ip]),
                    int(self.g_prime_sign[iq, ip]),
                )


def _batched_max_real(A: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvals(A).real.max(axis=-1)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc


CELL_FIELDS = ("verdict", "max_real", "i_f_e", "delta_e", "in_sector", "g_prime_sign", "i_d_e", "i_q_e")


def classify_setpoints(
    P_set, Q_set, params: SynchronverterParams, grid: GridParams, K_tilde=None, order=5, tol=TOL_MARGIN
):
    """Vectorized classification of the equilibria belonging to flat arrays of setpoints.

    Returns a dict of equally long arrays keyed by :data:`CELL_FIELDS`.
    On a nominal grid the equilibrium is the one whose active power is the
    setpoint itself; otherwise the larger active-power root is used.
    """
    P_set = np.asarray(P_set, dtype=float).ravel()
    Q_set = np.asarray(Q_set, dtype=float).ravel()
    dc = derived_constants(params, grid)
    R, L, m, V, w_g = dc.R, dc.L, params.m, grid.V, grid.w_g
    T_m = torque_for_setpoints(P_set, Q_set, R, V, grid.w_n)
    Tt = T_m + params.D_p * (grid.w_n - w_g)
    Qt = Q_set + params.D_q * (params.v_set - grid.nominal_v_set)

    n = P_set.size
    verdict = np.full(n, NO_EQUILIBRIUM, dtype=object)
    max_real = np.full(n, np.nan)
    i_f_e = np.full(n, np.nan)
    delta_e = np.full(n, np.nan)
    i_d_e = np.full(n, np.nan)
    i_q_e = np.full(n, np.nan)
    in_sector = np.zeros(n, dtype=bool)
    g_sign = np.zeros(n, dtype=int)

    P_l, P_r = active_power_roots(Tt, Qt, R, V, w_g)
    if is_nominal_grid(params, grid):
        # the setpoint is itself an equilibrium; take the root it sits on
        P_eq = np.where(np.abs(P_l - P_set) < np.abs(P_r - P_set), P_l, P_r)
    else:
        P_eq = P_r
    i_d, i_q, delta, i_f = principal_state(P_eq, Qt, Tt, R, L, m, V, w_g)
    num = w_g * L * P_eq - R * Qt
    den = R * P_eq + w_g * L * Qt + V**2
    exceptional = (np.abs(num) <= 1e-12 * V**2) & (np.abs(den) <= 1e-12 * V**2)
    ok = np.isfinite(P_eq) & np.isfinite(i_f) & (i_f > 0) & ~exceptional
    verdict[exceptional] = VERDICT_LABELS[Stability.MARGINAL]

    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return dict(zip(CELL_FIELDS, (verdict, max_real, i_f_e, delta_e, in_sector, g_sign, i_d_e, i_q_e)))
    i_d, i_q, delta, i_f = i_d[idx], i_q[idx], delta[idx], i_f[idx]
    Tt_ok = Tt[idx]
    i_f_e[idx] = i_f
    delta_e[idx] = delta
    i_d_e[idx] = i_d
    i_q_e[idx] = i_q

    A4 = jacobian_batch(i_d, i_q, w_g, delta, i_f, R, L, m, params.J, params.D_p, V)
    mr4 = _batched_max_real(A4)
    if order == 4:
        mr = mr4
    else:
        A5 = jacobian_batch(
            i_d, i_q, w_g, delta, i_f, R, L, m, params.J, params.D_p, V, K_tilde=K_tilde
        )
        mr = _batched_max_real(A5)
    max_real[idx] = mr
    verdict[idx] = np.where(
        mr < -tol, "stable", np.where(mr > tol, "unstable", "marginal")
    )

    lo, hi = if_endpoints(Tt_ok, R, L, m, V, w_g)
    r = circle_radius(Tt_ok, R, V, w_g)
    i_f0 = if_zero_from_radius(r, R, L, m, V, w_g)
    if w_g * L > R:
        inc_lo, inc_hi = lo, i_f0
    else:
        inc_lo, inc_hi = i_f0, hi
    a1 = 4 * R * w_g * Tt_ok > -(V**2)
    in_sector[idx] = a1 & (inc_lo < i_f) & (i_f < inc_hi) & (mr4 < -tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        gp = image_reactive_slope(i_f, Tt_ok, R, L, m, V, w_g)
    g_sign[idx] = np.where(np.isfinite(gp), np.sign(gp), 0).astype(int)
    return dict(zip(CELL_FIELDS, (verdict, max_real, i_f_e, delta_e, in_sector, g_sign, i_d_e, i_q_e)))


def stability_sweep(
    sweep: SweepGrid,
    params: SynchronverterParams,
    grid: GridParams,
    K_tildes=(None,),
    order: int = 5,
    threads: int = 1,
    tol_margin: float = TOL_MARGIN,
) -> list[StabilityMap]:
    """Classify the equilibrium belonging to every ``(P_set, Q_set)`` grid cell.

    One map per gain in ``K_tildes``; a 4th-order sweep ignores the gain.
    Cells without an equilibrium are tagged ``no-equilibrium``. Work is
    split into chunks that may run on a thread pool; output order does not
    depend on ``threads``.
    """
    if order not in (4, 5):
        raise ValueError(f"order must be 4 or 5, got {order}")
    if order == 5 and any(k is None or k <= 0 for k in K_tildes):
        raise ValueError("5th-order sweeps need positive gains")
    derived_constants(params, grid)
    PP, QQ = np.meshgrid(sweep.P_values, sweep.Q_values)
    P_flat, Q_flat = PP.ravel(), QQ.ravel()
    n_chunks = max(1, int(threads)) * 4
    bounds = np.linspace(0, P_flat.size, n_chunks + 1).astype(int)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(n_chunks) if bounds[i] < bounds[i + 1]]

    maps = []
    for K_tilde in K_tildes:

        def work(span, K_tilde=K_tilde):
            a, b = span
            return classify_setpoints(P_flat[a:b], Q_flat[a:b], params, grid, K_tilde, order, tol_margin)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=int(threads)) as pool:
                parts = list(pool.map(work, chunks))
        else:
            parts = [work(c) for c in chunks]
        fields = [np.concatenate([p[name] for p in parts]).reshape(PP.shape) for name in CELL_FIELDS[:6]]
        maps.append(StabilityMap(sweep, order, K_tilde if order == 5 else None, *fields))
    return maps
