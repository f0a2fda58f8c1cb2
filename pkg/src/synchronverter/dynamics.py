"""Right-hand sides of the 4th-order and 5th-order synchronverter models."""

from __future__ import annotations

import enum
import math

import numpy as np

from .core import powers_from_state
from .params import (
    SQRT_3_2,
    GridParams,
    SynchronverterParams,
    effective_reactive_setpoint,
)


class SatMode(enum.Enum):
    INTERIOR = "interior"
    CLAMPED_LOW = "clamped_low"
    CLAMPED_HIGH = "clamped_high"


def sat_mode(i_f: float, u_min: float, u_max: float) -> SatMode:
    if i_f <= u_min:
        return SatMode.CLAMPED_LOW
    if i_f >= u_max:
        return SatMode.CLAMPED_HIGH
    return SatMode.INTERIOR


def saturating_integrator(i_f: float, w: float, u_min: float, u_max: float) -> float:
    """Rate of a saturating integrator with state ``i_f`` and input ``w``.

    On the closed lower bound only the positive part of ``w`` passes, on the
    closed upper bound only the negative part.
    """
    if i_f <= u_min:
        return max(w, 0.0)
    if i_f >= u_max:
        return min(w, 0.0)
    return w


def vector_field(params: SynchronverterParams, grid: GridParams, mode: str = "saturated"):
    """Float-only right-hand side ``f(i_d, i_q, w, delta, i_f) -> 5-tuple``.

    ``mode`` is ``"saturated"`` (clamped i_f loop), ``"unsaturated"`` or
    ``"fourth_order"`` (i_f frozen). Built once per run so that the
    integrator inner loop touches only local floats.
    """
    if mode not in ("saturated", "unsaturated", "fourth_order"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "saturated" and (params.u_min is None or params.u_max is None):
        raise ValueError("saturated model needs u_min and u_max")
    R, L, m, J, D_p = params.R, params.L, params.m, params.J, params.D_p
    V, w_g = grid.V, grid.w_g
    torque = params.T_m + D_p * grid.w_n
    sin, cos = math.sin, math.cos
    if mode != "fourth_order":
        q_tilde = effective_reactive_setpoint(params, grid)
        K_tilde = params.K_tilde
    u_min, u_max = params.u_min, params.u_max

    def f(i_d, i_q, w, delta, i_f):
        s, c = sin(delta), cos(delta)
        d_id = (-R * i_d + w * L * i_q + V * s) / L
        d_iq = (-w * L * i_d - R * i_q - m * i_f * w + V * c) / L
        d_w = (torque + m * i_f * i_q - D_p * w) / J
        if mode == "fourth_order":
            rate = 0.0
        else:
            rate = (q_tilde - V * (i_q * s - i_d * c)) / K_tilde
            if mode == "saturated":
                rate = saturating_integrator(i_f, rate, u_min, u_max)
        return d_id, d_iq, d_w, w - w_g, rate

    return f


def rhs4(x, i_f, params: SynchronverterParams, grid: GridParams) -> np.ndarray:
    """Time derivative of ``x = (i_d, i_q, w, delta)`` with ``i_f`` held fixed."""
    f = vector_field(params, grid, "fourth_order")
    return np.array(f(*(float(v) for v in x[:4]), float(i_f))[:4])


def field_current_rate(z, params: SynchronverterParams, grid: GridParams) -> float:
    """Unsaturated i_f rate ``(Q_tilde - Q) / K_tilde``, with Q measured from the state."""
    Q = powers_from_state(z, grid.V).Q
    return (effective_reactive_setpoint(params, grid) - Q) / params.K_tilde


def field_current_rate_k(z, params: SynchronverterParams, grid: GridParams) -> float:
    """The same rate written with ``k = sqrt(3/2) V / K`` and divided by ``m``."""
    i_d, i_q, _, delta, _ = z
    k = SQRT_3_2 * grid.V / params.K
    q_tilde = effective_reactive_setpoint(params, grid)
    return (k * i_d * math.cos(delta) - k * i_q * math.sin(delta) + k / grid.V * q_tilde) / params.m


def rhs5(z, params: SynchronverterParams, grid: GridParams, saturated: bool = True) -> np.ndarray:
    """Time derivative of ``z = (i_d, i_q, w, delta, i_f)``.

    With ``saturated=True`` the field current rate goes through the
    saturating integrator on ``[u_min, u_max]``; both bounds must then be set.
    """
    f = vector_field(params, grid, "saturated" if saturated else "unsaturated")
    return np.array(f(*(float(v) for v in z[:5])))
