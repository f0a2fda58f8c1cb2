"""State containers and the algebraic identities of the dq-frame model.

Angles are radians. Powers are in W / VAr, currents in A.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConfigError


class State4(NamedTuple):
    i_d: float
    i_q: float
    w: float
    delta: float


class State5(NamedTuple):
    i_d: float
    i_q: float
    w: float
    delta: float
    i_f: float

    @property
    def x(self) -> State4:
        return State4(self.i_d, self.i_q, self.w, self.delta)

    @classmethod
    def from_x(cls, x, i_f: float) -> "State5":
        return cls(x[0], x[1], x[2], x[3], i_f)


class PowerPoint(NamedTuple):
    P: float
    Q: float


def wrap_angle(angle):
    """Fold an angle (or array of angles) into (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def park_voltage_dq(delta, V):
    """Grid voltage in the rotor dq frame: ``(v_d, v_q)``."""
    return -V * np.sin(delta), -V * np.cos(delta)


def powers_from_state(x, V) -> PowerPoint:
    """Active and reactive power delivered to the grid.

    Works elementwise when the state components are arrays.
    """
    i_d, i_q, _, delta = x[0], x[1], x[2], x[3]
    s, c = np.sin(delta), np.cos(delta)
    return PowerPoint(-V * (i_d * s + i_q * c), V * (i_q * s - i_d * c))


def currents_from_powers(pq, delta, V):
    """Invert :func:`powers_from_state` at a fixed power angle.

    Returns ``(i_d, i_q)``.
    """
    if np.any(np.asarray(V) == 0):
        raise ConfigError("V must be non-zero to recover currents from powers")
    P, Q = pq
    s, c = np.sin(delta), np.cos(delta)
    i_q = -(c * P - s * Q) / V
    i_d = -(s * P + c * Q) / V
    return i_d, i_q


def electric_torque(i_q, i_f, m):
    return -m * i_f * i_q


def torque_for_setpoints(P_set, Q_set, R, V, w_n):
    """Prime-mover torque that makes (P_set, Q_set) an equilibrium on a nominal grid."""
    if V <= 0 or w_n <= 0:
        raise ConfigError("V and w_n must be positive")
    return (P_set + R * (P_set**2 + Q_set**2) / V**2) / w_n

