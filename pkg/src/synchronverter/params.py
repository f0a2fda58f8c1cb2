"""Machine, controller and grid parameters, plus the constants derived from them.

All quantities are SI. The JSON configuration format uses the short keys
``Rs, Ls, n, J, Dp, Dq, m, K, Tm, Qset, vset, umin, umax, eps, V, wg, wn``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError

SQRT_3_2 = math.sqrt(1.5)
SQRT_2_3 = math.sqrt(2.0 / 3.0)


@dataclass(frozen=True)
class SynchronverterParams:
    """Physical and controller constants of one synchronverter.

    ``u_min``, ``u_max`` and ``eps`` describe the saturating integrator range
    and the margin around it. Any of them may be ``None``, in which case a
    default derived from the power-plane geometry is used where needed.
    """

    R_s: float
    L_s: float
    n: float
    J: float
    D_p: float
    D_q: float
    m: float
    K: float
    T_m: float
    Q_set: float
    v_set: float
    u_min: Optional[float] = None
    u_max: Optional[float] = None
    eps: Optional[float] = None

    @property
    def R(self) -> float:
        return self.n * self.R_s

    @property
    def L(self) -> float:
        return self.n * self.L_s

    @property
    def M_f(self) -> float:
        return self.m / SQRT_3_2

    @property
    def K_tilde(self) -> float:
        return self.K * self.M_f

    def with_ktilde(self, K_tilde: float) -> "SynchronverterParams":
        """Return a copy whose reactive loop gain gives the requested K*M_f."""
        return replace(self, K=K_tilde / self.M_f)

    def validate(self) -> None:
        for name in ("R_s", "L_s", "J", "D_p", "m", "K", "v_set"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not self.D_q >= 0:
            raise ConfigError(f"D_q must be non-negative, got {self.D_q!r}")
        if not self.n >= 1:
            raise ConfigError(f"n must be >= 1, got {self.n!r}")
        for name in ("T_m", "Q_set"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.u_min is not None and self.u_max is not None and not self.u_min < self.u_max:
            raise ConfigError(f"u_min must be < u_max, got [{self.u_min}, {self.u_max}]")
        if self.eps is not None and not self.eps >= 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps!r}")


@dataclass(frozen=True)
class GridParams:
    """Infinite bus: rms line voltage and frequencies (rad/s)."""

    V: float
    w_g: float
    w_n: float

    def validate(self) -> None:
        for name in ("V", "w_g", "w_n"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")

    @property
    def nominal_v_set(self) -> float:
        return SQRT_2_3 * self.V


@dataclass(frozen=True)
class DerivedConstants:
    R: float
    L: float
    K_tilde: float
    k: float
    p: float
    phi: float
    Tm_tilde: float
    Q_tilde: float
    M_f: float
    Z_norm: float


def effective_torque(params: SynchronverterParams, grid: GridParams) -> float:
    """Prime-mover torque seen at equilibrium, droop term included."""
    return params.T_m + params.D_p * (grid.w_n - grid.w_g)


def effective_reactive_setpoint(params: SynchronverterParams, grid: GridParams) -> float:
    """Reactive power reference after the voltage droop."""
    return params.Q_set + params.D_q * (params.v_set - SQRT_2_3 * grid.V)


def derived_constants(params: SynchronverterParams, grid: GridParams) -> DerivedConstants:
    params.validate()
    grid.validate()
    R, L = params.R, params.L
    return DerivedConstants(
        R=R,
        L=L,
        K_tilde=params.K_tilde,
        k=SQRT_3_2 * grid.V / params.K,
        p=R / L,
        # atan2 of two positives lands in (0, pi/2)
        phi=math.atan2(grid.w_g * L, R),
        Tm_tilde=effective_torque(params, grid),
        Q_tilde=effective_reactive_setpoint(params, grid),
        M_f=params.M_f,
        Z_norm=math.hypot(R, grid.w_g * L),
    )


def is_nominal_grid(params: SynchronverterParams, grid: GridParams, rtol: float = 1e-12) -> bool:
    """True when the droop corrections vanish (w_n == w_g and v_set == sqrt(2/3) V)."""
    return math.isclose(grid.w_n, grid.w_g, rel_tol=rtol) and math.isclose(
        params.v_set, grid.nominal_v_set, rel_tol=rtol
    )


# --- configuration files -------------------------------------------------

_PARAM_KEYS = {
    "Rs": "R_s",
    "Ls": "L_s",
    "n": "n",
    "J": "J",
    "Dp": "D_p",
    "Dq": "D_q",
    "m": "m",
    "K": "K",
    "Tm": "T_m",
    "Qset": "Q_set",
    "vset": "v_set",
    "umin": "u_min",
    "umax": "u_max",
    "eps": "eps",
}
_GRID_KEYS = {"V": "V", "wg": "w_g", "wn": "w_n"}
_OPTIONAL = {"umin", "umax", "eps"}
CONFIG_KEYS = tuple(_PARAM_KEYS) + tuple(_GRID_KEYS)

BUNDLED_CONFIGS = ("low_voltage", "high_voltage")


def config_from_dict(data: dict) -> tuple[SynchronverterParams, GridParams]:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    missing = [k for k in CONFIG_KEYS if k not in data and k not in _OPTIONAL]
    if missing:
        raise ConfigError(f"missing configuration keys: {missing}")

    def number(key):
        value = data.get(key)
        if value is None and key in _OPTIONAL:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)

    params = SynchronverterParams(**{attr: number(key) for key, attr in _PARAM_KEYS.items()})
    grid = GridParams(**{attr: number(key) for key, attr in _GRID_KEYS.items()})
    params.validate()
    grid.validate()
    return params, grid


def config_to_dict(params: SynchronverterParams, grid: GridParams) -> dict:
    out = {key: getattr(params, attr) for key, attr in _PARAM_KEYS.items()}
    out.update({key: getattr(grid, attr) for key, attr in _GRID_KEYS.items()})
    return out


def resolve_config_path(path) -> Path:
    """Find a config file, falling back to the bundled examples.

    ``low_voltage``, ``low_voltage.json`` and ``examples/low_voltage.json``
    all resolve to the bundled file when no such path exists on disk.
    """
    candidate = Path(path)
    if candidate.is_file():
        return candidate
    stem = candidate.name[:-5] if candidate.name.endswith(".json") else candidate.name
    if stem in BUNDLED_CONFIGS:
        return Path(str(resources.files("synchronverter") / "examples" / f"{stem}.json"))
    raise ConfigError(f"config file not found: {path}")


def load_config(path) -> tuple[SynchronverterParams, GridParams]:
    resolved = resolve_config_path(path)
    try:
        data = json.loads(resolved.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{resolved}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
