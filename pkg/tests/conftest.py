import math

import numpy as np
import pytest
from hypothesis import strategies as st

from synchronverter.params import GridParams, SynchronverterParams, load_config

W_G = 100 * math.pi


@pytest.fixture(scope="session")
def ex_a():
    return load_config("low_voltage")


@pytest.fixture(scope="session")
def ex_b():
    return load_config("high_voltage")


def make_params(R_s, L_s, n, m, V, w_g, torque_frac, J=1.0, D_p=5.0, K=5000.0, Q_frac=0.0):
    """Parameters with a strictly feasible effective torque.

    ``torque_frac`` scales V^2 / (4 R w_g): values above -1 keep the
    circle non-degenerate. ``Q_frac`` places Q_set at that fraction of r.
    """
    R = n * R_s
    Tm = torque_frac * V**2 / (4 * R * w_g)
    r = math.sqrt(V**4 + 4 * V**2 * R * Tm * w_g) / (2 * R)
    params = SynchronverterParams(
        R_s=R_s, L_s=L_s, n=n, J=J, D_p=D_p, D_q=0.0, m=m, K=K, T_m=Tm,
        Q_set=Q_frac * r, v_set=math.sqrt(2 / 3) * V,
    )
    return params, GridParams(V=V, w_g=w_g, w_n=w_g)


@st.composite
def feasible_configs(draw, torque=(-0.9, 3.0), q=(0.0, 0.0)):
    R_s = draw(st.floats(0.01, 2.0))
    L_s = draw(st.floats(1e-4, 0.05))
    n = draw(st.floats(1.0, 40.0))
    m = draw(st.floats(0.5, 40.0))
    V = draw(st.floats(100.0, 20000.0))
    w_g = draw(st.floats(2 * math.pi * 45, 2 * math.pi * 65))
    frac = draw(st.floats(*torque).filter(lambda v: abs(v) > 1e-3))
    q_frac = draw(st.floats(*q)) if q != (0.0, 0.0) else 0.0
    return make_params(R_s, L_s, n, m, V, w_g, frac, Q_frac=q_frac)


def random_configs(n, seed=0, torque=(-0.9, 3.0), q=(0.0, 0.0)):
    """Seeded plain-numpy variant of :func:`feasible_configs` for timed loops."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        frac = rng.uniform(*torque)
        if abs(frac) < 1e-3:
            frac = 1e-3
        out.append(
            make_params(
                rng.uniform(0.01, 2.0), rng.uniform(1e-4, 0.05), rng.uniform(1.0, 40.0),
                rng.uniform(0.5, 40.0), rng.uniform(100.0, 20000.0),
                rng.uniform(2 * math.pi * 45, 2 * math.pi * 65), frac,
                Q_frac=rng.uniform(*q),
            )
        )
    return out
