"""Random bounded-acceleration head-vehicle profiles shared by several tests."""

import numpy as np


def random_head(rng, v_star=20.0, dt=0.01, horizon=40.0, a_max=5.0, v_max=35.0):
    """Piecewise-constant acceleration in [-a_max, a_max]; speed kept in [0, v_max].

    The speed is piecewise linear on the dt grid and is returned as a
    callable that interpolates between grid points.
    """
    n = int(round(horizon / dt)) + 2
    acc = np.zeros(n)
    k = int(rng.uniform(1.0, 5.0) / dt)
    while k < n:
        length = int(rng.uniform(0.5, 3.0) / dt)
        acc[k:k + length] = rng.uniform(-a_max, a_max)
        k += length
    v = np.empty(n)
    v[0] = v_star
    for i in range(1, n):
        v[i] = min(max(v[i - 1] + dt * acc[i - 1], 0.0), v_max)
    grid = np.arange(n) * dt
    return lambda t: float(np.interp(t, grid, v))
