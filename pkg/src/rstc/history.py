"""Uniform-grid signal histories and the quadrature over them."""

from __future__ import annotations

from typing import Callable

import numpy as np

_GRID_TOL = 1e-9


def grid_steps(duration: float, dt: float, what: str = "duration") -> int:
    """Number of ``dt`` steps in ``duration``; raises if not an integer multiple."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k = round(duration / dt)
    if k < 0 or abs(k * dt - duration) > _GRID_TOL * max(1.0, abs(duration)):
        raise ValueError(f"{what}={duration!r} is not an integer multiple of dt={dt!r}")
    return int(k)


class DelayedSignal:
    """Ring buffer of the most recent samples on a uniform grid.

    ``sample(k)`` is the value pushed ``k`` steps ago, i.e. at offset
    ``-k * dt`` from the newest sample.  The buffer starts filled with
    ``fill`` over the whole span so early look-backs read a quiescent past.
    """

    def __init__(self, dt: float, span: float, shape=(), fill: float = 0.0):
        self.dt = float(dt)
        self.span = float(span)
        self.n_steps = grid_steps(span, dt, "span")
        self._buf = np.full((self.n_steps + 1,) + tuple(shape), fill, dtype=float)
        self._head = self.n_steps  # index of newest sample
        self.t_now = 0.0

    def __len__(self) -> int:
        return self._buf.shape[0]

    def push(self, value) -> "DelayedSignal":
        self._head = (self._head + 1) % len(self)
        self._buf[self._head] = value
        self.t_now += self.dt
        return self

    def sample(self, k: int):
        if not 0 <= k <= self.n_steps:
            raise IndexError(f"look-back of {k} steps outside buffer of {self.n_steps}")
        v = self._buf[(self._head - k) % len(self)]
        return v.copy() if v.ndim else float(v)

    def at(self, offset: float):
        """Sample at a (non-positive, grid-aligned) time offset."""
        return self.sample(grid_steps(-offset, self.dt, "offset"))

    def recent(self, k: int) -> np.ndarray:
        """Samples ``0..k`` steps back, newest first."""
        if not 0 <= k <= self.n_steps:
            raise IndexError(f"look-back of {k} steps outside buffer of {self.n_steps}")
        idx = (self._head - np.arange(k + 1)) % len(self)
        return self._buf[idx]


def trapezoid_weights(n_points: int, dt: float) -> np.ndarray:
    w = np.full(n_points, dt)
    if n_points:
        w[0] = w[-1] = 0.5 * dt
    if n_points == 1:
        w[0] = 0.0
    return w


def weighted_integral(sig: DelayedSignal, start: float, stop: float,
                      W: Callable[[float], np.ndarray] | None = None) -> np.ndarray:
    """Composite trapezoid of  int_start^stop W(theta) sig(theta) d theta.

    Offsets are relative to the newest sample and must lie on the grid inside
    ``[-span, 0]``.  ``W`` maps an offset to a matrix (or scalar); identity
    weighting when omitted.
    """
    if not start < stop:
        raise ValueError("need start < stop")
    if start < -sig.span - _GRID_TOL or stop > _GRID_TOL:
        raise ValueError(f"[{start}, {stop}] is outside the buffer span [-{sig.span}, 0]")
    k_start = grid_steps(-start, sig.dt, "start offset")
    k_stop = grid_steps(-stop, sig.dt, "stop offset")
    ks = np.arange(k_stop, k_start + 1)
    weights = trapezoid_weights(len(ks), sig.dt)
    total = None
    for w, k in zip(weights, ks):
        theta = -k * sig.dt
        val = np.atleast_1d(sig.sample(int(k)))
        term = w * (val if W is None else np.atleast_2d(W(theta)) @ val)
        total = term if total is None else total + term
    return total
