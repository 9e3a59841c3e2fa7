"""Safety-filter QP

    min_{u, sigma >= 0}  (u - u0)^2 + sum_i p_i sigma_i^2
    s.t.  c_j u >= b_j                  (hard rows)
          c_i u + sigma_i >= b_i        (soft rows, one slack each)

solved by a primal active-set method, plus a brute-force KKT oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .safety import SafetyConstraint


class InfeasibleError(ValueError):
    pass


@dataclass
class FilterProblem:
    u0: float
    constraints: Sequence[SafetyConstraint]

    def __post_init__(self):
        slacks = [c.slack for c in self.constraints if c.slack is not None]
        if len(set(slacks)) != len(slacks):
            raise ValueError("each soft constraint needs its own slack channel")
        for c in self.constraints:
            if c.slack is not None and c.penalty <= 0:
                raise ValueError(f"penalty of {c.label} must be positive")
            if c.slack is None and c.coeff_u == 0:
                raise ValueError(f"hard constraint {c.label} has a zero coefficient")

    @property
    def soft(self) -> list[SafetyConstraint]:
        return [c for c in self.constraints if c.slack is not None]

    def standard_form(self):
        """(H, g, G, h, labels, const) for  min 1/2 z'Hz + g'z + const, G z >= h."""
        soft = self.soft
        nv = 1 + len(soft)
        H = np.zeros((nv, nv))
        H[0, 0] = 2.0
        for k, c in enumerate(soft, start=1):
            H[k, k] = 2.0 * c.penalty
        g = np.zeros(nv)
        g[0] = -2.0 * self.u0
        rows, rhs, labels = [], [], []
        col = {id(c): k for k, c in enumerate(soft, start=1)}
        for c in self.constraints:
            row = np.zeros(nv)
            row[0] = c.coeff_u
            if c.slack is not None:
                row[col[id(c)]] = 1.0
            rows.append(row)
            rhs.append(c.rhs)
            labels.append(c.label)
        for c in soft:
            row = np.zeros(nv)
            row[col[id(c)]] = 1.0
            rows.append(row)
            rhs.append(0.0)
            labels.append(f"sigma[{c.label}]>=0")
        G = np.array(rows).reshape(-1, nv)
        return H, g, G, np.array(rhs), labels, self.u0 ** 2

    def feasible_point(self) -> np.ndarray:
        lo, hi = -np.inf, np.inf
        for c in self.constraints:
            if c.slack is None:
                bound = c.rhs / c.coeff_u
                if c.coeff_u > 0:
                    lo = max(lo, bound)
                else:
                    hi = min(hi, bound)
        if lo > hi + 1e-12 * max(1.0, abs(lo), abs(hi)):
            raise InfeasibleError(f"hard constraints are incompatible: u >= {lo} and u <= {hi}")
        u = min(max(self.u0, lo), hi)
        z = [u] + [max(0.0, c.rhs - c.coeff_u * u) for c in self.soft]
        return np.array(z)


@dataclass
class FilterSolution:
    u: float
    slacks: np.ndarray
    active_set: list[str]
    objective: float
    multipliers: dict[str, float] = field(default_factory=dict)


def _kkt(H, c, Gw):
    nv, m = H.shape[0], Gw.shape[0]
    K = np.zeros((nv + m, nv + m))
    K[:nv, :nv] = H
    K[:nv, nv:] = -Gw.T
    K[nv:, :nv] = Gw
    rhs = np.concatenate((-c, np.zeros(m)))
    sol = np.linalg.solve(K, rhs)
    return sol[:nv], sol[nv:]


def active_set_qp(H, g, G, h, z0, *, tol: float = 1e-11, max_iter: int = 200):
    """Primal active-set for strictly convex  min 1/2 z'Hz + g'z,  G z >= h.

    ``z0`` must be feasible.  Returns (z, working set indices, multipliers).
    """
    z = np.array(z0, dtype=float)
    m = G.shape[0]
    # initial working set: active rows, kept linearly independent
    work: list[int] = []
    for j in range(m):
        if abs(G[j] @ z - h[j]) <= tol * max(1.0, abs(h[j])):
            trial = G[work + [j]]
            if np.linalg.matrix_rank(trial) == len(work) + 1 and len(work) < len(z):
                work.append(j)
    for _ in range(max_iter):
        c = H @ z + g
        p, lam = _kkt(H, c, G[work]) if work else (np.linalg.solve(H, -c), np.zeros(0))
        if len(work) == len(z):
            p = np.zeros_like(z)  # vertex: only roundoff would move us
        if np.max(np.abs(p), initial=0.0) <= tol * max(1.0, np.max(np.abs(z))):
            if len(lam) == 0 or lam.min() >= -tol:
                return z, work, lam
            work.pop(int(np.argmin(lam)))
            continue
        step, block = 1.0, None
        for j in range(m):
            if j in work:
                continue
            gp = G[j] @ p
            if gp < -1e-14:
                a = (h[j] - G[j] @ z) / gp
                if a < step:
                    step, block = max(a, 0.0), j
        z = z + step * p
        if block is not None:
            work.append(block)
    raise RuntimeError("active-set iteration limit reached")


def _solution(problem: FilterProblem, z, active_rows, lam, labels, const, H, g):
    obj = float(0.5 * z @ H @ z + g @ z + const)
    return FilterSolution(
        u=float(z[0]), slacks=np.asarray(z[1:], dtype=float),
        active_set=[labels[j] for j in active_rows], objective=obj,
        multipliers={labels[j]: float(l) for j, l in zip(active_rows, lam)},
    )


def solve(problem: FilterProblem) -> FilterSolution:
    H, g, G, h, labels, const = problem.standard_form()
    z0 = problem.feasible_point()
    z, work, lam = active_set_qp(H, g, G, h, z0)
    return _solution(problem, z, work, lam, labels, const, H, g)


def oracle_solve(problem: FilterProblem, *, tol: float = 1e-9) -> FilterSolution:
    """Enumerate every active-set hypothesis and keep the best KKT point."""
    H, g, G, h, labels, const = problem.standard_form()
    m, nv = G.shape
    if m > 12:
        raise ValueError("oracle is limited to 12 constraint rows")
    best = None
    for k in range(0, min(m, nv) + 1):
        for subset in itertools.combinations(range(m), k):
            Gw = G[list(subset)]
            if k and np.linalg.matrix_rank(Gw) < k:
                continue
            try:
                z, lam = _equality_qp(H, g, Gw, h[list(subset)])
            except np.linalg.LinAlgError:
                continue
            if np.any(G @ z - h < -tol * np.maximum(1.0, np.abs(h))):
                continue
            if len(lam) and lam.min() < -tol:
                continue
            obj = 0.5 * z @ H @ z + g @ z + const
            if best is None or obj < best[0] - 1e-15:
                best = (obj, z, subset, lam)
    if best is None:
        raise InfeasibleError("no KKT point found")
    _, z, subset, lam = best
    return _solution(problem, z, list(subset), lam, labels, const, H, g)


def _equality_qp(H, g, Gw, hw):
    """min 1/2 z'Hz + g'z  s.t.  Gw z = hw."""
    nv, k = H.shape[0], Gw.shape[0]
    K = np.zeros((nv + k, nv + k))
    K[:nv, :nv] = H
    K[:nv, nv:] = -Gw.T
    K[nv:, :nv] = Gw
    sol = np.linalg.solve(K, np.concatenate((-g, hw)))
    return sol[:nv], sol[nv:]


def filter_input(u0: float, coeff, rhs, penalties) -> tuple[float, np.ndarray]:
    """Array fast path: row 0 hard, rows 1.. soft with the given penalties.

    With sigma_i = max(0, b_i - c_i u) eliminated, the cost is a convex
    piecewise quadratic in u; its minimiser is found exactly by scanning the
    breakpoints b_i / c_i and is then clipped to the hard-row interval.
    Returns the filtered input and a per-row flag marking active constraints.
    """
    coeff = np.asarray(coeff, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    m = len(coeff)
    if np.all(coeff * u0 >= rhs):
        return float(u0), np.zeros(m, dtype=bool)
    c0, b0 = coeff[0], rhs[0]
    lo, hi = -np.inf, np.inf
    if c0 > 0:
        lo = b0 / c0
    elif c0 < 0:
        hi = b0 / c0
    elif b0 > 0:
        raise InfeasibleError("hard constraint has a zero coefficient and positive bound")
    # tiny arrays: plain floats are much faster than numpy here
    soft = [(float(ci), float(bi), float(pi))
            for ci, bi, pi in zip(coeff[1:], rhs[1:], penalties) if ci != 0.0]
    edges = [-math.inf] + sorted(bi / ci for ci, bi, _ in soft) + [math.inf]
    u = u0
    for a, z in zip(edges[:-1], edges[1:]):
        if math.isfinite(a) and math.isfinite(z):
            probe = 0.5 * (a + z)
        elif math.isfinite(z):
            probe = z - 1.0
        elif math.isfinite(a):
            probe = a + 1.0
        else:
            probe = u0
        num, den = u0, 1.0
        for ci, bi, pi in soft:
            if ci * probe < bi:
                num += pi * ci * bi
                den += pi * ci * ci
        u = num / den
        if a - 1e-12 * max(1.0, abs(a)) <= u <= z + 1e-12 * max(1.0, abs(z)):
            break
    u = float(min(max(u, lo), hi))
    tol = 1e-12 * max(1.0, abs(u))
    active = np.empty(m, dtype=bool)
    active[0] = abs(c0 * u - b0) <= tol * max(1.0, abs(c0))
    active[1:] = coeff[1:] * u <= rhs[1:] + tol
    return u, active
