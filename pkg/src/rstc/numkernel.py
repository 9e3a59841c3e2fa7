"""Small dense linear-algebra kernels.

Everything here targets matrices of dimension <= 16, so clarity wins over
speed.  ``np.linalg.solve`` is the only LAPACK routine relied upon.
"""

from __future__ import annotations

import math

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a kernel cannot certify its result."""


class NotHurwitzError(NumericalError):
    pass


class RiccatiError(NumericalError):
    pass


def _square(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


_TAYLOR_DEGREE = 13
_SQUARING_THRESHOLD = 0.5


def expm(M, t: float = 1.0) -> np.ndarray:
    """e^{M t} by scaling and squaring around a degree-13 Taylor polynomial."""
    X = _square(M) * t
    n = X.shape[0]
    norm = np.abs(X).sum(axis=0).max() if n else 0.0
    squarings = 0
    if norm > _SQUARING_THRESHOLD:
        squarings = int(math.ceil(math.log2(norm / _SQUARING_THRESHOLD)))
        X = X / (2.0 ** squarings)
    # Horner: I + X(I + X/2(I + X/3(...)))
    eye = np.eye(n)
    E = eye.copy()
    for k in range(_TAYLOR_DEGREE, 0, -1):
        E = eye + (X @ E) / k
    for _ in range(squarings):
        E = E @ E
    return E


def integral_expm(M, G, t: float) -> np.ndarray:
    """Return  int_0^t e^{M s} ds @ G  via the augmented-matrix exponential."""
    M = _square(M)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n, m = M.shape[0], G.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = M
    aug[:n, n:] = G
    return expm(aug, t)[:n, n:]


def solve_lyapunov(F, Q, *, check: bool = True) -> np.ndarray:
    """Solve  F^T P + P F = -Q  through the Kronecker-vectorised system.

    With ``check`` on, ``Q`` must be symmetric positive definite and the
    returned ``P`` is verified positive definite, which holds exactly when
    ``F`` is Hurwitz.
    """
    F = _square(F)
    Q = _square(Q)
    n = F.shape[0]
    if Q.shape != F.shape:
        raise ValueError("F and Q must have the same shape")
    if n > 16:
        raise ValueError("solve_lyapunov is meant for n <= 16")
    eye = np.eye(n)
    # Row-major vec: vec(F^T P) = (F^T kron I) vec P,  vec(P F) = (I kron F^T) vec P.
    K = np.kron(F.T, eye) + np.kron(eye, F.T)
    try:
        p = np.linalg.solve(K, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NotHurwitzError("Lyapunov operator is singular; F is not Hurwitz") from exc
    P = p.reshape(n, n)
    P = 0.5 * (P + P.T)
    resid = np.linalg.norm(F.T @ P + P @ F + Q)
    scale = max(1.0, np.linalg.norm(Q))
    if not np.isfinite(resid) or resid > 1e-8 * scale * max(1.0, np.linalg.norm(P)):
        raise NotHurwitzError(f"Lyapunov residual {resid:.3e} too large")
    if check:
        if sym_eigen(Q)[0] <= 0:
            raise ValueError("Q must be positive definite")
        if sym_eigen(P)[0] <= 0:
            raise NotHurwitzError("Lyapunov solution is not positive definite; F is not Hurwitz")
    return P


def is_hurwitz(F) -> bool:
    try:
        solve_lyapunov(F, np.eye(np.shape(F)[0]))
    except NotHurwitzError:
        return False
    return True


def sym_eigen(S, *, vectors: bool = False, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations."""
    S = _square(S)
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-9 * max(1.0, np.abs(S).max(initial=0.0)):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (S + S.T)
    n = a.shape[0]
    V = np.eye(n)
    scale = max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ rot
                a[idx, :] = rot.T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                V[:, idx] = V[:, idx] @ rot
    else:
        raise NumericalError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    if vectors:
        return w[order], V[:, order]
    return w[order]


def spectral_norm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return math.sqrt(max(0.0, sym_eigen(M.T @ M)[-1]))


def _bass_gain(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Initial stabilising output-injection gain L (A - L C Hurwitz).

    Bass's construction on the dual pair: shift A until it is anti-stable,
    then solve a Lyapunov equation whose solution is invertible whenever
    (A, C) is observable.
    """
    n = A.shape[0]
    # smallest shift that makes A + beta I anti-stable; a large shift gives a
    # huge gain and an ill-conditioned first Newton step
    beta = max(0.0, -float(np.linalg.eigvals(A).real.min())) + 1.0
    As = A + beta * np.eye(n)
    # As^T Z + Z As = 2 C^T C  <=>  (-As)^T Z + Z(-As) = -2 C^T C
    Z = solve_lyapunov(-As, 2.0 * C.T @ C, check=False)
    try:
        Zi = np.linalg.inv(Z)
    except np.linalg.LinAlgError as exc:
        raise RiccatiError("(A, C) is not observable; cannot build an initial gain") from exc
    if not np.all(np.isfinite(Zi)):
        raise RiccatiError("(A, C) is not observable; cannot build an initial gain")
    return Zi @ C.T


def solve_riccati_dual(A, Cbar, Q=None, R=None, *, max_iter: int = 200,
                       tol: float = 1e-10, L0=None):
    """Observer gain from the filter Riccati equation by Newton-Kleinman.

    Solves ``A P + P A^T - P C^T R^{-1} C P + Q = 0`` for the stabilising
    ``P`` and returns ``(L, P)`` with ``L = P C^T R^{-1}``.
    """
    A = _square(A)
    C = np.atleast_2d(np.asarray(Cbar, dtype=float))
    n = A.shape[0]
    Q = np.eye(n) if Q is None else _square(Q)
    R = np.eye(C.shape[0]) if R is None else _square(R)
    Ri = np.linalg.inv(R)
    L = _bass_gain(A, C) if L0 is None else np.atleast_2d(np.asarray(L0, dtype=float))
    P_prev = None
    for _ in range(max_iter):
        F = A - L @ C
        # F P + P F^T = -(Q + L R L^T)
        try:
            P = solve_lyapunov(F.T, Q + L @ R @ L.T, check=False)
        except NotHurwitzError as exc:
            raise RiccatiError("Newton-Kleinman lost stability; pair not detectable") from exc
        L = P @ C.T @ Ri
        if P_prev is not None and np.linalg.norm(P - P_prev) <= tol * max(1.0, np.linalg.norm(P)):
            break
        P_prev = P
    else:
        raise RiccatiError("Newton-Kleinman did not converge in %d steps; "
                           "(A, Cbar) looks non-detectable" % max_iter)
    resid = np.linalg.norm(A @ P + P @ A.T - P @ C.T @ Ri @ C @ P + Q)
    if resid > 1e-8 * max(1.0, np.linalg.norm(P)):
        raise RiccatiError(f"Riccati residual {resid:.3e} above tolerance")
    if not is_hurwitz(A - L @ C):
        raise RiccatiError("synthesised gain does not make A - L C Hurwitz")
    return L, P
