"""Durand-Kerner (Weierstrass) simultaneous iteration for polynomial roots."""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError

INIT_RADIUS = 0.9
STEP_TOL = 1e-12
MAX_ITER = 200
RESIDUAL_TOL = 1e-8


def polynomial_roots(coeffs, *, tol: float = STEP_TOL, max_iter: int = MAX_ITER,
                     residual_tol: float = RESIDUAL_TOL) -> np.ndarray:
    """All complex roots of ``coeffs[0]*z**n + ... + coeffs[n]``.

    Starting points sit on a circle of radius 0.9, rotated by pi/(2n) so that
    none lies on the real axis. Iteration stops when every update is below
    ``tol``. If the cap is hit first, the roots are still accepted when the
    polynomial residual at each is below ``residual_tol``; otherwise
    :class:`ConvergenceError` is raised.
    """
    c = np.asarray(coeffs, dtype=complex)
    nz = np.flatnonzero(c)
    if len(nz) == 0:
        raise ValueError("zero polynomial has no well-defined roots")
    c = c[nz[0]:]
    # trailing zeros are roots at the origin
    n_zero = len(c) - 1 - np.flatnonzero(c)[-1]
    c = c[:len(c) - n_zero] / c[0]
    n = len(c) - 1
    if n == 0:
        return np.zeros(n_zero, dtype=complex)

    z = INIT_RADIUS * np.exp(1j * (2 * np.pi * np.arange(n) / n + np.pi / (2 * n)))
    converged = False
    for _ in range(max_iter):
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        denom = np.prod(diff, axis=1)
        # coincident estimates give a zero product; nudge those apart
        stuck = denom == 0
        denom[stuck] = 1.0
        step = np.polyval(c, z) / denom
        step[stuck] = 1e-6 * (1 + 1j)
        z = z - step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    if not converged:
        residual = np.abs(np.polyval(c, z))
        if not np.all(residual < residual_tol):
            raise ConvergenceError(f"root finder did not converge in {max_iter} iterations "
                                   f"(max residual {residual.max():.3g})")
    return np.concatenate([z, np.zeros(n_zero, dtype=complex)])
