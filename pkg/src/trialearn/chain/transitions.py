"""Numeric transition matrices and stationary distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, VerificationError
from .state_space import StateSpace

DENSE_SOLVE_LIMIT = 2000
POWER_TOL = 1e-13
POWER_MAX_SWEEPS = 2_000_000


@dataclass
class TransitionMatrix:
    space: StateSpace
    eps: float
    P: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def row_sum_error(self) -> float:
        return float(np.abs(self.P.sum(axis=1) - 1.0).max())


def build_transition_matrix(space: StateSpace, eps: float) -> TransitionMatrix:
    """Exact-sum numeric matrix at the given eps (eps = 0 allowed)."""
    if not 0.0 <= eps < 1.0:
        raise VerificationError(f"eps must lie in [0, 1), got {eps!r}")
    model = space.model
    n = len(space)
    P = np.zeros((n, n))
    for xi, x in enumerate(space.states):
        for y, terms in model.term_outcomes(x).items():
            yi = space.index.get(y)
            if yi is None:
                raise VerificationError(
                    "state space is not closed: successor outside the space"
                )
            if eps == 0.0:
                P[xi, yi] = sum(t.limit0() for t in terms)
            else:
                P[xi, yi] = sum(t.value(eps) for t in terms)
    out = TransitionMatrix(space=space, eps=eps, P=P)
    err = out.row_sum_error
    if err > 1e-9:
        raise VerificationError(f"transition rows do not sum to 1: error {err:.3e}")
    return out


def stationary_distribution(matrix: TransitionMatrix) -> tuple[np.ndarray, float]:
    """Unique stationary law of the perturbed chain, with its residual.

    Dense linear solve up to DENSE_SOLVE_LIMIT states, power iteration
    beyond; either way the returned residual is max|mu P - mu|.
    """
    if matrix.eps <= 0.0:
        raise VerificationError("stationary distribution needs eps > 0 (irreducible chain)")
    P = matrix.P
    n = P.shape[0]
    if n <= DENSE_SOLVE_LIMIT:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            mu = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            mu, *_ = np.linalg.lstsq(A, b, rcond=None)
        mu = np.maximum(mu, 0.0)
        mu = mu / mu.sum()
    else:
        mu = np.full(n, 1.0 / n)
        for sweep in range(POWER_MAX_SWEEPS):
            nxt = mu @ P
            delta = np.abs(nxt - mu).max()
            mu = nxt
            if delta < POWER_TOL:
                break
        else:
            raise ConvergenceError(
                f"power iteration did not reach {POWER_TOL} in "
                f"{POWER_MAX_SWEEPS} sweeps; last delta {delta:.3e}"
            )
        mu = mu / mu.sum()
    residual = float(np.abs(mu @ P - mu).max())
    return mu, residual
