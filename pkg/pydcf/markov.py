import logging
import warnings

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .exceptions import ConvergenceError

logger = logging.getLogger(__name__)

# chains with more states than this go straight to power iteration
DIRECT_SOLVE_MAX_STATES = 50_000


def _as_stochastic(P, row_tol=1e-9):
    P = sparse.csr_matrix(P, dtype=float)
    if P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ValueError(f"Transition matrix must be square and non-empty, got shape {P.shape}")
    if P.nnz and P.data.min() < -row_tol:
        raise ValueError("Transition matrix has negative entries.")
    row_sums = np.asarray(P.sum(axis=1)).ravel()
    worst = np.max(np.abs(row_sums - 1.0))
    if worst > row_tol:
        raise ValueError(f"Transition matrix is not row-stochastic (max row deviation {worst:.3e})")
    return P


def _direct_solve(P):
    # pi (P - I) = 0 with the last balance equation replaced by sum(pi) = 1
    n = P.shape[0]
    A = (P.T - sparse.identity(n, format='csr')).tolil()
    A[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter('error', MatrixRankWarning)
        return np.atleast_1d(spsolve(A.tocsc(), rhs))


def _power_iteration(P, tol, max_iter):
    # the lazy chain (P + I) / 2 has the same stationary vector and is aperiodic
    lazy_T = (0.5 * (P + sparse.identity(P.shape[0], format='csr'))).T.tocsr()
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        new_pi = lazy_T @ pi
        new_pi /= new_pi.sum()
        if np.max(np.abs(new_pi - pi)) < tol * 1e-2:
            return new_pi
        pi = new_pi
    return pi


def residual(P, pi):
    """Infinity norm of pi P - pi."""
    P = sparse.csr_matrix(P, dtype=float)
    return float(np.max(np.abs(P.T @ pi - pi)))


def stationary_distribution(P, tol=1e-10, max_iter=200000, direct_max_states=DIRECT_SOLVE_MAX_STATES):
    """
    Stationary vector of an irreducible row-stochastic matrix.

    Chains up to direct_max_states states are solved directly with spsolve;
    larger ones, and chains where the direct solve fails, use power iteration.

    Parameters:
    P (array or scipy.sparse matrix): Transition matrix.
    tol (float): Bound on the infinity norm of pi P - pi.
    direct_max_states (int): Largest chain handed to the direct solver.

    Returns:
    numpy.ndarray: Probability vector pi with pi P = pi.
    """
    P = _as_stochastic(P)
    if P.shape[0] == 1:
        return np.ones(1)

    if P.shape[0] > direct_max_states:
        logger.debug(f"{P.shape[0]} states, using power iteration")
        pi = _power_iteration(P, tol, max_iter)
    else:
        try:
            pi = _direct_solve(P)
            if not np.all(np.isfinite(pi)):
                raise ArithmeticError("non-finite solution")
        except (MatrixRankWarning, ArithmeticError, RuntimeError) as e:
            logger.warning(f"Direct stationary solve failed ({e}), falling back to power iteration")
            pi = _power_iteration(P, tol, max_iter)

    pi = np.clip(pi, 0.0, None)
    total = pi.sum()
    if total <= 0:
        raise ConvergenceError("Stationary vector vanished; the chain may be reducible")
    pi = pi / total

    res = residual(P, pi)
    if res > tol:
        raise ConvergenceError("Stationary distribution did not reach the requested tolerance", residual=res)
    return pi
