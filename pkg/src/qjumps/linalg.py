"""Dense complex linear algebra for the small operators used throughout.

Every operator in this package lives on a Hilbert space of dimension at most
2*(n_max+1)**2 <= 32, so everything here is dense ``numpy`` arithmetic.  The
functions are thin, checked wrappers: they validate shapes, enforce the
accuracy contracts listed below and raise explicit exceptions instead of
returning silently wrong results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

MAX_DIM = 32

# accuracy contracts, overridable at module level
EIG_RESIDUAL_TOL = 1e-9
SOLVE_RESIDUAL_TOL = 1e-10
SOLVE_COND_LIMIT = 1e12
EXPM_NORM_GUARD = 1e3
DEFECT_TOL = 1e-6


class LinalgError(ArithmeticError):
    """Base class for numerical failures in this module."""


class ConvergenceError(LinalgError):
    pass


class SingularMatrixError(LinalgError):
    pass


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a non-empty 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {a.shape[0]} exceeds MAX_DIM={MAX_DIM}")
    return a


def dag(m) -> np.ndarray:
    return np.conj(np.asarray(m)).T


def kron(*ops) -> np.ndarray:
    """Kronecker product of one or more matrices, left factor most significant."""
    if not ops:
        raise ValueError("kron needs at least one factor")
    out = as_matrix(ops[0])
    for op in ops[1:]:
        out = np.kron(out, as_matrix(op))
    return out


@dataclass(frozen=True)
class EigResult:
    """Eigenpairs of a general square matrix.

    ``vectors[:, k]`` is a unit-norm right eigenvector for ``values[k]``.  When
    the input is defective, parallel eigenvectors belonging to a coalesced
    eigenvalue are collapsed to one and ``defective`` is set.
    """

    values: np.ndarray
    vectors: np.ndarray
    defective: bool

    def pairs(self):
        return [(self.values[k], self.vectors[:, k]) for k in range(len(self.values))]


def eig_general(m) -> EigResult:
    """Eigendecomposition of a (possibly non-normal, possibly defective) matrix.

    Raises
    ------
    ConvergenceError
        If the QR iteration fails or a returned pair violates the residual
        bound ``||m v - lambda v|| <= EIG_RESIDUAL_TOL * ||m||``.
    """
    a = _square(m)
    # entries far below the matrix scale upset LAPACK balancing; dropping them
    # is a backward perturbation of order 1e-32 ||m||
    big = np.abs(a).max()
    if big > 0:
        a = np.where(np.abs(a) < 1e-32 * big, 0, a)
    try:
        w, v = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc
    v = v / np.linalg.norm(v, axis=0)
    scale = max(np.linalg.norm(a, 2), np.finfo(float).tiny)
    res = np.linalg.norm(a @ v - v * w, axis=0)
    if np.any(res > EIG_RESIDUAL_TOL * scale):
        raise ConvergenceError(f"eigen-residual {res.max():.3e} exceeds bound")

    # defect detection: coalesced eigenvalues whose eigenvectors are parallel
    n = len(w)
    keep = np.ones(n, dtype=bool)
    defective = False
    for i in range(n):
        if not keep[i]:
            continue
        for j in range(i + 1, n):
            if not keep[j]:
                continue
            if abs(w[i] - w[j]) <= np.sqrt(DEFECT_TOL) * scale:
                if abs(np.vdot(v[:, i], v[:, j])) > 1.0 - DEFECT_TOL:
                    keep[j] = False
                    defective = True
    return EigResult(values=w[keep], vectors=v[:, keep], defective=defective)


def solve_linear(m, rhs) -> np.ndarray:
    """Solve ``m x = rhs`` for a well-conditioned square ``m``."""
    a = _square(m)
    b = np.asarray(rhs, dtype=complex)
    if b.shape[0] != a.shape[0]:
        raise ValueError("right-hand side length does not match matrix")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > SOLVE_COND_LIMIT:
        raise SingularMatrixError(f"matrix is singular or ill-conditioned (cond={cond:.3e})")
    x = np.linalg.solve(a, b)
    res = np.linalg.norm(a @ x - b)
    bound = SOLVE_RESIDUAL_TOL * (np.linalg.norm(a, 2) * np.linalg.norm(x) + np.linalg.norm(b))
    if res > bound:
        raise SingularMatrixError(f"solve residual {res:.3e} exceeds bound {bound:.3e}")
    return x


def expm(m) -> np.ndarray:
    """Matrix exponential by scaling and squaring.

    Matrices with ``||m|| > EXPM_NORM_GUARD`` are accepted only when their
    logarithmic norm keeps the result inside the float64 range.
    """
    a = _square(m)
    if np.linalg.norm(a, 1) > EXPM_NORM_GUARD:
        lognorm = np.linalg.eigvalsh(0.5 * (a + dag(a))).max()
        if lognorm > 700.0:
            raise OverflowError(f"expm argument would overflow (log-norm {lognorm:.1f})")
    return scipy.linalg.expm(a)


def partial_trace(m, dims, keep) -> np.ndarray:
    """Reduced matrix on factor(s) ``keep`` of a tensor-product operator.

    ``dims`` lists the factor dimensions (left factor most significant); ``keep``
    is one factor index or a sequence of them.
    """
    a = as_matrix(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if a.shape != (total, total):
        raise ValueError(f"matrix shape {a.shape} does not match factor dims {dims}")
    keep = [keep] if np.isscalar(keep) else list(keep)
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise ValueError("keep index out of range")
    t = a.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace one factor at a time, highest index first so positions stay valid
    for i in sorted(traced, reverse=True):
        nleft = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + nleft)
    d = int(np.prod([dims[k] for k in sorted(keep)]))
    return t.reshape(d, d)


def is_hermitian(m, tol=1e-12) -> bool:
    a = np.asarray(m)
    return bool(np.max(np.abs(a - dag(a)), initial=0.0) <= tol)
