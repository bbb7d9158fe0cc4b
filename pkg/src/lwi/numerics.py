"""Numerical kernels shared by the solvers.

* ``integrate_to_steady`` - adaptive Dormand-Prince integration (scipy's RK45)
  run in windows until a set of phase-insensitive observables stops changing.
* ``eig_dense_complex`` / ``cubic_roots`` - small dense eigenproblems and
  complex cubic roots.
* ``SparseOperator`` / ``sparse_nullvector`` - triplet assembly and the
  normalised kernel vector of a generator with a one-dimensional null space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

log = logging.getLogger(__name__)


class NumericsError(RuntimeError):
    pass


class NonConvergence(NumericsError):
    """The steady-state criterion was not met before ``max_time``.

    The last state is attached as ``state`` so callers can inspect it.
    """

    def __init__(self, message: str, state: Optional[np.ndarray] = None, time: float = np.nan):
        super().__init__(message)
        self.state = state
        self.time = time


class NumericalBlowup(NumericsError):
    pass


class NoConvergence(NumericsError):
    pass


class DegenerateLeadingCoefficient(NumericsError):
    pass


class RankDeficiencyAmbiguous(NumericsError):
    pass


class SolverFailure(NumericsError):
    pass


@dataclass
class SteadyResult:
    state: np.ndarray
    time: float
    residual: float
    observables: np.ndarray


def _modulus(y: np.ndarray) -> np.ndarray:
    return np.abs(y)


def integrate_to_steady(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    tol: float = 1e-7,
    window: float = 50.0,
    *,
    observables: Callable[[np.ndarray], np.ndarray] = _modulus,
    max_time: float = 2e5,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    noise_factor: float = 10.0,
) -> SteadyResult:
    """Integrate an autonomous ODE until ``observables`` are stationary.

    Convergence is declared when every observable changes by less than
    ``tol * |value| + noise`` across one window of length ``window``, where
    ``noise = noise_factor * (rtol * max|observables| + atol)`` is the level
    below which the integrator cannot resolve changes.  Observables should be
    insensitive to the global U(1) phase; with the default (element moduli) a
    rotating but otherwise stationary field counts as converged.  ``tol`` must
    sit above ``rtol``, otherwise step-size noise alone keeps the criterion
    from being met.

    Returns a :class:`SteadyResult`; ``residual`` is the norm of
    ``d observables / dt`` estimated by a forward difference along ``rhs``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.array(y0, dtype=complex).ravel()
    if not np.all(np.isfinite(y)):
        raise NumericalBlowup("initial state is not finite")

    def f(_t, state):
        return rhs(state)

    t = 0.0
    prev = np.asarray(observables(y), dtype=float)
    while t < max_time:
        sol = solve_ivp(f, (t, t + window), y, method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise SolverFailure(sol.message)
        y = sol.y[:, -1]
        t = float(sol.t[-1])
        if not np.all(np.isfinite(y)):
            raise NumericalBlowup(f"state became non-finite at t={t:g}")
        cur = np.asarray(observables(y), dtype=float)
        noise = noise_factor * (rtol * np.max(np.abs(cur), initial=0.0) + atol)
        if np.all(np.abs(cur - prev) < tol * np.abs(cur) + noise):
            return SteadyResult(y, t, observable_residual(rhs, y, observables), cur)
        prev = cur
    raise NonConvergence(f"no steady state within t={max_time:g}", state=y, time=t)


def observable_residual(rhs, y: np.ndarray, observables=_modulus, h: float = 1e-6) -> float:
    """Norm of the time derivative of the observables at ``y``."""
    dy = rhs(y)
    step = h / max(1.0, float(np.max(np.abs(dy))))
    d_obs = (np.asarray(observables(y + step * dy)) - np.asarray(observables(y))) / step
    return float(np.linalg.norm(d_obs))


def eig_dense_complex(matrix, return_vectors: bool = False):
    """Eigenvalues (optionally eigenvectors) of a small dense complex matrix."""
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError("matrix must be square and non-empty")
    if a.shape[0] > 16:
        raise ValueError("eig_dense_complex is meant for dimensions <= 16")
    if not np.all(np.isfinite(a)):
        raise NoConvergence("matrix has non-finite entries")
    try:
        if return_vectors:
            return scipy.linalg.eig(a)
        return scipy.linalg.eigvals(a)
    except scipy.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def eig_residuals(matrix, values, vectors) -> np.ndarray:
    a = np.asarray(matrix, dtype=complex)
    return np.linalg.norm(a @ vectors - vectors * values, axis=0)


def cubic_roots(c3: complex, c2: complex, c1: complex, c0: complex) -> np.ndarray:
    """Roots of c3 x^3 + c2 x^2 + c1 x + c0 with complex coefficients.

    Starts from the companion-matrix roots and applies Newton polishing,
    keeping a polished root only if it lowers the residual.
    """
    c3, c2, c1, c0 = (complex(c) for c in (c3, c2, c1, c0))
    scale = max(abs(c3), abs(c2), abs(c1), abs(c0))
    if abs(c3) <= 1e-14 * scale or c3 == 0:
        raise DegenerateLeadingCoefficient("leading coefficient vanishes")
    b2, b1, b0 = c2 / c3, c1 / c3, c0 / c3
    companion = np.array([[-b2, -b1, -b0], [1, 0, 0], [0, 1, 0]], dtype=complex)
    roots = scipy.linalg.eigvals(companion)

    def p(x):
        return ((x + b2) * x + b1) * x + b0

    def dp(x):
        return (3 * x + 2 * b2) * x + b1

    polished = []
    for r in roots:
        for _ in range(4):
            d = dp(r)
            if d == 0:
                break
            cand = r - p(r) / d
            if abs(p(cand)) < abs(p(r)):
                r = cand
            else:
                break
        polished.append(r)
    return np.array(polished)


class SparseOperator:
    """Square sparse operator assembled from (row, col, value) triplets.

    Duplicate entries are summed by :meth:`finalize`, after which the operator
    is immutable and exposed as a CSC matrix through ``matrix``.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._matrix: Optional[sp.csc_matrix] = None

    def add(self, rows, cols, values) -> None:
        if self._matrix is not None:
            raise RuntimeError("operator already finalized")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.broadcast_to(np.asarray(values, dtype=complex), rows.shape).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols differ in length")
        if rows.size and (rows.min() < 0 or cols.min() < 0
                          or rows.max() >= self.dimension or cols.max() >= self.dimension):
            raise IndexError("triplet index out of range")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def finalize(self) -> "SparseOperator":
        if self._matrix is None:
            if self._rows:
                rows = np.concatenate(self._rows)
                cols = np.concatenate(self._cols)
                vals = np.concatenate(self._vals)
            else:
                rows = cols = np.zeros(0, dtype=np.int64)
                vals = np.zeros(0, dtype=complex)
            n = self.dimension
            m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
            m.sum_duplicates()
            m.eliminate_zeros()
            self._matrix = m
            self._rows = self._cols = self._vals = []
        return self

    @property
    def matrix(self) -> sp.csc_matrix:
        if self._matrix is None:
            self.finalize()
        return self._matrix

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, v):
        return self.matrix @ v

    @classmethod
    def from_matrix(cls, matrix) -> "SparseOperator":
        m = sp.csc_matrix(matrix, dtype=complex)
        op = cls(m.shape[0])
        op._matrix = m
        return op


def _bordered(m, w, row):
    """``m`` with ``row`` replaced by the functional ``w`` (CSR) and the rhs."""
    n = m.shape[0]
    keep = np.ones(n)
    keep[row] = 0.0
    a = sp.diags(keep) @ sp.csr_matrix(m)
    nz = np.flatnonzero(w)
    a = a + sp.csr_matrix((w[nz], (np.full(nz.size, row), nz)), shape=(n, n))
    b = np.zeros(n, dtype=complex)
    b[row] = 1.0
    return sp.csr_matrix(a), b


class BlockPreconditioner:
    """One forward block Gauss-Seidel sweep with per-block (incomplete) LU.

    ``labels`` assigns every index to a block; blocks are visited in
    increasing label order and each one sees the already-updated values of
    all earlier blocks.  Blocks smaller than ``exact_below`` are factorised
    exactly, larger ones with ``spilu``.
    """

    def __init__(self, matrix, labels, *, drop_tol: float = 1e-2, fill_factor: float = 5.0,
                 exact_below: int = 400):
        a = sp.csr_matrix(matrix, dtype=complex)
        labels = np.asarray(labels)
        if labels.shape != (a.shape[0],):
            raise ValueError("labels length does not match matrix")
        self.shape = a.shape
        self.blocks = [np.flatnonzero(labels == k) for k in np.unique(labels)]
        self._factors = []
        self._lower = []
        seen = np.zeros(0, dtype=np.int64)
        for idx in self.blocks:
            rows = a[idx]
            diag = sp.csc_matrix(rows[:, idx])
            if idx.size < exact_below:
                self._factors.append(spla.splu(diag, permc_spec="COLAMD"))
            else:
                self._factors.append(spla.spilu(diag, drop_tol=drop_tol, fill_factor=fill_factor,
                                                permc_spec="COLAMD"))
            self._lower.append((seen, sp.csr_matrix(rows[:, seen])) if seen.size else None)
            seen = np.concatenate([seen, idx])

    def solve(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        out = np.zeros_like(v)
        for idx, lu, low in zip(self.blocks, self._factors, self._lower):
            r = v[idx]
            if low is not None:
                r = r - low[1] @ out[low[0]]
            out[idx] = lu.solve(r)
        return out

    def as_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, self.solve, dtype=complex)


def iterative_nullvector(op, normalization, labels=None, *, row: Optional[int] = None,
                         preconditioner: Optional[BlockPreconditioner] = None,
                         rtol: float = 1e-12, restart: int = 300, maxiter: int = 20,
                         residual_tol: float = 1e-10):
    """Kernel vector by preconditioned GMRES on the bordered system.

    Either ``labels`` (to build a :class:`BlockPreconditioner`) or a
    ``preconditioner`` from an earlier, nearby operator must be given.  A
    reused preconditioner that fails to converge is rebuilt once from
    ``labels``.  Returns ``(v, preconditioner)``.
    """
    m = op.matrix if isinstance(op, SparseOperator) else sp.csc_matrix(op)
    w = np.asarray(normalization, dtype=complex).ravel()
    if row is None:
        row = int(np.argmax(np.abs(w)))
    a, b = _bordered(m, w, row)
    attempts = []
    if preconditioner is not None:
        attempts.append(preconditioner)
    if labels is not None:
        attempts.append(None)
    if not attempts:
        raise ValueError("need labels or a preconditioner")
    for pre in attempts:
        if pre is None:
            pre = BlockPreconditioner(a, labels)
        v, info = spla.gmres(a, b, M=pre.as_operator(), rtol=rtol, atol=0.0,
                             restart=restart, maxiter=maxiter)
        if info == 0 and np.all(np.isfinite(v)):
            norm = w @ v
            if norm != 0:
                v = v / norm
                res = np.linalg.norm(m @ v) / max(np.linalg.norm(v), 1e-300)
                if res <= residual_tol:
                    return v, pre
        log.debug("GMRES attempt failed (info=%s)", info)
    raise SolverFailure("preconditioned GMRES did not reach the residual bound")


def sparse_nullvector(op, normalization, *, row: Optional[int] = None,
                      residual_tol: float = 1e-10, labels=None,
                      direct_limit: int = 20000) -> np.ndarray:
    """Kernel vector ``v`` of ``op`` scaled so that ``normalization @ v == 1``.

    ``normalization`` is the weight vector of a linear functional that must
    not annihilate the kernel (the trace functional for a Lindblad generator).
    One row of ``op`` is overwritten with that functional and the resulting
    system is solved by sparse LU.  The replaced row defaults to the position
    of the largest normalization weight, which is correct whenever the
    functional is also a left null vector (trace preservation).  If LU fails
    a shift-invert eigen-iteration for the smallest eigenvalue is tried.

    Above ``direct_limit`` unknowns, and when block ``labels`` are supplied,
    the bordered system is solved by :func:`iterative_nullvector` instead.
    """
    m = op.matrix if isinstance(op, SparseOperator) else sp.csc_matrix(op)
    n = m.shape[0]
    w = np.asarray(normalization, dtype=complex).ravel()
    if w.shape != (n,):
        raise ValueError("normalization length does not match operator")
    if not np.any(w):
        raise ValueError("normalization functional is zero")

    row_nnz = np.diff(sp.csr_matrix(m).indptr)
    if np.count_nonzero(row_nnz == 0) > 1:
        raise RankDeficiencyAmbiguous(
            f"{np.count_nonzero(row_nnz == 0)} empty rows: kernel is not one-dimensional")

    if row is None:
        row = int(np.argmax(np.abs(w)))
    if labels is not None and n > direct_limit:
        return iterative_nullvector(m, w, labels, row=row, residual_tol=residual_tol)[0]
    a, b = _bordered(m, w, row)

    v = None
    try:
        lu = spla.splu(sp.csc_matrix(a), permc_spec="COLAMD")
        v = lu.solve(b)
    except RuntimeError as exc:
        log.debug("sparse LU failed (%s); trying eigen-iteration", exc)
        v = _smallest_eigvec(m, w)

    if not np.all(np.isfinite(v)):
        v = _smallest_eigvec(m, w)
    norm = w @ v
    if norm == 0 or not np.isfinite(norm):
        raise SolverFailure("normalization functional vanishes on the computed vector")
    v = v / norm
    res = np.linalg.norm(m @ v) / max(np.linalg.norm(v), 1e-300)
    if res > residual_tol:
        v2 = _smallest_eigvec(m, w)
        res2 = np.linalg.norm(m @ v2) / max(np.linalg.norm(v2), 1e-300)
        if res2 < res:
            v, res = v2, res2
    if res > residual_tol:
        raise SolverFailure(f"null-vector residual {res:.3e} exceeds {residual_tol:.1e}")
    return v


def _smallest_eigvec(m, w) -> np.ndarray:
    n = m.shape[0]
    if n <= 400:
        vals, vecs = scipy.linalg.eig(m.toarray())
        order = np.argsort(np.abs(vals))
        if n > 1 and abs(vals[order[1]]) < 1e-9 * max(1.0, np.abs(vals).max()):
            raise RankDeficiencyAmbiguous("more than one vanishing eigenvalue")
        v = vecs[:, order[0]]
    else:
        try:
            vals, vecs = spla.eigs(sp.csc_matrix(m), k=2, sigma=1e-9, which="LM")
        except (RuntimeError, spla.ArpackNoConvergence) as exc:
            raise SolverFailure(f"eigen-iteration failed: {exc}") from exc
        order = np.argsort(np.abs(vals))
        scale = max(1.0, abs(sp.linalg.norm(m, 1)))
        if abs(vals[order[1]]) < 1e-9 * scale:
            raise RankDeficiencyAmbiguous("more than one vanishing eigenvalue")
        v = vecs[:, order[0]]
    norm = w @ v
    if norm == 0:
        raise SolverFailure("normalization functional vanishes on the kernel vector")
    return v / norm
