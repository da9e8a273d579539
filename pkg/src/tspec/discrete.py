"""Finite-difference discretization on the broken grid.

Unknowns are the nodal values on both pieces, with the interface stored
twice (one unknown for 0- and one for 0+).  Interior nodes carry the
three-point stencil for p u'' plus the perturbation; the four remaining
rows encode L1..L4 with one-sided three-point derivatives.  Eigenvalues of
the pencil (M, B), where B zeroes the condition rows, are computed by
eliminating the four end unknowns, which leaves a standard dense
eigenproblem on the interior unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import scipy.linalg

from .core import BrokenFunction, FirstOrder, IntegralKernel, Multiplication, TransmissionProblem
from .errors import EliminationSingular, NearSingular, NoConvergence, TooCoarse, UnsupportedOrder
from .shooting import EigenvalueRecord

ROW_KINDS = ("Interior", "BoundaryLeft", "BoundaryRight", "InterfaceMinus", "InterfacePlus")


@dataclass(frozen=True)
class BrokenGrid:
    n_per_interval: int

    def __post_init__(self):
        if self.n_per_interval < 8:
            raise TooCoarse("need at least 8 cells per interval")

    @property
    def n(self):
        return self.n_per_interval

    @property
    def h(self):
        return 1.0 / self.n_per_interval

    @property
    def size(self):
        return 2 * (self.n + 1)

    @property
    def x_left(self):
        return np.linspace(-1.0, 0.0, self.n + 1)

    @property
    def x_right(self):
        return np.linspace(0.0, 1.0, self.n + 1)

    @property
    def x(self):
        """Node coordinates in unknown order (0 appears twice)."""
        return np.concatenate([self.x_left, self.x_right])

    @property
    def condition_unknowns(self):
        """Unknowns eliminated against the condition rows: u(-1), u(0-), u(0+), u(1)."""
        n = self.n
        return np.array([0, n, n + 1, 2 * n + 1])

    @property
    def interior_unknowns(self):
        return np.setdiff1d(np.arange(self.size), self.condition_unknowns)

    def weights(self):
        """Trapezoid weights over both pieces (sum 2)."""
        w = np.full(self.size, self.h)
        w[self.condition_unknowns] = self.h / 2
        return w

    def split(self, vec):
        vec = np.asarray(vec)
        return vec[: self.n + 1], vec[self.n + 1:]

    def to_function(self, vec):
        """Wrap a nodal vector as a BrokenFunction (traces from one-sided differences)."""
        left, right = self.split(vec)
        return BrokenFunction(left, right)

    def from_function(self, u: BrokenFunction):
        if len(u.left) != self.n + 1 or len(u.right) != self.n + 1:
            raise ValueError("function is not sampled on this grid")
        return np.concatenate([u.left, u.right])


def build_grid(n_per_interval: int) -> BrokenGrid:
    return BrokenGrid(int(n_per_interval))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Dense matrix of the discretized problem.

    ``condition_rows`` are (L1, L2, L3, L4) in that order, sitting at the
    rows of u(-1), u(1), u(0-), u(0+).
    """

    matrix: np.ndarray
    row_kind: tuple
    grid: BrokenGrid
    problem: TransmissionProblem

    @property
    def condition_rows(self):
        n = self.grid.n
        return np.array([0, 2 * n + 1, n, n + 1])

    @property
    def mass(self):
        """Diagonal of B: one on interior rows, zero on condition rows."""
        b = np.ones(self.grid.size)
        b[self.condition_rows] = 0.0
        return b

    @cached_property
    def _elimination(self):
        M = self.matrix
        rows_c = self.condition_rows
        cols_b = self.grid.condition_unknowns
        cols_i = self.grid.interior_unknowns
        rows_i = cols_i
        C_bb = M[np.ix_(rows_c, cols_b)]
        if np.linalg.cond(C_bb) > 1e12:
            raise EliminationSingular("condition block is numerically singular")
        C_bi = M[np.ix_(rows_c, cols_i)]
        # u_b = E u_i + F g for condition data g
        F = np.linalg.inv(C_bb)
        E = -F @ C_bi
        M_ii = M[np.ix_(rows_i, cols_i)]
        M_ib = M[np.ix_(rows_i, cols_b)]
        reduced = M_ii + M_ib @ E
        return reduced, E, F, M_ib

    @property
    def reduced(self):
        """Standard matrix acting on interior unknowns after elimination."""
        return self._elimination[0]

    def expand(self, u_interior, condition_data=None):
        """Full nodal vector from interior values (and condition right-hand sides)."""
        _, E, F, _ = self._elimination
        u_interior = np.asarray(u_interior)
        ub = E @ u_interior
        if condition_data is not None:
            ub = ub + F @ np.asarray(condition_data, dtype=complex)
        full = np.zeros((self.grid.size,) + u_interior.shape[1:], dtype=complex)
        full[self.grid.interior_unknowns] = u_interior
        full[self.grid.condition_unknowns] = ub
        return full

    def apply(self, vec):
        return self.matrix @ vec


def _perturbation_block(problem, grid):
    """Matrix of A on the interior rows (full width)."""
    x = grid.x
    N = grid.size
    A = np.zeros((N, N), dtype=complex)
    pert = problem.perturbation
    if isinstance(pert, IntegralKernel):
        K = np.asarray(pert.K(x[:, None], x[None, :]), dtype=complex)
        K = np.broadcast_to(K, (N, N))
        A += K * grid.weights()[None, :]
    elif isinstance(pert, (Multiplication, FirstOrder)):
        q, c = pert.local_coefficients(x)
        A[np.arange(N), np.arange(N)] += q
        h = grid.h
        for lo, hi in ((0, grid.n), (grid.n + 1, 2 * grid.n + 1)):
            i = np.arange(lo + 1, hi)
            A[i, i + 1] += c[i] / (2 * h)
            A[i, i - 1] -= c[i] / (2 * h)
    return A


def assemble_operator(problem: TransmissionProblem, grid: BrokenGrid) -> DiscreteOperator:
    n, h = grid.n, grid.h
    N = grid.size
    M = _perturbation_block(problem, grid)
    kinds = ["Interior"] * N
    for lo, hi, p in ((0, n, problem.p1), (n + 1, 2 * n + 1, problem.p2)):
        i = np.arange(lo + 1, hi)
        M[i, i - 1] += p / h**2
        M[i, i] += -2 * p / h**2
        M[i, i + 1] += p / h**2
    pr = problem
    # condition rows: overwrite whatever the perturbation put there
    rows = {0: "BoundaryLeft", 2 * n + 1: "BoundaryRight", n: "InterfaceMinus",
            n + 1: "InterfacePlus"}
    for r, kind in rows.items():
        M[r, :] = 0.0
        kinds[r] = kind
    d0 = np.array([-3.0, 4.0, -1.0]) / (2 * h)  # u'(start)
    d1 = np.array([1.0, -4.0, 3.0]) / (2 * h)  # u'(end)
    # L1 at u(-1)
    M[0, 0:3] += pr.alpha1 * d0
    M[0, 0] += pr.alpha0
    # L2 at u(1)
    M[2 * n + 1, 2 * n - 1:2 * n + 2] += pr.beta1 * d1
    M[2 * n + 1, 2 * n + 1] += pr.beta0
    # L3 = u'(0-) - gamma0 u(0-) - delta0 u(0+)
    M[n, n - 2:n + 1] += d1
    M[n, n] -= pr.gamma0
    M[n, n + 1] -= pr.delta0
    # L4 = u'(0+) - gamma1 u(0-) - delta1 u(0+)
    M[n + 1, n + 1:n + 4] += d0
    M[n + 1, n] -= pr.gamma1
    M[n + 1, n + 1] -= pr.delta1
    return DiscreteOperator(M, tuple(kinds), grid, problem)


def eigen_dense(matrix, vectors: bool = False):
    """All eigenvalues of a square dense matrix (LAPACK geev via scipy)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("matrix must be square")
    if matrix.shape[0] > 4096:
        raise ValueError("matrix larger than 4096")
    try:
        if vectors:
            return scipy.linalg.eig(matrix, check_finite=True)
        return scipy.linalg.eigvals(matrix, check_finite=True)
    except scipy.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def _branch_of(value, problem):
    if not problem.opposite_signs:
        return "Single"
    return "Branch1" if value.real > 0 else "Branch2"


def _merge(values, residuals, tol=1e-6):
    """Cluster near-equal eigenvalues; multiplicity = cluster size."""
    order = np.argsort(np.abs(values), kind="stable")
    clusters = []
    for k in order:
        v = values[k]
        for cl in clusters:
            if abs(cl[0] - v) <= tol * max(1.0, abs(v)):
                cl[1].append(k)
                break
        else:
            clusters.append([v, [k]])
    out = []
    for v, members in clusters:
        val = np.mean(values[members])
        out.append((val, len(members), float(np.max(residuals[members]))))
    return out


def _real_if_possible(R):
    return R.real if not np.any(R.imag) else R


def discrete_eigenpairs(op: DiscreteOperator):
    """Eigenvalues, interior eigenvectors and backward errors of the reduced matrix."""
    R = _real_if_possible(op.reduced)
    w, V = eigen_dense(R, vectors=True)
    res = np.linalg.norm(R @ V - V * w, axis=0) / (np.linalg.norm(R, 1) * np.linalg.norm(V, axis=0))
    return w, V, res


def backward_error(R, mu, norm=None, iterations=2, seed=0):
    """||(R - mu) v|| / (||R||_1 ||v||) for v from inverse iteration at mu."""
    rng = np.random.default_rng(seed)
    n = R.shape[0]
    mu = complex(mu)
    shift = mu + 1e-13 * max(1.0, abs(mu))
    if mu.imag == 0:
        shift = shift.real
    A = R - shift * np.eye(n, dtype=R.dtype if mu.imag == 0 else complex)
    lu = scipy.linalg.lu_factor(A, check_finite=False)
    v = rng.standard_normal(n).astype(A.dtype)
    for _ in range(iterations):
        v = scipy.linalg.lu_solve(lu, v, check_finite=False)
        v /= np.linalg.norm(v)
    norm = np.linalg.norm(R, 1) if norm is None else norm
    return float(np.linalg.norm(R @ v - mu * v) / norm)


def discrete_spectrum(problem: TransmissionProblem, grid: BrokenGrid, count: int,
                      operator: DiscreteOperator | None = None):
    """The ``count`` eigenvalues of smallest modulus, tagged ``source="Matrix"``.

    For opposite-sign stiffness the count applies to each half-plane
    separately, so both branches are represented up to the same index.
    Near-equal eigenvalues (relative gap 1e-6) are merged into one
    record with the cluster size as multiplicity.
    """
    if count > grid.n // 4:
        raise ValueError("count must not exceed n_per_interval/4")
    op = operator or assemble_operator(problem, grid)
    R = _real_if_possible(op.reduced)
    w = eigen_dense(R)
    merged = _merge(w, np.zeros(len(w)))
    records = [EigenvalueRecord(complex(v), m, _branch_of(v, problem), "Matrix", 0.0)
               for v, m, _ in merged]
    if problem.opposite_signs:
        groups = [[r for r in records if r.branch == b] for b in ("Branch1", "Branch2")]
    else:
        groups = [records]
    out = []
    for group in groups:
        total = 0
        for rec in group:
            if total >= count:
                break
            out.append(rec)
            total += rec.multiplicity
    out.sort(key=lambda r: (abs(r.value), r.value.real))
    norm = np.linalg.norm(R, 1)
    return [replace(r, residual=backward_error(R, r.value, norm)) for r in out]


# -- nonhomogeneous problem --------------------------------------------------

class ShiftedSolver:
    """LU factorization of (reduced - lambda I) for repeated solves."""

    def __init__(self, op: DiscreteOperator, lam):
        self.op = op
        self.lam = complex(lam)
        R = op.reduced
        self.size = R.shape[0]
        self.lu = scipy.linalg.lu_factor(R - self.lam * np.eye(self.size))

    def solve_reduced(self, b, trans=0):
        return scipy.linalg.lu_solve(self.lu, b, trans=trans)

    def distance_estimate(self, iterations=4, seed=0):
        """1/||(R - lambda)^-1||_2 estimated by inverse iteration."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.size) + 1j * rng.standard_normal(self.size)
        x /= np.linalg.norm(x)
        growth = 0.0
        for _ in range(iterations):
            y = self.solve_reduced(x)
            y = self.solve_reduced(y, trans=2)
            growth = np.linalg.norm(y)
            if not np.isfinite(growth) or growth == 0:
                return 0.0
            x = y / growth
        return float(1.0 / np.sqrt(growth))

    def solve(self, interior_rhs, condition_data):
        """Full nodal solution for interior data f and condition data (f1..f4)."""
        _, E, F, M_ib = self.op._elimination
        g = np.asarray(condition_data, dtype=complex)
        b = interior_rhs - M_ib @ (F @ g)
        u_i = self.solve_reduced(b)
        return self.op.expand(u_i, g)


def solve_nonhomogeneous(problem: TransmissionProblem, grid: BrokenGrid, lam, f: BrokenFunction,
                         f_conditions=(0, 0, 0, 0), operator: DiscreteOperator | None = None,
                         return_residual: bool = False):
    """Solve p u'' + A u - lambda u = f with L_v u = f_v on the grid.

    Raises
    ------
    NearSingular
        If lambda is within 1e-6 * max(1, |lambda|) of the discrete spectrum.
    """
    op = operator or assemble_operator(problem, grid)
    solver = ShiftedSolver(op, lam)
    dist = solver.distance_estimate()
    if dist <= 1e-6 * max(1.0, abs(lam)):
        raise NearSingular(f"lambda={lam} is within {dist:.3g} of the discrete spectrum", dist)
    fv = grid.from_function(f)
    interior = grid.interior_unknowns
    u = solver.solve(fv[interior], f_conditions)
    out = grid.to_function(u)
    if return_residual:
        rhs = np.zeros(grid.size, dtype=complex)
        rhs[interior] = fv[interior]
        rhs[op.condition_rows] = np.asarray(f_conditions, dtype=complex)
        lhs = op.matrix @ u - lam * op.mass * u
        rel = np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
        return out, float(rel)
    return out


def broken_sobolev_norm(u: BrokenFunction, grid: BrokenGrid, k: int) -> float:
    """Discrete W^k norm over both pieces, k in {0, 1, 2}.

    k=0 uses the trapezoid rule; the derivative terms sum squared forward
    first differences and interior second differences with weight h.
    """
    if k not in (0, 1, 2):
        raise UnsupportedOrder(f"order {k} is not supported")
    h = grid.h
    total = 0.0
    for vals in (np.asarray(u.left), np.asarray(u.right)):
        if len(vals) != grid.n + 1:
            raise ValueError("function is not sampled on this grid")
        a2 = np.abs(vals) ** 2
        part = h * (np.sum(a2) - 0.5 * (a2[0] + a2[-1]))
        if k >= 1:
            part += h * np.sum(np.abs(np.diff(vals) / h) ** 2)
        if k >= 2:
            part += h * np.sum(np.abs(np.diff(vals, 2) / h**2) ** 2)
        total += part
    return float(np.sqrt(total))
