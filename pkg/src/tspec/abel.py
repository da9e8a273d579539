"""Spectral projectors and Abel-regularized root-function expansions.

Projectors are contour integrals of the resolvent of the reduced
(interior) matrix around single eigenvalues, evaluated with the
trapezoid rule on circles.  When the matrix has a well-conditioned
eigenbasis the resolvent at each node is applied in that basis, which
turns every node into a diagonal solve; otherwise the resolvent is
formed directly.

Sign convention: the returned projector is (1/2 pi i) times the contour
integral of (z I - S)^-1, which is the idempotent Riesz projector.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import BrokenFunction, TransmissionProblem
from .discrete import BrokenGrid, DiscreteOperator, assemble_operator, eigen_dense
from .errors import CircleHitsSpectrum, QuadratureNotConverged

DEFAULT_ALPHA = 1.5
DEFAULT_THETA = np.pi / 4
SUBORDINATION = (0.5, 0.5)
MAX_NODES = 4096
_EIGENBASIS_COND = 1e8


@dataclass(frozen=True, eq=False)
class ProjectorRecord:
    eigenvalue: complex
    radius: float
    projector: np.ndarray
    rank: int
    nodes: int = 0
    idempotence: float = 0.0
    operator: DiscreteOperator | None = field(default=None, repr=False)

    def apply(self, f: BrokenFunction) -> BrokenFunction:
        """P f as a function on the grid (condition unknowns rebuilt from the interior)."""
        if self.operator is None:
            raise ValueError("projector is not attached to a discrete operator")
        grid = self.operator.grid
        vec = grid.from_function(f)[grid.interior_unknowns]
        return grid.to_function(self.operator.expand(self.projector @ vec))


@dataclass(frozen=True)
class AbelExpansion:
    alpha: float
    theta: float
    t_values: tuple
    errors: tuple
    mode_count: int
    monotone: bool = True
    idempotence: tuple = ()
    eigenvalues: tuple = ()

    def __post_init__(self):
        if not self.alpha > min_abel_order(*SUBORDINATION):
            raise ValueError(f"alpha must exceed {min_abel_order(*SUBORDINATION)}")


class _Eigensystem:
    def __init__(self, matrix):
        self.matrix = matrix
        self.values, self.vectors = eigen_dense(matrix, vectors=True)
        self.cond = np.linalg.cond(self.vectors)
        self.inverse = np.linalg.inv(self.vectors) if self.cond <= _EIGENBASIS_COND else None
        if self.inverse is not None:
            self.scale = np.linalg.norm(self.vectors, axis=0) * np.linalg.norm(self.inverse, axis=1)


_cache = weakref.WeakKeyDictionary()


def _matrix_of(operator):
    if isinstance(operator, DiscreteOperator):
        R = operator.reduced
    else:
        R = np.asarray(operator)
    return R.real if np.isrealobj(R) or not np.any(R.imag) else R


def _eigensystem(operator):
    if isinstance(operator, DiscreteOperator):
        system = _cache.get(operator)
        if system is None:
            system = _cache[operator] = _Eigensystem(_matrix_of(operator))
        return system
    return _Eigensystem(_matrix_of(operator))


def _nodes(center, radius, m):
    z = center + radius * np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)
    # dz / (2 pi i) = (z - center) / m for equally spaced angles
    return z, (z - center) / m


def _scalar_weights(values, center, radius, m):
    z, dz = _nodes(center, radius, m)
    return (dz[None, :] / (z[None, :] - values[:, None])).sum(axis=1)


def _direct_projector(R, center, radius, m):
    z, dz = _nodes(center, radius, m)
    eye = np.eye(R.shape[0])
    P = np.zeros(R.shape, dtype=complex)
    for zk, wk in zip(z, dz):
        P += wk * scipy.linalg.solve(zk * eye - R, eye)
    return P


def spectral_projector(discrete_operator, eigenvalue, radius, quadrature_nodes: int = 32,
                       tol: float = 1e-6) -> ProjectorRecord:
    """Riesz projector onto the root space of ``eigenvalue``.

    ``discrete_operator`` is a :class:`DiscreteOperator` (its reduced
    matrix is used) or a plain square matrix.  Nodes are doubled until
    the projector changes by at most ``tol`` relative to its norm.

    Raises
    ------
    CircleHitsSpectrum
        If an eigenvalue lies on (or too near) the circle, or a distinct
        eigenvalue lies inside it.
    QuadratureNotConverged
        If the doubling does not settle within 4096 nodes.
    """
    if quadrature_nodes < 32:
        raise ValueError("need at least 32 quadrature nodes")
    if not radius > 0:
        raise ValueError("radius must be positive")
    system = _eigensystem(discrete_operator)
    center = complex(eigenvalue)
    w = system.values
    dist = np.abs(w - center)
    if np.any(np.abs(dist - radius) <= 1e-3 * radius):
        raise CircleHitsSpectrum(f"an eigenvalue lies on the circle |z - {center}| = {radius}")
    inside = dist < radius
    if not np.any(inside):
        raise CircleHitsSpectrum(f"no eigenvalue inside |z - {center}| = {radius}")
    cluster = w[inside]
    if np.max(np.abs(cluster - cluster[0])) > 1e-6 * max(1.0, abs(cluster[0])):
        raise CircleHitsSpectrum("circle encloses more than one distinct eigenvalue")

    m = quadrature_nodes
    R = system.matrix
    if system.inverse is not None:
        q = _scalar_weights(w, center, radius, m)
        while True:
            if 2 * m > MAX_NODES:
                raise QuadratureNotConverged(f"no convergence with {m} nodes")
            q2 = _scalar_weights(w, center, radius, 2 * m)
            change = np.sum(np.abs(q2 - q) * system.scale)
            m, q = 2 * m, q2
            size = np.sum(np.abs(q) * system.scale)
            if change <= tol * max(size, 1.0):
                break
        # terms of eigenvalues outside the circle are below roundoff; keep the rest
        keep = np.abs(q) * system.scale > 1e-15 * np.max(np.abs(q) * system.scale)
        X = system.vectors[:, keep] * q[keep]
        Y = system.inverse[keep, :]
        rank, _, idem = _low_rank_stats(X, Y)
        P = X @ Y
    else:
        P = _direct_projector(R, center, radius, m)
        while True:
            if 2 * m > MAX_NODES:
                raise QuadratureNotConverged(f"no convergence with {m} nodes")
            P2 = _direct_projector(R, center, radius, 2 * m)
            change = np.linalg.norm(P2 - P, 2)
            m, P = 2 * m, P2
            if change <= tol * max(np.linalg.norm(P, 2), 1.0):
                break
        s = scipy.linalg.svdvals(P)
        rank = int(np.sum(s > 1e-8 * s[0]))
        idem = float(np.linalg.norm(P @ P - P, 2) / s[0])
    if np.isrealobj(R) and center.imag == 0 and not np.any(np.abs(P.imag) > 1e-12):
        P = P.real
    op = discrete_operator if isinstance(discrete_operator, DiscreteOperator) else None
    return ProjectorRecord(center, float(radius), P, rank, m, idem, op)


def _low_rank_stats(X, Y):
    """Rank, 2-norm and relative idempotence defect of P = X Y from thin factors."""
    Q1, R1 = np.linalg.qr(X)
    Q2, R2 = np.linalg.qr(Y.conj().T)
    core = R1 @ R2.conj().T
    s = np.linalg.svd(core, compute_uv=False)
    rank = int(np.sum(s > 1e-8 * s[0]))
    k = Y.shape[0]
    defect = np.linalg.norm(R1 @ (Y @ X - np.eye(k)) @ R2.conj().T, 2)
    return rank, float(s[0]), float(defect / s[0])


def abel_weight(lam, alpha, t, theta) -> complex:
    """Regularizing factor exp(-lam^alpha t) inside the sector |arg lam| < theta.

    The sector around the negative real axis is treated by mirroring,
    exp(-(-lam)^alpha t); outside both sectors the factor is 1.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if not 0 < theta < np.pi / 2:
        raise ValueError("theta must lie in (0, pi/2)")
    if not alpha < np.pi / (2 * theta):
        raise ValueError("alpha must be smaller than pi/(2 theta)")
    lam = complex(lam)
    if lam == 0:
        return 1.0 + 0j
    for z in (lam, -lam):
        arg = np.angle(z)
        if abs(arg) < theta:
            power = abs(z) ** alpha * np.exp(1j * alpha * arg)
            return complex(np.exp(-power * t))
    return 1.0 + 0j


def abel_partial_sum(f: BrokenFunction, projectors, alpha, t, theta=DEFAULT_THETA) -> BrokenFunction:
    """Sum of abel_weight(lambda_j) P_j f over the given projectors."""
    projectors = list(projectors)
    if not projectors:
        return f * 0.0
    centers = np.array([p.eigenvalue for p in projectors])
    radii = np.array([p.radius for p in projectors])
    gaps = np.abs(centers[:, None] - centers[None, :])
    np.fill_diagonal(gaps, np.inf)
    if np.any(gaps < radii[:, None] + radii[None, :]):
        raise ValueError("projector circles overlap")
    op = projectors[0].operator
    if op is None:
        raise ValueError("projectors must be attached to a discrete operator")
    grid = op.grid
    vec = grid.from_function(f)[grid.interior_unknowns]
    total = np.zeros(vec.shape, dtype=complex)
    for rec in projectors:
        total += abel_weight(rec.eigenvalue, alpha, t, theta) * (rec.projector @ vec)
    return grid.to_function(op.expand(total))


def min_abel_order(s, p_exponent) -> float:
    """Smallest admissible Abel order max(s - p + 1, 0) (exclusive bound)."""
    if s < 0 or not 0 <= p_exponent < 1:
        raise ValueError("need s >= 0 and 0 <= p < 1")
    return max(s - p_exponent + 1.0, 0.0)


def _clusters(values, tol=1e-6):
    """Distinct eigenvalues (sorted by modulus) with their multiplicities."""
    order = np.argsort(np.abs(values), kind="stable")
    out = []
    for k in order:
        v = values[k]
        for cl in out:
            if abs(cl[0] - v) <= tol * max(1.0, abs(v)):
                cl[1] += 1
                break
        else:
            out.append([v, 1])
    return [(complex(v), m) for v, m in out]


def circle_radii(centers, all_values, cap=1.0):
    """Half the distance from each center to the nearest other distinct eigenvalue, capped."""
    centers = np.asarray(centers)
    all_values = np.asarray(all_values)
    radii = []
    for c in centers:
        d = np.abs(all_values - c)
        d = d[d > 1e-6 * max(1.0, abs(c))]
        radii.append(min(cap, 0.5 * d.min()) if d.size else cap)
    return np.array(radii)


def mode_functions(operator: DiscreteOperator, count: int):
    """Eigenvalues and L2-normalized eigenvectors (as functions), sorted by modulus."""
    system = _eigensystem(operator)
    grid = operator.grid
    order = np.lexsort((system.values.real, np.abs(system.values)))[:count]
    out = []
    for k in order:
        u = grid.to_function(operator.expand(system.vectors[:, k]))
        norm = u.l2_norm()
        peak = np.concatenate([u.left, u.right])
        phase = np.exp(-1j * np.angle(peak[np.argmax(np.abs(peak))]))
        out.append((complex(system.values[k]), u * (phase / norm)))
    return out


def projectors_for_modes(operator: DiscreteOperator, mode_count: int, quadrature_nodes: int = 32):
    """One projector per distinct eigenvalue until ``mode_count`` modes are covered."""
    system = _eigensystem(operator)
    distinct = _clusters(system.values)
    chosen, total = [], 0
    for v, m in distinct:
        if total >= mode_count:
            break
        chosen.append(v)
        total += m
    if total < mode_count:
        raise ValueError("mode_count exceeds the available spectrum")
    radii = circle_radii(chosen, [v for v, _ in distinct])
    return [spectral_projector(operator, c, r, quadrature_nodes) for c, r in zip(chosen, radii)]


def _disc_norm(grid: BrokenGrid, vec):
    return float(np.sqrt(np.sum(grid.weights() * np.abs(vec) ** 2)))


def abel_convergence_study(problem: TransmissionProblem, grid: BrokenGrid, f: BrokenFunction,
                           mode_count: int, alpha=DEFAULT_ALPHA, t_list=(1e-1, 1e-2, 1e-3, 1e-4),
                           theta=DEFAULT_THETA, operator: DiscreteOperator | None = None,
                           projectors=None) -> AbelExpansion:
    """Errors ||f - sum_j w_j(t) P_j f|| (discrete L2) for each t in ``t_list``.

    ``monotone`` records whether the error at the smallest t is below the
    error at the largest t.
    """
    if not alpha > min_abel_order(*SUBORDINATION):
        raise ValueError(f"alpha must exceed {min_abel_order(*SUBORDINATION)}")
    op = operator or assemble_operator(problem, grid)
    if projectors is None:
        projectors = projectors_for_modes(op, mode_count)
    fvec = grid.from_function(f)
    interior = fvec[grid.interior_unknowns]
    pieces = [rec.projector @ interior for rec in projectors]
    errors = []
    for t in t_list:
        total = np.zeros(interior.shape, dtype=complex)
        for rec, piece in zip(projectors, pieces):
            total += abel_weight(rec.eigenvalue, alpha, t, theta) * piece
        errors.append(_disc_norm(grid, fvec - op.expand(total)))
    t_arr = np.asarray(t_list, dtype=float)
    monotone = bool(errors[int(np.argmin(t_arr))] < errors[int(np.argmax(t_arr))]) if len(errors) > 1 else True
    return AbelExpansion(float(alpha), float(theta), tuple(float(t) for t in t_list),
                         tuple(errors), int(mode_count), monotone,
                         tuple(rec.idempotence for rec in projectors),
                         tuple(rec.eigenvalue for rec in projectors))
