"""Problem data model, condition functionals and domain test functions.

The problem is

    p(x) u'' + A u = lambda u,   x in [-1, 0) U (0, 1]

with p = p1 on the left piece and p = p2 on the right piece, together with

    L1 u = alpha0 u(-1) + alpha1 u'(-1)
    L2 u = beta0 u(1) + beta1 u'(1)
    L3 u = u'(0-) - gamma0 u(0-) - delta0 u(0+)
    L4 u = u'(0+) - gamma1 u(0-) - delta1 u(0+)

all required to vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import (
    DegenerateBoundary,
    GridTooCoarse,
    SingularCorrection,
    ZeroStiffness,
)

COEFFICIENTS = (
    "p1", "p2", "alpha0", "alpha1", "beta0", "beta1",
    "gamma0", "delta0", "gamma1", "delta1",
)


def _evaluate(f, *args):
    """Evaluate a user supplied coefficient function on arrays.

    Constant-returning callables (``lambda x: 3.0``) are broadcast.
    """
    shape = np.broadcast(*args).shape
    y = np.asarray(f(*args))
    if y.shape != shape:
        y = np.broadcast_to(y, shape)
    return y


# -- perturbations ----------------------------------------------------------

@dataclass(frozen=True)
class Zero:
    """A = 0."""

    is_local = True

    def local_coefficients(self, x):
        z = np.zeros_like(np.asarray(x, dtype=float))
        return z, z

    def validate(self):
        pass


@dataclass(frozen=True)
class Multiplication:
    """(A u)(x) = q(x) u(x)."""

    q: Callable
    is_local = True

    def local_coefficients(self, x):
        x = np.asarray(x, dtype=float)
        return _evaluate(self.q, x), np.zeros_like(x)

    def validate(self):
        _check_bounded(_evaluate(self.q, np.linspace(-1.0, 1.0, 257)), "q")


@dataclass(frozen=True)
class FirstOrder:
    """(A u)(x) = c(x) u'(x)."""

    c: Callable
    is_local = True

    def local_coefficients(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x), _evaluate(self.c, x)

    def validate(self):
        _check_bounded(_evaluate(self.c, np.linspace(-1.0, 1.0, 257)), "c")


@dataclass(frozen=True)
class IntegralKernel:
    """(A u)(x) = integral over [-1, 1] of K(x, y) u(y) dy."""

    K: Callable
    is_local = False

    def validate(self):
        s = np.linspace(-1.0, 1.0, 65)
        _check_bounded(_evaluate(self.K, s[:, None], s[None, :]), "K")


def _check_bounded(values, name):
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"perturbation function {name} is not bounded on [-1, 1]")


PerturbationSpec = Zero | Multiplication | FirstOrder | IntegralKernel


# -- problem ---------------------------------------------------------------

@dataclass(frozen=True)
class TransmissionProblem:
    p1: float
    p2: float
    alpha0: float
    alpha1: float
    beta0: float
    beta1: float
    gamma0: float
    delta0: float
    gamma1: float
    delta1: float
    perturbation: PerturbationSpec = field(default_factory=Zero)

    def __post_init__(self):
        for name in COEFFICIENTS:
            value = getattr(self, name)
            if not np.isfinite(value) or np.iscomplexobj(value):
                raise ValueError(f"coefficient {name} must be a finite real number")
            object.__setattr__(self, name, float(value))
        if self.p1 == 0.0 or self.p2 == 0.0:
            raise ZeroStiffness("p1 and p2 must both be nonzero")
        if self.alpha0 == 0.0 and self.alpha1 == 0.0:
            raise DegenerateBoundary("alpha0 and alpha1 cannot both vanish")
        if self.beta0 == 0.0 and self.beta1 == 0.0:
            raise DegenerateBoundary("beta0 and beta1 cannot both vanish")
        self.perturbation.validate()

    @property
    def opposite_signs(self):
        return self.p1 * self.p2 < 0

    def with_perturbation(self, perturbation):
        values = {name: getattr(self, name) for name in COEFFICIENTS}
        return TransmissionProblem(**values, perturbation=perturbation)

    def unperturbed(self):
        return self.with_perturbation(Zero())

    def as_dict(self):
        return {name: getattr(self, name) for name in COEFFICIENTS}


def validate_problem(raw: Mapping) -> TransmissionProblem:
    """Build a validated problem from a coefficient mapping.

    ``raw`` must hold the ten coefficients; the perturbation defaults to
    ``Zero()`` when absent.
    """
    missing = [name for name in COEFFICIENTS if name not in raw]
    if missing:
        raise ValueError(f"missing coefficients: {', '.join(missing)}")
    perturbation = raw.get("perturbation", Zero())
    return TransmissionProblem(
        **{name: raw[name] for name in COEFFICIENTS}, perturbation=perturbation
    )


def symmetry_defect(problem: TransmissionProblem) -> float:
    """p1*delta0 - p2*gamma1, zero when the printed symmetry criterion holds.

    Note that the interface term of the Green formula is governed by
    :func:`green_interface_coefficient`, not by this quantity.
    """
    return problem.p1 * problem.delta0 - problem.p2 * problem.gamma1


def green_interface_coefficient(problem: TransmissionProblem) -> float:
    """Coefficient c with (L0 u, v) - (u, L0 v) = c (u(0+)v*(0-) - u(0-)v*(0+)).

    Valid for u, v satisfying all four conditions.  L0 is symmetric in
    L2(-1,0) + L2(0,1) exactly when c = p1*delta0 + p2*gamma1 vanishes.
    """
    return problem.p1 * problem.delta0 + problem.p2 * problem.gamma1


# -- broken functions ------------------------------------------------------

def one_sided_derivatives(values, h):
    """Second-order one-sided first derivatives at both ends of a sample row."""
    v = np.asarray(values)
    start = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    end = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return start, end


@dataclass(frozen=True, eq=False)
class BrokenFunction:
    """A function on [-1, 0) U (0, 1] sampled on uniform grids of each piece.

    ``traces`` holds (u(0-), u'(0-), u(0+), u'(0+)); ``ends`` holds
    (u(-1), u'(-1), u(1), u'(1)).  When omitted they are reconstructed
    from the samples with one-sided three-point differences.
    """

    left: np.ndarray
    right: np.ndarray
    traces: tuple | None = None
    ends: tuple | None = None

    def __post_init__(self):
        left = np.asarray(self.left, dtype=complex)
        right = np.asarray(self.right, dtype=complex)
        if left.ndim != 1 or right.ndim != 1 or len(left) < 3 or len(right) < 3:
            raise GridTooCoarse("each piece needs at least three samples")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        ld0, ld1 = one_sided_derivatives(left, self.h_left)
        rd0, rd1 = one_sided_derivatives(right, self.h_right)
        if self.traces is None:
            object.__setattr__(self, "traces", (left[-1], ld1, right[0], rd0))
        if self.ends is None:
            object.__setattr__(self, "ends", (left[0], ld0, right[-1], rd1))
        object.__setattr__(self, "traces", tuple(complex(t) for t in self.traces))
        object.__setattr__(self, "ends", tuple(complex(t) for t in self.ends))

    @property
    def h_left(self):
        return 1.0 / (len(self.left) - 1)

    @property
    def h_right(self):
        return 1.0 / (len(self.right) - 1)

    @property
    def x_left(self):
        return np.linspace(-1.0, 0.0, len(self.left))

    @property
    def x_right(self):
        return np.linspace(0.0, 1.0, len(self.right))

    @classmethod
    def from_callables(cls, f_left, f_right, n, df_left=None, df_right=None):
        """Sample callables on n+1 nodes per piece; exact traces if derivatives given."""
        xl = np.linspace(-1.0, 0.0, n + 1)
        xr = np.linspace(0.0, 1.0, n + 1)
        left = _evaluate(f_left, xl).astype(complex)
        right = _evaluate(f_right, xr).astype(complex)
        traces = ends = None
        if df_left is not None and df_right is not None:
            dl = _evaluate(df_left, np.array([-1.0, 0.0]))
            dr = _evaluate(df_right, np.array([0.0, 1.0]))
            traces = (left[-1], dl[1], right[0], dr[0])
            ends = (left[0], dl[0], right[-1], dr[1])
        return cls(left, right, traces, ends)

    def trace_consistency(self):
        """Largest gap between stored traces and their finite-difference reconstruction."""
        ld0, ld1 = one_sided_derivatives(self.left, self.h_left)
        rd0, rd1 = one_sided_derivatives(self.right, self.h_right)
        fd = np.array([self.left[-1], ld1, self.right[0], rd0,
                       self.left[0], ld0, self.right[-1], rd1])
        stored = np.array(self.traces + self.ends)
        return float(np.max(np.abs(fd - stored)))

    def _combine(self, other, op):
        return BrokenFunction(
            op(self.left, other.left),
            op(self.right, other.right),
            tuple(op(a, b) for a, b in zip(self.traces, other.traces)),
            tuple(op(a, b) for a, b in zip(self.ends, other.ends)),
        )

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        return BrokenFunction(
            scalar * self.left, scalar * self.right,
            tuple(scalar * t for t in self.traces),
            tuple(scalar * t for t in self.ends),
        )

    __rmul__ = __mul__

    def conj(self):
        return BrokenFunction(
            self.left.conj(), self.right.conj(),
            tuple(np.conj(t) for t in self.traces),
            tuple(np.conj(t) for t in self.ends),
        )

    def l2_norm(self):
        """Trapezoid L2 norm over both pieces."""
        return float(np.sqrt(
            _trapezoid(np.abs(self.left) ** 2, self.h_left)
            + _trapezoid(np.abs(self.right) ** 2, self.h_right)
        ))

    def inner(self, other):
        """Trapezoid inner product (self, other) = integral of self * conj(other)."""
        return complex(
            _trapezoid(self.left * np.conj(other.left), self.h_left)
            + _trapezoid(self.right * np.conj(other.right), self.h_right)
        )


def _trapezoid(values, h):
    v = np.asarray(values)
    return h * (np.sum(v) - 0.5 * (v[0] + v[-1]))


@dataclass(frozen=True)
class ConditionValues:
    L1: complex
    L2: complex
    L3: complex
    L4: complex

    def as_array(self):
        return np.array([self.L1, self.L2, self.L3, self.L4])

    def max_abs(self):
        return float(np.max(np.abs(self.as_array())))


def condition_values(problem: TransmissionProblem, u: BrokenFunction) -> ConditionValues:
    um, dum, up, dup = u.traces
    ua, dua, ub, dub = u.ends
    pr = problem
    return ConditionValues(
        L1=pr.alpha0 * ua + pr.alpha1 * dua,
        L2=pr.beta0 * ub + pr.beta1 * dub,
        L3=dum - pr.gamma0 * um - pr.delta0 * up,
        L4=dup - pr.gamma1 * um - pr.delta1 * up,
    )


# -- smooth seeds ----------------------------------------------------------

class TrigPolynomial:
    """sum_k a_k cos(k pi x) + b_k sin(k pi x), with exact derivatives."""

    def __init__(self, cos_coeffs=(), sin_coeffs=()):
        self.a = np.asarray(cos_coeffs, dtype=complex)
        self.b = np.asarray(sin_coeffs, dtype=complex)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for k, a in enumerate(self.a):
            out += a * np.cos(k * np.pi * x)
        for k, b in enumerate(self.b):
            out += b * np.sin(k * np.pi * x)
        return out

    def deriv(self, m=1):
        a, b = self.a.copy(), self.b.copy()
        size = max(len(a), len(b))
        a = np.pad(a, (0, size - len(a)))
        b = np.pad(b, (0, size - len(b)))
        w = np.pi * np.arange(size)
        for _ in range(m):
            # d/dx [a cos(wx) + b sin(wx)] = (w b) cos(wx) + (-w a) sin(wx)
            a, b = w * b, -w * a
        return TrigPolynomial(a, b)


def _seed_callables(seed):
    """Return (f, f') for a seed piece."""
    if isinstance(seed, tuple):
        return seed
    if hasattr(seed, "deriv"):
        return seed, seed.deriv()
    raise TypeError("seed pieces need a deriv() method or an (f, df) tuple")


def _hermite_cubic(a, b, va, da, vb, db):
    """Cubic with prescribed value/derivative at a and b, as (f, f')."""
    L = b - a
    # Hermite basis on t in [0, 1]
    def f(x):
        t = (np.asarray(x, dtype=float) - a) / L
        h00 = 2 * t**3 - 3 * t**2 + 1
        h10 = t**3 - 2 * t**2 + t
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        return h00 * va + h10 * L * da + h01 * vb + h11 * L * db

    def df(x):
        t = (np.asarray(x, dtype=float) - a) / L
        return ((6 * t**2 - 6 * t) * va + (3 * t**2 - 4 * t + 1) * L * da
                + (-6 * t**2 + 6 * t) * vb + (3 * t**2 - 2 * t) * L * db) / L

    return f, df


def _correction_basis(problem):
    """Four cubic corrections, two per piece, hitting L1..L4 one at a time."""
    na = problem.alpha0**2 + problem.alpha1**2
    nb = problem.beta0**2 + problem.beta1**2
    # (piece, f, f')
    return [
        ("left", *_hermite_cubic(-1.0, 0.0, problem.alpha0 / na, problem.alpha1 / na, 0, 0)),
        ("right", *_hermite_cubic(0.0, 1.0, 0, 0, problem.beta0 / nb, problem.beta1 / nb)),
        ("left", *_hermite_cubic(-1.0, 0.0, 0, 0, 0, 1.0)),
        ("right", *_hermite_cubic(0.0, 1.0, 0, 1.0, 0, 0)),
    ]


def project_to_domain(problem: TransmissionProblem, seed_left, seed_right, n: int = 256,
                      return_coefficients: bool = False):
    """Correct a smooth seed with cubics so that L1..L4 vanish.

    Seed pieces are numpy polynomials, :class:`TrigPolynomial` objects or
    ``(f, df)`` tuples.  The result is sampled on ``n + 1`` nodes per piece
    and carries exact traces.
    """
    fl, dfl = _seed_callables(seed_left)
    fr, dfr = _seed_callables(seed_right)
    seed = BrokenFunction.from_callables(fl, fr, n, dfl, dfr)
    basis = []
    for piece, f, df in _correction_basis(problem):
        zero = (lambda x: 0.0 * np.asarray(x, dtype=float))
        if piece == "left":
            basis.append(BrokenFunction.from_callables(f, zero, n, df, zero))
        else:
            basis.append(BrokenFunction.from_callables(zero, f, n, zero, df))
    system = np.array([condition_values(problem, b).as_array() for b in basis]).T
    if np.linalg.cond(system) > 1e12:
        raise SingularCorrection("correction system is numerically singular")
    rhs = condition_values(problem, seed).as_array()
    coeffs = np.linalg.solve(system, -rhs)
    out = seed
    for c, b in zip(coeffs, basis):
        out = out + c * b
    if return_coefficients:
        return out, coeffs
    return out
