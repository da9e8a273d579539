"""Characteristic determinant by shooting, and eigenvalue location.

Each subinterval carries a fundamental pair started from (1, 0) and (0, 1)
at its left end.  The four condition functionals applied to the pairs
give a 4x4 matrix C(lambda) whose determinant vanishes exactly at the
eigenvalues, with the order of the zero equal to the algebraic
multiplicity.

Integration is classical RK4 on the first-order system Y' = M(x) Y.  The
equation is linear, so each step is a 2x2 propagator; these are multiplied
together (pairwise, or by repeated squaring when the coefficients are
constant) and differentiated in lambda alongside, which gives Delta'
without finite differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BrokenFunction,
    FirstOrder,
    IntegralKernel,
    TransmissionProblem,
    condition_values,
    green_interface_coefficient,
)
from .errors import (
    BoundaryTooCloseToZero,
    DegenerateNullspace,
    NoConvergence,
    NonlocalPerturbation,
    PhaseInconsistent,
    SpectrumWarning,
    WindowEmpty,
)

DEFAULT_STEPS = 2048
_SUBDIVISIONS = 32
_CHUNK = 64


@dataclass(frozen=True)
class EigenvalueRecord:
    value: complex
    multiplicity: int = 1
    branch: str = "Single"
    source: str = "Shooting"
    residual: float = 0.0
    flags: tuple = ()


# -- 2x2 matrix jets -------------------------------------------------------

class _Mat2:
    """Stack of 2x2 matrices stored by component for fast broadcasting."""

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        self.a, self.b, self.c, self.d = a, b, c, d

    def __matmul__(self, o):
        return _Mat2(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def __add__(self, o):
        return _Mat2(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)

    def scale(self, s):
        return _Mat2(s * self.a, s * self.b, s * self.c, s * self.d)

    def plus_identity(self):
        return _Mat2(self.a + 1, self.b, self.c, self.d + 1)

    def take(self, index):
        return _Mat2(self.a[index], self.b[index], self.c[index], self.d[index])


def _jet_mul(later, earlier):
    (A, dA), (B, dB) = later, earlier
    return A @ B, (dA @ B) + (A @ dB)


def _rk4_step_jets(lam, p, h, q_nodes, c_nodes):
    """Per-step RK4 propagators and their lambda-derivatives.

    ``lam`` has shape (L, 1); node arrays have shape (3, N) for the left,
    middle and right point of every step.
    """
    zero = np.zeros(np.broadcast(lam, q_nodes[0]).shape, dtype=complex)
    one = zero + 1.0

    def M(k):
        return _Mat2(zero, one, (lam - q_nodes[k]) / p + zero, -c_nodes[k] / p + zero)

    D = _Mat2(zero, zero, zero + 1.0 / p, zero)
    M1, M2, M3 = M(0), M(1), M(2)
    K1, dK1 = M1, D
    A = K1.scale(h / 2).plus_identity()
    K2 = M2 @ A
    dK2 = (D @ A) + (M2 @ dK1.scale(h / 2))
    A = K2.scale(h / 2).plus_identity()
    K3 = M2 @ A
    dK3 = (D @ A) + (M2 @ dK2.scale(h / 2))
    A = K3.scale(h).plus_identity()
    K4 = M3 @ A
    dK4 = (D @ A) + (M3 @ dK3.scale(h))
    S = (K1 + K2.scale(2) + K3.scale(2) + K4).scale(h / 6).plus_identity()
    dS = (dK1 + dK2.scale(2) + dK3.scale(2) + dK4).scale(h / 6)
    return S, dS


def _pmul(x, y):
    """Product of polynomials in lambda stored as (degree+1, ...) coefficient arrays."""
    out = np.zeros((x.shape[0] + y.shape[0] - 1,) + np.broadcast(x[0], y[0]).shape, dtype=complex)
    for i in range(x.shape[0]):
        out[i:i + y.shape[0]] += x[i] * y
    return out


def _padd(x, y):
    n = max(x.shape[0], y.shape[0])
    out = np.zeros((n,) + np.broadcast(x[0], y[0]).shape, dtype=complex)
    out[: x.shape[0]] += x
    out[: y.shape[0]] += y
    return out


class _PolyMat2(_Mat2):
    """2x2 matrices whose entries are polynomials in lambda."""

    __slots__ = ()

    def __matmul__(self, o):
        return _PolyMat2(
            _padd(_pmul(self.a, o.a), _pmul(self.b, o.c)),
            _padd(_pmul(self.a, o.b), _pmul(self.b, o.d)),
            _padd(_pmul(self.c, o.a), _pmul(self.d, o.c)),
            _padd(_pmul(self.c, o.b), _pmul(self.d, o.d)),
        )

    def __add__(self, o):
        return _PolyMat2(_padd(self.a, o.a), _padd(self.b, o.b), _padd(self.c, o.c),
                         _padd(self.d, o.d))

    def scale(self, s):
        return _PolyMat2(s * self.a, s * self.b, s * self.c, s * self.d)

    def plus_identity(self):
        one = np.ones((1,) + self.a.shape[1:], dtype=complex)
        return _PolyMat2(_padd(self.a, one), self.b, self.c, _padd(self.d, one))


def _rk4_step_polynomials(p, h, q_nodes, c_nodes):
    """RK4 step propagators as degree-4 polynomials in lambda, one per step.

    M(x) = [[0, 1], [(lambda - q)/p, -c/p]] is affine in lambda, so each
    step matrix is a polynomial of degree four; its coefficients do not
    depend on lambda and can be reused for every evaluation.
    """
    shape = q_nodes[0].shape

    def M(k):
        zero = np.zeros((1,) + shape, dtype=complex)
        one = np.ones((1,) + shape, dtype=complex)
        m = np.stack([-q_nodes[k] / p, np.full(shape, 1.0 / p, dtype=complex)])
        return _PolyMat2(zero, one, m, (-c_nodes[k] / p)[None])

    M1, M2, M3 = M(0), M(1), M(2)
    K1 = M1
    K2 = M2 @ K1.scale(h / 2).plus_identity()
    K3 = M2 @ K2.scale(h / 2).plus_identity()
    K4 = M3 @ K3.scale(h).plus_identity()
    return (K1 + K2.scale(2) + K3.scale(2) + K4).scale(h / 6).plus_identity()


def _poly_eval(coeffs, lam):
    """Evaluate polynomial entries and their lambda-derivatives (Horner)."""
    val = np.zeros(np.broadcast(lam, coeffs[0]).shape, dtype=complex) + coeffs[-1]
    der = np.zeros_like(val)
    for k in range(coeffs.shape[0] - 2, -1, -1):
        der = der * lam + val
        val = val * lam + coeffs[k]
    return val, der


def _evaluate_steps(poly, lam):
    vals = [_poly_eval(getattr(poly, k), lam) for k in "abcd"]
    return _Mat2(*(v[0] for v in vals)), _Mat2(*(v[1] for v in vals))


def _product_tree(S, dS):
    """Ordered product S[N-1] ... S[0] along the last axis, with derivative."""
    P, dP = S, dS
    while P.a.shape[-1] > 1:
        n = P.a.shape[-1]
        m = n // 2
        even = np.arange(0, 2 * m, 2)
        later = (P.take((..., even + 1)), dP.take((..., even + 1)))
        earlier = (P.take((..., even)), dP.take((..., even)))
        Q, dQ = _jet_mul(later, earlier)
        if n % 2:
            # the unpaired last step stays on the left of the product
            tail = (P.take((..., slice(n - 1, n))), dP.take((..., slice(n - 1, n))))
            Q = _Mat2(*[np.concatenate([x, y], axis=-1) for x, y in
                        zip((Q.a, Q.b, Q.c, Q.d), (tail[0].a, tail[0].b, tail[0].c, tail[0].d))])
            dQ = _Mat2(*[np.concatenate([x, y], axis=-1) for x, y in
                         zip((dQ.a, dQ.b, dQ.c, dQ.d), (tail[1].a, tail[1].b, tail[1].c, tail[1].d))])
        P, dP = Q, dQ
    return P.take((..., 0)), dP.take((..., 0))


def _jet_power(S, dS, n):
    result = None
    base = (S, dS)
    while n:
        if n & 1:
            result = base if result is None else _jet_mul(base, result)
        n >>= 1
        if n:
            base = _jet_mul(base, base)
    return result


def _check_local(problem):
    if isinstance(problem.perturbation, IntegralKernel):
        raise NonlocalPerturbation("shooting needs a local perturbation; use the matrix engine")


def _piece_nodes(problem, a, steps):
    """Coefficient samples at the RK4 stage points of one subinterval."""
    h = 1.0 / steps
    x0 = a + h * np.arange(steps)
    x = np.stack([x0, x0 + h / 2, x0 + h])
    q, c = problem.perturbation.local_coefficients(x)
    return h, np.asarray(q, dtype=complex), np.asarray(c, dtype=complex)


def _piece_transfer(problem, p, a, lams, steps):
    """Transfer matrices across [a, a + 1] for every lambda, with derivative."""
    h, q, c = _piece_nodes(problem, a, steps)
    constant = np.ptp(q.real) == 0 and np.ptp(q.imag) == 0 and np.ptp(c.real) == 0 \
        and np.ptp(c.imag) == 0
    if constant:
        poly = _rk4_step_polynomials(p, h, q[:, :1], c[:, :1])
    else:
        poly = _rk4_step_polynomials(p, h, q, c)
    out_P, out_dP = [], []
    for start in range(0, len(lams), _CHUNK):
        lam = lams[start:start + _CHUNK, None]
        S, dS = _evaluate_steps(poly, lam)
        if constant:
            P, dP = _jet_power(S, dS, steps)
            P, dP = P.take((..., 0)), dP.take((..., 0))
        else:
            P, dP = _product_tree(S, dS)
        out_P.append(P)
        out_dP.append(dP)

    def cat(parts):
        return _Mat2(*[np.concatenate([getattr(m, k) for m in parts]) for k in "abcd"])

    return cat(out_P), cat(out_dP)


def condition_matrix(problem, lams, steps=DEFAULT_STEPS):
    """C(lambda) and dC/dlambda as arrays of shape (L, 4, 4)."""
    _check_local(problem)
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    PL, dPL = _piece_transfer(problem, problem.p1, -1.0, lams, steps)
    PR, dPR = _piece_transfer(problem, problem.p2, 0.0, lams, steps)
    pr = problem
    L = len(lams)
    C = np.zeros((L, 4, 4), dtype=complex)
    dC = np.zeros((L, 4, 4), dtype=complex)
    C[:, 0, 0], C[:, 0, 1] = pr.alpha0, pr.alpha1
    C[:, 1, 2] = pr.beta0 * PR.a + pr.beta1 * PR.c
    C[:, 1, 3] = pr.beta0 * PR.b + pr.beta1 * PR.d
    C[:, 2, 0] = PL.c - pr.gamma0 * PL.a
    C[:, 2, 1] = PL.d - pr.gamma0 * PL.b
    C[:, 2, 2] = -pr.delta0
    C[:, 3, 0] = -pr.gamma1 * PL.a
    C[:, 3, 1] = -pr.gamma1 * PL.b
    C[:, 3, 2] = -pr.delta1
    C[:, 3, 3] = 1.0
    dC[:, 1, 2] = pr.beta0 * dPR.a + pr.beta1 * dPR.c
    dC[:, 1, 3] = pr.beta0 * dPR.b + pr.beta1 * dPR.d
    dC[:, 2, 0] = dPL.c - pr.gamma0 * dPL.a
    dC[:, 2, 1] = dPL.d - pr.gamma0 * dPL.b
    dC[:, 3, 0] = -pr.gamma1 * dPL.a
    dC[:, 3, 1] = -pr.gamma1 * dPL.b
    return C, dC


def _interface_states(problem, lams, steps):
    """States at the interface of the solutions that satisfy L1 and L2.

    phi starts from (alpha1, -alpha0) at x=-1.  psi is the solution with
    (psi, psi')(1) = (beta1, -beta0), obtained at 0+ as adj(P_R) applied
    to that end state, where P_R is the transfer matrix across (0, 1).
    Both come with lambda-derivatives.
    """
    _check_local(problem)
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    PL, dPL = _piece_transfer(problem, problem.p1, -1.0, lams, steps)
    PR, dPR = _piece_transfer(problem, problem.p2, 0.0, lams, steps)
    a1, a0 = problem.alpha1, -problem.alpha0
    phi = (PL.a * a1 + PL.b * a0, PL.c * a1 + PL.d * a0)
    dphi = (dPL.a * a1 + dPL.b * a0, dPL.c * a1 + dPL.d * a0)
    b1, b0 = problem.beta1, problem.beta0
    psi = (PR.d * b1 + PR.b * b0, -PR.c * b1 - PR.a * b0)
    dpsi = (dPR.d * b1 + dPR.b * b0, -dPR.c * b1 - dPR.a * b0)
    return phi, dphi, psi, dpsi


def _interface_matrix(problem, phi, psi):
    """2x2 system for (a, b) in u = a*phi (left), b*psi (right)."""
    pr = problem
    return np.array([[phi[1] - pr.gamma0 * phi[0], -pr.delta0 * psi[0]],
                     [-pr.gamma1 * phi[0], psi[1] - pr.delta1 * psi[0]]])


def _weights(problem):
    return (1 + abs(problem.gamma0) + abs(problem.gamma1),
            1 + abs(problem.delta0) + abs(problem.delta1))


def determinant_batch(problem, lams, steps=DEFAULT_STEPS):
    """Return (Delta, Delta', scale) for an array of lambda values.

    Delta is evaluated through the reduced form

        Delta = -[(phi' - gamma0 phi)(psi' - delta1 psi) - delta0 gamma1 phi psi]

    with phi, psi from :func:`_interface_states`.  Column operations with
    unit determinant turn the 4x4 condition matrix into this 2x2 one, so
    the two agree identically; the reduced form avoids the cancellation
    between growing solutions that the 4x4 determinant suffers when
    |lambda| is large.  ``scale`` bounds |Delta| from above and never
    vanishes, so ``Delta / scale`` keeps the zeros, sign and phase of Delta.
    """
    phi, dphi, psi, dpsi = _interface_states(problem, lams, steps)
    pr = problem
    A = phi[1] - pr.gamma0 * phi[0]
    dA = dphi[1] - pr.gamma0 * dphi[0]
    B = psi[1] - pr.delta1 * psi[0]
    dB = dpsi[1] - pr.delta1 * dpsi[0]
    k = pr.delta0 * pr.gamma1
    det = -(A * B - k * phi[0] * psi[0])
    ddet = -(dA * B + A * dB - k * (dphi[0] * psi[0] + phi[0] * dpsi[0]))
    wl, wr = _weights(problem)
    scale = (wl * np.hypot(np.abs(phi[0]), np.abs(phi[1]))
             * wr * np.hypot(np.abs(psi[0]), np.abs(psi[1])))
    return det, ddet, scale


def characteristic_determinant(problem: TransmissionProblem, lam, steps: int = DEFAULT_STEPS):
    """Delta(lambda) = det [L_i(v_j)] for the shooting basis v_1..v_4."""
    det, _, _ = determinant_batch(problem, [lam], steps)
    return complex(det[0])


# -- fundamental system ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class FundamentalSystem:
    """Two solutions per subinterval, started from (1,0) and (0,1).

    ``left`` and ``right`` have shape (2, 2, n+1): solution index, then
    (u, u'), then node.
    """

    lam: complex
    left: np.ndarray
    right: np.ndarray
    p1: float
    p2: float

    @property
    def steps(self):
        return self.left.shape[-1] - 1

    def solutions(self):
        """The four basis functions, each extended by zero to the other piece."""
        zero = np.zeros(self.steps + 1, dtype=complex)
        out = []
        for k in range(2):
            u, du = self.left[k]
            out.append(BrokenFunction(u, zero, (u[-1], du[-1], 0, 0), (u[0], du[0], 0, 0)))
        for k in range(2):
            u, du = self.right[k]
            out.append(BrokenFunction(zero, u, (0, 0, u[0], du[0]), (0, 0, u[-1], du[-1])))
        return out

    def wronskians(self):
        """Unweighted Wronskians u1 u2' - u1' u2 along each piece."""
        def w(pair):
            (u1, d1), (u2, d2) = pair
            return u1 * d2 - d1 * u2
        return w(self.left), w(self.right)


def _propagate_nodes(problem, p, a, lam, steps, start=None, backward=False):
    """RK4 states at every node of [a, a+1], in increasing x.

    With the default ``start`` both unit initial states are propagated and
    the result has shape (2, 2, steps+1): solution, (u, u'), node.  With a
    single ``start`` state the shape is (2, steps+1).  ``backward`` starts
    from x = a+1 and integrates towards a.
    """
    h = 1.0 / steps
    if backward:
        x0 = a + 1.0 - h * np.arange(steps)
        x = np.stack([x0, x0 - h / 2, x0 - h])
        step = -h
    else:
        x0 = a + h * np.arange(steps)
        x = np.stack([x0, x0 + h / 2, x0 + h])
        step = h
    q, c = problem.perturbation.local_coefficients(x)
    q = np.asarray(q, dtype=complex)
    c = np.asarray(c, dtype=complex)
    S, _ = _rk4_step_jets(np.array([[lam]], dtype=complex), p, step, q, c)
    Sa, Sb, Sc, Sd = (np.broadcast_to(v, (1, steps))[0] for v in (S.a, S.b, S.c, S.d))
    Y0 = np.eye(2, dtype=complex) if start is None else np.asarray(start, dtype=complex)[:, None]
    Y = np.empty((steps + 1,) + Y0.shape, dtype=complex)
    Y[0] = Y0
    for k in range(steps):
        y = Y[k]
        Y[k + 1, 0] = Sa[k] * y[0] + Sb[k] * y[1]
        Y[k + 1, 1] = Sc[k] * y[0] + Sd[k] * y[1]
    if backward:
        Y = Y[::-1]
    if start is None:
        return np.transpose(Y, (2, 1, 0))
    return np.transpose(Y[:, :, 0], (1, 0))


def fundamental_system(problem: TransmissionProblem, lam, steps: int = DEFAULT_STEPS):
    """Integrate the fundamental pairs on both subintervals with RK4.

    Raises
    ------
    NonlocalPerturbation
        For an integral-kernel perturbation.
    """
    _check_local(problem)
    if steps < 64:
        raise ValueError("steps must be at least 64")
    lam = complex(lam)
    left = _propagate_nodes(problem, problem.p1, -1.0, lam, steps)
    right = _propagate_nodes(problem, problem.p2, 0.0, lam, steps)
    return FundamentalSystem(lam, left, right, problem.p1, problem.p2)


# -- root counting ---------------------------------------------------------

def _rectangle_path(lo, hi, nodes_per_side):
    lo, hi = complex(lo), complex(hi)
    corners = [lo, complex(hi.real, lo.imag), hi, complex(lo.real, hi.imag), lo]
    t = np.linspace(0.0, 1.0, nodes_per_side, endpoint=False)
    return np.concatenate([a + (b - a) * t for a, b in zip(corners[:-1], corners[1:])])


def count_eigenvalues_in_rectangle(problem: TransmissionProblem, rect, nodes_per_side: int = 64,
                                   steps: int = DEFAULT_STEPS, max_rounds: int = 40):
    """Winding number of Delta around the rectangle ``rect = (lo, hi)``.

    ``lo`` and ``hi`` are opposite complex corners.  The boundary is
    refined wherever the phase jumps by more than pi/3 between nodes.
    """
    lo, hi = complex(rect[0]), complex(rect[1])
    lo, hi = (complex(min(lo.real, hi.real), min(lo.imag, hi.imag)),
              complex(max(lo.real, hi.real), max(lo.imag, hi.imag)))
    diam = abs(hi - lo)
    if diam == 0:
        raise WindowEmpty("degenerate rectangle")
    if nodes_per_side < 64:
        raise ValueError("nodes_per_side must be at least 64")
    z = _rectangle_path(lo, hi, nodes_per_side)
    det, _, scale = determinant_batch(problem, z, steps)
    w = det / scale

    def refine(z, w):
        for _ in range(max_rounds):
            if np.any(w == 0) or not np.all(np.isfinite(w)):
                raise BoundaryTooCloseToZero("Delta vanishes on the contour")
            zc = np.append(z, z[0])
            wc = np.append(w, w[0])
            jumps = np.abs(np.angle(wc[1:] / wc[:-1]))
            bad = np.nonzero(jumps > np.pi / 3)[0]
            if bad.size == 0:
                return z, w
            seg = np.abs(zc[bad + 1] - zc[bad])
            if np.any(seg < 1e-6 * diam):
                raise BoundaryTooCloseToZero("a zero of Delta lies too close to the contour")
            mid = 0.5 * (zc[bad] + zc[bad + 1])
            dm, _, sm = determinant_batch(problem, mid, steps)
            z = np.insert(z, bad + 1, mid)
            w = np.insert(w, bad + 1, dm / sm)
        raise PhaseInconsistent("phase refinement did not settle")

    def winding_of(w):
        wc = np.append(w, w[0])
        return np.sum(np.angle(wc[1:] / wc[:-1])) / (2 * np.pi)

    # a jump of 2*pi between neighbours is invisible to the local test, so
    # accept only once a full midpoint pass leaves the winding unchanged
    z, w = refine(z, w)
    winding = winding_of(w)
    for _ in range(6):
        zc = np.append(z, z[0])
        mid = 0.5 * (zc[:-1] + zc[1:])
        dm, _, sm = determinant_batch(problem, mid, steps)
        z2 = np.empty(2 * len(z), dtype=complex)
        w2 = np.empty(2 * len(z), dtype=complex)
        z2[0::2], z2[1::2] = z, mid
        w2[0::2], w2[1::2] = w, dm / sm
        z, w = refine(z2, w2)
        new = winding_of(w)
        if abs(new - winding) < 0.5:
            winding = new
            break
        winding = new
    else:
        raise PhaseInconsistent("winding number did not stabilize under refinement")
    k = int(np.rint(winding))
    if abs(winding - k) > 0.1:
        raise PhaseInconsistent(f"winding number {winding:.3f} is not near an integer")
    return k


def _box_count(problem, lam, steps, rel=1e-3):
    half = 0.5 * rel * max(1.0, abs(lam))
    try:
        return count_eigenvalues_in_rectangle(
            problem, (lam - half - 1j * half, lam + half + 1j * half), 64, steps)
    except (BoundaryTooCloseToZero, PhaseInconsistent):
        return count_eigenvalues_in_rectangle(
            problem, (lam - 0.7 * half - 0.7j * half, lam + 0.7 * half + 0.7j * half), 64, steps)


# -- real scan ---------------------------------------------------------------

def _bisect(f, a, b, fa, fb=None, tol_rel=1e-10, max_iter=200):
    """Vectorized bracketing root refinement for sign changes of f on [a, b].

    Illinois (modified regula falsi) steps, with a plain bisection step
    whenever a bracket fails to halve over two iterations; stops once
    every bracket is narrower than tol_rel * max(1, |x|).
    """
    a, b, fa = a.astype(float), b.astype(float), fa.astype(float)
    fb = f(b) if fb is None else fb.astype(float)
    side = np.zeros(a.shape, dtype=int)
    width_old = np.abs(b - a) * 2
    for it in range(max_iter):
        width = np.abs(b - a)
        if np.all(width <= tol_rel * np.maximum(1.0, np.abs(a))):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (a * fb - b * fa) / (fb - fa)
        slow = (width > 0.5 * width_old) & (it % 2 == 1)
        bad = ~np.isfinite(x) | (x <= np.minimum(a, b)) | (x >= np.maximum(a, b)) | slow
        x = np.where(bad, 0.5 * (a + b), x)
        if it % 2 == 1:
            width_old = width
        fx = f(x)
        left = np.sign(fx) == np.sign(fa)
        # Illinois: halve the stale endpoint value when the same side is kept twice
        fb = np.where(left & (side == 1), 0.5 * fb, fb)
        fa = np.where(~left & (side == -1), 0.5 * fa, fa)
        a, fa = np.where(left, x, a), np.where(left, fx, fa)
        b, fb = np.where(left, b, x), np.where(left, fb, fx)
        side = np.where(left, 1, -1)
        done = fx == 0
        a, b = np.where(done, x, a), np.where(done, x, b)
    return 0.5 * (a + b)


def scan_real_eigenvalues(problem: TransmissionProblem, window, grid_points: int = 2000,
                          steps: int = DEFAULT_STEPS):
    """Real zeros of Delta in ``window``, with multiplicities.

    Sign changes are bracketed on a grid uniform in sign(lambda)*sqrt|lambda|
    (zeros are asymptotically evenly spaced there) and bisected.  Zeros of
    even order, where Delta touches the axis, are picked up as sign changes
    of Delta' next to a local minimum of |Delta| and confirmed by an
    argument-principle count.
    """
    lo, hi = float(window[0]), float(window[1])
    if lo >= hi:
        raise WindowEmpty("window lower bound must be below the upper bound")
    if grid_points < 100:
        raise ValueError("grid_points must be at least 100")
    if green_interface_coefficient(problem) != 0 or isinstance(problem.perturbation, FirstOrder):
        warnings.warn("operator is not symmetric; the spectrum need not be real",
                      SpectrumWarning, stacklevel=2)

    s = np.linspace(np.sign(lo) * np.sqrt(abs(lo)), np.sign(hi) * np.sqrt(abs(hi)), grid_points)
    lam = np.sign(s) * s**2
    det, ddet, scale = determinant_batch(problem, lam, steps)
    D = (det / scale).real
    Dp = (ddet / scale).real

    def sign_of_det(x):
        d, _, sc = determinant_batch(problem, x, steps)
        return (d / sc).real

    def sign_of_ddet(x):
        _, dd, sc = determinant_batch(problem, x, steps)
        return (dd / sc).real

    found = []
    exact = np.nonzero(D == 0)[0]
    for i in exact:
        found.append((lam[i], max(1, _box_count(problem, lam[i], steps))))

    sc_idx = np.nonzero(D[:-1] * D[1:] < 0)[0]
    if sc_idx.size:
        roots = _bisect(sign_of_det, lam[sc_idx], lam[sc_idx + 1], D[sc_idx], D[sc_idx + 1])
        _, droot, sroot = determinant_batch(problem, roots, steps)
        secant = np.abs(D[sc_idx + 1] - D[sc_idx]) / np.abs(lam[sc_idx + 1] - lam[sc_idx])
        for r, dr, sr, sec in zip(roots, droot, sroot, secant):
            mult = 1
            if abs(dr / sr) < 1e-6 * sec:
                mult = max(1, _box_count(problem, r, steps))
            found.append((r, mult))

    absD = np.abs(D)
    for i in range(1, grid_points - 1):
        if not (absD[i] < absD[i - 1] and absD[i] <= absD[i + 1]):
            continue
        if D[i - 1] * D[i] <= 0 or D[i] * D[i + 1] <= 0:
            continue
        # two close simple roots can hide inside one cell: look on a finer grid first
        sub = np.linspace(lam[i - 1], lam[i + 1], 2 * _SUBDIVISIONS + 1)
        Ds = sign_of_det(sub)
        idx = np.nonzero(Ds[:-1] * Ds[1:] < 0)[0]
        if idx.size:
            roots = _bisect(sign_of_det, sub[idx], sub[idx + 1], Ds[idx], Ds[idx + 1])
            found.extend((r, 1) for r in roots)
            found.extend((x, 1) for x in sub[1:-1][Ds[1:-1] == 0])
            continue
        if Dp[i - 1] * Dp[i + 1] >= 0:
            continue
        r = _bisect(sign_of_ddet, lam[i - 1:i], lam[i + 1:i + 2], Dp[i - 1:i], Dp[i + 1:i + 2])[0]
        k = _box_count(problem, r, steps)
        if k > 0:
            found.append((r, k))

    found.sort(key=lambda t: t[0])
    merged = []
    for r, k in found:
        if merged and abs(r - merged[-1][0]) <= 1e-8 * max(1.0, abs(r)):
            merged[-1] = (merged[-1][0], merged[-1][1] + k)
        else:
            merged.append((r, k))

    if not merged:
        return []
    vals = np.array([m[0] for m in merged], dtype=float)
    det, _, scale = determinant_batch(problem, vals, steps)
    return [
        EigenvalueRecord(complex(v, 0.0), int(k), "Single", "Shooting", float(abs(d) / s))
        for (v, k), d, s in zip(merged, det, scale)
    ]


# -- complex refinement ----------------------------------------------------

def refine_complex_root(problem: TransmissionProblem, seed, steps: int = DEFAULT_STEPS,
                        max_iter: int = 100, tol: float = 1e-9):
    """Muller iteration on Delta from ``seed``.

    Stops once |Delta| <= tol * scale.  The multiplicity comes from a
    winding count on a small box around the root.  A root further than 1
    from the seed is returned with the flag ``"far_from_seed"``.
    """
    seed = complex(seed)
    step = 1e-3 * max(1.0, abs(seed))
    x = np.array([seed - step, seed + step, seed], dtype=complex)
    f = determinant_batch(problem, x, steps)[0]
    x0, x1, x2 = x
    f0, f1, f2 = f
    for _ in range(max_iter):
        d, _, s = determinant_batch(problem, [x2], steps)
        f2 = d[0]
        if abs(f2) <= 1e-15 * s[0]:
            break
        h1, h2 = x1 - x0, x2 - x1
        if h1 == 0 or h2 == 0 or h1 + h2 == 0:
            raise NoConvergence("Muller iteration stalled")
        d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
        a = (d2 - d1) / (h2 + h1)
        b = a * h2 + d2
        disc = np.sqrt(b * b - 4 * f2 * a)
        den = b + disc if abs(b + disc) >= abs(b - disc) else b - disc
        dx = -2 * f2 / den if den != 0 else step
        x0, x1, f0, f1 = x1, x2, f1, f2
        x2 = x2 + dx
        if not np.isfinite(x2):
            raise NoConvergence("Muller iteration diverged")
        # accept once Delta is small and the update has stalled at rounding level
        if abs(f2) <= tol * s[0] and abs(dx) <= 1e-12 * max(1.0, abs(x2)):
            break
    else:
        raise NoConvergence(f"no root within {max_iter} iterations from seed {seed}")
    d, _, s = determinant_batch(problem, [x2], steps)
    if not abs(d[0]) <= tol * s[0]:
        raise NoConvergence(f"Muller iteration from {seed} ended with |Delta| above tolerance")
    try:
        mult = max(1, _box_count(problem, x2, steps, rel=1e-4))
    except (BoundaryTooCloseToZero, PhaseInconsistent):
        mult = 1
    flags = ("far_from_seed",) if abs(x2 - seed) > 1.0 else ()
    return EigenvalueRecord(complex(x2), mult, "Single", "Shooting",
                            float(abs(d[0]) / s[0]), flags)


# -- eigenfunctions ----------------------------------------------------------

def _second_derivative(u, h):
    """Fourth-order central second difference on interior nodes 2..n-2."""
    return (-u[:-4] + 16 * u[1:-3] - 30 * u[2:-2] + 16 * u[3:-1] - u[4:]) / (12 * h * h)


def eigenfunction(problem: TransmissionProblem, eig, steps: int = DEFAULT_STEPS):
    """L2-normalized eigenfunction for ``eig`` (a record or a number).

    The left piece is a multiple of the solution meeting L1 (integrated
    forward from -1), the right piece a multiple of the solution meeting
    L2 (integrated backward from 1); the two multiples span the null
    space of the 2x2 interface system.

    Raises
    ------
    DegenerateNullspace
        When the interface system vanishes (two independent
        eigenfunctions) but ``eig`` claims multiplicity one.
    """
    _check_local(problem)
    lam = complex(eig.value if isinstance(eig, EigenvalueRecord) else eig)
    mult = eig.multiplicity if isinstance(eig, EigenvalueRecord) else 1
    phi = _propagate_nodes(problem, problem.p1, -1.0, lam, steps,
                           start=(problem.alpha1, -problem.alpha0))
    psi = _propagate_nodes(problem, problem.p2, 0.0, lam, steps,
                           start=(problem.beta1, -problem.beta0), backward=True)
    G = _interface_matrix(problem, phi[:, -1], psi[:, 0])
    wl, wr = _weights(problem)
    norms = np.array([wl * np.linalg.norm(phi[:, -1]), wr * np.linalg.norm(psi[:, 0])])
    _, sv, vh = np.linalg.svd(G / norms)
    if sv[0] <= 1e-6:
        if mult == 1:
            raise DegenerateNullspace("interface system vanishes: eigenspace is two-dimensional")
        coef = np.array([1.0, 0.0]) / norms
    else:
        coef = vh[-1].conj() / norms
    left = coef[0] * phi
    right = coef[1] * psi
    u = BrokenFunction(left[0], right[0], (left[0, -1], left[1, -1], right[0, 0], right[1, 0]),
                       (left[0, 0], left[1, 0], right[0, -1], right[1, -1]))
    u = u * (1.0 / u.l2_norm())
    # fix the phase so the largest sample is real and positive
    samples = np.concatenate([u.left, u.right])
    peak = samples[np.argmax(np.abs(samples))]
    return u * (abs(peak) / peak)


def eigenfunction_residual(problem: TransmissionProblem, u: BrokenFunction, lam):
    """Discrete L2 norm of p u'' + A u - lambda u over interior nodes, relative to ||u||."""
    _check_local(problem)
    total = 0.0
    for vals, p, x, h in ((u.left, problem.p1, u.x_left, u.h_left),
                          (u.right, problem.p2, u.x_right, u.h_right)):
        q, c = problem.perturbation.local_coefficients(x[2:-2])
        du = (-vals[4:] + 8 * vals[3:-1] - 8 * vals[1:-3] + vals[:-4]) / (12 * h)
        r = p * _second_derivative(vals, h) + q * vals[2:-2] + c * du - lam * vals[2:-2]
        total += h * np.sum(np.abs(r) ** 2)
    return float(np.sqrt(total) / u.l2_norm())

