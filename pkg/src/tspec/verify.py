"""Numerical checks of the operator-theoretic estimates.

Each ``check_*`` function wraps a measurement in a
:class:`VerificationReport`; the bare measurement functions are usable on
their own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize

from .core import (BrokenFunction, TransmissionProblem, TrigPolynomial, Zero, condition_values,
                   green_interface_coefficient, project_to_domain, symmetry_defect)
from .discrete import (BrokenGrid, DiscreteOperator, ShiftedSolver, assemble_operator,
                       broken_sobolev_norm, build_grid, solve_nonhomogeneous)
from .errors import NearSingular, NotInDomain, PreconditionViolated, ZeroInSpectrum

PASS, FAIL, NOT_APPLICABLE = "Pass", "Fail", "NotApplicable"
SECTOR_NOTE = ("estimates are checked on rays away from the real axis; the printed sector "
               "condition |arg lambda +- pi/2| > eps would include the real axis")


@dataclass
class VerificationReport:
    name: str
    status: str
    constants: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    witness: dict | None = None

    def __post_init__(self):
        if self.status not in (PASS, FAIL, NOT_APPLICABLE):
            raise ValueError(f"unknown status {self.status!r}")

    def as_dict(self):
        out = {"name": self.name, "status": self.status, "constants": self.constants,
               "params": self.params, "notes": list(self.notes)}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def _fail_or_pass(ok, report_kwargs, witness):
    status = PASS if ok else FAIL
    return VerificationReport(status=status, witness=None if ok else witness, **report_kwargs)


# -- random domain functions ------------------------------------------------

def random_trig(rng, terms=6):
    """Trigonometric polynomial with complex coefficients in [-1, 1] + i[-1, 1]."""
    def draw():
        return rng.uniform(-1, 1, terms) + 1j * rng.uniform(-1, 1, terms)
    return TrigPolynomial(draw(), draw())


def random_domain_function(problem: TransmissionProblem, rng, n=256, terms=6) -> BrokenFunction:
    """Random smooth seed corrected to satisfy the four homogeneous conditions."""
    return project_to_domain(problem, random_trig(rng, terms), random_trig(rng, terms), n)


# -- Lagrange identity ------------------------------------------------------

def _second_derivative(v, h):
    """Fourth-order second differences, one-sided near the ends."""
    d = np.empty_like(v)
    d[2:-2] = (-v[:-4] + 16 * v[1:-3] - 30 * v[2:-2] + 16 * v[3:-1] - v[4:]) / (12 * h * h)
    c = np.array([15 / 4, -77 / 6, 107 / 6, -13, 61 / 12, -5 / 6]) / (h * h)
    d[0] = c @ v[:6]
    d[1] = np.array([5 / 6, -5 / 4, -1 / 3, 7 / 6, -1 / 2, 1 / 12]) @ v[:6] / (h * h)
    d[-1] = c @ v[::-1][:6]
    d[-2] = np.array([5 / 6, -5 / 4, -1 / 3, 7 / 6, -1 / 2, 1 / 12]) @ v[::-1][:6] / (h * h)
    return d


def interface_bracket(u: BrokenFunction, v: BrokenFunction) -> complex:
    """u(0+) conj(v(0-)) - u(0-) conj(v(0+))."""
    um, _, up, _ = u.traces
    vm, _, vp, _ = v.traces
    return complex(up * np.conj(vm) - um * np.conj(vp))


def lagrange_defect(problem: TransmissionProblem, u: BrokenFunction, v: BrokenFunction,
                    grid: BrokenGrid | None = None) -> complex:
    """(L0 u, v) - (u, L0 v) for the unperturbed operator L0 u = p u''.

    Second derivatives are fourth-order differences and the integral is
    composite Simpson over each piece.

    Raises
    ------
    NotInDomain
        If u or v violates a condition by more than 1e-8.
    """
    for w in (u, v):
        if condition_values(problem, w).max_abs() > 1e-8:
            raise NotInDomain("function does not satisfy the homogeneous conditions")
    total = 0j
    for p, a, b in ((problem.p1, u.left, v.left), (problem.p2, u.right, v.right)):
        h = 1.0 / (len(a) - 1)
        integrand = p * (_second_derivative(a, h) * np.conj(b) - a * np.conj(_second_derivative(b, h)))
        total += scipy.integrate.simpson(integrand, dx=h)
    return complex(total)


def _w2_norm(u: BrokenFunction):
    return broken_sobolev_norm(u, build_grid(len(u.left) - 1), 2)


def check_lagrange(problem: TransmissionProblem, samples=100, seed=0, n=256,
                   tol_abs=1e-6, tol_rel=1e-4) -> VerificationReport:
    """Compare measured defects with the interface-term closed form.

    The closed form used is (p1 delta0 + p2 gamma1) times the interface
    bracket, obtained by integrating by parts on each piece.  The printed
    coefficient -(p1 delta0 - p2 gamma1) is reported alongside.
    """
    rng = np.random.default_rng(seed)
    coef = green_interface_coefficient(problem)
    printed = -symmetry_defect(problem)
    worst_abs = worst_rel = 0.0
    witness = None
    for k in range(samples):
        u = random_domain_function(problem, rng, n)
        v = random_domain_function(problem, rng, n)
        d = lagrange_defect(problem, u, v)
        x = interface_bracket(u, v)
        scale = _w2_norm(u) * _w2_norm(v)
        err = abs(d - coef * x)
        rel = err / abs(coef * x) if coef != 0 else 0.0
        abs_scaled = err / scale
        if abs_scaled > worst_abs or rel > worst_rel:
            witness = {"sample": k, "defect": [d.real, d.imag], "bracket": [x.real, x.imag]}
        worst_abs, worst_rel = max(worst_abs, abs_scaled), max(worst_rel, rel)
    ok = worst_abs <= tol_abs if coef == 0 else worst_rel <= tol_rel
    notes = [f"closed-form coefficient p1*delta0 + p2*gamma1 = {coef:g}; "
             f"printed form -(p1*delta0 - p2*gamma1) = {printed:g}"]
    if coef != printed:
        notes.append("printed closed form disagrees with integration by parts for this problem")
    return _fail_or_pass(ok, dict(
        name="lagrange", constants={"max_scaled_defect_error": worst_abs,
                                    "max_relative_error": worst_rel,
                                    "interface_coefficient": coef, "printed_coefficient": printed},
        params={"samples": samples, "seed": seed, "n": n}, notes=notes), witness)


# -- subordination ----------------------------------------------------------

def _disc_norm(grid, vec, rows=None):
    w = grid.weights()
    if rows is not None:
        vec, w = vec[rows], w[rows]
    return float(np.sqrt(np.sum(w * np.abs(vec) ** 2)))


def find_shift(problem: TransmissionProblem, grid: BrokenGrid, operator=None, rel=1e-3):
    """A shift mu0 with mu0 well away from the spectrum of the unperturbed operator.

    Returns 0 when the unperturbed operator is already safely invertible.
    """
    op = operator or assemble_operator(problem.unperturbed(), grid)
    scale = np.linalg.norm(op.reduced, 1)
    candidates = [0.0] + [s * 2.0 ** k for k in range(0, 12) for s in (1j, 1.0, -1.0)]
    for mu in candidates:
        if ShiftedSolver(op, mu).distance_estimate() > rel * max(1.0, abs(mu)) and scale > 0:
            return mu
    raise ZeroInSpectrum("no admissible shift found")


def subordination_quotient(problem, grid, u: BrokenFunction, shift=0.0, op0=None, opA=None):
    """||A u|| / (||(L0 - shift) u||^(1/2) ||u||^(1/2)) in the discrete L2 norm."""
    op0 = op0 or assemble_operator(problem.unperturbed(), grid)
    opA = opA or assemble_operator(problem, grid)
    vec = grid.from_function(u)
    rows = grid.interior_unknowns
    l0u = op0.matrix @ vec - shift * vec
    au = opA.matrix @ vec - op0.matrix @ vec
    denom = np.sqrt(_disc_norm(grid, l0u, rows) * _disc_norm(grid, vec))
    return _disc_norm(grid, au, rows) / denom


def subordination_ratio(problem: TransmissionProblem, grid: BrokenGrid, sample_count: int,
                        seed=0, return_shift=False):
    """Largest subordination quotient (exponent 1/2) over random domain functions."""
    if not problem.perturbation.is_local:
        raise ValueError("subordination is measured for local perturbations")
    op0 = assemble_operator(problem.unperturbed(), grid)
    opA = assemble_operator(problem, grid)
    shift = find_shift(problem, grid, op0)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(sample_count):
        u = random_domain_function(problem, rng, grid.n)
        best = max(best, subordination_quotient(problem, grid, u, shift, op0, opA))
    return (best, shift) if return_shift else best


def check_subordination(problem, sample_counts=(50, 200), n_list=(500, 1000), seed=0,
                        band=0.2) -> VerificationReport:
    """Finite sup ratio, stable within ``band`` across sample counts and grids."""
    values = {}
    shift = 0.0
    for n in n_list:
        for s in sample_counts:
            values[(n, s)], shift = subordination_ratio(problem, build_grid(n), s, seed, True)
    vals = np.array(list(values.values()))
    finite = bool(np.all(np.isfinite(vals)))
    ref = vals.max()
    spread = 0.0 if ref == 0 else float((vals.max() - vals.min()) / ref)
    ok = finite and spread <= band
    return _fail_or_pass(ok, dict(
        name="subordination",
        constants={"sup_ratio": float(ref), "relative_spread": spread,
                   "shift": [complex(shift).real, complex(shift).imag],
                   "by_run": {f"n={n},samples={s}": float(v) for (n, s), v in values.items()}},
        params={"sample_counts": list(sample_counts), "n": list(n_list), "seed": seed},
        notes=["p = 1/2 subordination to the unperturbed operator"]),
        {"values": vals.tolist()})


# -- coercive estimate and resolvent --------------------------------------

def _ray_points(ray_angle, modulus_list):
    mods = np.asarray(modulus_list, dtype=float)
    if np.any(np.diff(mods) <= 0):
        raise ValueError("moduli must be ascending")
    if mods.max() > 1e6:
        raise ValueError("moduli must not exceed 1e6")
    if abs(np.sin(ray_angle)) < 1e-3:
        raise ValueError("the ray must avoid the real axis")
    return mods, mods * np.exp(1j * ray_angle)


def random_unit_function(grid: BrokenGrid, rng, terms=6) -> BrokenFunction:
    f = BrokenFunction.from_callables(random_trig(rng, terms), random_trig(rng, terms), grid.n)
    return f * (1.0 / f.l2_norm())


def coercive_lhs(u: BrokenFunction, grid: BrokenGrid, lam) -> float:
    m = abs(lam)
    return (m * broken_sobolev_norm(u, grid, 0) + np.sqrt(m) * broken_sobolev_norm(u, grid, 1)
            + broken_sobolev_norm(u, grid, 2))


def coercive_ratio_scan(problem: TransmissionProblem, grid: BrokenGrid, ray_angle, modulus_list,
                        f: BrokenFunction | None = None, f_conditions=(0, 0, 0, 0), seed=0,
                        operator: DiscreteOperator | None = None):
    """(|lambda|, ratio) along a ray.

    With interior data the ratio is the coercive left-hand side over
    ||f||; with f = 0 and condition data it is the left-hand side over
    |lambda|^(1/4) sum |f_i|.
    """
    mods, lams = _ray_points(ray_angle, modulus_list)
    op = operator or assemble_operator(problem, grid)
    if f is None:
        f = random_unit_function(grid, np.random.default_rng(seed))
    fnorm = f.l2_norm()
    bdata = float(np.sum(np.abs(f_conditions)))
    out = []
    for m, lam in zip(mods, lams):
        if fnorm == 0 and bdata == 0:
            out.append((float(m), 0.0))
            continue
        u = solve_nonhomogeneous(problem, grid, lam, f, f_conditions, operator=op)
        lhs = coercive_lhs(u, grid, lam)
        denom = fnorm if fnorm > 0 else m ** 0.25 * bdata
        out.append((float(m), float(lhs / denom)))
    return out


def _resolvent_norm(solver: ShiftedSolver, op: DiscreteOperator, rng, iterations=20, restarts=2):
    """2-norm of f -> u (discrete L2 weights on both sides) by power iteration on R*R."""
    grid = op.grid
    _, E, _, _ = op._elimination
    w_full = grid.weights()
    interior, bnd = grid.interior_unknowns, grid.condition_unknowns
    sq_in = np.sqrt(w_full[interior])

    def forward(x):
        u = op.expand(solver.solve_reduced(x / sq_in))
        return np.sqrt(w_full) * u

    def adjoint(y):
        y = np.sqrt(w_full) * y
        z = y[interior] + E.conj().T @ y[bnd]
        return solver.solve_reduced(z, trans=2) / sq_in

    best = 0.0
    for _ in range(restarts):
        x = rng.standard_normal(len(interior)) + 1j * rng.standard_normal(len(interior))
        x /= np.linalg.norm(x)
        est = 0.0
        for _ in range(iterations):
            y = adjoint(forward(x))
            est = np.linalg.norm(y)
            x = y / est
        best = max(best, float(np.sqrt(est)))
    return best


def resolvent_norm_scan(problem: TransmissionProblem, grid: BrokenGrid, ray_angle, modulus_list,
                        seed=0, operator: DiscreteOperator | None = None):
    """(|lambda|, |lambda| ||R(lambda)||) along a ray.

    Raises
    ------
    NearSingular
        If a point of the ray is within 1e-6 of the discrete spectrum.
    """
    mods, lams = _ray_points(ray_angle, modulus_list)
    op = operator or assemble_operator(problem, grid)
    rng = np.random.default_rng(seed)
    out = []
    for m, lam in zip(mods, lams):
        solver = ShiftedSolver(op, lam)
        dist = solver.distance_estimate()
        if dist <= 1e-6 * max(1.0, m):
            raise NearSingular(f"lambda={lam} is within {dist:.3g} of the discrete spectrum", dist)
        out.append((float(m), float(m * _resolvent_norm(solver, op, rng))))
    return out


def _bounded(values, limit=3.0):
    values = np.asarray(values, dtype=float)
    med = float(np.median(values))
    ratio = float(values.max() / med) if med > 0 else float("inf")
    return ratio <= limit, ratio


def check_resolvent(problem, n=500, ray_angle=np.pi / 2, moduli=(1e2, 1e3, 1e4), seed=0):
    scan = resolvent_norm_scan(problem, build_grid(n), ray_angle, moduli, seed)
    ok, spread = _bounded([v for _, v in scan])
    return _fail_or_pass(ok, dict(
        name="resolvent", constants={"scan": scan, "C": max(v for _, v in scan),
                                     "max_over_median": spread},
        params={"n": n, "ray_angle": ray_angle, "moduli": list(moduli), "seed": seed},
        notes=[SECTOR_NOTE]), {"scan": scan})


def check_coercive(problem, n=500, ray_angle=np.pi / 2, moduli=(1e2, 1e3, 1e4), seed=0):
    grid = build_grid(n)
    op = assemble_operator(problem, grid)
    interior = coercive_ratio_scan(problem, grid, ray_angle, moduli, seed=seed, operator=op)
    zero = BrokenFunction(np.zeros(n + 1), np.zeros(n + 1))
    boundary = coercive_ratio_scan(problem, grid, ray_angle, moduli, f=zero,
                                   f_conditions=(0, 0, 1, 0), operator=op)
    ok1, s1 = _bounded([v for _, v in interior])
    ok2, s2 = _bounded([v for _, v in boundary])
    return _fail_or_pass(ok1 and ok2, dict(
        name="coercive",
        constants={"interior_scan": interior, "boundary_scan": boundary,
                   "C": max(v for _, v in interior), "C_boundary": max(v for _, v in boundary),
                   "max_over_median": s1, "max_over_median_boundary": s2},
        params={"n": n, "ray_angle": ray_angle, "moduli": list(moduli), "seed": seed},
        notes=[SECTOR_NOTE]), {"interior": interior, "boundary": boundary})


# -- decoupled oracle -------------------------------------------------------

def _robin_characteristic(mu, a0, a1, g):
    """Value at y=1 of w' - g w for w'' = -mu w, w(0) = a1, w'(0) = -a0."""
    if mu > 0:
        k = np.sqrt(mu)
        C, S, dC = np.cos(k), np.sin(k) / k, -k * np.sin(k)
    elif mu < 0:
        k = np.sqrt(-mu)
        C, S, dC = np.cosh(k), np.sinh(k) / k, k * np.sinh(k)
    else:
        C, S, dC = 1.0, 1.0, 0.0
    w = a1 * C - a0 * S
    dw = a1 * dC - a0 * C
    return dw - g * w


def _robin_roots(a0, a1, g, count):
    """First ``count`` roots mu (ascending) of the single-interval characteristic function."""
    def F(mu):
        return _robin_characteristic(mu, a0, a1, g)

    # negative roots: at most two, bounded by the Robin data
    kmax = 2.0 + 2.0 * (abs(g) + (abs(a0 / a1) if a1 != 0 else 0.0))
    ks = np.linspace(kmax, 0.0, 4000, endpoint=False)
    omegas = np.linspace(0.0, (count + 2) * np.pi, 400 * (count + 2))
    mus = np.concatenate([-ks ** 2, omegas ** 2])
    vals = np.array([F(m) for m in mus])
    roots = []
    for i in range(len(mus) - 1):
        if vals[i] == 0:
            roots.append(mus[i])
        elif vals[i] * vals[i + 1] < 0:
            roots.append(scipy.optimize.brentq(F, mus[i], mus[i + 1], xtol=1e-14, rtol=1e-15))
        if len(roots) >= count:
            break
    return np.array(roots[:count])


def oracle_decoupled_eigenvalues(problem: TransmissionProblem, count: int):
    """Eigenvalues of the two independent single-interval problems.

    Left: p1 u'' = lambda u on (-1, 0), alpha0 u(-1) + alpha1 u'(-1) = 0,
    u'(0-) = gamma0 u(0-).  Right: p2 u'' = lambda u on (0, 1),
    u'(0+) = delta1 u(0+), beta0 u(1) + beta1 u'(1) = 0.  Each list holds
    ``count`` values ordered by increasing -lambda/p.

    Raises
    ------
    PreconditionViolated
        Unless delta0 = gamma1 = 0 and the perturbation is zero.
    """
    pr = problem
    if pr.delta0 != 0 or pr.gamma1 != 0 or not isinstance(pr.perturbation, Zero):
        raise PreconditionViolated("oracle needs delta0 = gamma1 = 0 and no perturbation")
    left = _robin_roots(pr.alpha0, pr.alpha1, pr.gamma0, count)
    # right piece in y = 1 - x: w(0) = beta1, w'(0) = beta0, condition -w'(1) - delta1 w(1) = 0
    right = _robin_roots(-pr.beta0, pr.beta1, -pr.delta1, count)
    return list(-pr.p1 * left), list(-pr.p2 * right)


def check_decoupled_oracle(problem, count=3, tol=1e-8) -> VerificationReport:
    from .shooting import scan_real_eigenvalues

    try:
        left, right = oracle_decoupled_eigenvalues(problem, count)
    except PreconditionViolated as exc:
        return VerificationReport("decoupled_oracle", NOT_APPLICABLE, notes=[str(exc)])
    oracle = np.sort(np.array(left + right))
    edge = 1.05 * np.abs(oracle).max() + 1.0
    recs = scan_real_eigenvalues(problem, (-edge, edge))
    shoot = np.array([r.value.real for r in recs])
    gap = float(max(np.min(np.abs(shoot - o)) for o in oracle)) if len(shoot) else float("inf")
    ok = gap <= tol
    return _fail_or_pass(ok, dict(
        name="decoupled_oracle", constants={"max_abs_gap": gap, "oracle": oracle.tolist()},
        params={"count": count, "tol": tol}, notes=[]), {"shooting": shoot.tolist()})
