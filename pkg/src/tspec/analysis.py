"""Branch bookkeeping, asymptotic fits, counting functions and sector bounds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import TransmissionProblem
from .errors import (
    AmbiguousMember,
    BoundaryTooCloseToZero,
    PhaseInconsistent,
    NoConvergence,
    SpectrumTooShort,
    SpectrumWarning,
    TooFewEigenvalues,
)
from .shooting import (
    DEFAULT_STEPS,
    EigenvalueRecord,
    count_eigenvalues_in_rectangle,
    refine_complex_root,
    scan_real_eigenvalues,
)


def _values(spectrum):
    """Expand records (or bare numbers) into a complex array, repeating by multiplicity."""
    out = []
    for item in spectrum:
        if isinstance(item, EigenvalueRecord):
            out.extend([item.value] * item.multiplicity)
        elif isinstance(item, BranchEntry):
            out.append(item.value)
        else:
            out.append(complex(item))
    return np.asarray(out, dtype=complex)


# -- branches ------------------------------------------------------------------

@dataclass(frozen=True)
class BranchEntry:
    index: int
    value: complex
    record: EigenvalueRecord


@dataclass
class BranchedSpectrum:
    """Eigenvalues split by half-plane (opposite-sign stiffness) or kept as one sequence.

    Entries are repeated according to multiplicity, so indices count
    eigenvalues the way the counting function does.
    """

    case: str
    branch1: list = field(default_factory=list)
    branch2: list = field(default_factory=list)
    single: list = field(default_factory=list)
    flagged: list = field(default_factory=list)

    def branch(self, name):
        return {"Branch1": self.branch1, "Branch2": self.branch2, "Single": self.single}[name]

    def records(self):
        """The distinct input records, recovered from all branches."""
        seen, out = set(), []
        for entry in self.branch1 + self.branch2 + self.single:
            if id(entry.record) not in seen:
                seen.add(id(entry.record))
                out.append(entry.record)
        return out


def _as_record(item):
    if isinstance(item, EigenvalueRecord):
        return item
    return EigenvalueRecord(complex(item))


def _index(records, branch):
    records = sorted(records, key=lambda r: (abs(r.value), r.value.real, r.value.imag))
    out, n = [], 0
    for rec in records:
        for _ in range(rec.multiplicity):
            n += 1
            out.append(BranchEntry(n, rec.value, rec))
    return out


def assign_branches(spectrum, problem: TransmissionProblem) -> BranchedSpectrum:
    """Split a spectrum into the branches of the asymptotic theory.

    With p1*p2 < 0, Branch1 collects Re(lambda) > 0 and Branch2
    Re(lambda) < 0.  Members with |Re lambda| <= 1e-9 |lambda| are
    ambiguous; they trigger an :class:`AmbiguousMember` warning and go to
    Branch1.
    """
    records = [_as_record(r) for r in spectrum]
    if not records:
        raise ValueError("spectrum is empty")
    if not problem.opposite_signs:
        return BranchedSpectrum("SameSign", single=_index(records, "Single"))
    b1, b2, flagged = [], [], []
    for rec in records:
        lam = rec.value
        if abs(lam.real) <= 1e-9 * abs(lam):
            flagged.append(rec)
            b1.append(rec)
        elif lam.real > 0:
            b1.append(rec)
        else:
            b2.append(rec)
    if flagged:
        warnings.warn(f"{len(flagged)} eigenvalue(s) on the imaginary axis assigned to Branch1",
                      AmbiguousMember, stacklevel=2)
    if not b1 or not b2:
        warnings.warn("one half-plane holds no eigenvalues", SpectrumWarning, stacklevel=2)
    return BranchedSpectrum("OppositeSigns", _index(b1, "Branch1"), _index(b2, "Branch2"),
                            flagged=flagged)


# -- leading coefficients ----------------------------------------------------

def predicted_leading_coefficient(problem: TransmissionProblem):
    """Predicted c in lambda_n ~ c n^2.

    Opposite signs: the pair (-p1 pi^2, -p2 pi^2).  Same sign:
    -pi^2 p1 p2 / (sqrt(p1) + sqrt(p2))^2 for positive p; for negative p
    the moduli are used and the sign flipped, which is an interpretation
    (see :func:`prediction_note`).
    """
    p1, p2 = problem.p1, problem.p2
    if problem.opposite_signs:
        return (-p1 * np.pi**2, -p2 * np.pi**2)
    a1, a2 = abs(p1), abs(p2)
    c = np.pi**2 * a1 * a2 / (np.sqrt(a1) + np.sqrt(a2)) ** 2
    return -c if p1 > 0 else c


def prediction_note(problem: TransmissionProblem):
    if not problem.opposite_signs and problem.p1 < 0:
        return ("both stiffness coefficients negative: prediction uses |p1|, |p2| "
                "with the sign flipped (interpretation, checked numerically)")
    return ""


def branch_predictions(problem: TransmissionProblem):
    """Map branch name to predicted leading coefficient."""
    pred = predicted_leading_coefficient(problem)
    if not problem.opposite_signs:
        return {"Single": pred}
    positive = max(pred)
    negative = min(pred)
    return {"Branch1": positive, "Branch2": negative}


def branch_stiffness(problem: TransmissionProblem):
    """|p| governing each branch: Branch1 (Re > 0) comes from the negative p."""
    if not problem.opposite_signs:
        return {"Single": None}
    neg = problem.p1 if problem.p1 < 0 else problem.p2
    pos = problem.p2 if problem.p1 < 0 else problem.p1
    return {"Branch1": abs(neg), "Branch2": abs(pos)}


# -- fits ----------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticFit:
    leading_coefficient: float
    predicted: float
    relative_error: float
    residual_bound_constant: float
    fit_window: tuple
    method: str = "sqrt"


def _indexed(branch):
    """(indices, values) from entries, (n, value) pairs or a plain sequence."""
    branch = list(branch)
    if not branch:
        return np.array([], dtype=int), np.array([], dtype=complex)
    first = branch[0]
    if isinstance(first, BranchEntry):
        return (np.array([e.index for e in branch]),
                np.array([e.value for e in branch], dtype=complex))
    if isinstance(first, tuple):
        return (np.array([int(e[0]) for e in branch]),
                np.array([complex(e[1]) for e in branch], dtype=complex))
    vals = _values(branch)
    return np.arange(1, len(vals) + 1), vals


def fit_asymptotics(branch, predicted: float, tail_start: int = 10,
                    method: str = "sqrt") -> AsymptoticFit:
    """Fit Re(lambda_n) ~ c n^2 on the tail n >= tail_start.

    ``method="sqrt"`` regresses sqrt|Re lambda_n| on (n, 1), so that an
    O(n) remainder only shifts the intercept; c is the squared slope with
    the sign of the data.  ``method="quadratic"`` is the plain least
    squares fit of Re lambda_n on (n^2, n, 1).
    """
    n, lam = _indexed(branch)
    if len(n) < tail_start + 10:
        raise TooFewEigenvalues(f"need at least {tail_start + 10} eigenvalues, got {len(n)}")
    mask = n >= tail_start
    n_t = n[mask].astype(float)
    re = lam[mask].real
    if method == "sqrt":
        sign = np.sign(np.sum(re))
        X = np.column_stack([n_t, np.ones_like(n_t)])
        slope = np.linalg.lstsq(X, np.sqrt(np.abs(re)), rcond=None)[0][0]
        c = sign * slope**2
    elif method == "quadratic":
        X = np.column_stack([n_t**2, n_t, np.ones_like(n_t)])
        c = np.linalg.lstsq(X, re, rcond=None)[0][0]
    else:
        raise ValueError(f"unknown fit method {method!r}")
    rel = abs(c - predicted) / abs(predicted)
    C = float(np.max(np.abs(re - predicted * n_t**2) / n_t))
    return AsymptoticFit(float(c), float(predicted), float(rel), C,
                         (int(n_t[0]), int(n_t[-1])), method)


# -- counting ------------------------------------------------------------------

def counting_function(spectrum, r: float, sector=None) -> int:
    """Number of eigenvalues (with multiplicity) with |lambda| <= r in a sector.

    ``sector`` is ``"PositiveReal"`` (Re > 0), ``"NegativeReal"`` (Re < 0),
    a float alpha for |arg lambda| <= alpha, or None for the whole plane.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    vals = _values(spectrum)
    keep = np.abs(vals) <= r
    if sector == "PositiveReal":
        keep &= vals.real > 0
    elif sector == "NegativeReal":
        keep &= vals.real < 0
    elif sector is not None:
        keep &= np.abs(np.angle(vals)) <= float(sector)
    return int(np.count_nonzero(keep))


@dataclass(frozen=True)
class CountingRow:
    branch: str
    r: float
    count: int
    predicted: float
    ratio: float
    applicable: bool


@dataclass(frozen=True)
class CountingLawTable:
    rows: tuple
    passed: bool
    printed_form_note: str = (
        "printed law reads 1/sqrt(-p1 pi) sqrt(r) + o(1); implemented as "
        "sqrt(r)/(pi sqrt|p|) + O(1)")


def counting_law_check(branched: BranchedSpectrum, problem: TransmissionProblem, r_list,
                       band=(0.9, 1.1)) -> CountingLawTable:
    """Compare N(r) per branch with sqrt(r)/(pi sqrt|p|).

    Passes when the ratio at the largest r lies in ``band`` for every
    branch.  Raises :class:`SpectrumTooShort` when a branch does not reach
    the largest r.
    """
    if branched.case != "OppositeSigns":
        raise ValueError("counting law check needs opposite-sign stiffness")
    r_list = sorted(float(r) for r in r_list)
    stiff = branch_stiffness(problem)
    rows = []
    passed = True
    for name in ("Branch1", "Branch2"):
        entries = branched.branch(name)
        if not entries or max(abs(e.value) for e in entries) < r_list[-1] * (1 - 1e-12):
            raise SpectrumTooShort(f"{name} does not extend to r={r_list[-1]}")
        for r in r_list:
            N = sum(1 for e in entries if abs(e.value) <= r)
            pred = np.sqrt(r) / (np.pi * np.sqrt(stiff[name]))
            applicable = N > 0
            ratio = N / pred if applicable else float("nan")
            rows.append(CountingRow(name, r, N, float(pred), float(ratio), applicable))
        last = rows[-1]
        passed &= last.applicable and band[0] <= last.ratio <= band[1]
    return CountingLawTable(tuple(rows), bool(passed))


def sector_enclosure(spectrum, p_exponent: float = 0.5) -> float:
    """Smallest b with |Im lambda| <= b |lambda|^p over eigenvalues with |lambda| >= 1."""
    vals = _values(spectrum)
    if vals.size == 0:
        raise ValueError("spectrum is empty")
    vals = vals[np.abs(vals) >= 1]
    if vals.size == 0:
        return 0.0
    return float(np.max(np.abs(vals.imag) / np.abs(vals) ** p_exponent))


# -- spectra from the shooting engine ------------------------------------------

def _enough(records, problem, per_branch):
    vals = _values(records)
    if problem.opposite_signs:
        return (np.count_nonzero(vals.real > 0) >= per_branch + 1
                and np.count_nonzero(vals.real < 0) >= per_branch + 1)
    return len(vals) >= per_branch + 1


def _truncate(records, problem, per_branch):
    records = sorted(records, key=lambda r: (abs(r.value), r.value.real))
    if problem.opposite_signs:
        groups = {"Branch1": [], "Branch2": []}
        for rec in records:
            name = "Branch1" if rec.value.real >= 0 else "Branch2"
            groups[name].append(rec)
    else:
        groups = {"Single": records}
    out = []
    for name, group in groups.items():
        total = 0
        for rec in group:
            if total >= per_branch:
                break
            out.append(EigenvalueRecord(rec.value, rec.multiplicity, name, rec.source,
                                        rec.residual, rec.flags))
            total += rec.multiplicity
    out.sort(key=lambda r: (abs(r.value), r.value.real))
    return out


def shooting_spectrum(problem: TransmissionProblem, per_branch: int, complex_seeds=(),
                      steps: int = DEFAULT_STEPS, check_count: bool = True):
    """Eigenvalues of smallest modulus from the shooting engine.

    Real eigenvalues come from :func:`scan_real_eigenvalues` on a window
    that grows until each branch holds ``per_branch`` members.  Non-real
    eigenvalues are refined from ``complex_seeds`` (typically matrix
    eigenvalues).  With ``check_count`` the total is compared with an
    argument-principle count on a box around the window; a mismatch
    flags every returned record with ``"incomplete"``.
    """
    pmax = max(abs(problem.p1), abs(problem.p2))
    W = 1.3 * np.pi**2 * pmax * (per_branch + 2) ** 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpectrumWarning)
        while True:
            points = max(400, int(2 * np.sqrt(W) / 0.15))
            real = scan_real_eigenvalues(problem, (-W, W), points, steps)
            cplx = []
            for seed in complex_seeds:
                seed = complex(seed)
                if abs(seed) > W or abs(seed.imag) <= 1e-8 * max(1.0, abs(seed)):
                    continue
                try:
                    rec = refine_complex_root(problem, seed, steps)
                except NoConvergence:
                    continue
                if abs(rec.value.imag) <= 1e-8 * max(1.0, abs(rec.value)):
                    continue
                # a multiple real root attracts Muller only to ~sqrt(eps) accuracy
                if any(abs(rec.value - r.value) <= 1e-6 * max(1.0, abs(r.value)) for r in real):
                    continue
                if all(abs(rec.value - c.value) > 1e-8 * max(1.0, abs(c.value)) for c in cplx):
                    cplx.append(rec)
            records = real + cplx
            if _enough(records, problem, per_branch):
                break
            W *= 2
    out = _truncate(records, problem, per_branch)
    if check_count:
        top = 1.2 * max(abs(r.value) for r in out)
        height = max(2.0, 2.0 * np.sqrt(top))
        reals = np.sort([r.value.real for r in records if r.value.imag == 0])

        def gap(side):
            # a point between real roots, beyond the returned ones, inside the scan
            beyond = reals[reals * side > top]
            within = reals[(reals * side <= top) & (reals * side > 0)]
            last = side * np.max(np.abs(within)) if within.size else 0.0
            nxt = beyond[np.argmin(np.abs(beyond))] if beyond.size else side * W
            return 0.5 * (last + nxt)

        lo, hi = gap(-1), gap(1)
        inside = sum(r.multiplicity for r in records
                     if lo < r.value.real < hi and abs(r.value.imag) < height)
        try:
            total = count_eigenvalues_in_rectangle(
                problem, (complex(lo, -height), complex(hi, height)), 256, steps)
        except (BoundaryTooCloseToZero, PhaseInconsistent):
            total = None
        if total != inside:
            warnings.warn(f"argument principle counts {total} zeros, found {inside}",
                          SpectrumWarning, stacklevel=2)
            out = [EigenvalueRecord(r.value, r.multiplicity, r.branch, r.source, r.residual,
                                    r.flags + ("incomplete",)) for r in out]
    return out


# -- dual-engine comparison ----------------------------------------------------

@dataclass(frozen=True)
class Agreement:
    pairs: tuple
    max_scaled_gap: float

    def within(self, tol):
        return self.max_scaled_gap <= tol


def match_spectra(a, b, count: int | None = None) -> Agreement:
    """Optimal one-to-one matching of two spectra (multiplicity expanded).

    The first ``count`` values of ``a`` by modulus are matched against
    all of ``b``; the gap is |a - b| / max(1, |a|).
    """
    va = _values(a)
    va = va[np.argsort(np.abs(va), kind="stable")]
    if count is not None:
        va = va[:count]
    vb = _values(b)
    cost = np.abs(va[:, None] - vb[None, :]) / np.maximum(1.0, np.abs(va))[:, None]
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple((complex(va[i]), complex(vb[j]), float(cost[i, j])) for i, j in zip(rows, cols))
    return Agreement(pairs, float(max(p[2] for p in pairs)) if pairs else 0.0)
