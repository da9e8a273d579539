"""Command line interface: ``tspec <subcommand> --config <path>``.

Subcommands: solve, asymptotics, abel, verify, report.  Exit status is 0
when every check passes, 2 when any check fails and 1 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .abel import DEFAULT_ALPHA, DEFAULT_THETA, abel_convergence_study, mode_functions
from .analysis import (assign_branches, branch_predictions, counting_law_check, fit_asymptotics,
                       match_spectra, shooting_spectrum)
from .core import (COEFFICIENTS, FirstOrder, IntegralKernel, Multiplication, TransmissionProblem,
                   Zero)
from .discrete import assemble_operator, build_grid, discrete_spectrum
from .errors import ConfigError, TspecError
from .shooting import EigenvalueRecord, scan_real_eigenvalues
from .verify import (FAIL, PASS, VerificationReport, check_coercive, check_decoupled_oracle,
                     check_lagrange, check_resolvent, check_subordination)

CSV_HEADER = ["index", "branch", "re_lambda", "im_lambda", "multiplicity", "source", "residual"]
ENGINES = ("shooting", "matrix", "both")
CHECKS = ("lagrange", "subordination", "coercive", "resolvent", "decoupled_oracle")

SCHEMA = {
    "problem": set(COEFFICIENTS) | {"perturbation"},
    "discretization": {"n_per_interval"},
    "search": {"window", "count", "engine"},
    "abel": {"alpha", "theta", "t_values", "mode_count", "f_modes"},
    "verify": {"checks", "samples", "sample_counts", "n_list", "ray_angle", "moduli"},
    "output": {"directory", "formats"},
}
PERTURBATIONS = {
    "zero": set(),
    "mult_const": {"c"},
    "mult_cos": {"c", "omega"},
    "first_order_const": {"c"},
    "gauss_kernel": {"amplitude", "width"},
}


@dataclass
class RunConfig:
    problem: TransmissionProblem
    perturbation: dict
    n_per_interval: int = 400
    window: tuple | None = None
    count: int = 10
    engine: str = "shooting"
    alpha: float = DEFAULT_ALPHA
    theta: float = DEFAULT_THETA
    t_values: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    mode_count: int = 100
    f_modes: tuple = ((1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0))
    checks: tuple = CHECKS
    samples: int = 100
    sample_counts: tuple = (50, 200)
    n_list: tuple = (500, 1000)
    ray_angle: float = np.pi / 2
    moduli: tuple = (1e2, 1e3, 1e4)
    directory: str = "tspec-out"
    formats: tuple = ("csv", "json")
    seed: int = 0


def build_perturbation(entry):
    """Catalog entry {"kind": ..., parameters...} to a perturbation object."""
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError("perturbation must be an object with a 'kind'")
    kind = entry["kind"]
    if kind not in PERTURBATIONS:
        raise ConfigError(f"unknown perturbation kind {kind!r}")
    params = {k: v for k, v in entry.items() if k != "kind"}
    if set(params) != PERTURBATIONS[kind]:
        raise ConfigError(f"perturbation {kind!r} takes exactly {sorted(PERTURBATIONS[kind])}")
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"perturbation parameter {k!r} must be a number")
    if kind == "zero":
        return Zero()
    if kind == "mult_const":
        c = float(params["c"])
        return Multiplication(lambda x: np.full(np.shape(x), c))
    if kind == "mult_cos":
        c, omega = float(params["c"]), float(params["omega"])
        return Multiplication(lambda x: c * np.cos(omega * np.asarray(x)))
    if kind == "first_order_const":
        c = float(params["c"])
        return FirstOrder(lambda x: np.full(np.shape(x), c))
    amp, width = float(params["amplitude"]), float(params["width"])
    if width <= 0:
        raise ConfigError("gauss_kernel width must be positive")
    return IntegralKernel(lambda x, y: amp * np.exp(-((x - y) / width) ** 2 / 2))


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def parse_config(raw) -> RunConfig:
    _check_keys(raw, set(SCHEMA), "config")
    if "problem" not in raw:
        raise ConfigError("config needs a 'problem' block")
    for name, block in raw.items():
        _check_keys(block, SCHEMA[name], name)
    prob = raw["problem"]
    missing = [c for c in COEFFICIENTS if c not in prob]
    if missing:
        raise ConfigError(f"problem block misses {', '.join(missing)}")
    pert_entry = prob.get("perturbation", {"kind": "zero"})
    try:
        coeffs = {c: float(prob[c]) for c in COEFFICIENTS}
        problem = TransmissionProblem(**coeffs, perturbation=build_perturbation(pert_entry))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc
    cfg = RunConfig(problem, pert_entry)
    disc = raw.get("discretization", {})
    search = raw.get("search", {})
    abel = raw.get("abel", {})
    ver = raw.get("verify", {})
    out = raw.get("output", {})
    try:
        cfg.n_per_interval = int(disc.get("n_per_interval", cfg.n_per_interval))
        if "window" in search:
            lo, hi = (float(v) for v in search["window"])
            cfg.window = (lo, hi)
        cfg.count = int(search.get("count", cfg.count))
        cfg.engine = search.get("engine", cfg.engine)
        cfg.alpha = float(abel.get("alpha", cfg.alpha))
        cfg.theta = float(abel.get("theta", cfg.theta))
        cfg.t_values = tuple(float(t) for t in abel.get("t_values", cfg.t_values))
        cfg.mode_count = int(abel.get("mode_count", cfg.mode_count))
        cfg.f_modes = tuple((int(i), float(c)) for i, c in abel.get("f_modes", cfg.f_modes))
        cfg.checks = tuple(ver.get("checks", cfg.checks))
        cfg.samples = int(ver.get("samples", cfg.samples))
        cfg.sample_counts = tuple(int(s) for s in ver.get("sample_counts", cfg.sample_counts))
        cfg.n_list = tuple(int(n) for n in ver.get("n_list", cfg.n_list))
        cfg.ray_angle = float(ver.get("ray_angle", cfg.ray_angle))
        cfg.moduli = tuple(float(m) for m in ver.get("moduli", cfg.moduli))
        cfg.directory = str(out.get("directory", cfg.directory))
        cfg.formats = tuple(out.get("formats", cfg.formats))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value: {exc}") from exc
    if cfg.engine not in ENGINES:
        raise ConfigError(f"engine must be one of {', '.join(ENGINES)}")
    bad = set(cfg.checks) - set(CHECKS)
    if bad:
        raise ConfigError(f"unknown check(s): {', '.join(sorted(bad))}")
    if set(cfg.formats) - {"csv", "json"}:
        raise ConfigError("formats must be drawn from csv, json")
    if cfg.count < 1 or cfg.n_per_interval < 8:
        raise ConfigError("count must be positive and n_per_interval at least 8")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return parse_config(raw)


# -- output -----------------------------------------------------------------

def _fmt(x):
    return f"{float(x):.17g}"


def write_eigenvalue_csv(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, r in enumerate(records, start=1):
            w.writerow([i, r.branch, _fmt(r.value.real), _fmt(r.value.imag), r.multiplicity,
                        r.source, _fmt(r.residual)])


def read_eigenvalue_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ConfigError(f"{path} is not an eigenvalue CSV")
    out = []
    for row in rows[1:]:
        _, branch, re, im, mult, source, res = row
        out.append(EigenvalueRecord(complex(float(re), float(im)), int(mult), branch, source,
                                    float(res)))
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, reports):
    payload = [_jsonable(r.as_dict()) for r in reports]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# -- subcommands --------------------------------------------------------------

def _shooting_records(cfg):
    problem = cfg.problem
    if cfg.window is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return scan_real_eigenvalues(problem, cfg.window)
    # non-real eigenvalues are seeded from the matrix engine
    seeds = [r.value for r in _matrix_records(cfg) if r.value.imag != 0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return shooting_spectrum(problem, cfg.count, seeds)


def _matrix_records(cfg):
    grid = build_grid(max(cfg.n_per_interval, 4 * cfg.count))
    return discrete_spectrum(cfg.problem, grid, cfg.count)


def cmd_solve(cfg, out):
    reports = []
    records = []
    if cfg.engine in ("shooting", "both"):
        records += _shooting_records(cfg)
    if cfg.engine in ("matrix", "both"):
        records += _matrix_records(cfg)
    records.sort(key=lambda r: (r.source != "Shooting", abs(r.value), r.value.real, r.value.imag))
    if "csv" in cfg.formats:
        write_eigenvalue_csv(out / "eigenvalues.csv", records)
    if cfg.engine == "both":
        shoot = [r for r in records if r.source == "Shooting"]
        mat = [r for r in records if r.source == "Matrix"]
        count = min(10, sum(r.multiplicity for r in shoot))
        agree = match_spectra(shoot, mat, count)
        ok = agree.within(1e-3)
        reports.append(VerificationReport(
            "dual_engine", PASS if ok else FAIL, {"max_scaled_gap": agree.max_scaled_gap},
            {"count": count, "n_per_interval": cfg.n_per_interval}, [],
            None if ok else {"pairs": [list(p) for p in agree.pairs]}))
    return records, reports


def cmd_asymptotics(cfg, out, records=None):
    problem = cfg.problem
    if records is None and (cfg.engine == "matrix" or not problem.perturbation.is_local):
        per_branch = max(cfg.count, 30)
        total = 2 * per_branch if problem.opposite_signs else per_branch
        grid = build_grid(max(cfg.n_per_interval, 8 * total))
        records = discrete_spectrum(problem, grid, total)
    elif records is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            records = shooting_spectrum(problem, max(cfg.count, 30))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        branched = assign_branches([r for r in records if r.source != "Matrix"] or records, problem)
    reports = []
    preds = branch_predictions(problem)
    rows = []
    for name, pred in preds.items():
        entries = branched.branch(name)
        try:
            fit = fit_asymptotics(entries, pred)
        except TspecError as exc:
            reports.append(VerificationReport(f"fit_{name}", "NotApplicable", notes=[str(exc)]))
            continue
        ok = fit.relative_error <= 0.02
        rows.append([name, _fmt(fit.leading_coefficient), _fmt(pred), _fmt(fit.relative_error),
                     _fmt(fit.residual_bound_constant)])
        reports.append(VerificationReport(
            f"fit_{name}", PASS if ok else FAIL,
            {"leading_coefficient": fit.leading_coefficient, "predicted": pred,
             "relative_error": fit.relative_error,
             "residual_bound_constant": fit.residual_bound_constant},
            {"tail": list(fit.fit_window), "method": fit.method}, [],
            None if ok else {"branch": name}))
    if "csv" in cfg.formats and rows:
        with open(out / "fits.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["branch", "leading_coefficient", "predicted", "relative_error",
                        "residual_constant"])
            w.writerows(rows)
    if problem.opposite_signs:
        r_max = min(max(abs(e.value) for e in branched.branch(b)) for b in ("Branch1", "Branch2"))
        table = counting_law_check(branched, problem, [r_max / 4, r_max / 2, r_max])
        if "csv" in cfg.formats:
            with open(out / "counting.csv", "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["branch", "r", "count", "predicted", "ratio"])
                for row in table.rows:
                    w.writerow([row.branch, _fmt(row.r), row.count, _fmt(row.predicted),
                                _fmt(row.ratio)])
        reports.append(VerificationReport(
            "counting_law", PASS if table.passed else FAIL,
            {"rows": [[r.branch, r.r, r.count, r.predicted, r.ratio] for r in table.rows]},
            {"band": [0.9, 1.1]}, [table.printed_form_note],
            None if table.passed else {"r": r_max}))
    return reports


def cmd_abel(cfg, out):
    grid = build_grid(cfg.n_per_interval)
    op = assemble_operator(cfg.problem, grid)
    top = max(i for i, _ in cfg.f_modes)
    modes = mode_functions(op, max(top, 1))
    f = None
    for i, c in cfg.f_modes:
        term = modes[i - 1][1] * c
        f = term if f is None else f + term
    f = f * (1.0 / f.l2_norm())
    study = abel_convergence_study(cfg.problem, grid, f, cfg.mode_count, cfg.alpha, cfg.t_values,
                                   cfg.theta, operator=op)
    if "csv" in cfg.formats:
        with open(out / "abel.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "error"])
            for t, e in zip(study.t_values, study.errors):
                w.writerow([_fmt(t), _fmt(e)])
    idem = max(study.idempotence)
    ok = study.monotone and idem <= 1e-6
    return [VerificationReport(
        "abel", PASS if ok else FAIL,
        {"errors": dict(zip((str(t) for t in study.t_values), study.errors)),
         "max_idempotence_defect": idem, "monotone": study.monotone},
        {"alpha": cfg.alpha, "theta": cfg.theta, "mode_count": cfg.mode_count,
         "n_per_interval": cfg.n_per_interval, "f_modes": [list(m) for m in cfg.f_modes]},
        ["regularization mirrored into the sector around the negative real axis"],
        None if ok else {"errors": list(study.errors)})]


def cmd_verify(cfg, out):
    pr = cfg.problem
    reports = []
    for name in cfg.checks:
        if name == "lagrange":
            if not isinstance(pr.perturbation, Zero):
                reports.append(VerificationReport(name, "NotApplicable",
                                                  notes=["defined for the unperturbed operator"]))
            else:
                reports.append(check_lagrange(pr, cfg.samples, cfg.seed))
        elif name == "subordination":
            if not pr.perturbation.is_local:
                reports.append(VerificationReport(name, "NotApplicable",
                                                  notes=["needs a local perturbation"]))
            else:
                reports.append(check_subordination(pr, cfg.sample_counts, cfg.n_list, cfg.seed))
        elif name == "coercive":
            reports.append(check_coercive(pr, cfg.n_list[0], cfg.ray_angle, cfg.moduli, cfg.seed))
        elif name == "resolvent":
            reports.append(check_resolvent(pr, cfg.n_list[0], cfg.ray_angle, cfg.moduli, cfg.seed))
        elif name == "decoupled_oracle":
            reports.append(check_decoupled_oracle(pr))
    return reports


def _exit_code(reports):
    return 2 if any(r.status == FAIL for r in reports) else 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="tspec", description="Spectral analysis of two-interval "
                     "transmission eigenvalue problems.")
    parser.add_argument("--version", action="version", version=f"tspec {__version__}")
    parser.add_argument("subcommand", choices=["solve", "asymptotics", "abel", "verify", "report"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, default=0, help="seed for random samples")
    parser.add_argument("--eigenvalues", help="eigenvalue CSV to analyse (asymptotics only)")
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config)
        cfg.seed = args.seed
        out = Path(args.out or cfg.directory)
        out.mkdir(parents=True, exist_ok=True)
        ingested = read_eigenvalue_csv(args.eigenvalues) if args.eigenvalues else None
    except ConfigError as exc:
        print(f"tspec: error: {exc}", file=sys.stderr)
        return 1
    reports = []
    try:
        if args.subcommand == "solve":
            reports += cmd_solve(cfg, out)[1]
        elif args.subcommand == "asymptotics":
            reports += cmd_asymptotics(cfg, out, ingested)
        elif args.subcommand == "abel":
            reports += cmd_abel(cfg, out)
        elif args.subcommand == "verify":
            reports += cmd_verify(cfg, out)
        else:
            reports += cmd_solve(cfg, out)[1]
            reports += cmd_asymptotics(cfg, out)
            reports += cmd_abel(cfg, out)
            reports += cmd_verify(cfg, out)
    except TspecError as exc:
        print(f"tspec: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if reports and "json" in cfg.formats:
        name = "verify.json" if args.subcommand == "verify" else f"{args.subcommand}.json"
        write_json(out / name, reports)
    for r in reports:
        print(f"{r.name}: {r.status}")
    return _exit_code(reports)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
