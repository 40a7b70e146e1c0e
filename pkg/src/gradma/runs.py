"""End-to-end runs and result bundles.

A bundle is a directory holding

    metadata.json    config echo, versions, timings, status, final residual and b
    u.gmaf           sup-normalized potential
    F.gmaf           source actually solved for
    gtilde.gmaf      perturbed metric at the solution
    estimates.json   EstimateReport (when the solve converged)
    trace.txt        one "t newton_iter residual_sup min_eig b" line per Newton iteration

plus optional ``verification.json`` / ``uniqueness.json``. Every file is written
atomically.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, build_problem, config_to_dict, parse_config
from .fieldio import FieldFormatError, atomic_write, read_field, write_field
from .monitors import EstimateReport, estimate_report, uniqueness_probe
from .operator import ProblemData, assemble_gtilde, residual_array
from .solver import (
    ContinuationAborted,
    KernelDensityFailure,
    Solution,
    TraceRecord,
    continuity_solve,
    format_trace,
    kernel_density,
    normalize_sup,
)
from .torus import HermitianField, ScalarField, sample_field

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_CONFIG = 3

SUP_TOL = 1e-12


class BundleIntegrityError(RuntimeError):
    def __init__(self, path: Path | str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


class InadmissibleTruth(ValueError):
    def __init__(self, min_eig: float):
        super().__init__(f"manufactured potential is not admissible (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


@dataclass
class ResultBundle:
    metadata: dict
    u: ScalarField
    F: ScalarField
    gtilde: HermitianField | None
    trace: list[TraceRecord]
    report: EstimateReport | None = None
    extras: dict = field(default_factory=dict)
    path: Path | None = None

    @property
    def converged(self) -> bool:
        return self.metadata.get("status") == "converged"

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.converged else EXIT_ABORT


def _versions() -> dict:
    return {
        "gradma": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _json_bytes(obj: dict) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_bundle(bundle: ResultBundle, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "u.gmaf", bundle.u)
    write_field(out / "F.gmaf", bundle.F)
    if bundle.gtilde is not None:
        write_field(out / "gtilde.gmaf", bundle.gtilde)
    atomic_write(out / "trace.txt", format_trace(bundle.trace).encode("ascii"))
    if bundle.report is not None:
        atomic_write(out / "estimates.json", _json_bytes(bundle.report.to_dict()))
    for name, payload in bundle.extras.items():
        atomic_write(out / f"{name}.json", _json_bytes(payload))
    # metadata last: its presence marks a complete bundle
    atomic_write(out / "metadata.json", _json_bytes(bundle.metadata))
    bundle.path = out
    return out


def _solve_bundle(cfg: RunConfig, p: ProblemData, extras: dict | None = None) -> tuple[ResultBundle, Solution | None]:
    meta: dict = {"config": config_to_dict(cfg), "versions": _versions(), "timings": {}}
    start = time.perf_counter()
    try:
        sol = continuity_solve(p, cfg.solver)
    except ContinuationAborted as exc:
        meta["timings"]["solve"] = time.perf_counter() - start
        last = exc.last_state
        meta.update(
            status="aborted",
            message=str(exc),
            t_reached=last.t,
            residual=last.residual_norm,
            b=last.b,
            min_eig=last.min_eig,
        )
        op = assemble_gtilde(p, last.u)
        bundle = ResultBundle(meta, normalize_sup(last.u), p.F, op.gtilde, exc.trace, extras=extras or {})
        return bundle, None
    meta["timings"]["solve"] = time.perf_counter() - start
    op = assemble_gtilde(p, sol.u)
    meta.update(
        status="converged",
        t_reached=1.0,
        residual=sol.residual_norm,
        b=sol.b,
        min_eig=op.min_eig,
        newton_tol=cfg.solver.newton_tol,
        continuation_steps=len(sol.states) - 1,
    )
    start = time.perf_counter()
    report = estimate_report(p, sol) if {"estimates", "aeppli"} & set(cfg.monitors) else None
    if report is not None and "aeppli" not in cfg.monitors:
        report = EstimateReport(**{**report.to_dict(), "aeppli_defect": None})
    extras = dict(extras or {})
    if "kernel" in cfg.monitors:
        try:
            w = kernel_density(op, p.a)
            weighted = float(np.mean(w.re * residual_array(p, op, sol.b, 1.0)))
            extras["kernel"] = {
                "mean": float(np.mean(w.re)),
                "min": float(np.min(w.re)),
                "max": float(np.max(w.re)),
                "weighted_residual": weighted,
            }
        except KernelDensityFailure as exc:
            extras["kernel"] = {"error": str(exc), "defect": exc.defect}
    if "uniqueness" in cfg.monitors:
        probe = uniqueness_probe(p, cfg.solver, cfg.probe_trials, cfg.seed, primary=sol)
        extras["uniqueness"] = probe.to_dict()
    meta["timings"]["monitors"] = time.perf_counter() - start
    sol.report = report
    bundle = ResultBundle(meta, sol.u, p.F, op.gtilde, sol.trace, report, extras)
    return bundle, sol


def run_solve(cfg: RunConfig, out_dir: str | Path | None = None) -> ResultBundle:
    """Solve the configured problem, run the requested monitors and persist the bundle."""
    p = build_problem(cfg)
    bundle, _ = _solve_bundle(cfg, p)
    target = out_dir if out_dir is not None else cfg.out_dir
    if target is not None:
        write_bundle(bundle, target)
    return bundle


def manufactured_source(p: ProblemData, truth: ScalarField) -> ScalarField:
    """``F* = log det gt(u*) - log det g``; the pair ``(u* - sup u*, 0)`` then solves the equation."""
    op = assemble_gtilde(p, truth)
    if op.min_eig <= 0:
        raise InadmissibleTruth(op.min_eig)
    return op.log_det_ratio


def run_manufactured(cfg: RunConfig, out_dir: str | Path | None = None) -> ResultBundle:
    """Solve with a source built from ``cfg.truth`` and compare against it.

    The configured ``F`` is ignored. The verification record lands in
    ``bundle.extras["verification"]``.
    """
    if cfg.truth is None:
        raise ValueError("configuration has no 'truth' expression")
    base = build_problem(cfg)
    truth = sample_field(cfg.truth, base.grid)
    F = manufactured_source(base, truth)
    p = base.with_source(F)
    bundle, sol = _solve_bundle(cfg, p)
    expected = normalize_sup(truth)
    verification = {"converged": sol is not None}
    if sol is not None:
        verification.update(
            sup_error=float(np.max(np.abs(sol.u.re - expected.re))),
            b_error=abs(sol.b),
            residual=sol.residual_norm,
        )
    bundle.extras["verification"] = verification
    target = out_dir if out_dir is not None else cfg.out_dir
    if target is not None:
        write_bundle(bundle, target)
    return bundle


def run_probe(cfg: RunConfig, out_dir: str | Path | None = None) -> ResultBundle:
    """Like ``run_solve`` with the uniqueness monitor forced on."""
    monitors = tuple(cfg.monitors) + (() if "uniqueness" in cfg.monitors else ("uniqueness",))
    return run_solve(replace(cfg, monitors=monitors), out_dir)


# ---------------------------------------------------------------------------
# Reloading and reporting


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BundleIntegrityError(path, f"unreadable JSON: {exc}") from exc


def load_bundle(bundle_dir: str | Path, validate: bool = True) -> ResultBundle:
    """Reload a bundle; with ``validate`` every stored invariant is re-checked."""
    root = Path(bundle_dir)
    meta_path = root / "metadata.json"
    if not meta_path.exists():
        raise BundleIntegrityError(meta_path, "missing (incomplete bundle)")
    meta = _load_json(meta_path)
    try:
        u = read_field(root / "u.gmaf")
        F = read_field(root / "F.gmaf")
        gtilde = read_field(root / "gtilde.gmaf") if (root / "gtilde.gmaf").exists() else None
    except FieldFormatError as exc:
        raise BundleIntegrityError(exc.path, str(exc)) from exc
    for name, obj, kind in (("u.gmaf", u, ScalarField), ("F.gmaf", F, ScalarField)):
        if not isinstance(obj, kind) or not obj.real:
            raise BundleIntegrityError(root / name, "expected a real scalar field")
    if gtilde is not None and not isinstance(gtilde, HermitianField):
        raise BundleIntegrityError(root / "gtilde.gmaf", "expected a Hermitian field")
    trace_path = root / "trace.txt"
    try:
        trace = [TraceRecord.parse(line) for line in trace_path.read_text("ascii").splitlines() if line.strip()]
    except (OSError, ValueError) as exc:
        raise BundleIntegrityError(trace_path, f"unreadable trace: {exc}") from exc
    report = None
    if (root / "estimates.json").exists():
        try:
            report = EstimateReport.from_dict(_load_json(root / "estimates.json"))
        except TypeError as exc:
            raise BundleIntegrityError(root / "estimates.json", str(exc)) from exc
    extras = {
        path.stem: _load_json(path)
        for path in sorted(root.glob("*.json"))
        if path.name not in ("metadata.json", "estimates.json")
    }
    bundle = ResultBundle(meta, u, F, gtilde, trace, report, extras, root)
    if validate:
        validate_bundle(bundle)
    return bundle


def validate_bundle(bundle: ResultBundle) -> None:
    root = bundle.path or Path("<bundle>")
    meta = bundle.metadata
    try:
        cfg = parse_config(json.dumps(meta["config"]), strict=True)
    except (KeyError, ValueError) as exc:
        raise BundleIntegrityError(root / "metadata.json", f"config echo invalid: {exc}") from exc
    if bundle.u.grid != cfg.grid or bundle.F.grid != cfg.grid:
        raise BundleIntegrityError(root / "u.gmaf", "grid does not match the config")
    sup = float(np.max(bundle.u.re))
    if abs(sup) > SUP_TOL:
        raise BundleIntegrityError(root / "u.gmaf", f"sup u = {sup:.3e}, expected 0")
    p = build_problem(cfg, F=bundle.F)
    op = assemble_gtilde(p, bundle.u)
    if bundle.gtilde is not None:
        drift = float(np.max(np.abs(op.gtilde.entries - bundle.gtilde.entries)))
        if drift > 1e-10:
            raise BundleIntegrityError(root / "gtilde.gmaf", f"does not match u (drift {drift:.3e})")
    if meta.get("status") == "converged":
        if op.min_eig <= 0:
            raise BundleIntegrityError(root / "u.gmaf", "perturbed metric not positive definite")
        residual = float(np.max(np.abs(residual_array(p, op, meta["b"], 1.0))))
        if residual > cfg.solver.newton_tol:
            raise BundleIntegrityError(
                root / "u.gmaf", f"residual {residual:.3e} exceeds tolerance {cfg.solver.newton_tol:.1e}"
            )
    if not bundle.trace:
        raise BundleIntegrityError(root / "trace.txt", "empty trace")


REPORT_MONITORS = ("sup_abs_u", "grad_sup_sq", "lambda1_max", "c2_ratio", "b_bound_slack", "aeppli_defect")


def run_report(bundle_dir: str | Path) -> tuple[str, str]:
    """Render a reloaded bundle as text plus CSV plot data (one row per trace line)."""
    bundle = load_bundle(bundle_dir)
    meta = bundle.metadata
    cfg = meta["config"]
    lines = [
        f"bundle: {Path(bundle_dir).name}",
        f"status: {meta.get('status')}",
        f"dimension n = {cfg['n']}, resolution {' x '.join(str(r) for r in cfg['res'])}",
        f"b = {meta.get('b'):.12g}",
        f"final residual = {meta.get('residual'):.3e}",
        f"min eigenvalue of gtilde = {meta.get('min_eig'):.6g}",
        f"newton iterations = {len(bundle.trace)} trace lines, t reached {meta.get('t_reached')}",
    ]
    if bundle.report is not None:
        lines.append("monitors:")
        for key, value in bundle.report.to_dict().items():
            lines.append(f"  {key} = {'n/a' if value is None else format(value, '.6g')}")
    for name, payload in sorted(bundle.extras.items()):
        lines.append(f"{name}:")
        for key, value in sorted(payload.items()):
            if isinstance(value, float):
                value = format(value, ".6g")
            lines.append(f"  {key} = {value}")
    text = "\n".join(lines) + "\n"

    monitor_values = bundle.report.to_dict() if bundle.report is not None else {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "newton_iter", "residual_sup", "min_eig", "b", *REPORT_MONITORS])
    tail = ["" if monitor_values.get(k) is None else repr(monitor_values[k]) for k in REPORT_MONITORS]
    for rec in bundle.trace:
        writer.writerow([repr(rec.t), rec.newton_iter, repr(rec.residual_sup), repr(rec.min_eig), repr(rec.b), *tail])
    return text, buf.getvalue()
