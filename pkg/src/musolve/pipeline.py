"""Pipeline orchestration and run records."""
from __future__ import annotations

import datetime as _dt
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError
from scipy.special import gamma as gamma_fn

from . import __version__
from .assembly import (
    NORMALIZATION_ID,
    AssemblyError,
    CertificateError,
    DomainMesh,
    StiffnessFamily,
    assemble_operator,
    domination_constant,
)
from .config import RunConfig
from .io import sha256_file, write_columns, write_csv, write_json, write_matrix
from .measure import MeasureError, to_atoms, validate_hypotheses
from .minimax import NonlinearityError, find_pairs, lambda_window
from .spectral import (
    SpectralError,
    coercivity_certificate,
    rayleigh_verify,
    solve_spectrum,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NUMERICAL = 4

DOMINATION_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


class PipelineError(RuntimeError):
    def __init__(self, module: str, message: str, exit_code: int):
        self.module = module
        self.exit_code = exit_code
        super().__init__(f"[{module}] {message}")


@dataclass
class RunRecord:
    config: RunConfig
    out_dir: Path
    started: str
    finished: str | None = None
    files: dict[str, str] = field(default_factory=dict)  # relative path -> sha256
    status: str = "running"
    exit_code: int = EXIT_OK
    error: str | None = None
    results: dict = field(default_factory=dict, repr=False)
    workers: int = 1

    @property
    def pipeline(self) -> str:
        return self.config.pipeline

    def as_dict(self) -> dict:
        return {
            "artifact_version": __version__,
            "pipeline": self.pipeline,
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "normalization": NORMALIZATION_ID,
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "exit_code": self.exit_code,
            "error": self.error,
            "workers": self.workers,
            "manifest": dict(sorted(self.files.items())),
        }

    def add(self, path: Path):
        self.files[str(path.relative_to(self.out_dir))] = sha256_file(path)

    def verify_manifest(self) -> bool:
        return all(sha256_file(self.out_dir / name) == digest for name, digest in self.files.items())


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _stage(module: str):
    """Map module exceptions to pipeline errors with exit codes."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, et, exc, tb):
            if exc is None or isinstance(exc, PipelineError):
                return False
            if isinstance(exc, (MeasureError, CertificateError)):
                raise PipelineError(module, str(exc), EXIT_HYPOTHESIS) from exc
            if isinstance(exc, (SpectralError, LinAlgError, ArithmeticError, np.linalg.LinAlgError)):
                raise PipelineError(module, str(exc), EXIT_NUMERICAL) from exc
            if isinstance(exc, (AssemblyError, NonlinearityError, ValueError)):
                raise PipelineError(module, str(exc), EXIT_CONFIG) from exc
            return False

    return _Ctx()


# ---------------------------------------------------------------------------
# stages


def _measure_stage(cfg: RunConfig, rec: RunRecord, gate: bool = True):
    with _stage("measure"):
        mu = cfg.measure.measure()
        report = validate_hypotheses(mu)
        atoms = to_atoms(mu, cfg.measure.quadrature_order)
    rec.add(write_json(rec.out_dir / "measure_report.json", report.as_dict()))
    rec.results["measure_report"] = report
    if gate and not report.ok:
        raise PipelineError("measure", f"structural hypotheses fail: {report.as_dict()}", EXIT_HYPOTHESIS)
    return mu, report, atoms


def _assemble(cfg: RunConfig, atoms, mesh: DomainMesh | None = None):
    with _stage("assembly"):
        mesh = mesh or cfg.domain.mesh()
        return assemble_operator(mesh, atoms, cfg.measure.s_bar)


def _spectrum_stage(cfg: RunConfig, rec: RunRecord, op):
    with _stage("spectral"):
        cert = coercivity_certificate(op)
        spec = solve_spectrum(op, cfg.solver.m)
        checks = [rayleigh_verify(spec, op, k) for k in range(spec.m)]
    out = rec.out_dir
    rows = [(k + 1, lam, res, cid) for k, (lam, res, cid) in enumerate(zip(spec.eigenvalues, spec.residuals, spec.clusters))]
    rec.add(write_csv(out / "spectrum.csv", ("k", "lambda", "residual", "multiplicity_cluster_id"), rows))
    rec.add(write_matrix(out / "eigenvectors.mat", spec.eigenvectors))
    rec.add(
        write_csv(
            out / "rayleigh.csv",
            ("k", "minimum", "deviation", "vector_deviation"),
            [(c.k, c.minimum, c.deviation, c.vector_deviation) for c in checks],
        )
    )
    rec.results.update(spectrum=spec, rayleigh=checks, certificate=cert)
    if spec.eigenvalues[0] <= 0:
        log.warning("lambda_1 = %.6g is not positive (certificate c0_gamma=%.4g)", spec.eigenvalues[0], cert.c0_gamma)
    return spec, cert


def _certificate_payload(cert, report) -> dict:
    lo, hi = cert.bounds
    return {
        "gamma": report.gamma,
        "c0_gamma": cert.c0_gamma,
        "passes": cert.passes,
        "equivalence_bounds": [lo, hi],
        "s_sharp": report.s_sharp,
        "N_gt_2_s_sharp": report.dimension_condition,
    }


def _run_spectrum(cfg, rec):
    _, report, atoms = _measure_stage(cfg, rec)
    op = _assemble(cfg, atoms)
    spec, cert = _spectrum_stage(cfg, rec, op)
    rec.add(write_json(rec.out_dir / "certificate.json", _certificate_payload(cert, report)))
    return op, spec


def _run_certify(cfg, rec):
    _, report, atoms = _measure_stage(cfg, rec)
    op = _assemble(cfg, atoms)
    with _stage("spectral"):
        cert = coercivity_certificate(op)
    with _stage("assembly"):
        fam = StiffnessFamily(op.mesh)
        exps = sorted(set(DOMINATION_GRID) | {s for s, _ in atoms})
        dom = [(s1, s2, domination_constant(fam[s1], fam[s2])) for s1, s2 in itertools.combinations_with_replacement(exps, 2)]
    rec.add(write_json(rec.out_dir / "certificate.json", _certificate_payload(cert, report)))
    rec.add(write_csv(rec.out_dir / "domination.csv", ("s1", "s2", "c"), dom))
    rec.results.update(certificate=cert, domination=dom)
    if not cert.passes:
        raise PipelineError("spectral", f"coercivity certificate fails: c0_gamma={cert.c0_gamma:.6g} >= 1", EXIT_HYPOTHESIS)


def _run_window(cfg, rec):
    op, spec = _run_spectrum(cfg, rec)
    nl = cfg.nonlinearity.build()
    with _stage("minimax"):
        window = lambda_window(spec, nl)
    rec.add(write_json(rec.out_dir / "window.json", window.as_dict()))
    rec.results["window"] = window
    return op, spec, nl, window


def _run_solve(cfg, rec):
    op, spec, nl, window = _run_window(cfg, rec)
    cert = rec.results["certificate"]
    if not cert.passes or spec.eigenvalues[0] <= 0:
        raise PipelineError("spectral", "coercivity certificate fails; the energy is not well posed", EXIT_HYPOTHESIS)
    if window.resonance:
        log.warning("resonant lambda_bar: multiplicity prediction does not apply")
    with _stage("minimax"):
        report = find_pairs(
            op, nl, spec, window,
            budget=cfg.solver.budget, tol=cfg.solver.tol, seed=cfg.solver.seed,
            distinct_tol=cfg.solver.distinct_tol,
        )
    out = rec.out_dir
    x = op.mesh.nodes
    for sol in report.solutions:
        name = f"solution_{sol.pair_id}_{'plus' if sol.sign > 0 else 'minus'}.csv"
        rec.add(write_csv(out / name, ("x", "u"), zip(x, sol.u)))
    summary = report.summary()
    for entry, sol in zip(summary["solutions"], report.solutions):
        entry["norm_M"] = float(math.sqrt(sol.u @ op.M @ sol.u))
    summary["nonlinearity"] = nl.as_dict()
    summary["nonlinearity_hypotheses"] = nl.hypotheses()
    summary["lambda_1"] = float(spec.eigenvalues[0])
    summary["c0_gamma"] = cert.c0_gamma
    rec.add(write_json(out / "summary.json", summary))
    rec.results["minimax"] = report


def getoor_solution(x: np.ndarray, a: float, b: float, s: float, weight: float = 1.0) -> np.ndarray:
    """Solution of w (-Delta)^s u = 1 on (a, b), u = 0 outside: (R^2 - (x-c)^2)_+^s / (w Gamma(2s+1))."""
    R, c = 0.5 * (b - a), 0.5 * (a + b)
    return np.maximum(R * R - (x - c) ** 2, 0.0) ** s / (weight * gamma_fn(2 * s + 1))


def _run_convergence(cfg, rec):
    mu, _, atoms = _measure_stage(cfg, rec)
    single = mu.is_atomic and len(mu.atoms) == 1 and mu.atoms[0].c > 0 and mu.atoms[0].s > 0
    rows = []
    with _stage("convergence"):
        if single:
            s, w = mu.atoms[0].s, mu.atoms[0].c
            kind = "getoor_l2"
            for n in cfg.solver.ladder:
                mesh = DomainMesh(cfg.domain.a, cfg.domain.b, n)
                op = assemble_operator(mesh, atoms, cfg.measure.s_bar)
                u = np.linalg.solve(op.K, op.M @ np.ones(n))
                e = u - getoor_solution(mesh.nodes, mesh.a, mesh.b, s, w)
                rows.append((n, mesh.h, math.sqrt(e @ op.M @ e)))
        else:
            kind = "lambda1_self"
            ref_mesh = DomainMesh(cfg.domain.a, cfg.domain.b, 2 * max(cfg.solver.ladder) + 1)
            ref = solve_spectrum(assemble_operator(ref_mesh, atoms, cfg.measure.s_bar), 1).eigenvalues[0]
            for n in cfg.solver.ladder:
                mesh = DomainMesh(cfg.domain.a, cfg.domain.b, n)
                lam = solve_spectrum(assemble_operator(mesh, atoms, cfg.measure.s_bar), 1).eigenvalues[0]
                rows.append((n, mesh.h, abs(lam - ref) / abs(ref)))
    table = []
    for i, (n, h, err) in enumerate(rows):
        rate = None
        if i > 0 and err > 0:
            rate = math.log(rows[i - 1][2] / err) / math.log(rows[i - 1][1] / h)
        table.append((n, h, err, rate))
    rec.add(write_csv(rec.out_dir / "convergence.csv", ("n", "h", "error", "rate"), table))
    rec.results["convergence"] = {"kind": kind, "rows": rows}


_RUNNERS = {
    "spectrum": _run_spectrum,
    "certify": _run_certify,
    "window": _run_window,
    "solve": _run_solve,
    "convergence": _run_convergence,
}


def emit_plotdata(rec: RunRecord) -> list[Path]:
    """Two-column (x, y) files for whatever the run produced."""
    pdir = rec.out_dir / f"plotdata_{rec.pipeline}_{rec.config.digest()[:12]}"
    out = []
    spec = rec.results.get("spectrum")
    if spec is not None:
        out.append(write_columns(pdir / "spectrum.dat", range(1, spec.m + 1), spec.eigenvalues))
    conv = rec.results.get("convergence")
    if conv is not None:
        out.append(write_columns(pdir / "error_vs_h.dat", [r[1] for r in conv["rows"]], [r[2] for r in conv["rows"]]))
    mm = rec.results.get("minimax")
    if mm is not None:
        x = rec.config.domain.mesh().all_nodes
        for sol in mm.solutions:
            name = f"solution_{sol.pair_id}_{'plus' if sol.sign > 0 else 'minus'}.dat"
            out.append(write_columns(pdir / name, x, np.concatenate([[0.0], sol.u, [0.0]])))
    for p in out:
        rec.add(p)
    return out


def run_pipeline(config: RunConfig, out_dir: str | Path | None = None) -> RunRecord:
    """Execute config.pipeline, write outputs and run_record.json into out_dir.

    Raises PipelineError after writing a partial record if a stage fails.
    """
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(config=config, out_dir=out, started=_now())
    try:
        _RUNNERS[config.pipeline](config, rec)
        emit_plotdata(rec)
        rec.status = "ok"
    except PipelineError as exc:
        rec.status = "failed"
        rec.exit_code = exc.exit_code
        rec.error = str(exc)
        raise
    finally:
        rec.finished = _now()
        write_json(out / "run_record.json", rec.as_dict())
    return rec
