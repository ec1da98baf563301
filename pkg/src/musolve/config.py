"""Run configuration: YAML sections domain / measure / nonlinearity / solver."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .assembly import N_CAP, DomainMesh
from .measure import Atom, DensityPiece, MeasureError, SpectralMeasure
from .minimax import KINDS, Nonlinearity, NonlinearityError

__all__ = [
    "ConfigError",
    "DomainConfig",
    "MeasureConfig",
    "NonlinearityConfig",
    "PIPELINES",
    "RunConfig",
    "SolverConfig",
    "parse_config",
    "parse_config_text",
    "render_config",
]

PIPELINES = ("spectrum", "certify", "window", "solve", "convergence")


class ConfigError(ValueError):
    """Bad configuration. `field` names the offending key path when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None, column: int | None = None):
        self.field = field
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}{where}")


@dataclass(frozen=True)
class DomainConfig:
    a: float
    b: float
    n_interior: int

    def mesh(self) -> DomainMesh:
        return DomainMesh(self.a, self.b, self.n_interior)


@dataclass(frozen=True)
class MeasureConfig:
    atoms: tuple[tuple[float, float], ...]
    s_bar: float
    density: tuple[tuple[tuple[float, float], tuple[float, ...]], ...] = ()
    quadrature_order: int = 4

    def measure(self) -> SpectralMeasure:
        return SpectralMeasure(
            atoms=tuple(Atom(s, c) for s, c in self.atoms),
            density=tuple(DensityPiece(lo, hi, coeffs) for (lo, hi), coeffs in self.density),
            s_bar=self.s_bar,
        )


@dataclass(frozen=True)
class NonlinearityConfig:
    kind: str
    lambda0: float
    lambda_bar: float
    table: tuple[tuple[float, float], ...] = ()

    def build(self) -> Nonlinearity:
        return Nonlinearity(self.kind, self.lambda0, self.lambda_bar, self.table)


@dataclass(frozen=True)
class SolverConfig:
    m: int = 10
    budget: int = 10_000
    tol: float = 1e-8
    seed: int = 0
    distinct_tol: float | None = None
    sphere_samples: int = 500
    ladder: tuple[int, ...] = (64, 128, 256, 512)


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig
    measure: MeasureConfig
    nonlinearity: NonlinearityConfig | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    pipeline: str = "spectrum"
    output: str = "out"

    def to_dict(self) -> dict:
        d = {
            "domain": asdict(self.domain),
            "measure": {
                "s_bar": self.measure.s_bar,
                "atoms": [{"s": s, "c": c} for s, c in self.measure.atoms],
                "density": [
                    {"interval": [lo, hi], "poly_coeffs": list(coeffs)}
                    for (lo, hi), coeffs in self.measure.density
                ],
                "quadrature_order": self.measure.quadrature_order,
            },
            "solver": {**asdict(self.solver), "ladder": list(self.solver.ladder)},
            "pipeline": self.pipeline,
            "output": self.output,
        }
        if self.nonlinearity is not None:
            nl = {
                "kind": self.nonlinearity.kind,
                "lambda0": self.nonlinearity.lambda0,
                "lambda_bar": self.nonlinearity.lambda_bar,
            }
            if self.nonlinearity.table:
                nl["table"] = [list(p) for p in self.nonlinearity.table]
            d["nonlinearity"] = nl
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON form (output dir excluded)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, pipeline: str | None = None, output: str | None = None) -> "RunConfig":
        d = self.to_dict()
        if pipeline is not None:
            d["pipeline"] = pipeline
        if output is not None:
            d["output"] = output
        return _build(d)


# ---------------------------------------------------------------------------
# validation helpers


def _check_keys(section: dict, allowed: set[str], path: str):
    if not isinstance(section, dict):
        raise ConfigError("expected a mapping", path)
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {extra}", path)


def _num(value: Any, path: str, positive: bool = False) -> float:
    if isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot (1e-8) as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", path) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", path)
    if positive and value <= 0:
        raise ConfigError("must be positive", path)
    return value


def _int(value: Any, path: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if lo is not None and value < lo:
        raise ConfigError(f"must be >= {lo}", path)
    if hi is not None and value > hi:
        raise ConfigError(f"must be <= {hi}", path)
    return value


def _req(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError("missing required key", f"{path}.{key}")
    return section[key]


def _build(raw: Any) -> RunConfig:
    _check_keys(raw, {"domain", "measure", "nonlinearity", "solver", "pipeline", "output"}, "<root>")

    dom = _req(raw, "domain", "<root>")
    _check_keys(dom, {"a", "b", "n_interior"}, "domain")
    a = _num(_req(dom, "a", "domain"), "domain.a")
    b = _num(_req(dom, "b", "domain"), "domain.b")
    if not a < b:
        raise ConfigError("need a < b", "domain")
    n = _int(_req(dom, "n_interior", "domain"), "domain.n_interior", 1, N_CAP)
    domain = DomainConfig(a, b, n)

    mea = _req(raw, "measure", "<root>")
    _check_keys(mea, {"atoms", "density", "s_bar", "quadrature_order"}, "measure")
    atoms = []
    seen = set()
    for i, rec in enumerate(mea.get("atoms") or []):
        path = f"measure.atoms[{i}]"
        _check_keys(rec, {"s", "c"}, path)
        s = _num(_req(rec, "s", path), f"{path}.s")
        c = _num(_req(rec, "c", path), f"{path}.c")
        if not 0.0 <= s <= 1.0:
            raise ConfigError("exponent outside [0,1]", f"{path}.s")
        if c == 0.0:
            raise ConfigError("zero-weight atom", f"{path}.c")
        if s in seen:
            raise ConfigError(f"duplicate atom exponent s={s}", f"{path}.s")
        seen.add(s)
        atoms.append((s, c))
    density = []
    for i, rec in enumerate(mea.get("density") or []):
        path = f"measure.density[{i}]"
        _check_keys(rec, {"interval", "poly_coeffs"}, path)
        iv = _req(rec, "interval", path)
        if not (isinstance(iv, list) and len(iv) == 2):
            raise ConfigError("interval must be [lo, hi]", f"{path}.interval")
        lo, hi = (_num(v, f"{path}.interval") for v in iv)
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError("interval must satisfy 0 <= lo < hi <= 1", f"{path}.interval")
        coeffs = _req(rec, "poly_coeffs", path)
        if not (isinstance(coeffs, list) and coeffs):
            raise ConfigError("poly_coeffs must be a non-empty list", f"{path}.poly_coeffs")
        density.append(((lo, hi), tuple(_num(v, f"{path}.poly_coeffs") for v in coeffs)))
    if not atoms and not density:
        raise ConfigError("measure needs at least one atom or density piece", "measure")
    s_bar = _num(_req(mea, "s_bar", "measure"), "measure.s_bar")
    if not 0.0 < s_bar <= 1.0:
        raise ConfigError("s_bar must lie in (0,1]", "measure.s_bar")
    qo = _int(mea.get("quadrature_order", 4), "measure.quadrature_order", 1)
    measure = MeasureConfig(tuple(atoms), s_bar, tuple(density), qo)
    try:
        measure.measure()
    except MeasureError as exc:
        raise ConfigError(str(exc), "measure") from exc

    nonlinearity = None
    if raw.get("nonlinearity") is not None:
        nlr = raw["nonlinearity"]
        _check_keys(nlr, {"kind", "lambda0", "lambda_bar", "table"}, "nonlinearity")
        kind = _req(nlr, "kind", "nonlinearity")
        if kind not in KINDS or kind == "custom":
            raise ConfigError(f"unknown kind {kind!r}", "nonlinearity.kind")
        lam_bar = _num(_req(nlr, "lambda_bar", "nonlinearity"), "nonlinearity.lambda_bar")
        table = tuple(
            (_num(p[0], "nonlinearity.table"), _num(p[1], "nonlinearity.table"))
            for p in (nlr.get("table") or [])
        )
        if kind == "table":
            lam0 = float(nlr.get("lambda0", 0.0) or 0.0)
        elif kind == "zero":
            lam0 = 0.0
        else:
            lam0 = _num(_req(nlr, "lambda0", "nonlinearity"), "nonlinearity.lambda0")
            if lam0 == 0.0:
                raise ConfigError("lambda0 = 0 is not supported", "nonlinearity.lambda0")
        nonlinearity = NonlinearityConfig(kind, lam0, lam_bar, table)
        try:
            built = nonlinearity.build()
        except NonlinearityError as exc:
            raise ConfigError(str(exc), "nonlinearity") from exc
        if kind == "table":
            nonlinearity = NonlinearityConfig(kind, built.lambda0, lam_bar, built.table)

    sol = raw.get("solver") or {}
    _check_keys(sol, {f.name for f in fields(SolverConfig)}, "solver")
    dflt = SolverConfig()
    dt = sol.get("distinct_tol", dflt.distinct_tol)
    ladder = sol.get("ladder", list(dflt.ladder))
    if not (isinstance(ladder, list) and ladder):
        raise ConfigError("ladder must be a non-empty list of mesh sizes", "solver.ladder")
    solver = SolverConfig(
        m=_int(sol.get("m", min(dflt.m, n)), "solver.m", 1, n),
        budget=_int(sol.get("budget", dflt.budget), "solver.budget", 1),
        tol=_num(sol.get("tol", dflt.tol), "solver.tol", positive=True),
        seed=_int(sol.get("seed", dflt.seed), "solver.seed", 0),
        distinct_tol=None if dt is None else _num(dt, "solver.distinct_tol", positive=True),
        sphere_samples=_int(sol.get("sphere_samples", dflt.sphere_samples), "solver.sphere_samples", 1),
        ladder=tuple(_int(v, "solver.ladder", 1, N_CAP) for v in ladder),
    )

    pipeline = raw.get("pipeline", "spectrum")
    if pipeline not in PIPELINES:
        raise ConfigError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}", "pipeline")
    if pipeline in ("window", "solve") and nonlinearity is None:
        raise ConfigError(f"pipeline {pipeline!r} needs a nonlinearity section", "nonlinearity")
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("must be a non-empty string", "output")
    return RunConfig(domain, measure, nonlinearity, solver, pipeline, output)


def parse_config_text(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigError(f"syntax error: {exc.problem}", line=line, column=col) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    if raw is None:
        raise ConfigError("empty configuration")
    return _build(raw)


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def render_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)
