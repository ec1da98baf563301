"""Energy functional of the asymptotically linear problem and a deflated search
for its nontrivial +/- solution pairs.

Discrete energy on interior nodal values u:

    J(u) = 1/2 u^T K u - lambda_bar/2 u^T M u - sum_i m_i F(u_i)

with lumped masses m_i, so the gradient K u - lambda_bar M u - m * f(u) is the
exact derivative of J.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh, solve
from scipy.optimize import minimize

from .assembly import AssembledOperator
from .spectral import SpectralError, Spectrum

__all__ = [
    "EnergyBand",
    "GrowthCheck",
    "Nonlinearity",
    "NonlinearityError",
    "MinimaxReport",
    "Solution",
    "WindowReport",
    "check_growth",
    "energy",
    "energy_band",
    "find_pairs",
    "gradient",
    "hessian",
    "lambda_window",
]

log = logging.getLogger(__name__)

KINDS = ("rational_decay", "gaussian_decay", "table", "zero", "custom")


class NonlinearityError(ValueError):
    pass


@dataclass(frozen=True)
class Nonlinearity:
    kind: str
    lambda0: float
    lambda_bar: float
    table: tuple[tuple[float, float], ...] = ()
    _f: Callable | None = field(default=None, repr=False, compare=False)
    _F: Callable | None = field(default=None, repr=False, compare=False)
    _df: Callable | None = field(default=None, repr=False, compare=False)
    _odd: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NonlinearityError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        if not math.isfinite(self.lambda_bar):
            raise NonlinearityError("lambda_bar must be finite")
        if self.kind == "table":
            self._build_table()
        elif self.kind == "zero":
            object.__setattr__(self, "lambda0", 0.0)
        elif self.kind != "custom":
            if not math.isfinite(self.lambda0) or self.lambda0 == 0.0:
                raise NonlinearityError("lambda0 must be finite and nonzero")

    def _build_table(self):
        pts = sorted((float(t), float(v)) for t, v in self.table)
        if len(pts) < 3:
            raise NonlinearityError("table needs at least three (t, f) points")
        t = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        if t[0] != 0.0 or v[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise NonlinearityError("table must start at (0, 0) with increasing t >= 0")
        spline = CubicSpline(np.concatenate([-t[:0:-1], t]), np.concatenate([-v[:0:-1], v]))
        lam0 = float(spline(0.0, 1))
        if lam0 == 0.0:
            raise NonlinearityError("table has zero slope at the origin (lambda0 = 0)")
        object.__setattr__(self, "lambda0", lam0)
        object.__setattr__(self, "table", tuple(pts))
        anti = spline.antiderivative()
        t_max, f_max = t[-1], v[-1]
        F_max = float(anti(t_max) - anti(0.0))

        def f(x):
            a = np.abs(x)
            inside = np.where(a <= t_max, spline(np.minimum(a, t_max)), f_max)
            return np.sign(x) * inside

        def F(x):
            a = np.abs(x)
            inside = anti(np.minimum(a, t_max)) - anti(0.0)
            return np.where(a <= t_max, inside, F_max + f_max * (a - t_max))

        def df(x):
            a = np.abs(x)
            return np.where(a <= t_max, spline(np.minimum(a, t_max), 1), 0.0)

        object.__setattr__(self, "_f", f)
        object.__setattr__(self, "_F", F)
        object.__setattr__(self, "_df", df)

    @classmethod
    def custom(cls, f, F, df, lambda0: float, lambda_bar: float, odd: bool = True) -> "Nonlinearity":
        return cls("custom", float(lambda0), float(lambda_bar), _f=f, _F=F, _df=df, _odd=odd)

    @classmethod
    def zero(cls, lambda_bar: float) -> "Nonlinearity":
        return cls("zero", 0.0, float(lambda_bar))

    @property
    def odd(self) -> bool:
        return self._odd if self.kind == "custom" else True

    def f(self, t):
        t = np.asarray(t, dtype=float)
        lam = self.lambda0
        if self.kind == "rational_decay":
            return lam * t / (1.0 + t * t)
        if self.kind == "gaussian_decay":
            return lam * t * np.exp(-t * t)
        if self.kind == "zero":
            return np.zeros_like(t)
        return np.asarray(self._f(t), dtype=float)

    def F(self, t):
        """Primitive int_0^t f, even for the built-in kinds."""
        t = np.asarray(t, dtype=float)
        lam = self.lambda0
        if self.kind == "rational_decay":
            return 0.5 * lam * np.log1p(t * t)
        if self.kind == "gaussian_decay":
            return -0.5 * lam * np.expm1(-t * t)
        if self.kind == "zero":
            return np.zeros_like(t)
        return np.asarray(self._F(t), dtype=float)

    def df(self, t):
        t = np.asarray(t, dtype=float)
        lam = self.lambda0
        if self.kind == "rational_decay":
            t2 = t * t
            return lam * (1.0 - t2) / (1.0 + t2) ** 2
        if self.kind == "gaussian_decay":
            t2 = t * t
            return lam * (1.0 - 2.0 * t2) * np.exp(-t2)
        if self.kind == "zero":
            return np.zeros_like(t)
        return np.asarray(self._df(t), dtype=float)

    def hypotheses(self, tol: float = 1e-6, t_large: float = 1e6, t_small: float = 1e-6) -> dict:
        """Empirical flags for boundedness, decay of f/t at infinity and slope lambda0 at 0."""
        taus = np.logspace(-3, 6, 91)
        sups = [float(np.max(np.abs(self.f(np.linspace(-tau, tau, 201))))) for tau in taus]
        big = np.array([t_large, -t_large, 10 * t_large, -10 * t_large])
        small = np.array([t_small, -t_small, 0.1 * t_small, -0.1 * t_small])
        probe = np.linspace(0.01, 50.0, 400)
        return {
            "bounded_on_compacts": bool(all(math.isfinite(v) for v in sups)),
            "sublinear_at_infinity": bool(np.all(np.abs(self.f(big) / big) <= tol)),
            "slope_at_origin": bool(np.all(np.abs(self.f(small) / small - self.lambda0) <= tol * max(1.0, abs(self.lambda0)))),
            "odd": bool(np.array_equal(self.f(-probe), -self.f(probe))),
            "lambda0_nonzero": self.lambda0 != 0.0,
        }

    def as_dict(self) -> dict:
        d = {"kind": self.kind, "lambda0": self.lambda0, "lambda_bar": self.lambda_bar}
        if self.kind == "table":
            d["table"] = [list(p) for p in self.table]
        return d


# ---------------------------------------------------------------------------
# energy and derivatives


def energy(op: AssembledOperator, nl: Nonlinearity, u: np.ndarray) -> float:
    K = op.K
    return float(0.5 * u @ K @ u - 0.5 * nl.lambda_bar * (u @ op.M @ u) - op.M_lumped @ nl.F(u))


def gradient(op: AssembledOperator, nl: Nonlinearity, u: np.ndarray) -> np.ndarray:
    return op.K @ u - nl.lambda_bar * (op.M @ u) - op.M_lumped * nl.f(u)


def hessian(op: AssembledOperator, nl: Nonlinearity, u: np.ndarray) -> np.ndarray:
    H = op.K - nl.lambda_bar * op.M
    H[np.diag_indices_from(H)] -= op.M_lumped * nl.df(u)
    return H


# ---------------------------------------------------------------------------
# growth bound |f(t)| <= eps |t| + a_eps


@dataclass(frozen=True)
class GrowthCheck:
    a_epsilon: float
    decay_violation: bool
    t_argmax: float


def check_growth(nl: Nonlinearity, epsilon: float, t_max: float = 1e6, points: int = 4001) -> GrowthCheck:
    """Grid sup of max(0, |f(t)| - eps |t|) over log-spaced |t| <= t_max.

    If the excess is still growing over the last decade of the grid, f is not
    dominated by eps |t| and f(t)/t does not decay.
    """
    if epsilon <= 0:
        raise NonlinearityError("epsilon must be positive")
    t = np.logspace(-8, math.log10(t_max), points)
    t = np.concatenate([-t[::-1], [0.0], t])
    excess = np.abs(nl.f(t)) - epsilon * np.abs(t)
    j = int(np.argmax(excess))
    a_eps = max(0.0, float(excess[j]))
    decade = np.abs(t) >= t_max / 10
    tail = excess[decade & (t > 0)]
    growing = a_eps > 0 and abs(t[j]) >= t_max / 10 and bool(np.all(np.diff(tail) > 0))
    return GrowthCheck(a_epsilon=a_eps, decay_violation=growing, t_argmax=float(t[j]))


# ---------------------------------------------------------------------------
# eigenvalue window


@dataclass(frozen=True)
class WindowReport:
    h: int | None  # 1-based
    k: int | None
    variant: str  # "standard" | "mirrored"
    lower: float
    upper: float
    margin_low: float | None
    margin_high: float | None
    resonance: bool
    resonance_distance: float

    @property
    def present(self) -> bool:
        return self.h is not None

    @property
    def pairs_predicted(self) -> int:
        return self.k - self.h + 1 if self.present else 0

    def as_dict(self) -> dict:
        return {
            "h": self.h,
            "k": self.k,
            "variant": self.variant,
            "lower": self.lower,
            "upper": self.upper,
            "margin_low": self.margin_low,
            "margin_high": self.margin_high,
            "lambda_bar_in_spectrum": self.resonance,
            "resonance_distance": self.resonance_distance,
            "pairs_predicted": self.pairs_predicted,
        }


def lambda_window(spectrum: Spectrum | Sequence[float], nl: Nonlinearity, rtol: float = 1e-6) -> WindowReport:
    """Locate the maximal index range [h, k] of eigenvalues inside the open window.

    lambda0 < 0: (lambda0 + lambda_bar, lambda_bar)   -- standard
    lambda0 > 0: (lambda_bar, lambda0 + lambda_bar)   -- mirrored
    """
    vals = np.asarray(spectrum.eigenvalues if isinstance(spectrum, Spectrum) else spectrum, dtype=float)
    lb, l0 = nl.lambda_bar, nl.lambda0
    if l0 == 0.0:
        raise NonlinearityError("lambda0 = 0 has no eigenvalue window")
    if l0 < 0:
        variant, lower, upper = "standard", l0 + lb, lb
    else:
        variant, lower, upper = "mirrored", lb, l0 + lb
    if vals[-1] < upper:
        raise SpectralError(
            f"computed spectrum ends at {vals[-1]:.6g} below the window edge {upper:.6g}; request more eigenpairs"
        )
    inside = np.flatnonzero((vals > lower) & (vals < upper))
    dist = float(np.min(np.abs(vals - lb)))
    resonance = dist <= rtol * abs(lb)
    if resonance:
        log.warning("lambda_bar=%.6g is within %.2e of an eigenvalue (resonant case)", lb, dist)
    if inside.size == 0:
        return WindowReport(None, None, variant, lower, upper, None, None, resonance, dist)
    h, k = int(inside[0]) + 1, int(inside[-1]) + 1
    return WindowReport(
        h, k, variant, lower, upper,
        float(vals[h - 1] - lower), float(upper - vals[k - 1]),
        resonance, dist,
    )


# ---------------------------------------------------------------------------
# geometry of the linking sets: c_0 on a small sphere, c_inf on a subspace


@dataclass(frozen=True)
class EnergyBand:
    rho: float
    c0: float
    c_inf: float
    quad_coeff: float  # k'' in k'' rho^2 - k' rho^3
    cubic_coeff: float  # k'
    sphere_extreme: float  # sampled min (standard) / max (mirrored) of J on the small sphere
    subspace_extreme: float  # best value of J found on the linking subspace
    samples: int

    def contains(self, value: float, tol: float) -> bool:
        return self.c0 - tol <= value <= self.c_inf + tol

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "rho", "c0", "c_inf", "quad_coeff", "cubic_coeff",
            "sphere_extreme", "subspace_extreme", "samples")}


def _cubic_remainder(nl: Nonlinearity, slope: float, sense: int) -> float:
    """Smallest k with sense*(F(t) - slope t^2/2) <= k |t|^3 on a wide grid."""
    t = np.logspace(-4, 4, 4001)
    t = np.concatenate([-t[::-1], t])
    r = sense * (nl.F(t) - 0.5 * slope * t * t) / np.abs(t) ** 3
    return max(float(np.max(r)), 1e-300)


def _sup_norm_constant(K: np.ndarray) -> float:
    """max_i |u_i| <= C ||u||_K with C^2 = max_i (K^-1)_ii."""
    Kinv = np.linalg.inv(K)
    return float(np.sqrt(np.max(np.diag(Kinv))))


def _extreme_ratio(A: np.ndarray, K: np.ndarray, B: np.ndarray, which: str) -> float:
    """min or max of u^T A u / u^T K u over u in range(B) (B has orthonormal-ish columns)."""
    Ab = B.T @ A @ B
    Kb = B.T @ K @ B
    vals = eigh(0.5 * (Ab + Ab.T), 0.5 * (Kb + Kb.T), eigvals_only=True)
    return float(vals[0] if which == "min" else vals[-1])


def _extremize(op, nl, B: np.ndarray, y0: np.ndarray, sense: int) -> tuple[float, np.ndarray]:
    """Local max (sense=+1) or min (sense=-1) of J(B y) from y0."""

    def fun(y):
        u = B @ y
        return -sense * energy(op, nl, u), -sense * (B.T @ gradient(op, nl, u))

    res = minimize(fun, y0, jac=True, method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-10})
    return -sense * float(res.fun), B @ res.x


def energy_band(
    op: AssembledOperator,
    nl: Nonlinearity,
    spectrum: Spectrum,
    window: WindowReport,
    rng: np.random.Generator,
    sphere_samples: int = 500,
    grid_per_axis: int = 9,
) -> tuple[EnergyBand, list[np.ndarray]]:
    """Estimate [c0, c_inf] from the two geometric steps of the linking argument.

    Standard variant: on P_h (K-orthogonal complement of e_1..e_{h-1})
        J(u) >= k'' ||u||^2 - k' ||u||^3,
    with k'' the sharp discrete constant of the quadratic part after absorbing
    (lambda0 + eps) t^2/2 from F, and k' from the cubic remainder of F times
    the discrete embedding constants. rho = 2k''/(3k') maximizes the bound and
    c0 is its value there. c_inf is the largest J found on H_k = span(e_1..e_k)
    by a coarse grid plus local maximization. The mirrored variant swaps the
    roles (J <= -c on the small sphere in H_k, J bounded below on P_h) and the
    band becomes [lowest J on P_h, -c].

    Returns the band and the local extremizers found (useful as seeds).
    """
    K, M = op.K, op.M
    ML = np.diag(op.M_lumped)
    E = spectrum.eigenvectors
    h, k = window.h, window.k
    lam = spectrum.eigenvalues
    n = op.n
    if window.variant == "standard":
        eps = 0.5 * (lam[h - 1] - window.lower)
        slope, sense = nl.lambda0 + eps, 1
        sphere_basis = _complement_basis(K, E[:, : h - 1])
        quad = 0.5 * _extreme_ratio(K - nl.lambda_bar * M - slope * ML, K, sphere_basis, "min")
    else:
        eps = 0.5 * (window.upper - lam[k - 1])
        slope, sense = nl.lambda0 - eps, -1
        sphere_basis = E[:, :k]
        quad = -0.5 * _extreme_ratio(K - nl.lambda_bar * M - slope * ML, K, sphere_basis, "max")
    if quad <= 0:
        raise SpectralError("window margins too small for a positive quadratic coefficient")
    # sum_i m_i |u_i|^3 <= max|u| * u^T ML u <= C_inf * c_L * ||u||^3
    c_inf_emb = _sup_norm_constant(K)
    c_lumped = _extreme_ratio(ML, K, sphere_basis, "max")
    cubic = _cubic_remainder(nl, slope, sense) * c_inf_emb * c_lumped
    rho = 2.0 * quad / (3.0 * cubic)
    bound = quad * rho**2 - cubic * rho**3

    # sample the small sphere ||u||_K = rho inside the sphere subspace
    d = sphere_basis.shape[1]
    Kb = sphere_basis.T @ K @ sphere_basis
    decay = 1.0 / np.sqrt(1.0 + np.arange(d))
    sphere_vals = []
    for j in range(sphere_samples):
        y = rng.standard_normal(d) * (decay if j % 2 == 0 else 1.0)
        y *= rho / math.sqrt(y @ Kb @ y)
        sphere_vals.append(energy(op, nl, sphere_basis @ y))
    sphere_vals = np.array(sphere_vals)

    # linking subspace: H_k (standard) or P_h (mirrored)
    seeds_out: list[np.ndarray] = []
    if window.variant == "standard":
        B = E[:, :k]
        best = -math.inf
        amps = np.linspace(-1.0, 1.0, grid_per_axis)
        scale = _subspace_scale(op, nl, B)
        grid = np.stack(np.meshgrid(*([amps] * k), indexing="ij"), axis=-1).reshape(-1, k) * scale
        vals = np.array([energy(op, nl, B @ y) for y in grid])
        for idx in np.argsort(vals)[::-1][: 2 * k + 2]:
            v, u = _extremize(op, nl, B, grid[idx], +1)
            seeds_out.append(u)
            best = max(best, v, vals[idx])
        band = EnergyBand(rho, bound, best, quad, cubic, float(sphere_vals.min()), best, sphere_samples)
    else:
        B = _complement_basis(K, E[:, : h - 1])
        best = math.inf
        for j in range(2 * k + 2):
            y0 = rng.standard_normal(B.shape[1]) * (1.0 / (1.0 + np.arange(B.shape[1])))
            y0 *= _subspace_scale(op, nl, B[:, :1]) / max(np.abs(B @ y0).max(), 1e-300)
            v, u = _extremize(op, nl, B, y0, -1)
            seeds_out.append(u)
            best = min(best, v)
        band = EnergyBand(rho, best, -bound, quad, cubic, float(sphere_vals.max()), best, sphere_samples)
    return band, seeds_out


def _complement_basis(K: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Orthonormal basis of {u : E^T K u = 0}."""
    n = K.shape[0]
    if E.shape[1] == 0:
        return np.eye(n)
    from scipy.linalg import qr

    Q, _ = qr(K @ E, mode="full")
    return Q[:, E.shape[1]:]


def _subspace_scale(op, nl, B: np.ndarray) -> float:
    """Coefficient range for sampling J on span(B).

    Along the first basis direction, normalized to unit nodal amplitude, find
    the amplitude where J peaks (J -> -inf there in the standard case); the
    grid then spans three times that amplitude.
    """
    peak = max(np.abs(B[:, 0]).max(), 1e-300)
    b = B[:, 0] / peak
    amps = np.logspace(-2, 3, 200)
    vals = np.array([energy(op, nl, a * b) for a in amps])
    return float(3.0 * amps[int(np.argmax(vals))] / peak)


# ---------------------------------------------------------------------------
# deflated search


@dataclass(frozen=True)
class Solution:
    u: np.ndarray
    energy: float
    residual: float
    pair_id: int
    sign: int  # +1 representative, -1 its negation
    in_band: bool


@dataclass
class SeedTrace:
    seed_index: int
    origin: str
    iterations: int
    converged: bool
    residuals: list[float]
    norms: list[float]
    outcome: str

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.norms))) and (max(self.norms, default=0.0) < 1e8)

    def as_dict(self) -> dict:
        return {
            "seed_index": self.seed_index,
            "origin": self.origin,
            "iterations": self.iterations,
            "converged": self.converged,
            "outcome": self.outcome,
            "iterates_bounded": self.bounded,
            "max_iterate_norm": max(self.norms, default=0.0),
            "final_residual": self.residuals[-1] if self.residuals else None,
            "residual_trace": self.residuals,
        }


@dataclass
class MinimaxReport:
    solutions: list[Solution]
    pairs_predicted: int
    band: EnergyBand | None
    window: WindowReport
    diagnostics: list[SeedTrace]
    iterations_used: int
    budget: int
    tol: float
    workers: int = 1

    @property
    def pairs_found(self) -> int:
        return len({s.pair_id for s in self.solutions})

    def summary(self) -> dict:
        return {
            "pairs_found": self.pairs_found,
            "pairs_predicted": self.pairs_predicted,
            "iterations_used": self.iterations_used,
            "budget": self.budget,
            "tolerance": self.tol,
            "workers": self.workers,
            "window": self.window.as_dict(),
            "energy_band": self.band.as_dict() if self.band else None,
            "energy_band_is_estimate": True,
            "solutions": [
                {
                    "pair": s.pair_id,
                    "sign": "+" if s.sign > 0 else "-",
                    "energy": s.energy,
                    "residual": s.residual,
                    "in_band": s.in_band,
                }
                for s in self.solutions
            ],
            "ps_diagnostics": [t.as_dict() for t in self.diagnostics],
        }


class _Deflation:
    """eta(u) = prod_r (1/||u - r||_M^2 + shift) over the known roots r."""

    def __init__(self, M: np.ndarray, shift: float = 1.0):
        self.M = M
        self.shift = shift
        self.roots: list[np.ndarray] = []

    def add(self, r: np.ndarray):
        self.roots.append(r.copy())

    def log_eta(self, u: np.ndarray) -> float:
        out = 0.0
        for r in self.roots:
            d = u - r
            out += math.log(1.0 / max(d @ self.M @ d, 1e-300) + self.shift)
        return out

    def grad_log_eta(self, u: np.ndarray) -> np.ndarray:
        g = np.zeros_like(u)
        for r in self.roots:
            d = u - r
            Md = self.M @ d
            d2 = max(d @ Md, 1e-300)
            g += (-2.0 * Md / d2**2) / (1.0 / d2 + self.shift)
        return g


def _m_norm(M, u) -> float:
    return math.sqrt(max(float(u @ M @ u), 0.0))


def _residual_norm(op, nl, u) -> float:
    return float(np.linalg.norm(gradient(op, nl, u)))


def _converged(op, nl, u, tol) -> bool:
    return _residual_norm(op, nl, u) <= tol * (1.0 + float(np.linalg.norm(op.K @ u)))


_STALL_WINDOW = 15


def _stalled(residuals: list[float]) -> bool:
    """No halving of the best residual over the last window of iterations."""
    recent = min(residuals[-_STALL_WINDOW:])
    before = min(residuals[:-_STALL_WINDOW])
    return recent > 0.5 * before


def _bb_merit_descent(op, nl, u, defl, max_iter, trace: SeedTrace, target: float = 1e-3) -> tuple[np.ndarray, int]:
    """Barzilai-Borwein descent on phi(u) = 1/2 eta(u)^2 ||G(u)||^2 until ||G|| < target.

    Used when Newton stalls: the deflated merit has no minimum at known roots.
    """
    def phi_and_grad(v):
        G = gradient(op, nl, v)
        le = defl.log_eta(v)
        eta2 = math.exp(2.0 * le)
        H = hessian(op, nl, v)
        gphi = eta2 * (H @ G) + eta2 * (G @ G) * defl.grad_log_eta(v)
        return 0.5 * eta2 * (G @ G), gphi, G

    _, g, G = phi_and_grad(u)
    step = 1e-3 / max(np.linalg.norm(g), 1e-300)
    it = 0
    while it < max_iter:
        it += 1
        u_new = u - step * g
        _, g_new, G = phi_and_grad(u_new)
        trace.residuals.append(float(np.linalg.norm(G)))
        trace.norms.append(_m_norm(op.M, u_new))
        if not np.all(np.isfinite(u_new)):
            break
        if np.linalg.norm(G) < target:
            return u_new, it
        if it >= 2 * _STALL_WINDOW and _stalled(trace.residuals):
            break
        s, y = u_new - u, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2.0 * step
        u, g = u_new, g_new
    return u, it


def _deflated_newton(op, nl, u0, defl, tol, max_iter, trace: SeedTrace) -> tuple[np.ndarray, bool, int]:
    u = u0.copy()
    it = 0
    while it < max_iter:
        G = gradient(op, nl, u)
        res = float(np.linalg.norm(G))
        trace.residuals.append(res)
        trace.norms.append(_m_norm(op.M, u))
        if res <= tol * (1.0 + float(np.linalg.norm(op.K @ u))):
            return u, True, it
        if not np.isfinite(res) or trace.norms[-1] > 1e8:
            return u, False, it
        if it >= 2 * _STALL_WINDOW and _stalled(trace.residuals):
            return u, False, it
        it += 1
        try:
            delta = solve(hessian(op, nl, u), -G, assume_a="sym")
        except (LinAlgError, ValueError):
            return u, False, it
        denom = 1.0 - float(defl.grad_log_eta(u) @ delta) if defl.roots else 1.0
        step = delta / denom if abs(denom) > 1e-12 else delta
        # backtrack on the deflated residual norm
        merit0 = res * math.exp(defl.log_eta(u))
        alpha = 1.0
        for _ in range(12):
            trial = u + alpha * step
            merit = _residual_norm(op, nl, trial) * math.exp(defl.log_eta(trial))
            if np.isfinite(merit) and merit < (1.0 - 1e-4 * alpha) * merit0:
                break
            alpha *= 0.5
        u = u + alpha * step
    return u, False, it


def _polish(op, nl, u, tol, iters=6) -> np.ndarray:
    """Plain Newton steps; roots of the deflated residual are roots of G."""
    for _ in range(iters):
        G = gradient(op, nl, u)
        if np.linalg.norm(G) <= 1e-3 * tol:
            break
        try:
            u = u + solve(hessian(op, nl, u), -G, assume_a="sym")
        except (LinAlgError, ValueError):
            break
    return u


def _build_seeds(op, spectrum, window, band_seeds, rng, rho, n_sphere=8, n_mix=8) -> list[tuple[str, np.ndarray]]:
    """Deterministic seed list, cheapest and most diverse first."""
    E = spectrum.eigenvectors
    h, k = window.h, window.k
    eig = {}
    for j in range(h, k + 1):
        e = E[:, j - 1] / np.abs(E[:, j - 1]).max()
        for amp in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0):
            eig[(j, amp)] = (f"eigvec{j}*{amp:g}", amp * e)
    seeds = [eig[(j, a)] for a in (0.5, 1.0) for j in range(h, k + 1)]
    seeds += [(f"linking_extremizer{i}", u) for i, u in enumerate(band_seeds)]
    # mixtures in H_k
    Hk = E[:, :k]
    for i in range(n_mix):
        u = Hk @ rng.standard_normal(k)
        u *= rng.uniform(0.5, 8.0) / max(np.abs(u).max(), 1e-300)
        seeds.append((f"mixture{i}", u))
    # small sphere in P_h
    B = _complement_basis(op.K, E[:, : h - 1])
    Kb = B.T @ op.K @ B
    for i in range(n_sphere):
        y = rng.standard_normal(B.shape[1]) / np.sqrt(1.0 + np.arange(B.shape[1]))
        y *= rho / math.sqrt(y @ Kb @ y)
        seeds.append((f"sphere{i}", B @ y))
    seeds += [eig[(j, a)] for a in (2.0, 4.0, 8.0, 16.0) for j in range(h, k + 1)]
    return seeds


def find_pairs(
    op: AssembledOperator,
    nl: Nonlinearity,
    spectrum: Spectrum,
    window: WindowReport,
    budget: int = 10_000,
    tol: float = 1e-8,
    seed: int = 0,
    distinct_tol: float | None = None,
    newton_iters: int = 60,
) -> MinimaxReport:
    """Search for nontrivial critical points of J in +/- pairs.

    Seeds follow the linking geometry: scaled eigenvectors e_h..e_k, the
    extremizers found while estimating c_inf, random points on the small
    sphere in P_h, and random mixtures in H_k. Each seed runs deflated Newton
    (Barzilai-Borwein descent on the deflated residual as a fallback); every
    accepted root u is stored together with -u and both are deflated, as is
    the trivial solution.
    """
    rng = np.random.default_rng(seed)
    M = op.M
    nontrivial = 1e-6 * math.sqrt(op.mesh.length)
    distinct_tol = distinct_tol if distinct_tol is not None else 1e-4 * math.sqrt(op.mesh.length)
    if not window.present:
        return MinimaxReport([], 0, None, window, [], 0, budget, tol)
    try:
        band, band_seeds = energy_band(op, nl, spectrum, window, rng)
        rho = band.rho
    except SpectralError as exc:
        # no linking geometry (e.g. f = 0): search anyway, report no band
        log.warning("energy band unavailable: %s", exc)
        band, band_seeds, rho = None, [], 1.0
    seeds = _build_seeds(op, spectrum, window, band_seeds, rng, rho)

    defl = _Deflation(M)
    defl.add(np.zeros(op.n))
    found: list[np.ndarray] = []
    solutions: list[Solution] = []
    traces: list[SeedTrace] = []
    used = 0
    band_tol = 1e-8 * max(1.0, abs(band.c_inf), abs(band.c0)) if band else 0.0

    def in_band(value: float) -> bool:
        return band is not None and band.contains(value, band_tol)

    for idx, (origin, u0) in enumerate(seeds):
        if used >= budget:
            break
        trace = SeedTrace(idx, origin, 0, False, [], [], "")
        cap = min(newton_iters, budget - used)
        u, ok, it = _deflated_newton(op, nl, u0, defl, tol, cap, trace)
        used += it
        if not ok and used < budget:
            u, it_bb = _bb_merit_descent(op, nl, u0, defl, min(200, budget - used), trace)
            used += it_bb
            cap = min(newton_iters, budget - used)
            u, ok, it = _deflated_newton(op, nl, u, defl, tol, cap, trace)
            used += it
        trace.iterations = len(trace.residuals)
        trace.converged = ok
        if not ok:
            trace.outcome = "no convergence"
            traces.append(trace)
            continue
        u = _polish(op, nl, u, tol)
        if not _converged(op, nl, u, tol):
            trace.outcome = "polish lost convergence"
            traces.append(trace)
            continue
        if _m_norm(M, u) < nontrivial:
            trace.outcome = "trivial"
            traces.append(trace)
            continue
        if any(_m_norm(M, u - r) < distinct_tol or _m_norm(M, u + r) < distinct_tol for r in found):
            trace.outcome = "duplicate (merged)"
            traces.append(trace)
            continue
        # canonical representative: first non-negligible entry positive
        big = np.flatnonzero(np.abs(u) > 1e-8 * np.abs(u).max())
        if u[big[0]] < 0:
            u = -u
        pair = len(found)
        found.append(u)
        defl.add(u)
        defl.add(-u)
        J = energy(op, nl, u)
        res = _residual_norm(op, nl, u)
        inb = in_band(J)
        solutions.append(Solution(u, J, res, pair, +1, inb))
        # J is even and G odd for odd f; recompute rather than assume
        J_neg = energy(op, nl, -u)
        solutions.append(Solution(-u, J_neg, _residual_norm(op, nl, -u), pair, -1, in_band(J_neg)))
        trace.outcome = f"pair {pair}"
        traces.append(trace)
        log.info("pair %d from %s: J=%.10g residual=%.2e", pair, origin, J, res)

    return MinimaxReport(solutions, window.pairs_predicted, band, window, traces, used, budget, tol)
