"""Dirichlet spectrum of the superposed operator and its certificates."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, qr, solve_triangular

from .assembly import AssembledOperator, CertificateError, domination_constant

__all__ = [
    "CoercivityCertificate",
    "RayleighCheck",
    "SpectralError",
    "Spectrum",
    "coercivity_certificate",
    "rayleigh_verify",
    "solve_spectrum",
    "subspace_norm_bound",
]

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-8


class SpectralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # ascending, length m
    eigenvectors: np.ndarray  # n x m, M-orthonormal columns
    residuals: np.ndarray
    clusters: np.ndarray  # cluster id per eigenvalue

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    def is_simple(self, j: int) -> bool:
        """0-based index j."""
        return np.count_nonzero(self.clusters == self.clusters[j]) == 1


def _cluster_ids(vals: np.ndarray, rtol: float = CLUSTER_RTOL) -> np.ndarray:
    ids = np.zeros(len(vals), dtype=int)
    for j in range(1, len(vals)):
        scale = max(abs(vals[j]), abs(vals[j - 1]), 1e-300)
        ids[j] = ids[j - 1] if abs(vals[j] - vals[j - 1]) <= rtol * scale else ids[j - 1] + 1
    return ids


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """First coordinate that is not negligible gets a positive sign."""
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        big = np.flatnonzero(np.abs(v) > 1e-8 * np.abs(v).max())
        if big.size and v[big[0]] < 0:
            vecs[:, j] = -v
    return vecs


def _pencil_lowest(A: np.ndarray, B: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """m smallest eigenpairs of (A, B) via B = L L^T and a standard symmetric solve."""
    L = cholesky(B, lower=True)
    X = solve_triangular(L, A, lower=True)
    X = solve_triangular(L, X.T, lower=True)
    vals, W = eigh(0.5 * (X + X.T), subset_by_index=[0, m - 1])
    return vals, solve_triangular(L, W, lower=True, trans="T")


def solve_spectrum(op: AssembledOperator, m: int) -> Spectrum:
    """m smallest eigenpairs of the pencil (K, M) by a dense Cholesky-reduced solve."""
    n = op.n
    if not 1 <= m <= n:
        raise SpectralError(f"requested m={m} eigenpairs but the mesh has {n} unknowns")
    K = op.K
    try:
        vals, vecs = _pencil_lowest(K, op.M, m)
    except LinAlgError as exc:
        raise SpectralError(f"generalized eigensolver failed for n={n}: {exc}") from exc
    if np.iscomplexobj(vals):
        raise SpectralError("eigensolver returned complex eigenvalues")
    vecs = _fix_signs(vecs)
    res = np.linalg.norm(K @ vecs - (op.M @ vecs) * vals, axis=0)
    log.debug("spectrum: n=%d m=%d lambda_1=%.6g max residual=%.3e", n, m, vals[0], res.max())
    return Spectrum(vals, vecs, res, _cluster_ids(vals))


@dataclass(frozen=True)
class RayleighCheck:
    k: int
    minimum: float
    deviation: float
    vector_deviation: float | None  # None when lambda_{k+1} sits in a cluster


def rayleigh_verify(spectrum: Spectrum, op: AssembledOperator, k: int) -> RayleighCheck:
    """Minimize u^T K u / u^T M u over {u : e_j^T K u = 0, j <= k}.

    The constraint space is parameterized by an orthonormal basis of the
    complement of span(K e_1..K e_k) and the projected pencil is solved
    directly. Compares the minimum with lambda_{k+1}, and the minimizer with
    e_{k+1} (M-norm, up to sign) when lambda_{k+1} is simple.
    """
    if not 0 <= k < spectrum.m:
        raise SpectralError(f"k={k} needs at least k+1 computed eigenpairs (have {spectrum.m})")
    K, M = op.K, op.M
    n = op.n
    if k == 0:
        Z = np.eye(n)
    else:
        C = K @ spectrum.eigenvectors[:, :k]
        Q, _ = qr(C, mode="full")
        Z = Q[:, k:]
    Kz = Z.T @ K @ Z
    Mz = Z.T @ M @ Z
    vals, vecs = _pencil_lowest(Kz, 0.5 * (Mz + Mz.T), 1)
    lam = spectrum.eigenvalues[k]
    dev = abs(vals[0] - lam) / abs(lam)
    vec_dev = None
    if spectrum.is_simple(k) and (k + 1 >= spectrum.m or abs(spectrum.eigenvalues[k + 1] - lam) > CLUSTER_RTOL * abs(lam)):
        u = Z @ vecs[:, 0]
        u = u / np.sqrt(u @ M @ u)
        e = spectrum.eigenvectors[:, k]
        if u @ M @ e < 0:
            u = -u
        d = u - e
        vec_dev = float(np.sqrt(max(d @ M @ d, 0.0)))
    return RayleighCheck(k=k, minimum=float(vals[0]), deviation=float(dev), vector_deviation=vec_dev)


@dataclass(frozen=True)
class CoercivityCertificate:
    c0_gamma: float

    @property
    def passes(self) -> bool:
        return self.c0_gamma < 1.0

    @property
    def bounds(self) -> tuple[float, float]:
        """(lo, hi) with lo u^T K+ u <= u^T K u <= hi u^T K+ u."""
        return (1.0 - self.c0_gamma, 1.0)


def coercivity_certificate(op: AssembledOperator) -> CoercivityCertificate:
    """Top eigenvalue of (K_minus, K_high): how much of the high form the low negative part eats."""
    if not np.any(op.K_minus):
        return CoercivityCertificate(0.0)
    try:
        top = domination_constant(op.K_minus, op.K_high)
    except CertificateError as exc:
        raise CertificateError("K_high is not positive definite") from exc
    return CoercivityCertificate(float(max(top, 0.0)))


def subspace_norm_bound(
    spectrum: Spectrum,
    op: AssembledOperator,
    k: int,
    draws: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """max over random u in span(e_1..e_k) of u^T K u / (lambda_k u^T M u).

    k is 1-based here, matching the eigenvalue numbering.
    """
    if not 1 <= k <= spectrum.m:
        raise SpectralError(f"k={k} outside 1..{spectrum.m}")
    rng = rng or np.random.default_rng(0)
    E = spectrum.eigenvectors[:, :k]
    coeffs = rng.standard_normal((k, max(draws, 100)))
    U = E @ coeffs
    num = np.einsum("ij,ij->j", U, op.K @ U)
    den = np.einsum("ij,ij->j", U, op.M @ U)
    return float(np.max(num / (spectrum.eigenvalues[k - 1] * den)))
