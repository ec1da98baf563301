"""Piecewise-linear assembly of fractional Laplacians on an interval.

For hat functions on a uniform mesh, extended by zero outside (a, b), the
form

    a_s(u, v) = (C_s / 2) * int_R int_R (u(x)-u(y)) (v(x)-v(y)) / |x-y|^(1+2s) dx dy

is translation invariant, so a_s(phi_i, phi_j) depends on |i - j| only and the
stiffness matrix is symmetric Toeplitz. The exterior interaction is included
automatically because the double integral runs over all of R^2.

In Fourier variables a_s(phi_0, phi_k) = (1/2pi) int |xi|^(2s) |phi^(xi)|^2 e^(ik xi h) dxi
and |phi^|^2 = (2 - 2cos xi)^2 / xi^4 for h = 1, which turns the entry into a
fourth central difference of the distributional transform of |xi|^(2s-4):

    a_k = P(eta) * delta^4 [ k^2 (|k|^eta - 1) / eta ],   eta = 1 - 2s,
    P(eta) = Gamma(1-eta) cos(pi eta / 2) / (pi (1+eta) (2+eta)).

The k^2 shift is annihilated by delta^4; it only removes the removable
singularity at s = 1/2 (eta -> 0 gives k^2 log|k|). The differences cancel
heavily for large k, so they are evaluated in extended precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import mpmath
import numpy as np
from scipy.linalg import toeplitz
from scipy.special import gamma as gamma_fn

__all__ = [
    "AssembledOperator",
    "AssemblyError",
    "CertificateError",
    "DomainMesh",
    "N_CAP",
    "NORMALIZATION_ID",
    "StiffnessFamily",
    "assemble_fractional_stiffness",
    "assemble_lumped_mass",
    "assemble_mass",
    "assemble_operator",
    "domination_constant",
    "normalization_constant",
    "toeplitz_row",
]

N_CAP = 1024
NORMALIZATION_ID = "c_{1,s} = 2^{2s} s Gamma(s+1/2) / (pi^{1/2} Gamma(1-s)); form weight c_{1,s}/2"

_MP_DPS = 40


class AssemblyError(ValueError):
    """Invalid mesh or exponent."""


class CertificateError(ArithmeticError):
    """A matrix expected to be positive definite is not."""


@dataclass(frozen=True)
class DomainMesh:
    a: float
    b: float
    n_interior: int

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise AssemblyError(f"need a < b, got ({self.a}, {self.b})")
        if not (1 <= self.n_interior <= N_CAP):
            raise AssemblyError(f"n_interior must lie in [1, {N_CAP}], got {self.n_interior}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates."""
        return self.a + self.h * np.arange(1, self.n_interior + 1)

    @property
    def all_nodes(self) -> np.ndarray:
        """Nodes including the two boundary points (where u = 0)."""
        return np.linspace(self.a, self.b, self.n_interior + 2)

    @property
    def length(self) -> float:
        return self.b - self.a

    def refine(self) -> "DomainMesh":
        return DomainMesh(self.a, self.b, 2 * self.n_interior + 1)


def normalization_constant(s: float) -> float:
    """c_{1,s} = 2^{2s} s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s)) on [0, 1].

    Vanishes like s(1 - s) at both ends; the Gagliardo integral blows up at
    the same rate, so the product has finite endpoint limits.
    """
    if not 0.0 <= s <= 1.0:
        raise AssemblyError(f"exponent outside [0,1]: {s}")
    if s == 1.0:
        return 0.0
    return float(4.0**s * s * gamma_fn(s + 0.5) / (math.sqrt(math.pi) * gamma_fn(1.0 - s)))


@lru_cache(maxsize=256)
def _toeplitz_row_cached(s: float, n: int) -> tuple[float, ...]:
    with mpmath.workdps(_MP_DPS):
        eta = 1 - 2 * mpmath.mpf(s)

        def g(k: int):
            k = abs(k)
            if k == 0:
                return mpmath.mpf(0)
            L = mpmath.log(k)
            if eta == 0:
                return k * k * L
            return k * k * mpmath.expm1(eta * L) / eta

        # P(eta) rewritten in s so tiny s does not round 1 - eta onto the Gamma pole
        sm = mpmath.mpf(s)
        pref = mpmath.gamma(2 * sm) * mpmath.sinpi(sm) / (mpmath.pi * (2 - 2 * sm) * (3 - 2 * sm))
        vals = [g(k) for k in range(-2, n + 2)]
        # vals[k + 2] == g(k)
        row = [
            pref * (vals[k + 4] - 4 * vals[k + 3] + 6 * vals[k + 2] - 4 * vals[k + 1] + vals[k])
            for k in range(n)
        ]
        return tuple(float(v) for v in row)


def toeplitz_row(s: float, n: int) -> np.ndarray:
    """First row of A_s on the unit-spacing mesh: a_s(phi_0, phi_k), k = 0..n-1."""
    if not 0.0 <= s <= 1.0:
        raise AssemblyError(f"exponent outside [0,1]: {s}")
    row = np.zeros(n)
    if s == 1.0:
        row[0] = 2.0
        if n > 1:
            row[1] = -1.0
        return row
    if s == 0.0:
        row[0] = 2.0 / 3.0
        if n > 1:
            row[1] = 1.0 / 6.0
        return row
    return np.array(_toeplitz_row_cached(float(s), int(n)))


def assemble_fractional_stiffness(mesh: DomainMesh, s: float) -> np.ndarray:
    """Stiffness matrix of the exponent-s Gagliardo form on interior hats.

    s = 1 gives the gradient stiffness tridiag(-1, 2, -1)/h and s = 0 the
    P1 mass matrix; in between the entries scale as h^(1-2s).
    """
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise AssemblyError(f"exponent outside [0,1]: {s}")
    row = toeplitz_row(s, mesh.n_interior) * mesh.h ** (1.0 - 2.0 * s)
    return toeplitz(row)


def assemble_mass(mesh: DomainMesh) -> np.ndarray:
    return assemble_fractional_stiffness(mesh, 0.0)


def assemble_lumped_mass(mesh: DomainMesh) -> np.ndarray:
    """Diagonal of the lumped mass: integral of each hat function, i.e. h."""
    return np.full(mesh.n_interior, mesh.h)


@dataclass
class StiffnessFamily:
    """Matrices A_s for a set of exponents on one mesh (built lazily, cached)."""

    mesh: DomainMesh
    matrices: dict[float, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, s: float) -> np.ndarray:
        s = float(s)
        if s not in self.matrices:
            self.matrices[s] = assemble_fractional_stiffness(self.mesh, s)
        return self.matrices[s]

    @property
    def mass(self) -> np.ndarray:
        return self[0.0]

    def constants(self) -> dict[float, float]:
        return {s: normalization_constant(s) for s in self.matrices}


@dataclass(frozen=True)
class AssembledOperator:
    mesh: DomainMesh
    K_plus: np.ndarray
    K_minus: np.ndarray
    K_high: np.ndarray
    M: np.ndarray
    M_lumped: np.ndarray  # diagonal entries
    atoms: tuple[tuple[float, float], ...]
    s_bar: float

    @cached_property
    def K(self) -> np.ndarray:
        return self.K_plus - self.K_minus

    @property
    def n(self) -> int:
        return self.mesh.n_interior


def assemble_operator(
    mesh: DomainMesh,
    atoms: Sequence[tuple[float, float]],
    s_bar: float,
    family: StiffnessFamily | None = None,
) -> AssembledOperator:
    """Superpose w_i A_{s_i}: positive weights into K_plus, |negative| into K_minus.

    K_high collects the positive atoms with s_i >= s_bar. The summation order
    is the atom order, so repeated calls are bitwise reproducible.
    """
    family = family or StiffnessFamily(mesh)
    n = mesh.n_interior
    K_plus = np.zeros((n, n))
    K_minus = np.zeros((n, n))
    K_high = np.zeros((n, n))
    for s, w in atoms:
        s, w = float(s), float(w)
        if not 0.0 <= s <= 1.0:
            raise AssemblyError(f"exponent outside [0,1]: {s}")
        A = family[s]
        if w > 0:
            K_plus += w * A
            if s >= s_bar:
                K_high += w * A
        elif w < 0:
            K_minus += -w * A
    return AssembledOperator(
        mesh=mesh,
        K_plus=K_plus,
        K_minus=K_minus,
        K_high=K_high,
        M=family.mass,
        M_lumped=assemble_lumped_mass(mesh),
        atoms=tuple((float(s), float(w)) for s, w in atoms),
        s_bar=float(s_bar),
    )


def domination_constant(A_low: np.ndarray, A_high: np.ndarray) -> float:
    """Smallest c with u^T A_low u <= c u^T A_high u for all u.

    This is the top generalized eigenvalue of the pencil (A_low, A_high).
    """
    from scipy.linalg import LinAlgError, cholesky, eigvalsh, solve_triangular

    # explicit Cholesky reduction; LAPACK's subset driver can fail to
    # converge on fully degenerate pencils such as (A, A)
    try:
        L = cholesky(A_high, lower=True)
    except LinAlgError as exc:
        raise CertificateError("second matrix of the pencil is not positive definite") from exc
    X = solve_triangular(L, A_low, lower=True)
    X = solve_triangular(L, X.T, lower=True)
    return float(eigvalsh(0.5 * (X + X.T))[-1])
