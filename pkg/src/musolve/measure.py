"""Signed measures on the exponent interval [0, 1].

A measure is a finite list of atoms plus an optional piecewise-polynomial
density. Everything here is immutable and pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "Atom",
    "DensityPiece",
    "MeasureError",
    "MeasureReport",
    "SeriesMeasure",
    "SpectralMeasure",
    "decompose",
    "geometric_tail",
    "series_measure",
    "to_atoms",
    "validate_hypotheses",
]

# Absolute tolerance used when splitting density pieces at sign changes.
_ROOT_TOL = 1e-13


class MeasureError(ValueError):
    """Malformed measure data (bad exponent, duplicate atom, non-finite density...)."""


@dataclass(frozen=True)
class Atom:
    s: float
    c: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and 0.0 <= self.s <= 1.0):
            raise MeasureError(f"exponent outside [0,1]: s={self.s!r}")
        if not math.isfinite(self.c):
            raise MeasureError(f"non-finite atom weight at s={self.s!r}")
        if self.c == 0.0:
            raise MeasureError(f"zero-weight atom at s={self.s!r}")


@dataclass(frozen=True)
class DensityPiece:
    """Polynomial density on [lo, hi]; coeffs in ascending powers of s."""

    lo: float
    hi: float
    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise MeasureError(f"density interval [{self.lo}, {self.hi}] not inside [0,1]")
        if not self.coeffs or not all(math.isfinite(c) for c in self.coeffs):
            raise MeasureError(f"non-finite or empty density coefficients on [{self.lo}, {self.hi}]")

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    def __call__(self, s):
        return self.poly(s)

    def integral(self, lo: float | None = None, hi: float | None = None) -> float:
        lo = self.lo if lo is None else max(lo, self.lo)
        hi = self.hi if hi is None else min(hi, self.hi)
        if hi <= lo:
            return 0.0
        anti = self.poly.integ()
        return float(anti(hi) - anti(lo))


@dataclass(frozen=True)
class SpectralMeasure:
    """mu = sum_i c_i delta_{s_i} + f(s) ds, with split point s_bar in (0, 1]."""

    atoms: tuple[Atom, ...] = ()
    density: tuple[DensityPiece, ...] = ()
    s_bar: float = 1.0

    def __post_init__(self):
        atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        density = tuple(
            p if isinstance(p, DensityPiece) else DensityPiece(*p) for p in self.density
        )
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "density", density)
        exps = [a.s for a in atoms]
        if len(set(exps)) != len(exps):
            raise MeasureError(f"duplicate atom exponents: {sorted(exps)}")
        pieces = sorted(density, key=lambda p: p.lo)
        for left, right in zip(pieces, pieces[1:]):
            if right.lo < left.hi:
                raise MeasureError(
                    f"overlapping density pieces [{left.lo},{left.hi}] and [{right.lo},{right.hi}]"
                )
        if not (0.0 < self.s_bar <= 1.0):
            raise MeasureError(f"s_bar must lie in (0,1], got {self.s_bar!r}")

    @classmethod
    def from_atoms(cls, pairs: Sequence[tuple[float, float]], s_bar: float = 1.0) -> "SpectralMeasure":
        return cls(atoms=tuple(Atom(float(s), float(c)) for s, c in pairs), s_bar=s_bar)

    def density_at(self, s) -> np.ndarray:
        """Evaluate the density (zero outside every piece).

        Pieces are half-open [lo, hi), except that a piece ending at 1 includes 1.
        """
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for p in self.density:
            mask = (s >= p.lo) & ((s < p.hi) | ((p.hi == 1.0) & (s == 1.0)))
            out[mask] = p(s[mask])
        return out

    def mass(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Signed mass of the closed interval [lo, hi]."""
        total = sum(a.c for a in self.atoms if lo <= a.s <= hi)
        total += sum(p.integral(lo, hi) for p in self.density)
        return float(total)

    @property
    def total_mass(self) -> float:
        return self.mass(0.0, 1.0)

    @property
    def is_atomic(self) -> bool:
        return not self.density


def _sign_split(piece: DensityPiece) -> list[tuple[float, float, int]]:
    """Cut a piece at interior roots; return (lo, hi, sign) sub-intervals."""
    poly = piece.poly
    cuts = [piece.lo, piece.hi]
    # negligible leading terms only create huge spurious roots (or overflow)
    scale = max(abs(c) for c in piece.coeffs)
    trimmed = poly.trim(1e-14 * scale) if scale > 0 else poly
    if trimmed.degree() >= 1:
        for r in trimmed.roots():
            if abs(r.imag) < _ROOT_TOL and piece.lo + _ROOT_TOL < r.real < piece.hi - _ROOT_TOL:
                cuts.append(float(r.real))
    cuts = sorted(set(cuts))
    out = []
    for lo, hi in zip(cuts, cuts[1:]):
        val = poly(0.5 * (lo + hi))
        out.append((lo, hi, int(np.sign(val))))
    return out


def decompose(measure: SpectralMeasure) -> tuple[SpectralMeasure, SpectralMeasure]:
    """Jordan split mu = mu_plus - mu_minus.

    Density pieces are cut at their sign changes, so both parts stay
    piecewise polynomial: on each sub-interval one part carries |f| and the
    other carries nothing.
    """
    pos_atoms = tuple(Atom(a.s, a.c) for a in measure.atoms if a.c > 0)
    neg_atoms = tuple(Atom(a.s, -a.c) for a in measure.atoms if a.c < 0)
    pos_pieces, neg_pieces = [], []
    for piece in measure.density:
        for lo, hi, sign in _sign_split(piece):
            if sign > 0:
                pos_pieces.append(DensityPiece(lo, hi, piece.coeffs))
            elif sign < 0:
                neg_pieces.append(DensityPiece(lo, hi, tuple(-c for c in piece.coeffs)))
    plus = SpectralMeasure(pos_atoms, tuple(pos_pieces), measure.s_bar)
    minus = SpectralMeasure(neg_atoms, tuple(neg_pieces), measure.s_bar)
    return plus, minus


@dataclass(frozen=True)
class MeasureReport:
    gamma: float
    s_sharp: float | None
    mass_plus_high: float  # mu+([s_bar, 1])
    mass_minus_low: float  # mu-([0, s_bar])
    mass_minus_high: float  # mu-([s_bar, 1]); must vanish
    positive_high_mass: bool
    no_negative_high_mass: bool
    finite_gamma: bool
    s_bar: float

    @property
    def ok(self) -> bool:
        return self.positive_high_mass and self.no_negative_high_mass and self.finite_gamma

    @property
    def dimension_condition(self) -> bool:
        """Whether N > 2 s_sharp holds for N = 1 (recorded, never enforced)."""
        return self.s_sharp is not None and 1 > 2 * self.s_sharp

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "s_sharp": self.s_sharp,
            "s_bar": self.s_bar,
            "mass_plus_high": self.mass_plus_high,
            "mass_minus_low": self.mass_minus_low,
            "mass_minus_high": self.mass_minus_high,
            "positive_high_mass": self.positive_high_mass,
            "no_negative_high_mass": self.no_negative_high_mass,
            "finite_gamma": self.finite_gamma,
            "N_gt_2_s_sharp": self.dimension_condition,
        }


def _choose_s_sharp(plus: SpectralMeasure, s_bar: float) -> float | None:
    high_atoms = [a.s for a in plus.atoms if a.s >= s_bar]
    if high_atoms:
        return max(high_atoms)
    # density only: the point splitting mu+([s_bar,1]) in half keeps positive mass to its right
    pieces = sorted((p for p in plus.density if p.hi > s_bar), key=lambda p: p.lo)
    total = sum(p.integral(s_bar, 1.0) for p in pieces)
    if total <= 0.0:
        return None
    target, acc = 0.5 * total, 0.0
    for p in pieces:
        lo = max(p.lo, s_bar)
        m = p.integral(lo, p.hi)
        if acc + m >= target:
            anti = p.poly.integ()
            base = anti(lo)
            # monotone on the piece since the density is nonnegative there
            a, b = lo, p.hi
            for _ in range(200):
                mid = 0.5 * (a + b)
                if acc + anti(mid) - base < target:
                    a = mid
                else:
                    b = mid
            return float(0.5 * (a + b))
        acc += m
    return None


def validate_hypotheses(measure: SpectralMeasure) -> MeasureReport:
    """Check the three structural conditions on mu relative to its s_bar.

    Violations are reported through the flags; nothing raises here.
    """
    s_bar = measure.s_bar
    plus, minus = decompose(measure)
    m_plus_high = plus.mass(s_bar, 1.0)
    m_minus_low = minus.mass(0.0, s_bar)
    m_minus_high = minus.mass(s_bar, 1.0)
    positive_high_mass = m_plus_high > 0.0
    no_negative_high_mass = m_minus_high == 0.0
    gamma = m_minus_low / m_plus_high if positive_high_mass else math.inf
    finite_gamma = math.isfinite(gamma)
    return MeasureReport(
        gamma=float(gamma),
        s_sharp=_choose_s_sharp(plus, s_bar) if positive_high_mass else None,
        mass_plus_high=m_plus_high,
        mass_minus_low=m_minus_low,
        mass_minus_high=m_minus_high,
        positive_high_mass=positive_high_mass,
        no_negative_high_mass=no_negative_high_mass,
        finite_gamma=finite_gamma,
        s_bar=s_bar,
    )


def to_atoms(measure: SpectralMeasure, quadrature_order: int = 4) -> list[tuple[float, float]]:
    """Reduce mu to a finite atom list (s_i, w_i).

    Atoms pass through. Each density piece (additionally cut at s_bar, so the
    high/low routing stays exact) gets a Gauss-Legendre rule with
    `quadrature_order` nodes, exact for polynomial densities up to degree
    2*order - 1. Nodes landing on an existing atom are merged into it.
    """
    if quadrature_order < 1:
        raise MeasureError("quadrature_order must be >= 1")
    out: dict[float, float] = {a.s: a.c for a in measure.atoms}
    x, w = np.polynomial.legendre.leggauss(quadrature_order)
    for piece in measure.density:
        cuts = [piece.lo, piece.hi]
        if piece.lo < measure.s_bar < piece.hi:
            cuts.insert(1, measure.s_bar)
        for lo, hi in zip(cuts, cuts[1:]):
            half = 0.5 * (hi - lo)
            nodes = 0.5 * (hi + lo) + half * x
            weights = half * w * piece(nodes)
            for s, c in zip(nodes, weights):
                s, c = float(s), float(c)
                out[s] = out.get(s, 0.0) + c
    return [(s, c) for s, c in out.items() if c != 0.0]


@dataclass(frozen=True)
class SeriesMeasure:
    measure: SpectralMeasure
    tail_mass: float
    k_bar: int  # last index with s_k >= s_bar
    low_sum: float  # sum_{k > k_bar} c_k (signed, tail included)
    high_bound: float  # gamma * sum_{k <= k_bar} c_k
    report: MeasureReport = field(repr=False)

    @property
    def domination_holds(self) -> bool:
        head_positive = all(a.c > 0 for a in self.measure.atoms if a.s >= self.measure.s_bar)
        return head_positive and self.report.ok and self.low_sum <= self.high_bound + 1e-15


def geometric_tail(coefficients: Sequence[float]) -> float:
    """Estimate sum_{j > K} |c_j| assuming the last ratio |c_K / c_{K-1}| persists."""
    c = [abs(float(v)) for v in coefficients if v != 0]
    if len(c) < 2:
        return 0.0
    r = c[-1] / c[-2]
    if r >= 1.0:
        return math.inf
    return c[-1] * r / (1.0 - r)


def series_measure(
    coefficients: Sequence[float],
    exponents: Sequence[float],
    s_bar: float,
    tail_tolerance: float = 1e-12,
    tail_mass: float = 0.0,
) -> SeriesMeasure:
    """Atomic measure sum_k c_k delta_{s_k} for a truncated exponent series.

    `tail_mass` is the caller's bound on the absolute mass of the dropped
    terms (see `geometric_tail`); it must not exceed `tail_tolerance`.
    Zero coefficients are skipped.
    """
    if len(coefficients) != len(exponents):
        raise MeasureError("coefficients and exponents differ in length")
    ex = [float(s) for s in exponents]
    if any(b >= a for a, b in zip(ex, ex[1:])):
        raise MeasureError("exponents must be strictly decreasing")
    if tail_tolerance <= 0:
        raise MeasureError("tail_tolerance must be positive")
    if not tail_mass <= tail_tolerance:
        raise MeasureError(f"dropped tail mass {tail_mass:.3e} exceeds tolerance {tail_tolerance:.3e}")
    measure = SpectralMeasure(
        atoms=tuple(Atom(s, float(c)) for s, c in zip(ex, coefficients) if c != 0),
        s_bar=s_bar,
    )
    report = validate_hypotheses(measure)
    head = [float(c) for s, c in zip(ex, coefficients) if s >= s_bar]
    rest = [float(c) for s, c in zip(ex, coefficients) if s < s_bar]
    gamma = report.gamma if math.isfinite(report.gamma) else math.inf
    return SeriesMeasure(
        measure=measure,
        tail_mass=float(tail_mass),
        k_bar=len(head) - 1,
        low_sum=sum(rest) + tail_mass,
        high_bound=gamma * sum(head),
        report=report,
    )
