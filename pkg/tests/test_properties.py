import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from musolve.assembly import DomainMesh, assemble_operator
from musolve.config import parse_config_text, render_config
from musolve.io import fmt
from musolve.measure import DensityPiece, SpectralMeasure, decompose, to_atoms, validate_hypotheses

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
nonzero = finite.filter(lambda c: abs(c) > 1e-6)
exponent = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def measures(draw):
    exps = draw(st.lists(exponent, min_size=0, max_size=5, unique=True))
    atoms = [(s, draw(nonzero)) for s in exps]
    cuts = sorted(draw(st.lists(st.floats(0.01, 0.99), min_size=0, max_size=3, unique=True)))
    edges = [0.0, *cuts, 1.0]
    pieces = []
    for lo, hi in zip(edges, edges[1:]):
        if hi - lo > 1e-3 and draw(st.booleans()):
            pieces.append(DensityPiece(lo, hi, tuple(draw(st.lists(finite, min_size=1, max_size=4)))))
    s_bar = draw(st.floats(0.05, 1.0))
    return SpectralMeasure(atoms=tuple(atoms), density=tuple(pieces), s_bar=s_bar)


@settings(max_examples=60, deadline=None)
@given(measures())
def test_jordan_round_trip(mu):
    pos, neg = decompose(mu)
    w = {a.s: a.c for a in pos.atoms}
    for a in neg.atoms:
        assert a.s not in w
        w[a.s] = -a.c
    assert w == {a.s: a.c for a in mu.atoms}
    assert all(a.c > 0 for a in pos.atoms + neg.atoms)
    s = np.linspace(0, 1, 257)
    dp, dn = pos.density_at(s), neg.density_at(s)
    scale = 1 + np.abs(mu.density_at(s)).max()
    # pieces are split at roots, so any wrong sign is round-off next to a root
    assert np.all(dp >= -1e-12 * scale) and np.all(dn >= -1e-12 * scale)
    assert np.max(np.abs(dp - dn - mu.density_at(s))) <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(measures(), st.integers(1, 5))
def test_to_atoms_conserves_mass(mu, order):
    if any(len(p.coeffs) > 2 * order for p in mu.density):
        order = max(len(p.coeffs) for p in mu.density)
    total = sum(w for _, w in to_atoms(mu, order))
    scale = 1 + sum(abs(a.c) for a in mu.atoms) + sum(sum(map(abs, p.coeffs)) for p in mu.density)
    assert abs(total - mu.total_mass) <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(measures())
def test_gamma_is_the_mass_ratio(mu):
    r = validate_hypotheses(mu)
    if r.positive_high_mass:
        assert r.gamma >= 0
        assert math.isclose(r.gamma * r.mass_plus_high, r.mass_minus_low, rel_tol=1e-12, abs_tol=1e-14)
    if r.s_sharp is not None:
        assert r.s_sharp >= r.s_bar


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(exponent, st.floats(0.01, 5.0)), min_size=1, max_size=4, unique_by=lambda p: p[0]))
def test_superposition_is_additive(atoms):
    mesh = DomainMesh(0.0, 1.0, 24)
    whole = assemble_operator(mesh, atoms, 1.0).K
    parts = sum(assemble_operator(mesh, [a], 1.0).K for a in atoms)
    assert np.max(np.abs(whole - parts)) <= 1e-12 * np.max(np.abs(whole))


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trip(x):
    assert float(fmt(x)) == x


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 1024),
    st.lists(st.tuples(exponent, nonzero), min_size=1, max_size=4, unique_by=lambda p: p[0]),
    st.integers(0, 2**31),
)
def test_config_round_trip(n, atoms, seed):
    lines = [f"domain: {{a: -1.0, b: 2.5, n_interior: {n}}}", "measure:", "  s_bar: 0.5", "  atoms:"]
    lines += [f"    - {{s: {fmt(s)}, c: {fmt(c)}}}" for s, c in atoms]
    lines += [f"solver: {{seed: {seed}}}"]
    cfg = parse_config_text("\n".join(lines) + "\n")
    assert parse_config_text(render_config(cfg)) == cfg
