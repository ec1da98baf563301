import math

import numpy as np
import pytest
from scipy.linalg import eigh

from musolve.assembly import AssembledOperator, DomainMesh, StiffnessFamily, assemble_operator
from musolve.spectral import (
    SpectralError,
    coercivity_certificate,
    rayleigh_verify,
    solve_spectrum,
    subspace_norm_bound,
)

PI = math.pi


def wrong_sign(alpha, n=128, family=None):
    atoms = [(1.0, 1.0), (0.25, -alpha)] if alpha else [(1.0, 1.0)]
    return assemble_operator(DomainMesh(0.0, PI, n), atoms, 0.5, family=family)


def pencil_operator(A, B):
    n = A.shape[0]
    return AssembledOperator(
        mesh=DomainMesh(0.0, 1.0, n), K_plus=A, K_minus=np.zeros_like(A), K_high=A,
        M=B, M_lumped=np.diag(B).copy(), atoms=(), s_bar=1.0,
    )


def test_classical_eigenvalues(classical_spectrum):
    np.testing.assert_allclose(classical_spectrum.eigenvalues[:5], [1, 4, 9, 16, 25], rtol=1e-2)
    assert np.all(np.diff(classical_spectrum.eigenvalues) > 0)


def test_residuals(classical_spectrum):
    lam = classical_spectrum.eigenvalues
    assert np.all(classical_spectrum.residuals <= 1e-8 * (np.abs(lam) + 1))


def test_orthogonality(classical_op, classical_spectrum):
    E = classical_spectrum.eigenvectors
    m = classical_spectrum.m
    np.testing.assert_allclose(E.T @ classical_op.M @ E, np.eye(m), atol=1e-10)
    G = E.T @ classical_op.K @ E
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) <= 1e-8 * classical_spectrum.eigenvalues[-1]


def test_sign_convention(classical_spectrum):
    E = classical_spectrum.eigenvectors
    for j in range(E.shape[1]):
        v = E[:, j]
        first = np.flatnonzero(np.abs(v) > 1e-8 * np.abs(v).max())[0]
        assert v[first] > 0


def test_doubling_the_measure(classical_op, classical_spectrum):
    op2 = assemble_operator(classical_op.mesh, [(1.0, 2.0)], 0.5)
    sp2 = solve_spectrum(op2, 10)
    np.testing.assert_allclose(sp2.eigenvalues, 2 * classical_spectrum.eigenvalues, rtol=1e-12)
    np.testing.assert_allclose(sp2.eigenvectors, classical_spectrum.eigenvectors, atol=1e-8)


def test_wrong_sign_lowers_every_eigenvalue():
    fam = StiffnessFamily(DomainMesh(0.0, PI, 128))
    grid = [0.0, 0.05, 0.1, 0.2, 0.4]
    spectra = [solve_spectrum(wrong_sign(a, family=fam), 8).eigenvalues for a in grid]
    for lo, hi in zip(spectra, spectra[1:]):
        assert np.all(hi < lo)


def test_request_too_many(classical_op):
    with pytest.raises(SpectralError):
        solve_spectrum(classical_op, classical_op.n + 1)


def test_rayleigh_global_minimum(classical_op, classical_spectrum):
    chk = rayleigh_verify(classical_spectrum, classical_op, 0)
    assert chk.deviation <= 1e-8
    assert chk.vector_deviation <= 1e-6


def test_rayleigh_second_eigenvalue(classical_op, classical_spectrum):
    chk = rayleigh_verify(classical_spectrum, classical_op, 1)
    assert chk.minimum == pytest.approx(4.0, rel=1e-2)
    assert chk.deviation <= 1e-8


@pytest.mark.parametrize("k", range(6))
def test_rayleigh_random_spd_pencil(k):
    rng = np.random.default_rng(k)
    X, Y = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
    A, B = X @ X.T + 6 * np.eye(6), Y @ Y.T + 6 * np.eye(6)
    op = pencil_operator(A, B)
    sp = solve_spectrum(op, 6)
    direct = eigh(A, B, eigvals_only=True)
    np.testing.assert_allclose(sp.eigenvalues, direct, rtol=1e-12)
    chk = rayleigh_verify(sp, op, k)
    assert abs(chk.minimum - direct[k]) <= 1e-10 * abs(direct[k])


def test_rayleigh_skips_vectors_in_clusters():
    A = np.diag([1.0, 2.0, 2.0, 3.0])
    op = pencil_operator(A, np.eye(4))
    sp = solve_spectrum(op, 4)
    assert not sp.is_simple(1)
    chk = rayleigh_verify(sp, op, 1)
    assert chk.vector_deviation is None
    assert chk.deviation <= 1e-12


def test_certificate_classical(classical_op):
    cert = coercivity_certificate(classical_op)
    assert cert.c0_gamma == 0.0 and cert.passes


def test_certificate_linear_in_alpha():
    fam = StiffnessFamily(DomainMesh(0.0, PI, 128))
    c1 = coercivity_certificate(wrong_sign(0.05, family=fam)).c0_gamma
    c2 = coercivity_certificate(wrong_sign(0.1, family=fam)).c0_gamma
    assert c2 / c1 == pytest.approx(2.0, abs=1e-10)


def test_certificate_threshold_alpha():
    # c0_gamma is linear in alpha, so the threshold is 1 / c0_gamma(1); bisection confirms it
    fam = StiffnessFamily(DomainMesh(0.0, PI, 256))
    unit = coercivity_certificate(wrong_sign(1.0, n=256, family=fam)).c0_gamma
    lo, hi = 0.0, 100.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if coercivity_certificate(wrong_sign(mid, n=256, family=fam)).passes:
            lo = mid
        else:
            hi = mid
    assert lo > 0
    assert lo == pytest.approx(1.0 / unit, rel=1e-9)
    assert coercivity_certificate(wrong_sign(0.1, n=256, family=fam)).passes


def test_coercivity_sandwich(wrong_sign_op, rng):
    cert = coercivity_certificate(wrong_sign_op)
    lo, hi = cert.bounds
    U = rng.standard_normal((wrong_sign_op.n, 1000))
    qk = np.einsum("ij,ij->j", U, wrong_sign_op.K @ U)
    qp = np.einsum("ij,ij->j", U, wrong_sign_op.K_plus @ U)
    assert np.all(lo * qp <= qk + 1e-10 * qp)
    assert np.all(qk <= hi * qp + 1e-10 * qp)


def test_lambda1_positive_when_certificate_passes(wrong_sign_op):
    assert coercivity_certificate(wrong_sign_op).passes
    assert solve_spectrum(wrong_sign_op, 1).eigenvalues[0] > 0


@pytest.mark.parametrize("which", ["classical", "wrong_sign"])
def test_poincare(which, classical_op, wrong_sign_op, rng):
    op = classical_op if which == "classical" else wrong_sign_op
    lam1 = solve_spectrum(op, 1).eigenvalues[0]
    U = rng.standard_normal((op.n, 1000))
    l2 = np.einsum("ij,ij->j", U, op.M @ U)
    energy = np.einsum("ij,ij->j", U, op.K @ U)
    assert np.all(l2 <= energy / lam1 * (1 + 1e-12))


def test_subspace_bound(classical_op, classical_spectrum):
    assert subspace_norm_bound(classical_spectrum, classical_op, 3) <= 1 + 1e-8
    e1 = classical_spectrum.eigenvectors[:, 0]
    lam = classical_spectrum.eigenvalues
    assert (e1 @ classical_op.K @ e1) / lam[1] == pytest.approx(lam[0] / lam[1], rel=1e-10)
    ek = classical_spectrum.eigenvectors[:, 2]
    assert (ek @ classical_op.K @ ek) / (lam[2] * (ek @ classical_op.M @ ek)) == pytest.approx(1.0, abs=1e-12)
