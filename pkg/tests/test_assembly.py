import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import eigh

from musolve.assembly import (
    AssemblyError,
    CertificateError,
    DomainMesh,
    assemble_fractional_stiffness,
    assemble_mass,
    assemble_operator,
    domination_constant,
    normalization_constant,
    toeplitz_row,
)
from musolve.pipeline import getoor_solution

PI = math.pi


def fourier_entry(s: float, k: int) -> float:
    """a_s(phi_0, phi_k) at h = 1 from (1/pi) int_0^inf xi^(2s-4) (2 - 2cos xi)^2 cos(k xi) d xi.

    The integrand is split at L: the head by adaptive quadrature, the tail as
    a sum of pure cosines (QAWF) so the slow algebraic decay is handled exactly.
    """
    p = 2 * s - 4
    L = 40.0

    def head(x):
        return x**p * (2 - 2 * math.cos(x)) ** 2 * math.cos(k * x)

    total = quad(head, 0.0, L, limit=2000, epsabs=1e-13, epsrel=1e-12)[0]
    for w, freq in ((6, k), (-4, k - 1), (-4, k + 1), (1, k - 2), (1, k + 2)):
        freq = abs(freq)
        if freq == 0:
            total += w * (-(L ** (p + 1)) / (p + 1))
        else:
            total += w * quad(lambda x: x**p, L, np.inf, weight="cos", wvar=freq, limlst=200)[0]
    return total / math.pi


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_toeplitz_entries_match_fourier_oracle(s, k):
    row = toeplitz_row(s, 4)
    assert row[k] == pytest.approx(fourier_entry(s, k), rel=1e-5, abs=1e-8)


def test_s1_is_gradient_stiffness():
    mesh = DomainMesh(0.0, 1.0, 3)
    h = 0.25
    expected = (np.diag([2.0] * 3) - np.diag([1.0] * 2, 1) - np.diag([1.0] * 2, -1)) / h
    np.testing.assert_allclose(assemble_fractional_stiffness(mesh, 1.0), expected, rtol=1e-15)


def test_s0_is_mass():
    mesh = DomainMesh(-2.0, 3.0, 17)
    np.testing.assert_array_equal(assemble_fractional_stiffness(mesh, 0.0), assemble_mass(mesh))


def test_single_hat_mass():
    M = assemble_mass(DomainMesh(0.0, 1.0, 1))
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(2 * 0.5 / 3, rel=1e-15)


def test_mass_partition_of_unity():
    mesh = DomainMesh(0.0, 2.0, 200)
    M = assemble_mass(mesh)
    one = np.ones(mesh.n_interior)
    # the two boundary half-hats are missing from the interior partition
    assert one @ M @ one == pytest.approx(mesh.length, abs=2 * mesh.h)
    np.testing.assert_allclose(M.sum(axis=1)[1:-1], mesh.h, rtol=1e-14)
    np.testing.assert_array_equal(M, M.T)


@pytest.mark.parametrize("s", [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
def test_symmetric_positive_definite(s):
    A = assemble_fractional_stiffness(DomainMesh(0.0, PI, 96), s)
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    assert np.linalg.eigvalsh(A)[0] > 0


def test_out_of_range_exponent():
    with pytest.raises(AssemblyError, match="exponent outside"):
        assemble_fractional_stiffness(DomainMesh(0.0, 1.0, 4), 1.2)
    with pytest.raises(AssemblyError):
        assemble_operator(DomainMesh(0.0, 1.0, 4), [(-0.1, 1.0)], 0.5)


def test_mesh_validation():
    with pytest.raises(AssemblyError):
        DomainMesh(1.0, 0.0, 4)
    with pytest.raises(AssemblyError):
        DomainMesh(0.0, 1.0, 2048)


def test_normalization_limits():
    assert normalization_constant(0.0) == 0.0
    assert normalization_constant(0.5) == pytest.approx(1 / math.pi)
    assert normalization_constant(1.0) == 0.0
    assert 0 < normalization_constant(0.999) < 0.01


def test_endpoint_continuity():
    mesh = DomainMesh(0.0, PI, 64)
    A1, M = assemble_fractional_stiffness(mesh, 1.0), assemble_mass(mesh)
    up = [np.max(np.abs(assemble_fractional_stiffness(mesh, s) - A1)) for s in (0.9, 0.99, 0.999)]
    down = [np.max(np.abs(assemble_fractional_stiffness(mesh, s) - M)) for s in (0.1, 0.01, 0.001)]
    assert up[0] > up[1] > up[2]
    assert down[0] > down[1] > down[2]
    assert up[2] < 0.01 * np.max(np.abs(A1))
    assert down[2] < 0.01 * np.max(np.abs(M))


def test_superposition_routing():
    mesh = DomainMesh(0.0, PI, 40)
    op = assemble_operator(mesh, [(1.0, 1.0), (0.25, -0.1)], 0.5)
    np.testing.assert_allclose(op.K_minus, 0.1 * assemble_fractional_stiffness(mesh, 0.25), rtol=1e-15)
    np.testing.assert_array_equal(op.K_high, assemble_fractional_stiffness(mesh, 1.0))
    single = assemble_operator(mesh, [(1.0, 1.0)], 0.5)
    assert not np.any(single.K_minus)
    np.testing.assert_array_equal(single.K, assemble_fractional_stiffness(mesh, 1.0))


def test_assembly_is_bitwise_reproducible():
    mesh = DomainMesh(0.0, 1.0, 50)
    atoms = [(0.7, 1.0), (0.3, 0.5), (0.1, -0.05)]
    a = assemble_operator(mesh, atoms, 0.5)
    b = assemble_operator(mesh, atoms, 0.5)
    assert a.K.tobytes() == b.K.tobytes()


def test_getoor_convergence_s_half():
    errs = []
    for n in (64, 128, 256):
        mesh = DomainMesh(-1.0, 1.0, n)
        A, M = assemble_fractional_stiffness(mesh, 0.5), assemble_mass(mesh)
        u = np.linalg.solve(A, M @ np.ones(n))
        e = u - getoor_solution(mesh.nodes, -1.0, 1.0, 0.5)
        errs.append(math.sqrt(e @ M @ e))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / errs[0] < 0.5


def test_domination_identity(family64):
    for s in (0.0, 0.5, 1.0):
        assert domination_constant(family64[s], family64[s]) == pytest.approx(1.0, rel=1e-12)


def test_domination_mass_vs_gradient(family64):
    A1, M = family64[1.0], family64[0.0]
    lam1 = eigh(A1, M, eigvals_only=True)[0]
    assert domination_constant(M, A1) == pytest.approx(1.0 / lam1, rel=1e-10)


def test_domination_bound_holds(family64, rng):
    A_lo, A_hi = family64[0.25], family64[0.75]
    c = domination_constant(A_lo, A_hi)
    U = rng.standard_normal((A_lo.shape[0], 200))
    ratios = np.einsum("ij,ij->j", U, A_lo @ U) / np.einsum("ij,ij->j", U, A_hi @ U)
    assert np.all(ratios <= c * (1 + 1e-12))


def test_domination_rejects_indefinite():
    with pytest.raises(CertificateError):
        domination_constant(np.eye(3), -np.eye(3))
