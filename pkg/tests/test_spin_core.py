import numpy as np
import pytest
from scipy.linalg import expm

from spinpath.spin_core import (CoherentFamily, SpinError, build_spin_system,
                                coherent_overlap, coherent_rep,
                                polynomial_structure_check, weight_g)

J_GRID = [k / 2 for k in range(21)]   # every half-integer from 0 through 10


@pytest.mark.parametrize("j", J_GRID)
def test_algebra_invariants(j):
    s = build_spin_system(j)
    eye = np.eye(s.dim)
    comm = s.j_plus @ s.j_minus - s.j_minus @ s.j_plus
    assert np.max(np.abs(comm - 2 * s.j3)) < 1e-12
    assert np.max(np.abs(s.j3 @ s.j_plus - s.j_plus @ s.j3 - s.j_plus)) < 1e-12
    assert np.max(np.abs(s.j3 @ s.j_minus - s.j_minus @ s.j3 + s.j_minus)) < 1e-12
    assert np.max(np.abs(s.casimir() - j * (j + 1) * eye)) < 1e-12
    # index 0 is the lowest-weight reference vector
    e0 = np.zeros(s.dim)
    e0[0] = 1.0
    assert np.linalg.norm(s.j_minus @ e0) == 0.0


def test_small_systems():
    s0 = build_spin_system(0)
    assert s0.dim == 1 and np.all(s0.j_plus == 0) and np.all(s0.j3 == 0)
    s = build_spin_system(0.5)
    assert np.allclose(np.diag(s.j3), [-0.5, 0.5])
    assert np.allclose(s.casimir(), 0.75 * np.eye(2))
    assert np.allclose(build_spin_system(1).casimir(), 2 * np.eye(3))


def test_rejects_bad_j():
    with pytest.raises(SpinError):
        build_spin_system(0.3)
    with pytest.raises(SpinError):
        build_spin_system(-0.5)
    with pytest.raises(SpinError):
        build_spin_system(51)


def test_weight_values():
    assert weight_g(0.5, 0) == pytest.approx(np.sqrt(2 / np.pi), abs=1e-15)
    assert weight_g(0, 0) == pytest.approx(np.sqrt(1 / np.pi), abs=1e-15)
    # monotone decay in |z|
    r = np.linspace(0, 50, 400)
    for j in (0, 0.5, 2):
        vals = weight_g(j, r)
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < 1e-3


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2, 3])
def test_amplitudes_match_exponential_oracle(j):
    # independent oracle: g(z) e^(z J+) applied to the reference vector
    s = build_spin_system(j)
    fam = CoherentFamily(j)
    rng = np.random.default_rng(7)
    e0 = np.zeros(s.dim, dtype=complex)
    e0[0] = 1.0
    for z in rng.normal(size=(6, 2)) @ [1, 1j]:
        oracle = weight_g(j, z) * (expm(z * s.j_plus) @ e0)
        assert np.max(np.abs(fam.amplitudes(z) - oracle)) < 1e-12


@pytest.mark.parametrize("j", [0, 0.5, 1, 2, 4])
def test_overlap_closed_form(j):
    fam = CoherentFamily(j)
    rng = np.random.default_rng(11)
    for z, zp in rng.normal(size=(8, 2, 2)) @ [1, 1j]:
        closed = coherent_overlap(j, z, zp)
        assert abs(fam.overlap_from_amplitudes(z, zp) - closed) < 1e-12
        assert abs(closed - np.conj(coherent_overlap(j, zp, z))) < 1e-14


def test_overlap_values():
    assert coherent_overlap(0.5, 0, 0) == pytest.approx(2 / np.pi, abs=1e-14)
    assert coherent_overlap(0.5, 1, 1) == pytest.approx(1 / (2 * np.pi), abs=1e-14)
    # zero of the closed form at 1 + z* z' = 0
    assert abs(coherent_overlap(1, 1, -1)) < 1e-14


@pytest.mark.parametrize("j", [0, 0.5, 1, 2.5])
def test_norm_identity(j):
    rng = np.random.default_rng(3)
    for z in rng.normal(size=(6, 2)) @ [1, 1j]:
        expected = ((2 * j + 1) / np.pi) * (1 + abs(z) ** 2) ** (-2)
        assert coherent_overlap(j, z, z).real == pytest.approx(expected, rel=1e-12)


def test_coherent_rep_special_cases():
    s = build_spin_system(0.5)
    # identity reduces to the overlap
    z, zp = 0.4 + 0.2j, -0.3 + 0.1j
    assert abs(coherent_rep(np.eye(2), z, zp) - coherent_overlap(0.5, z, zp)) < 1e-14
    # diagonal exponential against its closed form, lam = 1
    lam = 1.0
    B = expm(2 * lam * s.j3)
    assert coherent_rep(B, 0, 0) == pytest.approx((2 / np.pi) * np.exp(-1), abs=1e-13)
    assert coherent_rep(s.j3, 0, 0) == pytest.approx(-1 / np.pi, abs=1e-14)


def test_coherent_rep_sesquilinear():
    rng = np.random.default_rng(5)
    for j in (0.5, 1, 2):
        dim = int(2 * j) + 1
        B = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        z, zp = 0.3 - 0.2j, 0.1 + 0.5j
        lhs = coherent_rep(np.conj(B.T), z, zp)
        rhs = np.conj(coherent_rep(B, zp, z))
        assert abs(lhs - rhs) < 1e-12


def test_coherent_rep_rejects_nonsquare():
    with pytest.raises(SpinError):
        coherent_rep(np.zeros((2, 3)), 0, 0)


def test_polynomial_structure():
    # reference vector: constant polynomial, residual at rounding level
    e0 = np.array([1.0, 0.0], dtype=complex)
    assert polynomial_structure_check(0.5, e0) < 1e-12
    rng = np.random.default_rng(9)
    for j in (0.5, 1, 2):
        dim = int(2 * j) + 1
        psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        assert polynomial_structure_check(j, psi) < 1e-10
    # top basis vector of j=1 pairs with the quadratic monomial alone
    fam = CoherentFamily(1)
    zs = np.array([0.3 + 0.1j, -0.7 + 0.4j, 1.1 - 0.2j])
    vals = np.conj(fam.amplitudes(zs)[2]) / weight_g(1, zs)
    assert np.max(np.abs(vals - np.conj(zs) ** 2)) < 1e-12
