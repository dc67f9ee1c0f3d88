import numpy as np
import pytest
import scipy.linalg

from spinpath.oracle import (FockSystem, OracleError, TruncationTailError,
                             canonical_overlap, contract_hamiltonian,
                             contraction_kernel_lhs, exact_kernel,
                             exact_kernel_unitary, fock_oracle_kernel,
                             fock_reconstruct, format_complex,
                             format_hamiltonian, mat_exp, monomial_hamiltonian,
                             parse_complex, parse_hamiltonian,
                             realize_hamiltonian, symbol_hamiltonian)
from spinpath.spin_core import SpinSystem, coherent_overlap, coherent_rep
from spinpath.symbols import ZERO_SYMBOL, table_symbol

J3_TEMPLATE = parse_hamiltonian("1*J3")


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

def test_mat_exp_basics():
    assert np.allclose(mat_exp(np.zeros((3, 3))), np.eye(3))
    s = SpinSystem(0.5)
    t = 0.8
    assert np.max(np.abs(mat_exp(s.j3, -t) - np.diag([np.exp(t / 2), np.exp(-t / 2)]))) < 1e-14


def test_mat_exp_matches_scipy_and_eigh():
    rng = np.random.default_rng(17)
    for dim in (2, 5, 9):
        A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        assert np.max(np.abs(mat_exp(A) - scipy.linalg.expm(A))) < 1e-11
        H = A + np.conj(A.T)
        w, V = np.linalg.eigh(H)
        tau = -0.63
        via_eigh = (V * np.exp(tau * w)) @ np.conj(V.T)
        assert np.max(np.abs(mat_exp(H, tau) - via_eigh)) < 1e-11
        U = mat_exp(H, -0.4j)
        assert np.max(np.abs(np.conj(U.T) @ U - np.eye(dim))) < 1e-11


def test_mat_exp_rejects_bad_input():
    with pytest.raises(OracleError):
        mat_exp(np.zeros((2, 3)))
    with pytest.raises(OracleError):
        mat_exp(np.array([[np.inf, 0], [0, 0]]))


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

def test_parse_complex():
    assert parse_complex("0.5") == 0.5
    assert parse_complex("-0.1+0.3i") == complex(-0.1, 0.3)
    assert parse_complex("1-2i") == complex(1, -2)
    assert parse_complex("1e-3+2.5e2i") == complex(1e-3, 250)
    for bad in ("", "i", "2i", "1 + 2i", "abc"):
        with pytest.raises(OracleError):
            parse_complex(bad)


def test_grammar_roundtrip():
    text = "1+2i*J3 + 0.5*J+ J- + -1*I"
    spec = parse_hamiltonian(text)
    assert spec.terms == (((1 + 2j), ("J3",)), (0.5 + 0j, ("J+", "J-")), ((-1 + 0j), ("I",)))
    again = parse_hamiltonian(format_hamiltonian(spec))
    assert again.terms == spec.terms
    assert parse_hamiltonian("").terms == ()


def test_grammar_errors():
    for bad in ("J3", "1*J1", "1*J3 - 2*I", "x*J3"):
        with pytest.raises(OracleError):
            parse_hamiltonian(bad)


def test_realization():
    s = SpinSystem(1)
    H = realize_hamiltonian(parse_hamiltonian("1*J+ J- + 0.5*I", j=1))
    assert np.max(np.abs(H - (s.j_plus @ s.j_minus + 0.5 * np.eye(3)))) < 1e-14
    with pytest.raises(OracleError):
        realize_hamiltonian(monomial_hamiltonian([(1j, ("J3",))], j=1,
                                                 declared_hermitian=True))
    with pytest.raises(OracleError):
        realize_hamiltonian(J3_TEMPLATE)  # no quantum number bound


# ---------------------------------------------------------------------------
# exact kernels
# ---------------------------------------------------------------------------

def test_exact_kernel_values():
    z, zp = 0.3 - 0.1j, 0.2 + 0.4j
    spec0 = symbol_hamiltonian(ZERO_SYMBOL, 0.5)
    assert exact_kernel(spec0, 0.7, z, zp) == pytest.approx(coherent_overlap(0.5, z, zp), abs=1e-12)
    spec = J3_TEMPLATE.with_j(0.5)
    assert exact_kernel(spec, 1.0, 0, 0) == pytest.approx((2 / np.pi) * np.exp(0.5), abs=1e-12)
    via_symbol = symbol_hamiltonian(table_symbol("J3", 0.5), 0.5)
    assert exact_kernel(via_symbol, 0.8, z, zp) == pytest.approx(
        exact_kernel(J3_TEMPLATE.with_j(0.5), 0.8, z, zp), abs=1e-10)


def test_semigroup_property():
    spec = parse_hamiltonian("0.7*J3 + 0.3*J+ J-", j=1.5)
    H = realize_hamiltonian(spec)
    z, zp = 0.5, -0.2 + 0.6j
    t1, t2 = 0.4, 0.9
    lhs = exact_kernel(spec, t1 + t2, z, zp)
    rhs = coherent_rep(mat_exp(H, -t1) @ mat_exp(H, -t2), z, zp)
    assert abs(lhs - rhs) < 1e-11


def test_kernel_hermitian_symmetry():
    spec = parse_hamiltonian("1*J3 + 0.25*J+ + 0.25*J-", j=1, declared_hermitian=True)
    z, zp = 0.3 + 0.2j, -0.5 - 0.1j
    assert exact_kernel(spec, 0.6, z, zp) == pytest.approx(
        np.conj(exact_kernel(spec, 0.6, zp, z)), abs=1e-12)


def test_unitary_kernel():
    z, zp = 0.4 + 0.1j, -0.2 + 0.3j
    spec = J3_TEMPLATE.with_j(0.5)
    assert exact_kernel_unitary(spec, 0.0, z, zp) == pytest.approx(
        coherent_overlap(0.5, z, zp), abs=1e-13)
    # closed form at z = z' = 0: g(0)^2 e^(i t j)
    t = np.pi
    assert exact_kernel_unitary(spec, t, 0, 0) == pytest.approx(
        (2 / np.pi) * np.exp(0.5j * t), abs=1e-12)
    bound = np.sqrt(coherent_overlap(0.5, z, z).real * coherent_overlap(0.5, zp, zp).real)
    assert abs(exact_kernel_unitary(spec, 1.3, z, zp)) <= bound + 1e-12
    with pytest.raises(OracleError):
        exact_kernel_unitary(parse_hamiltonian("1*J+", j=0.5), 1.0, z, zp)


# ---------------------------------------------------------------------------
# contraction and the Fock oracle
# ---------------------------------------------------------------------------

def test_contract_rules():
    c = contract_hamiltonian(J3_TEMPLATE, 5)
    H = realize_hamiltonian(c)
    assert np.allclose(np.sort(np.diag(H).real), np.arange(11))
    ladder = contract_hamiltonian(parse_hamiltonian("1*J+ J-"), 2)
    s = SpinSystem(2)
    assert np.max(np.abs(realize_hamiltonian(ladder) - s.j_plus @ s.j_minus / 4)) < 1e-14
    assert contract_hamiltonian(parse_hamiltonian(""), 3).terms == ()
    with pytest.raises(Exception):
        contract_hamiltonian(J3_TEMPLATE, 0)


def test_contraction_limits():
    # t = 0: the rescaled overlap approaches the canonical coherent overlap
    z, zp = 0.4 + 0.2j, -0.3 + 0.5j
    target = canonical_overlap(z, zp)
    dists = [abs(contraction_kernel_lhs(J3_TEMPLATE, j, 0.0, z, zp) - target)
             for j in (5, 10, 20, 40)]
    assert all(a > b for a, b in zip(dists, dists[1:]))
    assert contraction_kernel_lhs(J3_TEMPLATE, 5, 0.0, 0, 0) == pytest.approx(1.1, abs=1e-12)


def test_fock_system():
    fock = FockSystem(48)
    comm = fock.lowering @ fock.raising - fock.raising @ fock.lowering
    assert np.max(np.abs(comm[:40, :40] - np.eye(40))) < 1e-12
    # normalization tail within the trusted disk |z|^2 <= n_max/4
    assert fock.truncation_tail(np.sqrt(12.0)) < 1e-12


def test_fock_oracle_values():
    t = 1.0
    z, zp = 0.3, 0.2 + 0.1j
    assert fock_oracle_kernel(lambda w: np.zeros_like(w), 32, t, z, zp) == pytest.approx(
        canonical_overlap(z, zp), abs=1e-10)
    assert fock_oracle_kernel(lambda w: np.ones_like(w), 32, 0.7, z, zp) == pytest.approx(
        np.exp(-0.7) * canonical_overlap(z, zp), abs=1e-10)
    # |z|^2 quantizes anti-normally to a a^dag = N + 1
    assert fock_oracle_kernel(lambda w: np.abs(w) ** 2 + 0j, 48, t, 0, 0) == pytest.approx(
        np.exp(-t), abs=1e-10)
    fock = FockSystem(48)
    built = fock_reconstruct(lambda w: np.abs(w) ** 2 + 0j, 48)
    direct = fock.lowering @ fock.raising
    assert np.max(np.abs(built[:36, :36] - direct[:36, :36])) < 1e-8
    with pytest.raises(TruncationTailError):
        fock_oracle_kernel(lambda w: np.zeros_like(w), 16, t, 4.0, 0)


def test_contraction_vs_fock_oracle():
    # shifted generator: symbol limit is |z|^2 - 1, quantizing to the number operator
    t, z, zp = 0.5, 0.3, -0.2 + 0.1j
    target = fock_oracle_kernel(lambda w: np.abs(w) ** 2 - 1.0 + 0j, 48, t, z, zp)
    exact = canonical_overlap(z, zp) ** 0 * np.exp(
        -(abs(z) ** 2 + abs(zp) ** 2) / 2 + np.conj(z) * zp * np.exp(-t))
    assert target == pytest.approx(exact, abs=1e-9)
    dists = [abs(contraction_kernel_lhs(J3_TEMPLATE, j, t, z, zp) - target)
             for j in (5, 10, 20, 40)]
    assert all(a > b for a, b in zip(dists, dists[1:]))


def test_format_complex_roundtrip():
    for c in (0.5, -1.25 + 3e-7j, 2j, -0.1 + 0.3j):
        assert parse_complex(format_complex(c)) == complex(c)
