import numpy as np
import pytest
from scipy.integrate import quad

from spinpath.quadrature import (PlanarQuadrature, QuadratureError,
                                 QuadratureResolutionError, ac_dimension_formula,
                                 default_quadrature, integrate,
                                 quantize_general_j, reconstruct_operator,
                                 unity_resolution_residual)
from spinpath.spin_core import SpinSystem, binomial_coeffs, weight_g
from spinpath.symbols import (SymbolError, SymbolFn, TABLE_NAMES, combine_symbols,
                              constant_symbol, symbol_from_json, table_symbol)


def direct_matrices(j):
    s = SpinSystem(j)
    return {"J+": s.j_plus, "J-": s.j_minus, "J3": s.j3,
            "J+J-": s.j_plus @ s.j_minus, "J-J+": s.j_minus @ s.j_plus,
            "J3^2": s.j3 @ s.j3}


def test_table_values():
    assert table_symbol("J3", 1)(0j) == pytest.approx(-2.0)
    for j in (0.5, 1, 2.5):
        assert abs(table_symbol("J3", j)(np.exp(0.7j))) < 1e-14
    assert table_symbol("J+J-", 0.5)(0j) == pytest.approx(-3.0)


def test_unknown_symbol():
    with pytest.raises(SymbolError):
        table_symbol("J1", 1)


@pytest.mark.parametrize("name", TABLE_NAMES)
@pytest.mark.parametrize("j", [0.5, 1, 2, 3.5])
def test_declared_bounds_hold(name, j):
    h = table_symbol(name, j)
    r = np.concatenate([np.linspace(0, 20, 400), np.geomspace(20, 1e5, 50)])
    zs = (r[:, None] * np.exp(1j * np.linspace(0, 2 * np.pi, 17)[:-1])[None, :]).ravel()
    vals = np.abs(h(zs))
    assert np.max(vals) <= h.sup_norm_bound * (1 + 1e-12)
    # the bound is tight, not just an overestimate
    assert np.max(vals) > 0.8 * h.sup_norm_bound


def test_bound_violation_rejected():
    with pytest.raises(SymbolError):
        SymbolFn("bad", lambda z: 2.0 * np.ones_like(z), 1.0, True)


def test_combine_symbols_linear():
    j = 1.0
    h1, h2 = table_symbol("J3", j), table_symbol("J3^2", j)
    combo = combine_symbols([(2.0, h1), (-0.5j, h2)])
    zs = np.array([0.2 + 0.1j, -1.5 + 2j])
    assert np.allclose(combo(zs), 2.0 * h1(zs) - 0.5j * h2(zs))
    assert combo.sup_norm_bound == pytest.approx(2 * h1.sup_norm_bound + 0.5 * h2.sup_norm_bound)
    assert not combo.is_real_valued
    doc = {"terms": [{"name": "J3", "coeff_re": 1.0}]}
    assert symbol_from_json(doc, j)(0.3 + 0j) == pytest.approx(table_symbol("J3", j)(0.3 + 0j))


def brute_radial(f, rmax=np.inf):
    # independent high-accuracy oracle for rotation-invariant integrands
    val, err = quad(lambda r: 2 * np.pi * r * f(r), 0, rmax, limit=400)
    assert err < 1e-7
    return val


def test_integrate_weight_squared():
    # oracle: int d^2z g(z)^2 via adaptive radial quadrature; the value is the
    # (0,0) diagonal entry of the resolution of unity, hence exactly 1
    j = 0.5
    oracle = brute_radial(lambda r: weight_g(j, r) ** 2)
    assert oracle == pytest.approx(1.0, abs=1e-10)
    q = default_quadrature(j)
    got = integrate(q, lambda z: weight_g(j, z).astype(complex) ** 2)
    assert got.real == pytest.approx(oracle, abs=1e-12)
    assert abs(got.imag) < 1e-14


def test_integrate_norm_gives_trace():
    j = 1.0
    oracle = brute_radial(lambda r: ((2 * j + 1) / np.pi) * (1 + r ** 2) ** (-2))
    assert oracle == pytest.approx(3.0, abs=1e-9)
    q = default_quadrature(j)
    got = integrate(q, lambda z: ((2 * j + 1) / np.pi) * (1 + np.abs(z) ** 2) ** (-2.0) + 0j)
    assert got.real == pytest.approx(3.0, abs=1e-11)


def test_integrate_zero_and_nonfinite():
    q = default_quadrature(0.5)
    assert integrate(q, lambda z: np.zeros_like(z)) == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(QuadratureError):
            integrate(q, lambda z: 1.0 / (z - q.nodes[3]))


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2])
def test_reconstruct_table_symbols(j):
    mats = direct_matrices(j)
    for name in TABLE_NAMES:
        got = reconstruct_operator(table_symbol(name, j), j)
        assert np.max(np.abs(got - mats[name])) < 1e-10


def test_reconstruct_identity_and_linearity():
    j = 1.0
    eye = reconstruct_operator(constant_symbol(1.0), j)
    assert np.max(np.abs(eye - np.eye(3))) < 1e-12
    h1, h2 = table_symbol("J3", j), table_symbol("J-J+", j)
    a, b = 0.7, -1.3
    combo = combine_symbols([(a, h1), (b, h2)])
    lhs = reconstruct_operator(combo, j)
    rhs = a * reconstruct_operator(h1, j) + b * reconstruct_operator(h2, j)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.parametrize("j", [0.5, 2, 5])
@pytest.mark.parametrize("name", TABLE_NAMES)
def test_reconstruct_doubling_stable(j, name):
    h = table_symbol(name, j)
    base = reconstruct_operator(h, j, check_resolution=False)
    fine = reconstruct_operator(h, j, quad=default_quadrature(j).doubled(),
                                check_resolution=False)
    assert np.max(np.abs(base - fine)) < 1e-10


def test_under_resolution_detected():
    with pytest.raises(QuadratureResolutionError):
        reconstruct_operator(table_symbol("J3^2", 3), 3,
                             quad=PlanarQuadrature(5, 3))


def test_unity_residuals():
    assert unity_resolution_residual(0) < 1e-12
    assert unity_resolution_residual(1.5) < 1e-10
    assert unity_resolution_residual(5) < 1e-10


def test_quantize_matches_reconstruction_for_half_integer():
    j = 1.0
    h = table_symbol("J3", j)
    q = quantize_general_j(j, h)
    assert q.j_rounded == 1.0
    assert np.max(np.abs(q.matrix - reconstruct_operator(h, j))) < 1e-10


def test_quantize_unity_beta_oracle():
    # diagonal entries are Beta integrals: (2j+1) C(2j,n) B(n+1, 2j-n+1) = 1
    j = 0.7
    dim = 3
    coeffs = binomial_coeffs(2 * j, dim - 1)
    for n in range(dim):
        val, err = quad(lambda u, n=n: u ** n * (1 - u) ** (2 * j - n), 0, 1)
        assert (2 * j + 1) * coeffs[n] * val == pytest.approx(1.0, abs=1e-9)
    q = quantize_general_j(j, constant_symbol(1.0))
    assert np.max(np.abs(q.matrix - np.eye(dim))) < 1e-8


@pytest.mark.parametrize("j", [0.3, 0.7, 1.2, 2.6])
def test_quantize_unity_general(j):
    q = quantize_general_j(j, constant_symbol(1.0))
    dim = q.matrix.shape[0]
    assert np.max(np.abs(q.matrix - np.eye(dim))) < 1e-8


def test_quantize_hermitian_and_basis():
    j = 0.7
    h = table_symbol("J3", j)
    assert quantize_general_j(j, h).hermiticity_residual < 1e-10
    rng = np.random.default_rng(2)
    basis = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0]
    q = quantize_general_j(j, constant_symbol(1.0), basis=basis)
    assert np.max(np.abs(q.matrix - np.eye(3))) < 1e-8
    with pytest.raises(QuadratureError):
        quantize_general_j(j, h, basis=np.ones((3, 3)))


def test_ac_dimension():
    assert ac_dimension_formula(0.5) == 2
    assert ac_dimension_formula(0.7) == 3
    assert ac_dimension_formula(0) == 1
    rng = np.random.default_rng(4)
    for j in rng.uniform(0, 10, 40):
        d = ac_dimension_formula(j)
        assert d < 2 * j + 2 <= d + 1 + 1e-9
