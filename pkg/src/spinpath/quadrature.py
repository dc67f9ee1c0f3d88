"""Planar quadrature over C and operator reconstruction from contravariant symbols.

The measure d^2z is realized in polar form with the substitution
u = |z|^2/(1+|z|^2) in [0, 1], so d^2z = dtheta du / (2 (1-u)^2).  For
half-integer j every reconstruction integrand is a polynomial in u times a
trigonometric polynomial in theta, and the uniform-angle x Gauss-Legendre
product rule is exact.  For non-half-integer j the radial integrand carries
an endpoint factor (1-u)^(2j-2(j)) with exponent in (-1, 0]; the radial rule
is then Gauss-Jacobi with that weight folded into the node weights, which
degrades gracefully to Gauss-Legendre when the exponent is zero.
"""

import numpy as np
from scipy.special import roots_jacobi

from .spin_core import CoherentFamily, SpinError, _twoj
from .symbols import constant_symbol


class QuadratureError(ValueError):
    pass


class QuadratureResolutionError(QuadratureError):
    """Doubling the node counts moved the result more than the allowed tolerance."""


class PlanarQuadrature:
    """Immutable node/weight set (z_i, w_i) with sum w_i f(z_i) ~ int d^2z f(z).

    jacobi_exponent is the (1-u)^gamma endpoint weight split off the radial
    integrand; gamma = 0 gives plain Gauss-Legendre nodes.
    """

    def __init__(self, n_theta, n_radial, jacobi_exponent=0.0):
        if n_theta < 1 or n_radial < 1:
            raise QuadratureError("node counts must be positive")
        if not -1.0 < jacobi_exponent <= 0.0:
            raise QuadratureError(f"jacobi exponent must lie in (-1, 0], got {jacobi_exponent}")
        self.n_theta = int(n_theta)
        self.n_radial = int(n_radial)
        self.jacobi_exponent = float(jacobi_exponent)
        theta = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        if jacobi_exponent == 0.0:
            x, w = np.polynomial.legendre.leggauss(self.n_radial)
            u = 0.5 * (x + 1.0)
            wu = 0.5 * w
        else:
            # int_0^1 (1-u)^g p(u) du = sum wu_i p(u_i); divide the weight
            # back out so that sum w f(z) targets int f d^2z for integrands
            # f carrying the (1-u)^g behaviour.
            x, w = roots_jacobi(self.n_radial, jacobi_exponent, 0.0)
            u = 0.5 * (x + 1.0)
            wu = w * 0.5 ** (jacobi_exponent + 1.0) * (1.0 - u) ** (-jacobi_exponent)
        r = np.sqrt(u / (1.0 - u))
        zs = r[:, None] * np.exp(1j * theta)[None, :]
        ws = (wu / (2.0 * (1.0 - u) ** 2))[:, None] * np.full(self.n_theta, 2 * np.pi / self.n_theta)
        self.nodes = zs.ravel()
        self.weights = ws.ravel()
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def doubled(self):
        return PlanarQuadrature(2 * self.n_theta, 2 * self.n_radial, self.jacobi_exponent)

    def __repr__(self):
        return (f"PlanarQuadrature(n_theta={self.n_theta}, n_radial={self.n_radial}, "
                f"jacobi_exponent={self.jacobi_exponent})")


def default_quadrature(j, generalized=False):
    """Node counts sized so half-integer reconstruction is exact to roundoff."""
    twoj_r = int(np.ceil(round(2 * j, 9)))
    n_theta = max(16, 4 * twoj_r + 8)
    if generalized:
        gamma = 2.0 * j - twoj_r
        if gamma == 0.0:
            return PlanarQuadrature(n_theta, max(12, twoj_r + 8))
        return PlanarQuadrature(n_theta, max(48, twoj_r + 16), gamma)
    return PlanarQuadrature(n_theta, max(12, twoj_r + 8))


def integrate(quad, f):
    """sum_i w_i f(z_i), summed in fixed node order.

    f must be finite at every node; a non-finite value aborts the quadrature.
    """
    vals = np.asarray(f(quad.nodes), dtype=complex)
    if vals.shape != quad.nodes.shape:
        vals = np.broadcast_to(vals, quad.nodes.shape)
    if not np.all(np.isfinite(vals)):
        bad = quad.nodes[~np.isfinite(vals)][0]
        raise QuadratureError(f"integrand not finite at node z = {bad}")
    return complex(np.sum(quad.weights * vals))


def _outer_reconstruct(fam, h, quad):
    amps = fam.amplitudes(quad.nodes)            # (dim, n_nodes)
    hw = quad.weights * np.asarray(h(quad.nodes), dtype=complex)
    if not np.all(np.isfinite(hw)):
        raise QuadratureError("symbol not finite at a quadrature node")
    return (amps * hw) @ np.conj(amps.T)


def reconstruct_operator(h, j, quad=None, check_resolution=True, rtol=1e-8):
    """Matrix int d^2z h(z) amp(z) amp(z)^dagger by quadrature (half-integer j).

    With check_resolution the integral is repeated on a doubled rule and the
    two must agree to rtol (relative to the matrix max-norm), guarding
    against under-resolved quadrature; the doubled-rule value is returned.
    """
    _twoj(j)
    fam = CoherentFamily(j)
    if quad is None:
        quad = default_quadrature(j)
    out = _outer_reconstruct(fam, h, quad)
    if check_resolution:
        fine = _outer_reconstruct(fam, h, quad.doubled())
        scale = max(np.max(np.abs(fine)), 1e-300)
        if np.max(np.abs(fine - out)) > rtol * scale:
            raise QuadratureResolutionError(
                f"quadrature under-resolved: doubling nodes moved the result by "
                f"{np.max(np.abs(fine - out)) / scale:.2e} (> {rtol:.0e}) relative")
        out = fine
    return out


def unity_resolution_residual(j, quad=None):
    """Entrywise max |reconstruct(1) - identity|."""
    one = constant_symbol(1.0)
    mat = reconstruct_operator(one, j, quad=quad)
    return float(np.max(np.abs(mat - np.eye(mat.shape[0]))))


class QuantizationResult:
    """Operator assigned to (j, h) on C^(2(j)+1), j any nonnegative real."""

    def __init__(self, j_input, j_rounded, matrix):
        self.j_input = j_input
        self.j_rounded = j_rounded
        self.matrix = matrix

    @property
    def hermiticity_residual(self):
        return float(np.max(np.abs(self.matrix - np.conj(self.matrix.T))))


def quantize_general_j(j, h, basis=None, quad=None):
    """H_psi = int d^2z h(z) |psi(z)><psi(z)| for real j >= 0.

    |psi(z)> = g(z) sum_n sqrt(C(2j,n)) z^n |psi_n> with {|psi_n>} the columns
    of the unitary `basis` (identity by default).  For half-integer j and the
    identity basis this coincides with reconstruct_operator(h, j).
    """
    if j < 0:
        raise SpinError(f"j must be >= 0, got {j}")
    fam = CoherentFamily(j, generalized=True)
    if np.any(fam.sqrt_binom ** 2 < -1e-12):
        raise AssertionError("negative generalized binomial coefficient")
    if quad is None:
        quad = default_quadrature(j, generalized=True)
    core = _outer_reconstruct(fam, h, quad)
    fine = _outer_reconstruct(fam, h, quad.doubled())
    scale = max(np.max(np.abs(fine)), 1e-300)
    if np.max(np.abs(fine - core)) > 1e-7 * scale:
        raise QuadratureResolutionError("generalized-j quadrature under-resolved")
    core = fine
    if basis is not None:
        basis = np.asarray(basis, dtype=complex)
        if basis.shape != (fam.dim, fam.dim):
            raise QuadratureError(f"basis must be {fam.dim}x{fam.dim}, got {basis.shape}")
        if np.max(np.abs(np.conj(basis.T) @ basis - np.eye(fam.dim))) > 1e-10:
            raise QuadratureError("basis is not unitary")
        core = basis @ core @ np.conj(basis.T)
    return QuantizationResult(j, fam.twoj_rounded / 2, core)


def ac_dimension_formula(j):
    """Largest integer strictly smaller than 2j+2 (the zero-mode count)."""
    if j < 0:
        raise SpinError(f"j must be >= 0, got {j}")
    v = 2.0 * j + 2.0
    if abs(v - round(v)) < 1e-9:
        return int(round(v)) - 1
    return int(np.floor(v))
