"""Finite-dimensional spin algebra and coherent-state kinematics.

Conventions: the (2j+1)-dimensional space is spanned by the ladder basis
e_0, ..., e_{2j}, where e_n is the eigenvector of J3 with eigenvalue n - j.
Index 0 is the spin-down reference vector, so coherent amplitudes are
positional binomial coefficients.  The quantum number is stored internally
as the integer 2j so half-integer arithmetic stays exact.
"""

import numpy as np

MAX_J = 50.0


class SpinError(ValueError):
    pass


def _twoj(j, what="j"):
    """Validate a half-integer quantum number and return the exact integer 2j."""
    twoj = int(round(2 * j))
    if abs(2 * j - twoj) > 1e-9 or twoj < 0:
        raise SpinError(f"{what} must be a nonnegative half-integer, got {j}")
    return twoj


def binomial_coeffs(two_j, n_max):
    """C(2j, n) for n = 0..n_max via the recursion C(2j, n+1) = (2j-n)/(n+1) C(2j, n).

    two_j may be any nonnegative real; this is the generalized binomial used
    by the real-j coherent family.
    """
    c = np.empty(n_max + 1)
    c[0] = 1.0
    for n in range(n_max):
        c[n + 1] = c[n] * (two_j - n) / (n + 1)
    return c


class SpinSystem:
    """Matrices of J+, J-, J3 in the ladder basis for a fixed quantum number j."""

    def __init__(self, j):
        twoj = _twoj(j)
        if j > MAX_J:
            raise SpinError(f"j = {j} exceeds the configured maximum {MAX_J}")
        self.twoj = twoj
        self.dim = twoj + 1
        n = np.arange(self.dim, dtype=float)
        # J+ e_n = sqrt((2j-n)(n+1)) e_{n+1},  J- e_n = sqrt(n(2j-n+1)) e_{n-1}
        up = np.sqrt((twoj - n[:-1]) * (n[:-1] + 1))
        self.j_plus = np.diag(up, -1).astype(complex)
        self.j_minus = np.diag(up, 1).astype(complex)
        self.j3 = np.diag(n - twoj / 2).astype(complex)
        for mat in (self.j_plus, self.j_minus, self.j3):
            mat.setflags(write=False)

    @property
    def j(self):
        return self.twoj / 2

    def casimir(self):
        return 0.5 * (self.j_plus @ self.j_minus + self.j_minus @ self.j_plus) + self.j3 @ self.j3

    def __repr__(self):
        return f"SpinSystem(j={self.j})"


def build_spin_system(j):
    return SpinSystem(j)


def weight_g(j, z):
    """Positive normalization prefactor ((2j+1)/pi)^(1/2) (1+|z|^2)^(-j-1).

    Accepts any real j >= 0 and scalar or array z.
    """
    if j < 0:
        raise SpinError(f"j must be >= 0, got {j}")
    z = np.asarray(z)
    return np.sqrt((2 * j + 1) / np.pi) * (1.0 + np.abs(z) ** 2) ** (-j - 1.0)


class CoherentFamily:
    """Coherent amplitudes amp(z)[n] = g(z) sqrt(C(2j,n)) z^n.

    For half-integer j this reproduces the coordinates of the coherent
    vector |z> in the ladder basis.  With generalized=True any real j >= 0
    is accepted; the family then lives on C^(2(j)+1) where (j) is the
    smallest half-integer >= j.
    """

    def __init__(self, j, generalized=False):
        if generalized:
            if j < 0:
                raise SpinError(f"j must be >= 0, got {j}")
            self.j = float(j)
            self.twoj_rounded = int(np.ceil(round(2 * j, 9)))
        else:
            self.twoj_rounded = _twoj(j)
            self.j = self.twoj_rounded / 2
        self.dim = self.twoj_rounded + 1
        self.sqrt_binom = np.sqrt(binomial_coeffs(2 * self.j, self.twoj_rounded))

    def amplitudes(self, z):
        """Amplitude vector(s); returns shape (dim,) + shape(z)."""
        z = np.asarray(z, dtype=complex)
        powers = z[None, ...] ** np.arange(self.dim).reshape((self.dim,) + (1,) * z.ndim)
        return weight_g(self.j, z) * self.sqrt_binom.reshape((self.dim,) + (1,) * z.ndim) * powers

    def overlap_from_amplitudes(self, z, zp):
        a, b = self.amplitudes(z), self.amplitudes(zp)
        return np.sum(np.conj(a) * b, axis=0)


def coherent_overlap(j, z, zp):
    """Closed-form overlap g(z) g(z') (1 + z* z')^(2j) for half-integer j."""
    twoj = _twoj(j)
    z = np.asarray(z, dtype=complex)
    zp = np.asarray(zp, dtype=complex)
    return weight_g(j, z) * weight_g(j, zp) * (1.0 + np.conj(z) * zp) ** twoj


def coherent_rep(B, z, zp):
    """Kernel amp(z)^dagger B amp(z') of an operator B between coherent vectors.

    The quantum number is inferred from the matrix dimension (dim = 2j+1).
    """
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise SpinError(f"operator must be square, got shape {B.shape}")
    fam = CoherentFamily((B.shape[0] - 1) / 2)
    a = fam.amplitudes(z)
    b = fam.amplitudes(zp)
    return np.conj(a) @ (B @ b)


def polynomial_structure_check(j, psi, n_fit=None, n_test=24, seed=12345):
    """Max residual of fitting z -> <z|psi>/g(z) by a degree-2j polynomial in z*.

    Fits on >= 4j+4 sample points and evaluates the residual on a disjoint
    test set; both sets are drawn from a fixed-seed complex Gaussian cloud.
    """
    fam = CoherentFamily(j)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (fam.dim,):
        raise SpinError(f"psi must have length {fam.dim}, got {psi.shape}")
    deg = fam.twoj_rounded
    if n_fit is None:
        n_fit = 2 * deg + 8  # >= 4j + 4 with margin
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n_fit + n_test, 2)) @ np.array([1.0, 1.0j])
    fit_pts, test_pts = pts[:n_fit], pts[n_fit:]

    def values(zs):
        return (np.conj(fam.amplitudes(zs)).T @ psi) / weight_g(j, zs)

    vander = np.conj(fit_pts)[:, None] ** np.arange(deg + 1)[None, :]
    coeffs, *_ = np.linalg.lstsq(vander, values(fit_pts), rcond=None)
    vander_test = np.conj(test_pts)[:, None] ** np.arange(deg + 1)[None, :]
    return float(np.max(np.abs(vander_test @ coeffs - values(test_pts))))
