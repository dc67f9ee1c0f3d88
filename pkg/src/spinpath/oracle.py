"""Exact reference values: dense matrix exponentials, coherent kernels of
e^{-tH} and e^{-itH}, the high-spin contraction, and a truncated-Fock
canonical oracle.

Hamiltonians are specified either by a bounded symbol (realized through
planar quadrature) or as a sum of monomials in the generators, written in
the compact grammar  "coeff*W1 W2 ... + coeff*W1 ..."  with W in
{J+, J-, J3, I} and coefficients "a", "a+bi" or "a-bi" (no spaces inside a
coefficient).
"""

import re
from dataclasses import dataclass

import numpy as np

from .spin_core import SpinSystem, SpinError, coherent_rep
from .quadrature import reconstruct_operator

MAX_EXP_DIM = 4096
WORDS = ("J+", "J-", "J3", "I")


class OracleError(ValueError):
    pass


class TruncationTailError(OracleError):
    """Coherent weight beyond the Fock truncation too large to trust."""


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

def mat_exp(A, tau=1.0):
    """e^(tau A) by scaling-and-squaring on a Taylor series.

    The scaled matrix has 1-norm <= 0.25, the series is summed to relative
    machine precision, and the result is squared back up.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise OracleError(f"matrix must be square, got {A.shape}")
    if A.shape[0] > MAX_EXP_DIM:
        raise OracleError(f"dimension {A.shape[0]} exceeds maximum {MAX_EXP_DIM}")
    with np.errstate(invalid="ignore", over="ignore"):
        B = complex(tau) * A
    if not np.all(np.isfinite(B)):
        raise OracleError("non-finite entries in tau*A")
    dim = B.shape[0]
    nrm = np.linalg.norm(B, 1)
    if nrm == 0.0:
        return np.eye(dim, dtype=complex)
    s = max(0, int(np.ceil(np.log2(nrm / 0.25))))
    C = B / (2.0 ** s)
    X = np.eye(dim, dtype=complex)
    term = np.eye(dim, dtype=complex)
    for k in range(1, 60):
        term = term @ C / k
        X = X + term
        if np.max(np.abs(term)) <= 1e-17 * max(1.0, np.max(np.abs(X))):
            break
    for _ in range(s):
        X = X @ X
    return X


# ---------------------------------------------------------------------------
# Hamiltonian specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HamiltonianSpec:
    """Either symbol-defined (symbol + j) or monomial-defined (terms + j).

    terms is a tuple of (coefficient, word) pairs, each word a tuple over
    {J+, J-, J3, I}; the realization is the coefficient-weighted sum of
    ordered generator products.  j may be None for an unbound monomial
    template (bind it via with_j or contract_hamiltonian).
    """
    j: float | None = None
    terms: tuple | None = None
    symbol: object | None = None
    declared_hermitian: bool = False

    def __post_init__(self):
        if (self.terms is None) == (self.symbol is None):
            raise OracleError("specify exactly one of terms / symbol")
        if self.symbol is not None and self.j is None:
            raise OracleError("symbol-defined Hamiltonians need a quantum number")

    def with_j(self, j):
        return HamiltonianSpec(j=j, terms=self.terms, symbol=self.symbol,
                               declared_hermitian=self.declared_hermitian)

    @property
    def is_monomial(self):
        return self.terms is not None


def monomial_hamiltonian(terms, j=None, declared_hermitian=False):
    clean = []
    for coeff, word in terms:
        word = tuple(word)
        for w in word:
            if w not in WORDS:
                raise OracleError(f"unknown generator {w!r}; allowed: {WORDS}")
        clean.append((complex(coeff), word))
    return HamiltonianSpec(j=j, terms=tuple(clean), declared_hermitian=declared_hermitian)


def symbol_hamiltonian(symbol, j, declared_hermitian=None):
    if declared_hermitian is None:
        declared_hermitian = symbol.is_real_valued
    return HamiltonianSpec(j=j, symbol=symbol, declared_hermitian=declared_hermitian)


def realize_hamiltonian(spec, quad=None):
    """Dense matrix of the Hamiltonian on C^(2j+1)."""
    if spec.j is None:
        raise OracleError("Hamiltonian template has no quantum number bound")
    if spec.symbol is not None:
        H = reconstruct_operator(spec.symbol, spec.j, quad=quad)
    else:
        sys = SpinSystem(spec.j)
        gens = {"J+": sys.j_plus, "J-": sys.j_minus, "J3": sys.j3,
                "I": np.eye(sys.dim, dtype=complex)}
        H = np.zeros((sys.dim, sys.dim), dtype=complex)
        for coeff, word in spec.terms:
            prod = np.eye(sys.dim, dtype=complex)
            for w in word:
                prod = prod @ gens[w]
            H += coeff * prod
    if spec.declared_hermitian and np.max(np.abs(H - np.conj(H.T))) > 1e-10:
        raise OracleError("Hamiltonian declared Hermitian but realization is not")
    return H


# ---------------------------------------------------------------------------
# text grammar
# ---------------------------------------------------------------------------

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX_RE = re.compile(rf"^({_NUM})(?:([+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i)?$")


def parse_complex(text):
    """Parse 'a', 'a+bi' or 'a-bi' (no spaces) into a complex number."""
    m = _COMPLEX_RE.match(text.strip())
    if not m:
        raise OracleError(f"cannot parse complex literal {text!r} (use a, a+bi or a-bi)")
    re_part = float(m.group(1))
    im_part = float(m.group(2)) if m.group(2) is not None else 0.0
    return complex(re_part, im_part)


def format_complex(c):
    c = complex(c)
    if c.imag == 0:
        return f"{c.real:.17g}"
    return f"{c.real:.17g}{c.imag:+.17g}i"


def _parse_words(text):
    toks = text.split()
    if not toks or any(t not in WORDS for t in toks):
        return None
    return tuple(toks)


def parse_hamiltonian(text, j=None, declared_hermitian=False):
    """Parse the monomial grammar into a HamiltonianSpec.

    Each term is COEFF*WORDS; terms are joined by '+'.  A '+' splits two
    terms exactly when the text to its right starts with a coefficient and
    a '*'; this disambiguates it from the '+' inside J+ and inside complex
    coefficients.  An empty string yields the empty (zero) Hamiltonian.
    """
    text = text.strip()
    if not text:
        return monomial_hamiltonian((), j=j, declared_hermitian=declared_hermitian)
    pieces = text.split("*")
    if len(pieces) < 2:
        raise OracleError(f"no '*' found in Hamiltonian term {text!r}")
    coeffs = [pieces[0].strip()]
    words = []
    for mid in pieces[1:-1]:
        for pos in [m.start() for m in re.finditer(r"\+", mid)][::-1]:
            left, right = mid[:pos], mid[pos + 1:]
            try:
                parse_complex(right)
            except OracleError:
                continue
            if _parse_words(left) is not None:
                words.append(_parse_words(left))
                coeffs.append(right.strip())
                break
        else:
            raise OracleError(f"cannot split {mid!r} into words + next coefficient")
    last = _parse_words(pieces[-1])
    if last is None:
        raise OracleError(f"cannot parse generator words {pieces[-1]!r}")
    words.append(last)
    terms = [(parse_complex(c), w) for c, w in zip(coeffs, words)]
    return monomial_hamiltonian(terms, j=j, declared_hermitian=declared_hermitian)


def format_hamiltonian(spec):
    if not spec.is_monomial:
        raise OracleError("only monomial Hamiltonians have a text form")
    if not spec.terms:
        return ""
    return " + ".join(f"{format_complex(c)}*{' '.join(w) if w else 'I'}"
                      for c, w in spec.terms)


# ---------------------------------------------------------------------------
# exact kernels
# ---------------------------------------------------------------------------

def exact_kernel(spec, t, z, zp, quad=None):
    """Coherent kernel of e^(-tH): amp(z)^dagger e^(-tH) amp(z')."""
    H = realize_hamiltonian(spec, quad=quad)
    return complex(coherent_rep(mat_exp(H, -t), z, zp))


def exact_kernel_unitary(spec, t, z, zp, quad=None):
    """Coherent kernel of e^(-itH) for Hermitian H."""
    H = realize_hamiltonian(spec, quad=quad)
    if np.max(np.abs(H - np.conj(H.T))) > 1e-10:
        raise OracleError("unitary evolution requires a Hermitian Hamiltonian")
    return complex(coherent_rep(mat_exp(H, -1j * t), z, zp))


# ---------------------------------------------------------------------------
# high-spin contraction
# ---------------------------------------------------------------------------

def contract_hamiltonian(spec, j):
    """Rewrite a monomial template with J+- -> J+-/sqrt(2j), J3 -> J3 + j*I.

    Returns the spec bound at quantum number j.
    """
    if not spec.is_monomial:
        raise OracleError("contraction applies to monomial Hamiltonians")
    if j < 0.5:
        raise SpinError(f"contraction needs j >= 1/2, got {j}")
    scale = 1.0 / np.sqrt(2.0 * j)
    out = []
    for coeff, word in spec.terms:
        partial = [(coeff, ())]
        for w in word:
            if w in ("J+", "J-"):
                partial = [(c * scale, ws + (w,)) for c, ws in partial]
            elif w == "I":
                partial = [(c, ws + ("I",)) for c, ws in partial]
            else:  # J3 -> J3 + j*I
                partial = ([(c, ws + ("J3",)) for c, ws in partial]
                           + [(c * j, ws + ("I",)) for c, ws in partial])
        out.extend(partial)
    return monomial_hamiltonian(out, j=j, declared_hermitian=spec.declared_hermitian)


def contraction_kernel_lhs(spec, j, t, z, zp):
    """(pi/2j) <z/sqrt(2j)| e^(-t H_j) |z'/sqrt(2j)> with H_j the contracted spec."""
    contracted = contract_hamiltonian(spec, j)
    s = np.sqrt(2.0 * j)
    return (np.pi / (2.0 * j)) * exact_kernel(contracted, t, z / s, zp / s)


# ---------------------------------------------------------------------------
# truncated-Fock canonical oracle
# ---------------------------------------------------------------------------

class FockSystem:
    """Canonical lowering/raising matrices and coherent amplitudes on a
    Fock space truncated at occupation n_max."""

    def __init__(self, n_max):
        if n_max < 1:
            raise OracleError("n_max must be >= 1")
        self.n_max = int(n_max)
        self.dim = self.n_max + 1
        root = np.sqrt(np.arange(1, self.dim, dtype=float))
        self.lowering = np.diag(root, 1).astype(complex)
        self.raising = np.diag(root, -1).astype(complex)

    def amplitudes(self, z):
        """Normalized coherent coordinates e^(-|z|^2/2) z^n / sqrt(n!)."""
        z = np.asarray(z, dtype=complex)
        out = np.empty((self.dim,) + z.shape, dtype=complex)
        out[0] = np.exp(-np.abs(z) ** 2 / 2.0)
        for n in range(1, self.dim):
            out[n] = out[n - 1] * z / np.sqrt(n)
        return out

    def truncation_tail(self, z):
        """Weight of the coherent vector beyond the truncation, 1 - sum |amp|^2."""
        amp = self.amplitudes(z)
        return np.maximum(0.0, 1.0 - np.sum(np.abs(amp) ** 2, axis=0))


def canonical_overlap(z, zp):
    z, zp = complex(z), complex(zp)
    return np.exp(-(abs(z) ** 2 + abs(zp) ** 2) / 2.0 + np.conj(z) * zp)


def fock_reconstruct(h_hat, n_max, n_theta=None, n_radial=None):
    """Matrix of int (d^2z/pi) h_hat(z) |z>><<z| on the truncated Fock space.

    h_hat may grow polynomially; the Gaussian amplitude envelope makes the
    radial cutoff R = 2 sqrt(n_max) quantifiable.
    """
    fock = FockSystem(n_max)
    if n_theta is None:
        n_theta = 4 * n_max + 16
    if n_radial is None:
        n_radial = max(160, 4 * n_max)
    x, w = np.polynomial.legendre.leggauss(n_radial)
    R = 2.0 * np.sqrt(n_max)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * w * r          # r dr
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    zs = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    ws = (wr[:, None] * np.full(n_theta, 2 * np.pi / n_theta)).ravel() / np.pi
    amps = fock.amplitudes(zs)
    hw = ws * np.asarray(h_hat(zs), dtype=complex)
    if not np.all(np.isfinite(hw)):
        raise OracleError("h_hat not finite at a quadrature node")
    return (amps * hw) @ np.conj(amps.T)


def fock_oracle_kernel(h_hat, n_max, t, z, zp, tail_tol=1e-8):
    """<<z| e^(-t Hhat) |z'>> on the truncated Fock space.

    Aborts when the coherent vectors at z or z' leave more than tail_tol of
    their weight beyond the truncation level.
    """
    fock = FockSystem(n_max)
    tail = float(max(fock.truncation_tail(z), fock.truncation_tail(zp)))
    if tail > tail_tol:
        raise TruncationTailError(
            f"truncation tail {tail:.2e} exceeds {tail_tol:.0e}; raise n_max or shrink |z|")
    H = fock_reconstruct(h_hat, n_max)
    E = mat_exp(H, -t)
    return complex(np.conj(fock.amplitudes(complex(z))) @ (E @ fock.amplitudes(complex(zp))))
