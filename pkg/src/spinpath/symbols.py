"""Registry of contravariant symbols: bounded continuous functions on C
that represent spin operators in pseudodiagonal form.

Every symbol carries an explicit finite sup-norm bound.  The bound is part
of the contract (it feeds Monte Carlo diagnostics), so constructing a
SymbolFn samples the function on a dense grid and rejects declared bounds
that the samples exceed.
"""

import numpy as np


class SymbolError(ValueError):
    pass


def _check_bound(fn, bound, is_real):
    # dense radial/angular cloud plus a far tail; statistical, not a proof
    r = np.concatenate([np.linspace(0, 8, 241), np.geomspace(8, 1e4, 40)])
    th = np.linspace(0, 2 * np.pi, 37)[:-1]
    zs = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    vals = np.asarray(fn(zs), dtype=complex)
    if not np.all(np.isfinite(vals)):
        raise SymbolError("symbol evaluates to a non-finite value")
    peak = float(np.max(np.abs(vals)))
    if peak > bound * (1 + 1e-12) + 1e-12:
        raise SymbolError(f"declared sup-norm bound {bound} exceeded: sampled {peak}")
    if is_real and np.max(np.abs(vals.imag)) > 1e-12 * max(1.0, peak):
        raise SymbolError("symbol declared real-valued but has imaginary part")


class SymbolFn:
    """A named bounded continuous function h: C -> C with a declared sup-norm bound."""

    def __init__(self, name, fn, sup_norm_bound, is_real_valued, _validate=True):
        if not np.isfinite(sup_norm_bound) or sup_norm_bound < 0:
            raise SymbolError(f"sup-norm bound must be finite and >= 0, got {sup_norm_bound}")
        self.name = name
        self.fn = fn
        self.sup_norm_bound = float(sup_norm_bound)
        self.is_real_valued = bool(is_real_valued)
        if _validate:
            _check_bound(fn, self.sup_norm_bound, self.is_real_valued)

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=complex))

    @property
    def is_zero(self):
        return self.sup_norm_bound == 0.0

    def __repr__(self):
        return f"SymbolFn({self.name!r}, sup<={self.sup_norm_bound:g})"


def constant_symbol(c, name=None):
    c = complex(c)
    if name is None:
        name = f"{c.real:g}" if c.imag == 0 else f"{c.real:g}{c.imag:+g}i"
    return SymbolFn(name, lambda z, c=c: np.full_like(z, c, dtype=complex),
                    abs(c), c.imag == 0.0, _validate=False)


ZERO_SYMBOL = constant_symbol(0.0, name="0")


def combine_symbols(terms, name=None):
    """Finite linear combination sum_k c_k h_k of symbols.

    The combined bound is the triangle-inequality bound sum |c_k| sup|h_k|.
    """
    terms = [(complex(c), h) for c, h in terms]

    def fn(z, terms=terms):
        out = np.zeros(np.shape(z), dtype=complex)
        for c, h in terms:
            out += c * h.fn(z)
        return out

    bound = sum(abs(c) * h.sup_norm_bound for c, h in terms)
    real = all(c.imag == 0.0 and h.is_real_valued for c, h in terms)
    if name is None:
        name = "+".join(f"({c.real:g}{c.imag:+g}i)*{h.name}" for c, h in terms)
    return SymbolFn(name, fn, bound, real)


# ---------------------------------------------------------------------------
# the operator/symbol table
#
# J+      2(j+1) z*/(1+|z|^2)
# J-      2(j+1) z /(1+|z|^2)
# J3     -(j+1) (1-|z|^2)/(1+|z|^2)
# J+J-   -2(j+1) (1 - 2(j+1)|z|^2)/(1+|z|^2)^2
# J-J+    2(j+1) (2(j+1)|z|^2 - |z|^4)/(1+|z|^2)^2
# J3^2    (j+1)(j+3/2) ((1-|z|^2)/(1+|z|^2))^2 - (j+1)/2
# ---------------------------------------------------------------------------

def _ladder_bound(j):
    # sup of 2(j+1)|1 - 2(j+1)u|/(1+u)^2 over u >= 0 (shared by J+J- and J-J+,
    # whose moduli have the same envelope maxima: a at u->0/inf and a^3/(4(a+1)))
    a = 2 * (j + 1.0)
    return max(a, a ** 3 / (4 * (a + 1.0)))


def table_symbol(name, j):
    """Look up a registry symbol at quantum number j (any real j >= 0)."""
    if j < 0:
        raise SymbolError(f"j must be >= 0, got {j}")
    jp1 = j + 1.0
    if name == "J+":
        return SymbolFn(name, lambda z: 2 * jp1 * np.conj(z) / (1 + np.abs(z) ** 2),
                        jp1, False)
    if name == "J-":
        return SymbolFn(name, lambda z: 2 * jp1 * z / (1 + np.abs(z) ** 2),
                        jp1, False)
    if name == "J3":
        def f(z):
            u = np.abs(z) ** 2
            return (-jp1 * (1 - u) / (1 + u)).astype(complex)
        return SymbolFn(name, f, jp1, True)
    if name == "J+J-":
        def f(z):
            u = np.abs(z) ** 2
            return (-2 * jp1 * (1 - 2 * jp1 * u) / (1 + u) ** 2).astype(complex)
        return SymbolFn(name, f, _ladder_bound(j), True)
    if name == "J-J+":
        def f(z):
            u = np.abs(z) ** 2
            return (2 * jp1 * (2 * jp1 * u - u ** 2) / (1 + u) ** 2).astype(complex)
        return SymbolFn(name, f, _ladder_bound(j), True)
    if name == "J3^2":
        def f(z):
            u = np.abs(z) ** 2
            return (jp1 * (j + 1.5) * ((1 - u) / (1 + u)) ** 2 - jp1 / 2).astype(complex)
        return SymbolFn(name, f, jp1 ** 2, True)
    raise SymbolError(f"unknown symbol name {name!r}; known: {sorted(TABLE_NAMES)}")


TABLE_NAMES = ("J+", "J-", "J3", "J+J-", "J-J+", "J3^2")


def symbol_from_json(doc, j):
    """Build a symbol from {"terms": [{"name":..., "coeff_re":..., "coeff_im":...}]}.

    Each named term is looked up in the registry at quantum number j.
    """
    try:
        terms = doc["terms"]
    except (TypeError, KeyError):
        raise SymbolError('symbol document must contain a "terms" list')
    parsed = []
    for t in terms:
        c = complex(float(t.get("coeff_re", 0.0)), float(t.get("coeff_im", 0.0)))
        parsed.append((c, table_symbol(t["name"], j)))
    return combine_symbols(parsed)
