"""Monte Carlo estimation of coherent kernels at finite diffusion constant.

The estimator averages  exp{4(j+1) nu I_2 + (j+1) i K - c int h(b) ds}  over
discretized Brownian bridges and multiplies by the free-kernel prefactor
(4 pi u nu)^(-1) exp(-|z-z'|^2 / 4 u nu), where I_2 is the trapezoid of
1/(1+|b|^2)^2, K the midpoint kinetic sum, u the bridge horizon and c the
symbol coupling (t/u for the long-horizon variant, times i for the unitary
variant).  The alternative 'ito' weight uses the conversion identity
(j+1)[ln((1+|b(u)|^2)/(1+|b(0)|^2)) - 2 sum conj(db) b/(1+|b|^2)] in place
of the diffusion + kinetic exponent.

Determinism contract: paths are partitioned into streams of at most 4096
(at least 32 streams), stream s draws from Philox keyed (seed, s), and the
reduction is an ordered sum over stream ids.  The worker count can change
the wall time but never the value, bit for bit.

Error bars are batch means over 32 stream groups: componentwise standard
errors plus the combined modulus error; these are honest only as far as the
sampled tail goes, which is why sweeps carry a variance gate (by default a
sweep stops once the standard error exceeds 10% of the exact reference).
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .bridge import accumulate_bridge_batch, stream_rng
from .oracle import exact_kernel, exact_kernel_unitary, symbol_hamiltonian

STREAM_BLOCK = 4096
N_BATCHES = 32
FORMS = ("strat", "ito")


class McRunError(RuntimeError):
    """Numerical diagnostic failure (non-finite weights: m_steps too small for nu)."""


def default_m_steps(nu, horizon):
    """Step-count rule keeping the per-step bias controlled as nu grows."""
    return max(256, int(np.ceil(64.0 * nu * horizon)))


def stream_partition(n_paths):
    """Per-stream path counts; fixed by n_paths alone (never by worker count)."""
    n_streams = max(N_BATCHES, int(np.ceil(n_paths / STREAM_BLOCK)))
    base, extra = divmod(n_paths, n_streams)
    return np.array([base + (1 if i < extra else 0) for i in range(n_streams)])


@dataclass
class KernelEstimate:
    value: complex
    std_error: float
    std_error_re: float
    std_error_im: float
    n_paths: int
    m_steps: int
    nu: float
    t: float
    u: float
    z: complex
    zp: complex
    j: float
    symbol_name: str
    seed: int
    form: str
    unitary: bool
    wall_time: float
    variance_flag: bool = False

    def to_dict(self):
        return {
            "value_re": self.value.real, "value_im": self.value.imag,
            "std_error": self.std_error,
            "std_error_re": self.std_error_re, "std_error_im": self.std_error_im,
            "n_paths": self.n_paths, "m_steps": self.m_steps,
            "nu": self.nu, "t": self.t, "u": self.u,
            "z_re": self.z.real, "z_im": self.z.imag,
            "zp_re": self.zp.real, "zp_im": self.zp.imag,
            "j": self.j, "symbol": self.symbol_name, "seed": self.seed,
            "form": self.form, "unitary": self.unitary,
            "wall_time": self.wall_time, "variance_flag": self.variance_flag,
        }


# --- fork-inherited work context (symbols hold closures, so they are handed
# --- to worker processes through fork memory rather than pickling)

@dataclass
class _Work:
    seed: int
    z: complex
    zp: complex
    u: float
    nu: float
    m_steps: int
    jp1: float
    symbol: object
    scale: complex
    forms: tuple


_WORK = None


def _stream_task(args):
    stream_id, count = args
    p = _WORK
    rng = stream_rng(p.seed, stream_id)
    symbol = None if (p.symbol is None or getattr(p.symbol, "is_zero", False)) else p.symbol
    out = accumulate_bridge_batch(rng, p.z, p.zp, p.u, p.nu, p.m_steps, count,
                                  symbol=symbol)
    log_term = np.log((1.0 + abs(p.zp) ** 2) / (1.0 + abs(p.z) ** 2))
    res = {}
    for form in p.forms:
        if form == "strat":
            expo = (4.0 * p.jp1 * p.nu) * out["nu_int"] \
                + 1j * p.jp1 * out["kin"] - p.scale * out["sym_int"]
        elif form == "ito":
            expo = p.jp1 * (log_term - 2.0 * out["ito_sum"]) - p.scale * out["sym_int"]
        else:
            raise ValueError(f"unknown weight form {form!r}")
        with np.errstate(over="ignore", invalid="ignore"):
            w = np.exp(expo)
        finite = bool(np.isfinite(w).all())
        res[form] = (complex(w.sum()) if finite else complex("nan"), finite)
    return res


def _run_streams(work, counts, workers):
    global _WORK
    tasks = [(s, int(c)) for s, c in enumerate(counts) if c > 0]
    _WORK = work
    try:
        if workers <= 1 or len(tasks) <= 1:
            results = [_stream_task(t) for t in tasks]
        else:
            import multiprocessing as mp
            ctx = mp.get_context("fork")
            chunk = max(1, len(tasks) // (4 * workers))
            with ctx.Pool(processes=workers) as pool:
                results = pool.map(_stream_task, tasks, chunksize=chunk)
    finally:
        _WORK = None
    return [s for s, _ in tasks], results


def _reduce(stream_ids, results, counts, form, n_streams):
    sums = np.zeros(n_streams, dtype=complex)
    for sid, res in zip(stream_ids, results):
        w_sum, finite = res[form]
        if not finite:
            raise McRunError(
                "non-finite path weight encountered; m_steps is too small for this nu")
        sums[sid] = w_sum
    n_paths = int(counts.sum())
    total = complex(np.sum(sums))          # ordered over stream ids
    batch_of = (np.arange(n_streams) * N_BATCHES) // n_streams
    batch_sums = np.zeros(N_BATCHES, dtype=complex)
    batch_counts = np.zeros(N_BATCHES)
    np.add.at(batch_sums, batch_of, sums)
    np.add.at(batch_counts, batch_of, counts)
    valid = batch_counts > 0
    means = batch_sums[valid] / batch_counts[valid]
    nb = int(valid.sum())
    if nb >= 2:
        se_re = float(np.std(means.real, ddof=1) / np.sqrt(nb))
        se_im = float(np.std(means.imag, ddof=1) / np.sqrt(nb))
    else:
        se_re = se_im = 0.0
    return total / n_paths, se_re, se_im


def _estimate(h, j, t, z, zp, nu, n_paths, m_steps, seed, form, u=None,
              unitary=False, workers=1, forms=None):
    t0 = time.perf_counter()
    if u is None:
        u = t
    if not (u > 0 and nu > 0):
        raise ValueError("horizon and nu must be positive")
    if m_steps is None:
        m_steps = default_m_steps(nu, u)
    scale = (t / u) * (1j if unitary else 1.0)
    counts = stream_partition(n_paths)
    work = _Work(seed=seed, z=complex(z), zp=complex(zp), u=float(u), nu=float(nu),
                 m_steps=int(m_steps), jp1=float(j) + 1.0, symbol=h,
                 scale=complex(scale), forms=forms or (form,))
    sids, results = _run_streams(work, counts, workers)
    pref = np.exp(-abs(complex(z) - complex(zp)) ** 2 / (4.0 * u * nu)) / (4.0 * np.pi * u * nu)

    def build(one_form):
        mean, se_re, se_im = _reduce(sids, results, counts, one_form, len(counts))
        value = pref * mean
        se_re, se_im = pref * se_re, pref * se_im
        se = float(np.hypot(se_re, se_im))
        return KernelEstimate(
            value=complex(value), std_error=se, std_error_re=se_re, std_error_im=se_im,
            n_paths=int(counts.sum()), m_steps=int(m_steps), nu=float(nu), t=float(t),
            u=float(u), z=complex(z), zp=complex(zp), j=float(j),
            symbol_name=getattr(h, "name", "0"), seed=int(seed), form=one_form,
            unitary=bool(unitary), wall_time=time.perf_counter() - t0,
            variance_flag=bool(se > abs(value)))

    if forms:
        return {f: build(f) for f in forms}
    return build(form)


def estimate_kernel(h, j, t, z, zp, nu, n_paths, m_steps=None, seed=0,
                    form="strat", workers=1):
    """Finite-nu kernel estimate over bridges on [0, t]; unbiased for the
    diffusion-regularized kernel up to O(t/m_steps) discretization bias."""
    return _estimate(h, j, t, z, zp, nu, n_paths, m_steps, seed, form, workers=workers)


def estimate_kernel_both_forms(h, j, t, z, zp, nu, n_paths, m_steps=None, seed=0,
                               workers=1):
    """Midpoint-form and conversion-form estimates evaluated on identical paths."""
    return _estimate(h, j, t, z, zp, nu, n_paths, m_steps, seed, "strat",
                     workers=workers, forms=FORMS)


def long_time_estimate(h, j, t, z, zp, nu, u, n_paths, m_steps=None, seed=0,
                       form="strat", workers=1):
    """Long-horizon variant: bridge over [0, u], symbol coupling scaled by t/u.

    Converges to the exact kernel at time t as u grows, for any fixed nu;
    t may be zero or negative (only the symbol term carries it).  With u = t
    this is estimate_kernel, bit for bit.
    """
    return _estimate(h, j, t, z, zp, nu, n_paths, m_steps, seed, form, u=u,
                     workers=workers)


def unitary_estimate(h, j, t, z, zp, nu, n_paths, m_steps=None, seed=0,
                     form="strat", workers=1):
    """Same estimator with the symbol coupling rotated by i: targets the
    coherent kernel of the unitary group.  variance_flag marks estimates
    whose standard error exceeds their modulus (inconclusive)."""
    return _estimate(h, j, t, z, zp, nu, n_paths, m_steps, seed, form,
                     unitary=True, workers=workers)


# ---------------------------------------------------------------------------
# sweeps against the exact oracle
# ---------------------------------------------------------------------------

@dataclass
class SweepEntry:
    estimate: KernelEstimate
    exact: complex
    distance: float
    gate_ok: bool


@dataclass
class SweepResult:
    entries: list = field(default_factory=list)
    exact: complex = 0j
    stopped_early: bool = False

    @property
    def distances(self):
        return [e.distance for e in self.entries]

    def csv_rows(self):
        """Stable sweep schema: nu,re,im,stderr,n_paths,m_steps,seed,exact_re,exact_im."""
        rows = [("nu", "re", "im", "stderr", "n_paths", "m_steps", "seed",
                 "exact_re", "exact_im")]
        for e in self.entries:
            k = e.estimate
            rows.append((k.nu, k.value.real, k.value.imag, k.std_error, k.n_paths,
                         k.m_steps, k.seed, e.exact.real, e.exact.imag))
        return rows


def _sweep(points, make_estimate, exact_value, gate_frac, run_past_gate):
    result = SweepResult(exact=exact_value)
    gate_open = True
    for point in points:
        if not gate_open and not run_past_gate:
            result.stopped_early = True
            break
        est = make_estimate(point)
        dist = abs(est.value - exact_value)
        ok = gate_frac is None or est.std_error <= gate_frac * abs(exact_value)
        result.entries.append(SweepEntry(estimate=est, exact=exact_value,
                                         distance=dist, gate_ok=bool(ok)))
        if not ok:
            gate_open = False
    return result


def nu_sweep(h, j, t, z, zp, nu_list, n_paths, m_steps=None, seed=0, form="strat",
             workers=1, gate_frac=0.10, run_past_gate=False):
    """Estimates over increasing nu plus the exact spin-kernel reference.

    The sweep stops after the first nu whose standard error exceeds
    gate_frac * |exact| unless run_past_gate is set (entries are flagged
    either way).  m_steps defaults to the scaling rule per nu.
    """
    if list(nu_list) != sorted(nu_list):
        raise ValueError("nu_list must be increasing")
    exact = exact_kernel(symbol_hamiltonian(h, j), t, z, zp)
    return _sweep(
        nu_list,
        lambda nu: estimate_kernel(h, j, t, z, zp, nu, n_paths, m_steps, seed,
                                   form, workers=workers),
        exact, gate_frac, run_past_gate)


def long_time_sweep(h, j, t, z, zp, nu, u_list, n_paths, m_steps=None, seed=0,
                    form="strat", workers=1, gate_frac=0.10, run_past_gate=False):
    """Long-horizon sweep at fixed nu; distances are to the exact kernel at t."""
    if list(u_list) != sorted(u_list):
        raise ValueError("u_list must be increasing")
    exact = exact_kernel(symbol_hamiltonian(h, j), t, z, zp)
    return _sweep(
        u_list,
        lambda u: long_time_estimate(h, j, t, z, zp, nu, u, n_paths, m_steps,
                                     seed, form, workers=workers),
        exact, gate_frac, run_past_gate)


def unitary_sweep(h, j, t, z, zp, nu_list, n_paths, m_steps=None, seed=0,
                  workers=1, gate_frac=None, run_past_gate=True):
    """Unitary-variant sweep against the exact e^(-itH) kernel.

    No gate by default: inconclusive points carry variance_flag instead, so
    either outcome (converging distances or a reported flag) is visible.
    """
    if list(nu_list) != sorted(nu_list):
        raise ValueError("nu_list must be increasing")
    exact = exact_kernel_unitary(symbol_hamiltonian(h, j), t, z, zp)
    return _sweep(
        nu_list,
        lambda nu: unitary_estimate(h, j, t, z, zp, nu, n_paths, m_steps, seed,
                                    workers=workers),
        exact, gate_frac, run_past_gate)


def env_workers(default=1):
    """Worker count from SPINPATH_THREADS, else the given default."""
    try:
        return max(1, int(os.environ.get("SPINPATH_THREADS", "") or default))
    except ValueError:
        return default
