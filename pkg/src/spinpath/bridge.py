"""Two-dimensional Brownian bridges with diffusion constant nu, and the
discretized path functionals entering the kernel weight.

Conventions (fixed once, relied on for bit-reproducibility):
  - per-component variance parameter is 2*nu, so the complex covariance is
    4 nu (min(r,s) - rs/t) and the pseudo-covariance vanishes;
  - paths are sampled sequentially through the exact conditional law
    b_{k+1} | b_k ~ N(b_k + (z_end - b_k) dt/(t - s_k),
                     2 nu dt (t - s_k - dt)/(t - s_k) per component),
    drawing (re, im) standard normals of shape (2, batch) per step and
    assigning the final point to z_end without a draw;
  - randomness is counter-based (Philox) keyed by (seed, stream_id), with
    the in-stream draw order fixed by the step loop;
  - kinetic line integral: midpoint rule (its real part vanishes by
    construction);  dt-integrals: trapezoid;  conversion-form stochastic
    integral: left endpoint.
"""

from dataclasses import dataclass

import numpy as np

_SEED_MASK = (1 << 64) - 1


class BridgeError(ValueError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    z_start: complex
    z_end: complex
    t: float
    nu: float
    m_steps: int
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if self.m_steps < 2:
            raise BridgeError(f"m_steps must be >= 2, got {self.m_steps}")
        if not (np.isfinite(self.t) and self.t > 0):
            raise BridgeError(f"t must be finite and positive, got {self.t}")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise BridgeError(f"nu must be finite and positive, got {self.nu}")


@dataclass
class BridgePath:
    times: np.ndarray      # (m+1,)
    samples: np.ndarray    # (m+1,) complex, endpoints pinned exactly


def stream_rng(seed, stream_id):
    """Philox generator keyed by (seed, stream_id); identical streams on any
    machine and under any worker scheduling."""
    key = np.array([seed & _SEED_MASK, stream_id & _SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def conditional_step(b, z_end, dt, remaining, nu, noise):
    """One exact bridge transition for a batch of current positions b."""
    mean = b + (z_end - b) * (dt / remaining)
    var = 2.0 * nu * dt * (remaining - dt) / remaining
    return mean + np.sqrt(max(var, 0.0)) * noise


def sample_bridge(cfg):
    """One discretized bridge path; deterministic in (seed, stream_id)."""
    rng = stream_rng(cfg.seed, cfg.stream_id)
    m = cfg.m_steps
    dt = cfg.t / m
    samples = np.empty(m + 1, dtype=complex)
    samples[0] = cfg.z_start
    b = np.full(1, cfg.z_start, dtype=complex)
    for k in range(m - 1):
        xi = rng.standard_normal((2, 1))
        b = conditional_step(b, cfg.z_end, dt, cfg.t - k * dt, cfg.nu, xi[0] + 1j * xi[1])
        samples[k + 1] = b[0]
    samples[m] = cfg.z_end
    times = np.arange(m + 1) * dt
    return BridgePath(times=times, samples=samples)


# ---------------------------------------------------------------------------
# per-step functional increments (shared by the path API and the streaming
# Monte Carlo loop so both use identical floating-point expressions)
# ---------------------------------------------------------------------------

def kinetic_increment(b0, b1):
    """Real-valued increment S_k with kinetic integral = i * sum_k S_k:
    the midpoint form (db conj(m) - conj(db) m)/(1+|m|^2) = 2i Im(db conj(m))/(1+|m|^2)."""
    mid = 0.5 * (b0 + b1)
    return 2.0 * ((b1 - b0) * np.conj(mid)).imag / (1.0 + np.abs(mid) ** 2)


def ito_increment(b0, b1):
    """Left-endpoint increment conj(db) b0 / (1+|b0|^2) of the conversion-form
    stochastic integral."""
    return np.conj(b1 - b0) * b0 / (1.0 + np.abs(b0) ** 2)


def inv_sq(b):
    """Integrand 1/(1+|b|^2)^2 of the diffusion-weight term."""
    return 1.0 / (1.0 + np.abs(b) ** 2) ** 2


def kinetic_stratonovich(path):
    """Midpoint discretization of int (bdot b* - bdot* b)/(1+|b|^2) ds.

    Exactly imaginary: built as 1j times a real sum.
    """
    b = path.samples
    return 1j * float(np.sum(kinetic_increment(b[:-1], b[1:])))


def nu_term(path, j, nu):
    """Trapezoid rule for 4(j+1) nu int ds/(1+|b|^2)^2; in (0, 4(j+1) nu t]."""
    b = path.samples
    dt = path.times[1] - path.times[0]
    f = inv_sq(b)
    return 4.0 * (j + 1.0) * nu * dt * float(np.sum(f) - 0.5 * (f[0] + f[-1]))


def symbol_term(path, h):
    """Trapezoid rule for int h(b(s)) ds; |result| <= t * sup|h|."""
    b = path.samples
    dt = path.times[1] - path.times[0]
    hv = np.asarray(h(b), dtype=complex)
    return complex(dt * (np.sum(hv) - 0.5 * (hv[0] + hv[-1])))


def ito_weight(path, j, nu):
    """Conversion form of the diffusion + kinetic exponent:
    (j+1) [ln((1+|b(t)|^2)/(1+|b(0)|^2)) - 2 sum_k conj(db_k) b_k/(1+|b_k|^2)].

    In the continuum limit this equals nu_term + (j+1) * kinetic integral;
    nu appears only through the path law.
    """
    del nu  # part of the signature contract: the value depends on nu only via the path
    b = path.samples
    log_term = np.log((1.0 + np.abs(b[-1]) ** 2) / (1.0 + np.abs(b[0]) ** 2))
    s = complex(np.sum(ito_increment(b[:-1], b[1:])))
    return (j + 1.0) * (log_term - 2.0 * s)


@dataclass(frozen=True)
class PathFunctionals:
    """The four discretized functionals of one path entering the kernel weight."""
    kinetic_strat: complex      # purely imaginary by construction
    nu_term: float              # in (0, 4(j+1) nu t]
    symbol_term: complex
    ito_log_form: complex


def path_functionals(path, j, nu, h=None):
    return PathFunctionals(
        kinetic_strat=kinetic_stratonovich(path),
        nu_term=nu_term(path, j, nu),
        symbol_term=symbol_term(path, h) if h is not None else 0j,
        ito_log_form=ito_weight(path, j, nu))


# ---------------------------------------------------------------------------
# streaming batched sampler
# ---------------------------------------------------------------------------

def accumulate_bridge_batch(rng, z, zp, horizon, nu, m_steps, n_batch,
                            symbol=None, record_steps=()):
    """Sample n_batch bridges over [0, horizon], accumulating functionals
    step by step (memory O(n_batch), no path storage).

    Returns a dict with per-path arrays:
      kin      real kinetic sums (kinetic integral = 1j * kin)
      nu_int   trapezoid of int ds/(1+|b|^2)^2  (without the 4(j+1) nu factor)
      sym_int  trapezoid of int h(b) ds         (zeros when symbol is None)
      ito_sum  left-endpoint sum of conj(db) b/(1+|b|^2)
      records  {step_index: b values} for the requested marked steps
    """
    dt = horizon / m_steps
    b = np.full(n_batch, complex(z), dtype=complex)
    kin = np.zeros(n_batch)
    nu_int = np.zeros(n_batch)
    sym_int = np.zeros(n_batch, dtype=complex)
    ito_sum = np.zeros(n_batch, dtype=complex)
    records = {}
    if 0 in record_steps:
        records[0] = b.copy()
    f_prev = np.full(n_batch, inv_sq(complex(z)))
    h_prev = None
    if symbol is not None:
        h_prev = np.asarray(symbol(b), dtype=complex)
    for k in range(m_steps):
        if k < m_steps - 1:
            xi = rng.standard_normal((2, n_batch))
            b1 = conditional_step(b, complex(zp), dt, horizon - k * dt, nu,
                                  xi[0] + 1j * xi[1])
        else:
            b1 = np.full(n_batch, complex(zp), dtype=complex)
        kin += kinetic_increment(b, b1)
        ito_sum += ito_increment(b, b1)
        f_next = inv_sq(b1)
        nu_int += 0.5 * (f_prev + f_next)
        f_prev = f_next
        if symbol is not None:
            h_next = np.asarray(symbol(b1), dtype=complex)
            sym_int += 0.5 * (h_prev + h_next)
            h_prev = h_next
        b = b1
        if k + 1 in record_steps:
            records[k + 1] = b.copy()
    nu_int *= dt
    sym_int *= dt
    return {"kin": kin, "nu_int": nu_int, "sym_int": sym_int,
            "ito_sum": ito_sum, "records": records}


def bridge_moments(z, zp, t, nu, m_steps, marked_steps, pairs, n_paths, seed,
                   n_batches=32):
    """Per-batch moment sums of b at marked grid steps over n_paths bridges.

    Returns (counts, sums) where sums maps each statistic name to an array of
    per-batch totals:  'mean:k', 'abs2:k', 'sq:k' for each marked step k and
    'cross:k,l', 'pseudo:k,l' for each pair (k, l).
    """
    marked_steps = sorted(set(marked_steps))
    base, extra = divmod(n_paths, n_batches)
    counts = np.array([base + (1 if i < extra else 0) for i in range(n_batches)])
    sums = {}
    for k in marked_steps:
        sums[f"mean:{k}"] = np.zeros(n_batches, dtype=complex)
        sums[f"abs2:{k}"] = np.zeros(n_batches)
        sums[f"sq:{k}"] = np.zeros(n_batches, dtype=complex)
    for k, l in pairs:
        sums[f"cross:{k},{l}"] = np.zeros(n_batches, dtype=complex)
        sums[f"pseudo:{k},{l}"] = np.zeros(n_batches, dtype=complex)
    for i in range(n_batches):
        if counts[i] == 0:
            continue
        rng = stream_rng(seed, i)
        out = accumulate_bridge_batch(rng, z, zp, t, nu, m_steps, counts[i],
                                      record_steps=marked_steps)
        rec = out["records"]
        for k in marked_steps:
            sums[f"mean:{k}"][i] = rec[k].sum()
            sums[f"abs2:{k}"][i] = (np.abs(rec[k]) ** 2).sum()
            sums[f"sq:{k}"][i] = (rec[k] ** 2).sum()
        for k, l in pairs:
            sums[f"cross:{k},{l}"][i] = (np.conj(rec[k]) * rec[l]).sum()
            sums[f"pseudo:{k},{l}"][i] = (rec[k] * rec[l]).sum()
    return counts, sums


def bridge_mean(z, zp, t, s):
    """Mean z + (z'-z) s/t of the pinned process."""
    return complex(z) + (complex(zp) - complex(z)) * (np.asarray(s) / t)


def bridge_covariance(t, nu, r, s):
    """Complex covariance 4 nu (min(r,s) - rs/t); the pseudo-covariance is 0."""
    return 4.0 * nu * (np.minimum(r, s) - np.asarray(r) * np.asarray(s) / t)
