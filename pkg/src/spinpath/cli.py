"""Command-line front end: experiment configuration, execution, persistence
and plot-ready data emission.

Exit codes: 0 success, 2 validation error, 3 numerical-diagnostic failure
(variance flag, boundary leak, non-finite weights, under-resolved
quadrature), 4 nondeterminism detected by replay.

Every run writes one JSON artifact carrying the normalized parameters, the
result, and a content hash of the parameters; `replay` re-executes the
artifact and insists on bit-identical values for Monte Carlo commands.
"""

import argparse
import datetime
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .bridge import BridgeError
from .mc import (McRunError, env_workers, estimate_kernel, long_time_sweep,
                 nu_sweep, unitary_sweep)
from .oracle import (OracleError, TruncationTailError, contraction_kernel_lhs,
                     exact_kernel, exact_kernel_unitary, fock_oracle_kernel,
                     format_complex, parse_complex, parse_hamiltonian,
                     symbol_hamiltonian)
from .quadrature import (QuadratureError, QuadratureResolutionError,
                         quantize_general_j, reconstruct_operator,
                         unity_resolution_residual)
from .schrodinger import (SchrodingerError, assemble_R, low_spectrum,
                          propagate_kernel, write_eigenvectors)
from .spin_core import SpinError, SpinSystem
from .symbols import (SymbolError, TABLE_NAMES, ZERO_SYMBOL, constant_symbol,
                      symbol_from_json, table_symbol)

VALIDATION_ERRORS = (SpinError, SymbolError, OracleError, QuadratureError,
                     BridgeError, ValueError, KeyError, FileNotFoundError)
NUMERIC_ERRORS = (McRunError, SchrodingerError, QuadratureResolutionError,
                  TruncationTailError)

HHAT_REGISTRY = {
    "zero": (lambda z: np.zeros_like(z, dtype=complex)),
    "one": (lambda z: np.ones_like(z, dtype=complex)),
    "abs2": (lambda z: (np.abs(z) ** 2).astype(complex)),
    "abs2-1": (lambda z: (np.abs(z) ** 2 - 1.0).astype(complex)),
}


def config_hash(params):
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(blob.encode()).hexdigest()


def _resolve_symbol(desc, j):
    kind = desc.get("kind")
    if kind == "zero":
        return ZERO_SYMBOL
    if kind == "const":
        return constant_symbol(parse_complex(desc["value"]))
    if kind == "table":
        return table_symbol(desc["name"], j)
    if kind == "combo":
        return symbol_from_json({"terms": desc["terms"]}, j)
    raise ValueError(f"unknown symbol descriptor {desc!r}")


def _symbol_params(args):
    if getattr(args, "symbol_file", None):
        with open(args.symbol_file) as fh:
            doc = json.load(fh)
        return {"kind": "combo", "terms": doc["terms"]}
    name = getattr(args, "symbol", None) or "0"
    if name in ("0", "none", "zero"):
        return {"kind": "zero"}
    if name in TABLE_NAMES:
        return {"kind": "table", "name": name}
    return {"kind": "const", "value": name}     # constants like "1" or "0.5+0.5i"


def _cnum(params, stem):
    return complex(params[f"{stem}_re"], params[f"{stem}_im"])


def _put_cnum(params, stem, value):
    value = complex(value)
    params[f"{stem}_re"] = value.real
    params[f"{stem}_im"] = value.imag


# ---------------------------------------------------------------------------
# command handlers: params dict -> result dict (shared by run and replay)
# ---------------------------------------------------------------------------

def run_symbols_verify(params):
    j = params["j"]
    sys_ = SpinSystem(j)
    direct = {"J+": sys_.j_plus, "J-": sys_.j_minus, "J3": sys_.j3,
              "J+J-": sys_.j_plus @ sys_.j_minus, "J-J+": sys_.j_minus @ sys_.j_plus,
              "J3^2": sys_.j3 @ sys_.j3}
    per = {}
    for name in params["names"]:
        mat = reconstruct_operator(table_symbol(name, j), j)
        per[name] = float(np.max(np.abs(mat - direct[name])))
    unity = unity_resolution_residual(j)
    worst = max(list(per.values()) + [unity])
    return {"per_symbol": per, "unity_residual": unity, "max_error": worst,
            "passed": bool(worst <= 1e-10), "replay_tol": 1e-12}


def run_oracle(params):
    j = params["j"]
    if params.get("hamiltonian") is not None:
        spec = parse_hamiltonian(params["hamiltonian"], j=j)
    else:
        spec = symbol_hamiltonian(_resolve_symbol(params["symbol"], j), j)
    z, zp = _cnum(params, "z"), _cnum(params, "zp")
    if params.get("unitary"):
        val = exact_kernel_unitary(spec, params["t"], z, zp)
    else:
        val = exact_kernel(spec, params["t"], z, zp)
    return {"value_re": val.real, "value_im": val.imag, "replay_tol": 1e-12}


def run_mc(params):
    h = _resolve_symbol(params["symbol"], params["j"])
    est = estimate_kernel(h, params["j"], params["t"], _cnum(params, "z"),
                          _cnum(params, "zp"), params["nu"], params["n_paths"],
                          params["m_steps"], params["seed"], params["form"],
                          workers=params.get("workers", 1))
    return {"estimate": est.to_dict()}


def _sweep_result(sweep):
    return {
        "exact_re": sweep.exact.real, "exact_im": sweep.exact.imag,
        "stopped_early": sweep.stopped_early,
        "entries": [{"estimate": e.estimate.to_dict(), "distance": e.distance,
                     "gate_ok": e.gate_ok} for e in sweep.entries],
    }


def run_sweep(params):
    h = _resolve_symbol(params["symbol"], params["j"])
    sweep = nu_sweep(h, params["j"], params["t"], _cnum(params, "z"),
                     _cnum(params, "zp"), params["nus"], params["n_paths"],
                     params["m_steps"], params["seed"], params["form"],
                     workers=params.get("workers", 1),
                     gate_frac=params.get("gate_frac", 0.10),
                     run_past_gate=params.get("run_past_gate", False))
    return _sweep_result(sweep)


def run_long_time(params):
    h = _resolve_symbol(params["symbol"], params["j"])
    sweep = long_time_sweep(h, params["j"], params["t"], _cnum(params, "z"),
                            _cnum(params, "zp"), params["nu"], params["us"],
                            params["n_paths"], params["m_steps"], params["seed"],
                            params["form"], workers=params.get("workers", 1),
                            gate_frac=params.get("gate_frac", 0.10),
                            run_past_gate=params.get("run_past_gate", False))
    return _sweep_result(sweep)


def run_unitary(params):
    h = _resolve_symbol(params["symbol"], params["j"])
    sweep = unitary_sweep(h, params["j"], params["t"], _cnum(params, "z"),
                          _cnum(params, "zp"), params["nus"], params["n_paths"],
                          params["m_steps"], params["seed"],
                          workers=params.get("workers", 1))
    out = _sweep_result(sweep)
    out["any_variance_flag"] = any(e.estimate.variance_flag for e in sweep.entries)
    return out


def run_pde_spectrum(params):
    op = assemble_R(params["j"], params["L"], params["n"])
    report = low_spectrum(op, k=params.get("k"))
    result = {"report": report.to_dict(), "replay_tol": 1e-7}
    if params.get("dump"):
        write_eigenvectors(params["dump"], op.n, report.vectors)
        result["dump"] = params["dump"]
    return result


def run_pde_kernel(params):
    h = _resolve_symbol(params["symbol"], params["j"])
    res = propagate_kernel(h, params["j"], params["nu"], params["t"],
                           _cnum(params, "z"), _cnum(params, "zp"),
                           L=params["L"], n=params["n"], n_time=params["n_time"])
    return {"value_re": res.value.real, "value_im": res.value.imag,
            "n_time": res.n_time, "richardson_rel_change": res.richardson_rel_change,
            "boundary_frac": res.boundary_frac, "snap_distance": res.snap_distance,
            "replay_tol": 1e-9}


def run_contract(params):
    template = parse_hamiltonian(params["hamiltonian"])
    hhat = HHAT_REGISTRY[params["hhat"]]
    t, z, zp = params["t"], _cnum(params, "z"), _cnum(params, "zp")
    fock = fock_oracle_kernel(hhat, params["n_max"], t, z, zp)
    entries = []
    for j in params["js"]:
        lhs = contraction_kernel_lhs(template, j, t, z, zp)
        entries.append({"j": j, "lhs_re": lhs.real, "lhs_im": lhs.imag,
                        "distance": abs(lhs - fock)})
    dists = [e["distance"] for e in entries]
    return {"fock_re": fock.real, "fock_im": fock.imag, "entries": entries,
            "decreasing": bool(all(a > b for a, b in zip(dists, dists[1:]))),
            "replay_tol": 1e-10}


def run_quantize(params):
    j = params["j"]
    h = _resolve_symbol(params["symbol"], j)
    basis = None
    if params.get("basis_seed") is not None:
        fam_dim = int(np.ceil(round(2 * j, 9))) + 1
        rng = np.random.default_rng(params["basis_seed"])
        basis = np.linalg.qr(rng.normal(size=(fam_dim, fam_dim))
                             + 1j * rng.normal(size=(fam_dim, fam_dim)))[0]
    q = quantize_general_j(j, h, basis=basis)
    unity = quantize_general_j(j, constant_symbol(1.0), basis=basis)
    dim = q.matrix.shape[0]
    return {"j_rounded": q.j_rounded, "dim": dim,
            "hermiticity_residual": q.hermiticity_residual,
            "unity_residual": float(np.max(np.abs(unity.matrix - np.eye(dim)))),
            "matrix_re": q.matrix.real.tolist(),
            "matrix_im": q.matrix.imag.tolist(),
            "replay_tol": 1e-9}


HANDLERS = {
    "symbols-verify": run_symbols_verify,
    "oracle": run_oracle,
    "mc": run_mc,
    "sweep": run_sweep,
    "long-time": run_long_time,
    "unitary": run_unitary,
    "pde-spectrum": run_pde_spectrum,
    "pde-kernel": run_pde_kernel,
    "contract": run_contract,
    "quantize": run_quantize,
}

MC_COMMANDS = {"mc", "sweep", "long-time", "unitary"}


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def write_artifact(out_prefix, command, params, result):
    doc = {"command": command, "params": params, "result": result,
           "config_hash": config_hash(params), "spinpath_version": __version__,
           "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    path = out_prefix + ".json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_sweep_csv(out_prefix, result, axis="nu"):
    path = out_prefix + ".csv"
    with open(path, "w") as fh:
        fh.write("nu,re,im,stderr,n_paths,m_steps,seed,exact_re,exact_im\n")
        for e in result["entries"]:
            k = e["estimate"]
            axis_val = k["nu"] if axis == "nu" else k["u"]
            fh.write(",".join(format_complex(v) for v in
                              (axis_val, k["value_re"], k["value_im"], k["std_error"],
                               k["n_paths"], k["m_steps"], k["seed"],
                               result["exact_re"], result["exact_im"])) + "\n")
    return path


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in sorted(obj.items())
                if k not in ("wall_time",)}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def _approx_equal(a, b, tol):
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_approx_equal(a[k], b[k], tol) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_approx_equal(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        return abs(a - b) <= tol * (1.0 + max(abs(a), abs(b)))
    return a == b


def replay(path, workers=1):
    """Re-execute a stored artifact; 0 iff the result reproduces.

    Monte Carlo commands must reproduce bit-identically (any worker count);
    deterministic-solver commands compare within the stored replay_tol.
    """
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("command", "params", "result", "config_hash"):
        if key not in doc:
            raise ValueError(f"artifact is missing the {key!r} field")
    if doc["command"] not in HANDLERS:
        raise ValueError(f"unknown command {doc['command']!r} in artifact")
    params = dict(doc["params"])
    params["workers"] = workers
    fresh = HANDLERS[doc["command"]](params)
    stored, fresh = _strip_volatile(doc["result"]), _strip_volatile(fresh)
    if doc["command"] in MC_COMMANDS:
        return stored == fresh
    return _approx_equal(stored, fresh, float(doc["result"].get("replay_tol", 1e-9)))


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p, *, z=True, seed=True):
    p.add_argument("--j", type=float, required=True)
    if z:
        p.add_argument("--t", type=float, required=True)
        p.add_argument("--z", type=parse_complex, required=True)
        p.add_argument("--zp", type=parse_complex, required=True)
    if seed:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--symbol", type=str, default=None,
                   help=f"registry name ({', '.join(TABLE_NAMES)}), a complex "
                        f"constant, or 0")
    p.add_argument("--symbol-file", type=str, default=None,
                   help='JSON {"terms": [{"name": ..., "coeff_re": ...}]}')


def _float_list(text):
    return [float(x) for x in text.split(",") if x]


def build_parser():
    ap = argparse.ArgumentParser(prog="spinpath")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker count (default: SPINPATH_THREADS or 1); "
                         "never changes Monte Carlo values")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("symbols-verify", help="reconstruct registry symbols against matrices")
    p.add_argument("--j", type=float, required=True)
    p.add_argument("--names", type=str, default=",".join(TABLE_NAMES))
    p.add_argument("--out", type=str, default="symbols-verify")

    p = sub.add_parser("oracle", help="exact kernel via the matrix exponential")
    _add_common(p, seed=False)
    p.add_argument("--hamiltonian", type=str, default=None,
                   help="monomial grammar, e.g. '1*J3 + 0.5*J+ J-'")
    p.add_argument("--unitary", action="store_true")
    p.add_argument("--out", type=str, default="oracle")

    p = sub.add_parser("mc", help="Monte Carlo kernel estimate at one nu")
    _add_common(p)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--m-steps", type=int, default=None)
    p.add_argument("--form", choices=("strat", "ito"), default="strat")
    p.add_argument("--out", type=str, default="mc")

    p = sub.add_parser("sweep", help="nu sweep against the exact kernel")
    _add_common(p)
    p.add_argument("--nus", type=_float_list, required=True)
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--m-steps", type=int, default=None)
    p.add_argument("--form", choices=("strat", "ito"), default="strat")
    p.add_argument("--force-full", action="store_true",
                   help="run past the variance gate (entries stay flagged)")
    p.add_argument("--out", type=str, default="sweep")

    p = sub.add_parser("long-time", help="long-horizon sweep at fixed nu")
    _add_common(p)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--us", type=_float_list, required=True)
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--m-steps", type=int, default=None)
    p.add_argument("--form", choices=("strat", "ito"), default="strat")
    p.add_argument("--force-full", action="store_true")
    p.add_argument("--out", type=str, default="long-time")

    p = sub.add_parser("unitary", help="unitary-variant nu sweep")
    _add_common(p)
    p.add_argument("--nus", type=_float_list, required=True)
    p.add_argument("--n-paths", type=int, required=True)
    p.add_argument("--m-steps", type=int, default=None)
    p.add_argument("--out", type=str, default="unitary")

    p = sub.add_parser("pde-spectrum", help="low spectrum and zero-mode report")
    p.add_argument("--j", type=float, required=True)
    p.add_argument("--L", type=float, default=12.0)
    p.add_argument("--n", type=int, default=192)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--dump-vectors", type=str, default=None)
    p.add_argument("--out", type=str, default="pde-spectrum")

    p = sub.add_parser("pde-kernel", help="grid-propagated kernel of the regularized semigroup")
    _add_common(p, seed=False)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--L", type=float, default=12.0)
    p.add_argument("--n", type=int, default=241)
    p.add_argument("--n-time", type=int, default=128)
    p.add_argument("--out", type=str, default="pde-kernel")

    p = sub.add_parser("contract", help="high-spin contraction against the Fock oracle")
    p.add_argument("--hamiltonian", type=str, required=True)
    p.add_argument("--js", type=_float_list, default=[5, 10, 20, 40])
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--z", type=parse_complex, required=True)
    p.add_argument("--zp", type=parse_complex, required=True)
    p.add_argument("--hhat", choices=sorted(HHAT_REGISTRY), required=True,
                   help="closed-form contraction limit of the symbol")
    p.add_argument("--n-max", type=int, default=48)
    p.add_argument("--out", type=str, default="contract")

    p = sub.add_parser("quantize", help="operator assigned to (j, h) for real j")
    p.add_argument("--j", type=float, required=True)
    p.add_argument("--symbol", type=str, default="1")
    p.add_argument("--symbol-file", type=str, default=None)
    p.add_argument("--basis-seed", type=int, default=None,
                   help="random unitary basis instead of the identity")
    p.add_argument("--out", type=str, default="quantize")

    p = sub.add_parser("replay", help="re-execute a stored artifact and compare")
    p.add_argument("artifact", type=str)

    # let values like -0.1+0.3i pass as arguments rather than option flags
    import re as _re
    matcher = _re.compile(r"^-\d+\.?\d*(?:[eE][+-]?\d+)?(?:[+-]\d*\.?\d*(?:[eE][+-]?\d+)?i)?$")
    for parser in [ap] + list(sub.choices.values()):
        parser._negative_number_matcher = matcher
    return ap


def _params_from_args(args):
    command = args.command
    params = {}
    if command == "symbols-verify":
        params = {"j": args.j, "names": [n for n in args.names.split(",") if n]}
    elif command == "oracle":
        params = {"j": args.j, "t": args.t, "unitary": bool(args.unitary),
                  "hamiltonian": args.hamiltonian}
        if args.hamiltonian is None:
            params["symbol"] = _symbol_params(args)
        _put_cnum(params, "z", args.z)
        _put_cnum(params, "zp", args.zp)
    elif command in ("mc", "sweep", "long-time", "unitary"):
        params = {"j": args.j, "t": args.t, "seed": args.seed,
                  "symbol": _symbol_params(args), "n_paths": args.n_paths,
                  "m_steps": args.m_steps}
        _put_cnum(params, "z", args.z)
        _put_cnum(params, "zp", args.zp)
        if command == "mc":
            params.update(nu=args.nu, form=args.form)
        elif command == "sweep":
            params.update(nus=args.nus, form=args.form,
                          run_past_gate=bool(args.force_full))
        elif command == "long-time":
            params.update(nu=args.nu, us=args.us, form=args.form,
                          run_past_gate=bool(args.force_full))
        else:
            params.update(nus=args.nus)
    elif command == "pde-spectrum":
        params = {"j": args.j, "L": args.L, "n": args.n, "k": args.k,
                  "dump": args.dump_vectors}
    elif command == "pde-kernel":
        params = {"j": args.j, "t": args.t, "nu": args.nu, "L": args.L,
                  "n": args.n, "n_time": args.n_time,
                  "symbol": _symbol_params(args)}
        _put_cnum(params, "z", args.z)
        _put_cnum(params, "zp", args.zp)
    elif command == "contract":
        params = {"hamiltonian": args.hamiltonian, "js": args.js, "t": args.t,
                  "hhat": args.hhat, "n_max": args.n_max}
        _put_cnum(params, "z", args.z)
        _put_cnum(params, "zp", args.zp)
    elif command == "quantize":
        params = {"j": args.j, "symbol": _symbol_params(args),
                  "basis_seed": args.basis_seed}
    return params


def _summary_line(command, result):
    if command in ("oracle", "pde-kernel"):
        return f"{command}: value = {result['value_re']:.6g} {result['value_im']:+.6g}i"
    if command == "mc":
        k = result["estimate"]
        return (f"mc: value = {k['value_re']:.6g} {k['value_im']:+.6g}i "
                f"+- {k['std_error']:.2g} (n={k['n_paths']})")
    if command in ("sweep", "long-time", "unitary"):
        dists = ", ".join(f"{e['distance']:.3g}" for e in result["entries"])
        return f"{command}: |estimate - exact| = [{dists}]"
    if command == "symbols-verify":
        return f"symbols-verify: max error {result['max_error']:.3g} (pass={result['passed']})"
    if command == "pde-spectrum":
        r = result["report"]
        return (f"pde-spectrum: cluster = {r['zero_cluster_size']}, "
                f"overlap = {r['analytic_overlap']:.4f}")
    if command == "contract":
        return f"contract: decreasing = {result['decreasing']}"
    if command == "quantize":
        return (f"quantize: dim = {result['dim']}, hermiticity "
                f"{result['hermiticity_residual']:.2g}, unity {result['unity_residual']:.2g}")
    return command


def main(argv=None):
    args = build_parser().parse_args(argv)
    workers = args.threads if args.threads is not None else env_workers()
    try:
        if args.command == "replay":
            ok = replay(args.artifact, workers=workers)
            print("replay: identical" if ok else "replay: MISMATCH")
            return 0 if ok else 4
        params = _params_from_args(args)
        params["workers"] = workers
        stored_params = {k: v for k, v in params.items() if k != "workers"}
        result = HANDLERS[args.command](params)
        path = write_artifact(args.out, args.command, stored_params, result)
        print(_summary_line(args.command, result))
        print(f"wrote {path}")
        if args.command in ("sweep", "long-time", "unitary"):
            print(f"wrote {write_sweep_csv(args.out, result, axis='nu' if args.command != 'long-time' else 'u')}")
        if args.command == "symbols-verify" and not result["passed"]:
            return 3
        if args.command == "unitary" and result["any_variance_flag"]:
            print("unitary: variance flag raised (inconclusive at flagged nus)")
            return 3
        return 0
    except NUMERIC_ERRORS as exc:
        print(f"numerical diagnostic failure: {exc}", file=sys.stderr)
        return 3
    except VALIDATION_ERRORS as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
