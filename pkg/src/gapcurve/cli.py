"""Command-line interface: gapcurve {ingest,spectrum,approximate,reconstruct,compare,diagnose}."""
from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from . import __version__
from .errors import GapcurveError, ParseError
from .geometry import (check_closing, ingest, read_curve_csv, reconstruct, sobolev_distance,
                       curve_csv_text)
from .inverse import SolverConfig, approximate
from .jsonio import atomic_write, complex_pair, dumps17, fmt
from .potential import Potential, l2_norm
from .spectral import asymptotic_diagnostics, is_finite_gap, perturbed_fourier

THREADS_ENV = "GAPCURVE_THREADS"


def _positive(kind):
    def conv(text):
        try:
            val = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return val
    return conv


def _sibling(path, name):
    return os.path.join(os.path.dirname(os.path.abspath(path)), name)


def _load_potential(args) -> Potential:
    q = Potential.load(args.input[0])
    if args.grid is not None:
        if args.grid % 2 or args.grid < 8:
            raise ParseError("--grid must be even and at least 8")
        q = q.resampled(args.grid)
    return q


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- commands

def cmd_ingest(args):
    curve = read_curve_csv(args.input[0])
    q = ingest(curve)
    if args.grid is not None:
        q = q.resampled(args.grid)
    q.save(args.output)
    _log(f"ingested {curve.n} samples, T = {fmt(q.T)}, theta = {fmt(q.theta)}")


def cmd_spectrum(args):
    q = _load_potential(args)
    K = args.modes or max(8, q.n // 8)
    sd = perturbed_fourier(q, K)
    fg = is_finite_gap(sd, tol=args.tol)
    diag = asymptotic_diagnostics(q, K)
    data = sd.to_dict()
    data["finite_gap"] = {"verdict": fg.verdict, "gap_indices": fg.gap_indices, "K0": fg.K0, "tol": fg.tol}
    rows = ["k,lambda_re,lambda_im,mult,z_re,z_im,abs_z,d_k,partial_l2"]
    dmap = {int(k): (d, diag.partial[abs(int(k))]) for k, d in zip(diag.ks, diag.d)}
    for i, k in enumerate(sd.ks):
        d, part = dmap.get(int(k), (np.nan, np.nan))
        vals = [sd.lam[i].real, sd.lam[i].imag, None, sd.z[i].real, sd.z[i].imag, abs(sd.z[i]), d, part]
        cells = [str(int(k))] + [str(int(sd.mult[i])) if v is None else fmt(v) for v in vals]
        rows.append(",".join(cells))
    diag_path = args.diagnostics or _sibling(args.output, "diagnostics.csv")
    atomic_write(args.output, dumps17(data))
    atomic_write(diag_path, "\n".join(rows) + "\n")
    _log(f"K = {K}, K_central = {sd.K_central}; finite gap: {fg.verdict} "
         f"(tol {fg.tol:.3g}, {len(fg.gap_indices)} indices above tol)")


def cmd_approximate(args):
    q = _load_potential(args)
    cfg = SolverConfig.load(args.config) if args.config else SolverConfig()
    if args.tol is not None:
        cfg.tol = args.tol
    if args.modes is not None:
        cfg.K_max = args.modes
    n_trunc = args.trunc if args.trunc is not None else cfg.n_trunc
    if n_trunc is None:
        raise ParseError("--trunc (or n_trunc in --config) is required")
    space = args.space
    res = approximate(q, n_trunc, cfg, space=space, seed=args.seed)
    res.q.save(args.output)
    report = {
        "N": res.N, "n_trunc": res.n_trunc, "theta": res.q.theta,
        "iterations": res.result.iterations, "exact_steps": res.result.exact_steps,
        "residual": res.result.residual, "residual_history": res.result.history,
        "l2_distance": res.distance, "l2_norm_input": l2_norm(q),
    }
    if res.closing is not None:
        report["closing"] = {"space": space, "eta": res.eta, "residuals": res.closing,
                             "history": res.result.closing_history}
    elif space is not None:
        report["closing"] = {"space": space, "skipped": "input potential is not closed in this space"}
    atomic_write(args.report or _sibling(args.output, "report.json"), dumps17(report))
    _log(f"converged in {res.result.iterations} iterations, residual {res.result.residual:.3e}, "
         f"L2 distance {res.distance:.6g}")


def cmd_reconstruct(args):
    q = _load_potential(args)
    space = args.space or "r3"
    curve = reconstruct(q, space)
    text = curve_csv_text(curve)
    gap = curve.info["endpoint_gap"]
    header = f"# endpoint_gap={fmt(gap)} theta={fmt(q.theta)}\n"
    atomic_write(args.output, header + text)
    if args.report:
        atomic_write(args.report, dumps17({"space": space, "endpoint_gap": gap,
                                           "frame_gap": curve.info["frame_gap"], "theta": q.theta}))
    _log(f"{curve.n} samples, endpoint gap {gap:.3e}")


def cmd_compare(args):
    if len(args.input) != 2:
        raise ParseError("compare needs exactly two --input curves")
    c1, c2 = (read_curve_csv(p) for p in args.input)
    out = {f"W{k},2": sobolev_distance(c1, c2, k, aligned=args.align) for k in (0, 1, 2)}
    out["aligned"] = bool(args.align)
    atomic_write(args.output, dumps17(out))
    _log(", ".join(f"{k} = {v:.6g}" for k, v in out.items() if k != "aligned"))


def cmd_diagnose(args):
    q = _load_potential(args)
    K = args.modes or max(8, q.n // 8)
    rep = asymptotic_diagnostics(q, K)
    out = {
        "n": q.n, "T": q.T, "theta": q.theta, "l2_norm": l2_norm(q), "K": K,
        "d_k": [[int(k), float(d)] for k, d in zip(rep.ks, rep.d)],
        "partial_l2": rep.partial.tolist(),
        "tail_fraction": rep.tail_fraction(K // 2) if K >= 2 else 0.0,
        "ratio": [[complex_pair(l), float(r)] for l, r in zip(rep.lam_grid, rep.ratio)],
    }
    for space in ([args.space] if args.space else ["r3", "s3"]):
        out[f"closing_{space}"] = check_closing(q, space, tol=args.tol or 1e-8).to_dict()
    atomic_write(args.output, dumps17(out))
    _log(f"diagnostics for K = {K} written")


COMMANDS = {
    "ingest": (cmd_ingest, "curve CSV -> potential JSON"),
    "spectrum": (cmd_spectrum, "potential JSON -> spectrum JSON + diagnostics CSV"),
    "approximate": (cmd_approximate, "potential JSON -> finite-gap potential JSON + report"),
    "reconstruct": (cmd_reconstruct, "potential JSON -> curve CSV"),
    "compare": (cmd_compare, "two curve CSVs -> Sobolev distances JSON"),
    "diagnose": (cmd_diagnose, "potential JSON -> asymptotic and closing diagnostics"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapcurve", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--input", action="append", required=True, help="input file (twice for compare)")
        s.add_argument("--output", required=True)
        s.add_argument("--space", choices=["r3", "s3"])
        s.add_argument("--grid", type=_positive(int), help="resample the potential to this many points")
        s.add_argument("--modes", type=_positive(int), help="largest |k| of the spectral range")
        s.add_argument("--trunc", type=_positive(int), help="truncation index n")
        s.add_argument("--tol", type=_positive(float))
        s.add_argument("--seed", type=int, default=0)
        if name == "spectrum":
            s.add_argument("--diagnostics", help="diagnostics CSV path (default: next to --output)")
        if name in ("approximate", "reconstruct"):
            s.add_argument("--report", help="report JSON path")
        if name == "approximate":
            s.add_argument("--config", help="solver config JSON")
        if name == "compare":
            s.add_argument("--align", action="store_true", help="remove the best rigid motion first")
    return p


def _thread_limit():
    val = os.environ.get(THREADS_ENV)
    if not val:
        return contextlib.nullcontext()
    try:
        n = int(val)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ParseError(f"{THREADS_ENV} must be a positive integer, got {val!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        with _thread_limit():
            func(args)
    except GapcurveError as exc:
        _log(f"gapcurve {args.command}: {exc}")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
