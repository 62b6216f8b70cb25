"""Trace, Floquet multipliers, zeros of a - d and perturbed Fourier coefficients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import algebra as alg
from .errors import ParseError, ResolutionError
from .frame import monodromy_batch, vacuum_frame
from .jsonio import atomic_write, complex_pair, dumps17, load_json
from .potential import Potential, l2_norm

NEWTON_MAX_ITER = 50
CLUSTER_REL = 1e-3


def lattice(k, T):
    """Vacuum zeros 2 pi k / T."""
    return 2 * np.pi * np.asarray(k) / T


def trace_delta(q: Potential, lam):
    M, _ = monodromy_batch(q, lam, with_derivative=False)
    return alg.trace(M)


def discriminant(M):
    """((a - d)/2)^2 + b c = (tr M / 2)^2 - det M, free of cancellation near tr M = +-2."""
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    return 0.25 * (a - d) ** 2 + b * c


def mu_from_monodromy(M, branch_sign: int = 1):
    return 0.5 * alg.trace(M) + branch_sign * np.sqrt(discriminant(M))


def mu(q: Potential, lam, branch_sign: int = 1):
    """Eigenvalue (tr M +- sqrt(tr^2 M - 4)) / 2 of the monodromy (principal square root)."""
    M, _ = monodromy_batch(q, lam, with_derivative=False)
    return mu_from_monodromy(M, branch_sign)


def mu_prime_from_monodromy(M, Mp, branch_sign: int = 1, degenerate_tol: float = 1e-12):
    """lam-derivative of the branch mu = tr/2 + s sqrt(disc).

    Where the discriminant vanishes with M semisimple (M = +-I) the branch is
    still smooth and mu' is an eigenvalue of M'; that limit is used below
    degenerate_tol.
    """
    M = np.asarray(M)
    Mp = np.asarray(Mp)
    disc = discriminant(M)
    root = np.sqrt(disc)
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    ap, bp, cp, dp = Mp[..., 0, 0], Mp[..., 0, 1], Mp[..., 1, 0], Mp[..., 1, 1]
    ddisc = 0.5 * (a - d) * (ap - dp) + bp * c + b * cp
    scale = np.maximum(1.0, alg.opnorm(M))
    small = np.abs(root) < degenerate_tol * scale
    safe = np.where(small, 1.0, root)
    generic = 0.5 * (ap + dp) + branch_sign * ddisc / (2 * safe)
    limit = 0.5 * (ap + dp) + branch_sign * np.sqrt(discriminant(Mp))
    return np.where(small, limit, generic)


def default_K_central(q: Potential) -> int:
    bound = 2 * (l2_norm(q) + 1)
    K = int(np.floor(bound * q.T / (2 * np.pi))) + 1
    return max(K, 0)


@dataclass
class SpectralData:
    T: float
    theta: float
    K: int
    K_central: int
    ks: np.ndarray
    lam: np.ndarray
    mult: np.ndarray
    z: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def index(self, k: int) -> int:
        if abs(k) > self.K:
            raise IndexError(k)
        return int(k) + self.K

    def lam_k(self, k: int) -> complex:
        return complex(self.lam[self.index(k)])

    def z_k(self, k: int) -> complex:
        return complex(self.z[self.index(k)])

    def central_zeros(self):
        """Distinct zeros of the central block with their multiplicities."""
        sel = np.abs(self.ks) <= self.K_central
        out = []
        for lam, m in zip(self.lam[sel], self.mult[sel]):
            if not any(abs(lam - l0) < 1e-12 * max(1.0, abs(lam)) for l0, _ in out):
                out.append((complex(lam), int(m)))
        return out

    def to_dict(self) -> dict:
        entries = []
        for i, k in enumerate(self.ks):
            e = {"k": int(k), "lambda": complex_pair(self.lam[i]), "mult": int(self.mult[i])}
            if self.z is not None:
                e["z"] = complex_pair(self.z[i])
            entries.append(e)
        return {"T": self.T, "theta": self.theta, "K_central": int(self.K_central), "entries": entries}

    @classmethod
    def from_dict(cls, d) -> "SpectralData":
        try:
            entries = sorted(d["entries"], key=lambda e: e["k"])
            ks = np.array([int(e["k"]) for e in entries])
            lam = np.array([complex(*e["lambda"]) for e in entries])
            mult = np.array([int(e["mult"]) for e in entries])
            z = np.array([complex(*e["z"]) for e in entries]) if all("z" in e for e in entries) else None
            K = int(np.max(np.abs(ks)))
            if not np.array_equal(ks, np.arange(-K, K + 1)):
                raise ParseError("spectrum entries must cover k = -K..K")
            return cls(float(d["T"]), float(d["theta"]), K, int(d["K_central"]), ks, lam, mult, z)
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid spectrum JSON: {exc}") from exc

    def save(self, path) -> None:
        atomic_write(path, dumps17(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SpectralData":
        return cls.from_dict(load_json(path))


def _f_and_df(q: Potential, lams):
    M, Mp = monodromy_batch(q, lams, with_derivative=True)
    return M[..., 0, 0] - M[..., 1, 1], Mp[..., 0, 0] - Mp[..., 1, 1]


def newton_zeros(q: Potential, seeds, max_iter: int = NEWTON_MAX_ITER, rtol: float = 1e-13):
    """Batched damped Newton on f = a - d; returns (roots, converged flags)."""
    lam = np.array(seeds, dtype=complex).reshape(-1)
    f, df = _f_and_df(q, lam)
    done = np.zeros(lam.shape, dtype=bool)
    for _ in range(max_iter):
        active = ~done
        if not active.any():
            break
        safe = np.where(df[active] == 0, 1.0, df[active])
        step = np.where(df[active] == 0, 0.0, f[active] / safe)
        trial = lam[active] - step
        ft, dft = _f_and_df(q, trial)
        # damping: halve steps that increase the residual
        for _ in range(8):
            worse = np.abs(ft) > np.abs(f[active]) * (1 + 1e-12) + 1e-300
            if not worse.any():
                break
            step = np.where(worse, 0.5 * step, step)
            trial = lam[active] - step
            ft2, dft2 = _f_and_df(q, trial[worse])
            ft[worse], dft[worse] = ft2, dft2
        idx = np.flatnonzero(active)
        lam[idx], f[idx], df[idx] = trial, ft, dft
        small_step = np.abs(step) <= rtol * (1 + np.abs(trial))
        zero_res = f[idx] == 0
        done[idx[small_step | zero_res]] = True
    return lam, done


def _circle_points(center, radius, npts):
    phi = 2 * np.pi * np.arange(npts) / npts
    return center + radius * np.exp(1j * phi), np.exp(1j * phi)


def contour_count(q: Potential, center, radius, npts: int = 256):
    """Zero count of a - d inside a circle by the argument principle (two estimates must agree)."""
    while True:
        z, u = _circle_points(center, radius, npts)
        f, df = _f_and_df(q, z)
        if np.any(f == 0):
            raise ResolutionError("a zero lies on the counting contour")
        g = df / f
        count_int = np.mean(g * radius * u)
        jumps = np.angle(np.roll(f, -1) / f)
        count_arg = np.sum(jumps) / (2 * np.pi)
        n_int = int(np.round(count_int.real))
        if (abs(count_arg - n_int) < 1e-6 and abs(count_int - n_int) < 1e-3
                and np.max(np.abs(jumps)) < 1.0):
            return n_int, z, u, g
        if npts >= 1 << 15:
            raise ResolutionError("zero count on contour did not stabilize; increase n")
        npts *= 2


def contour_zeros(q: Potential, center, radius, npts: int | None = None):
    """Zeros of a - d inside |lam - center| < radius with multiplicities.

    Power sums of the zeros come from contour moments of f'/f; the
    Newton-identity polynomial gives first estimates which are grouped into
    clusters (multiple zeros) and polished by Newton when simple.
    """
    if npts is None:
        npts = 256
    count, z, u, g = contour_count(q, center, radius, npts)
    if count == 0:
        return np.zeros(0, dtype=complex), np.zeros(0, dtype=int)
    # the trapezoid rule needs ~ -log(eps)/log(1/rho) points per zero scale
    need = 48 * (count + 1)
    if z.size < need:
        npts = 1 << int(np.ceil(np.log2(need)))
        count, z, u, g = contour_count(q, center, radius, npts)
    p = np.arange(1, count + 1)
    sig = np.mean((g * radius * u)[None, :] * u[None, :] ** p[:, None], axis=1)
    e = np.zeros(count + 1, dtype=complex)
    e[0] = 1
    for k in range(1, count + 1):
        e[k] = sum((-1) ** (i - 1) * e[k - i] * sig[i - 1] for i in range(1, k + 1)) / k
    coeffs = e * (-1.0) ** np.arange(count + 1)
    w = np.roots(coeffs) if count > 0 else np.zeros(0)
    est = center + radius * w
    return _cluster_and_polish(q, est, center, radius)


def _cluster_and_polish(q, est, center, radius):
    tol = CLUSTER_REL * max(1.0, radius)
    order = np.argsort(est.real)
    est = est[order]
    groups = []
    for lam in est:
        for grp in groups:
            if abs(np.mean(grp) - lam) < tol:
                grp.append(lam)
                break
        else:
            groups.append([lam])
    roots, mults = [], []
    singles = [g[0] for g in groups if len(g) == 1]
    if singles:
        polished, ok = newton_zeros(q, singles, max_iter=30)
        moved = np.abs(polished - np.array(singles)) > tol
        polished = np.where(ok & ~moved, polished, np.array(singles))
    it = iter(polished) if singles else iter(())
    for g in groups:
        if len(g) == 1:
            roots.append(next(it))
            mults.append(1)
        else:
            c = np.mean(g)
            spread = max(np.max(np.abs(np.array(g) - c)), 1e-8)
            m, *_ = contour_count(q, c, min(20 * spread + 1e-4, 0.5 * tol), 128)
            if m != len(g):
                raise ResolutionError(f"cluster near {c:.6g} has {m} zeros, expected {len(g)}")
            roots.extend([c] * len(g))
            mults.extend([len(g)] * len(g))
    return np.array(roots, dtype=complex), np.array(mults, dtype=int)


def _sort_central(roots, mults):
    key_re = np.round(roots.real, 9)
    order = np.lexsort((roots.imag, key_re))
    return roots[order], mults[order]


def locate_lambda_k(q: Potential, K: int, K_central: int | None = None) -> SpectralData:
    """Zeros lam_k of a - d for |k| <= K.

    Outside the central block each zero is tracked by Newton from the lattice
    point 2 pi k / T; inside, all 2 K_central + 1 zeros are taken from the disk
    of radius pi (2 K_central + 1) / T and enumerated by real, then imaginary part.
    """
    T = q.T
    if K_central is None:
        K_central = default_K_central(q)
    if K < K_central:
        K = K_central
    ks = np.arange(-K, K + 1)
    lam = np.zeros(ks.size, dtype=complex)
    mult = np.ones(ks.size, dtype=int)

    R = 0.5 * (lattice(K_central, T) + lattice(K_central + 1, T))
    croots, cmults = contour_zeros(q, 0.0, R)
    if croots.size != 2 * K_central + 1:
        raise ResolutionError(
            f"found {croots.size} zeros in the central disk, expected {2 * K_central + 1}; increase n")
    croots, cmults = _sort_central(croots, cmults)
    central = np.abs(ks) <= K_central
    lam[central] = croots
    mult[central] = cmults

    tail = ~central
    if tail.any():
        seeds = lattice(ks[tail], T)
        roots, ok = newton_zeros(q, seeds)
        bad = ~ok | (np.abs(roots - seeds) >= np.pi / T)
        for i in np.flatnonzero(bad):
            roots[i] = _disk_fallback(q, seeds[i], T)
        lam[tail] = roots
    info = {"central_radius": R}
    return SpectralData(T, q.theta, K, K_central, ks, lam, mult, None, info)


def _disk_fallback(q, center, T):
    for radius in (np.pi / (2 * T), 0.95 * np.pi / T):
        roots, mults = contour_zeros(q, center, radius)
        if roots.size == 1:
            return roots[0]
    raise ResolutionError(f"no isolated zero near {center:.6g}; increase n")


def perturbed_fourier(q: Potential, K: int, K_central: int | None = None) -> SpectralData:
    """z_k = 2 (-1)^k b(lam_k) for |k| <= K."""
    sd = locate_lambda_k(q, K, K_central)
    sd.z = z_values(q, sd.ks, sd.lam)
    return sd


def z_values(q: Potential, ks, lams):
    M, _ = monodromy_batch(q, lams, with_derivative=False)
    sign = np.where(np.asarray(ks) % 2 == 0, 1.0, -1.0)
    return 2 * sign * M[..., 0, 1]


@dataclass
class AsymptoticReport:
    ks: np.ndarray
    d: np.ndarray
    partial: np.ndarray
    lam_grid: np.ndarray
    ratio: np.ndarray

    def tail_fraction(self, K: int) -> float:
        """l2 mass of d_k over K < |k| <= max relative to the total."""
        total = np.sqrt(np.sum(self.d ** 2))
        if total == 0:
            return 0.0
        tail = np.sqrt(np.sum(self.d[np.abs(self.ks) > K] ** 2))
        return float(tail / total)

    def rows(self):
        K = int(np.max(self.ks))
        for k in range(K + 1):
            sel = np.abs(self.ks) == k
            yield k, self.d[sel], self.partial[k]


def asymptotic_diagnostics(q: Potential, K: int, lam_grid=None) -> AsymptoticReport:
    """d_k = |M(lam_k0) - M0(lam_k0)|, cumulative l2 sums over |k| <= j, and r = |M - M0| / |M0|."""
    ks = np.arange(-K, K + 1)
    lk = lattice(ks, q.T)
    M, _ = monodromy_batch(q, lk, with_derivative=False)
    d = alg.opnorm(M - vacuum_frame(q.T, lk))
    partial = np.array([np.sqrt(np.sum(d[np.abs(ks) <= j] ** 2)) for j in range(K + 1)])
    if lam_grid is None:
        top = 0.9 * 10 * q.n / q.T
        reals = np.geomspace(1.0, top, 12)
        lam_grid = np.concatenate([reals, reals + 2j])
    lam_grid = np.asarray(lam_grid, dtype=complex)
    Mg, _ = monodromy_batch(q, lam_grid, with_derivative=False)
    M0 = vacuum_frame(q.T, lam_grid)
    ratio = alg.opnorm(Mg - M0) / alg.opnorm(M0)
    return AsymptoticReport(ks, d, partial, lam_grid, ratio)


@dataclass
class FiniteGapVerdict:
    verdict: bool
    gap_indices: list
    K0: int
    tol: float


def default_tol(z) -> float:
    z = np.asarray(z)
    return float(1e-6 * np.max(np.abs(z), initial=0.0) + 1e-10)


def is_finite_gap(q_or_sd, K: int | None = None, tol: float | None = None,
                  clean_fraction: float = 0.5) -> FiniteGapVerdict:
    """Finite-gap test on the computed range |k| <= K.

    The gap set is {k : |z_k| >= tol}; K0 is its largest |k|.  The verdict is
    true when the outer band K0 < |k| <= K covers at least clean_fraction of
    the index range, i.e. the tail has numerically vanished.
    """
    sd = q_or_sd if isinstance(q_or_sd, SpectralData) else perturbed_fourier(q_or_sd, K)
    if K is None:
        K = sd.K
    sel = np.abs(sd.ks) <= K
    ks, z = sd.ks[sel], sd.z[sel]
    if tol is None:
        tol = default_tol(z)
    gaps = [int(k) for k in ks[np.abs(z) >= tol]]
    K0 = max((abs(k) for k in gaps), default=-1)
    verdict = K0 < K - clean_fraction * K
    return FiniteGapVerdict(bool(verdict), gaps, K0, tol)
