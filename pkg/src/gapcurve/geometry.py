"""Curves in R^3 and S^3 versus their complex curvature potentials.

R^3 is identified with su2 through the orthonormal basis of algebra.SU2_BASIS
and S^3 with SU2 through unit quaternions (scalar first).  Curves are closed,
unit speed and sampled at t_j = j T / n without repeating the endpoint.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import algebra as alg
from .errors import DomainError, ParseError
from .frame import integrate_frames, monodromy_batch
from .jsonio import atomic_write, fmt
from .potential import Potential, fft_resample, fft_shift, regauge
from .spectral import mu_from_monodromy, mu_prime_from_monodromy

SPEED_TOL = 1e-3
SPHERE_TOL = 1e-9
HEADERS = {"r3": ["t", "x", "y", "z"], "s3": ["t", "q0", "q1", "q2", "q3"]}


@dataclass
class CurveSamples:
    space: str
    T: float
    points: np.ndarray
    tangents: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.space not in HEADERS:
            raise ValueError(f"space must be one of {tuple(HEADERS)}")
        self.points = np.asarray(self.points, dtype=float)
        dim = 3 if self.space == "r3" else 4
        if self.points.ndim != 2 or self.points.shape[1] != dim:
            raise ValueError(f"{self.space} points need {dim} coordinates")
        if self.space == "s3":
            dev = np.max(np.abs(np.linalg.norm(self.points, axis=1) - 1))
            if dev > SPHERE_TOL:
                raise DomainError(f"S3 points are off the unit sphere by {dev:.2e}")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.h


# ---------------------------------------------------------------- CSV

def read_curve_csv(source) -> CurveSamples:
    """Parse a curve CSV (path or file object); '#' lines are comments."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read {source}: {exc}") from exc
    header, rows, lines = None, [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = [c.lower() for c in cells]
            if header not in HEADERS.values():
                raise ParseError(f"unknown header {line!r}; expected t,x,y,z or t,q0,q1,q2,q3", line=lineno)
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", line=lineno)
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", line=lineno) from None
        if not np.all(np.isfinite(vals)):
            raise ParseError("non-finite value", line=lineno)
        rows.append(vals)
        lines.append(lineno)
    if header is None:
        raise ParseError("empty curve file")
    if len(rows) < 3:
        raise ParseError("a curve needs at least three samples")
    data = np.array(rows)
    t, pts = data[:, 0], data[:, 1:]
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmin(dt > 0)) + 1
        raise ParseError("times must increase", line=lines[bad])
    h = np.median(dt)
    off = np.abs(dt - h) > 1e-6 * h
    if np.any(off):
        raise ParseError("times must be uniformly spaced", line=lines[int(np.argmax(off)) + 1])
    # a repeated closing sample is dropped
    scale = max(1.0, np.max(np.abs(pts)))
    if np.linalg.norm(pts[-1] - pts[0]) < 1e-12 * scale:
        pts, t = pts[:-1], t[:-1]
    space = "r3" if header == HEADERS["r3"] else "s3"
    try:
        return CurveSamples(space, float(pts.shape[0] * h), pts)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def curve_csv_text(curve: CurveSamples, include_endpoint: bool = False) -> str:
    buf = io.StringIO()
    buf.write(",".join(HEADERS[curve.space]) + "\n")
    t = curve.times
    pts = curve.points
    if include_endpoint and "endpoint" in curve.info:
        t = np.append(t, curve.T)
        pts = np.vstack([pts, curve.info["endpoint"]])
    for tj, p in zip(t, pts):
        buf.write(",".join(fmt(v) for v in (tj, *p)) + "\n")
    return buf.getvalue()


def write_curve_csv(curve: CurveSamples, path) -> None:
    atomic_write(path, curve_csv_text(curve))


# ---------------------------------------------------------------- helpers

def spectral_derivative(x, T: float, order: int = 1) -> np.ndarray:
    """Derivative of periodic samples along axis 0 via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n) * (2 * np.pi / T)
    if n % 2 == 0:
        k[n // 2] = 0.0
    mult = (1j * k) ** order
    return np.real(np.fft.ifft(np.fft.fft(x, axis=0) * mult.reshape((-1,) + (1,) * (x.ndim - 1)), axis=0))


def _check_unit_speed(curve: CurveSamples, tol: float = SPEED_TOL):
    pts = curve.points
    chords = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    if np.any(chords[:-1] < 1e-12 * curve.h):
        raise DomainError("degenerate (zero-length) segment")
    ratio = chords / curve.h
    interior = np.abs(ratio[:-1] - 1)
    if np.max(interior) > tol:
        raise DomainError(f"speed defect {np.max(interior):.2e} exceeds {tol:g}; resample by arc length")
    if abs(ratio[-1] - 1) > tol:
        raise DomainError(f"curve not closed (closing chord {chords[-1]:.3e}, step {curve.h:.3e})")


def _orient4(g, T, U):
    """Unit vector completing (g, T, U) to a positively oriented orthonormal frame of R^4."""
    A = np.stack([g, T, U], axis=-2)
    V = np.empty(g.shape)
    for i in range(4):
        cols = [j for j in range(4) if j != i]
        V[..., i] = (-1) ** (i + 1) * np.linalg.det(A[..., cols])
    # det[g, T, U, V] = -1: with this orientation the S^3 and R^3 conventions agree
    return V


def _transport(Omega_fn, X0, n, h):
    """Solve X' = Omega(t) X over n cells (fourth-order Gauss-Magnus, exact exponential)."""
    g1 = 0.5 - np.sqrt(3) / 6
    g2 = 0.5 + np.sqrt(3) / 6
    A1, A2 = Omega_fn(g1), Omega_fn(g2)
    Om = 0.5 * h * (A1 + A2) + np.sqrt(3) / 12 * h * h * (A2 @ A1 - A1 @ A2)
    E = expm(Om)
    X = np.empty((n + 1,) + X0.shape)
    X[0] = X0
    for j in range(n):
        X[j + 1] = E[j] @ X[j]
    return X


def _initial_normal(T0, curv0, ref):
    if np.linalg.norm(curv0) > 1e-8:
        U = curv0
    else:
        U = None
        for e in np.eye(ref.size):
            cand = e - (e @ T0) * T0
            if ref.size == 4:
                cand = cand - (cand @ ref) * ref
            if np.linalg.norm(cand) > 0.5:
                U = cand
                break
    return U / np.linalg.norm(U)


# ---------------------------------------------------------------- ingest

def _refine(x, s):
    if s == 1:
        return x
    return np.stack([np.real(fft_resample(col, x.shape[0] * s)) for col in x.T], axis=1)


def ingest(curve: CurveSamples, branch: str = "minimal", check: bool = True,
           substeps: int = 4) -> Potential:
    """Complex curvature potential of a closed unit-speed curve.

    A parallel normal frame (U, V) is transported along the curve; the raw
    potential is <T', U> + i <T', V> (covariant derivative for S^3).  The
    rotation of the frame over one period gives theta T, and the raw data are
    regauged to a periodic potential.  The initial normal follows the
    curvature vector at t = 0, which fixes the constant phase.
    """
    if check:
        _check_unit_speed(curve)
    n, T, h = curve.n, curve.T, curve.h
    if n < 8 or n % 2:
        raise DomainError("need an even number of at least 8 samples")
    P = curve.points
    Tan = spectral_derivative(P, T)
    if curve.space == "s3":
        Tan = Tan - np.sum(Tan * P, axis=1, keepdims=True) * P
    Tan /= np.linalg.norm(Tan, axis=1, keepdims=True)
    dTan = spectral_derivative(Tan, T)
    curv = dTan + P if curve.space == "s3" else dTan

    def interp(x, frac):
        return np.real(fft_shift(x.T, frac)).T

    U0 = _initial_normal(Tan[0], curv[0] - (curv[0] @ Tan[0]) * Tan[0], P[0])
    # transport on a spectrally refined grid, read off at the original nodes
    fine = {"T": _refine(Tan, substeps), "C": _refine(curv, substeps), "P": _refine(P, substeps)}

    def omega_fine(frac):
        Tq, Cq = interp(fine["T"], frac), interp(fine["C"], frac)
        Om = Cq[:, :, None] * Tq[:, None, :] - Tq[:, :, None] * Cq[:, None, :]
        if curve.space == "s3":
            Pq = interp(fine["P"], frac)
            Om = Om + Tq[:, :, None] * Pq[:, None, :] - Pq[:, :, None] * Tq[:, None, :]
        return Om

    U = _transport(omega_fine, U0, n * substeps, h / substeps)[::substeps]
    Tn = Tan[0]
    if curve.space == "r3":
        V = np.cross(Tan, U[:-1])
        V0 = np.cross(Tn, U0)
    else:
        V = _orient4(P, Tan, U[:-1])
        V0 = _orient4(P[0], Tn, U0)
    k1 = np.sum(curv * U[:-1], axis=1)
    k2 = np.sum(curv * V, axis=1)
    raw = k1 + 1j * k2
    # frame holonomy: U(T) = cos(Th) U0 + sin(Th) V0 and raw(t + T) = exp(-i Th) raw(t)
    hol = np.arctan2(U[-1] @ V0, U[-1] @ U0)
    if branch == "minimal":
        theta = -hol / T
        if np.isclose(theta, -np.pi / T):
            theta = np.pi / T
    else:
        raise ValueError("only the minimal branch is defined for sampled curves")
    q = regauge(raw, T, n, theta=theta)
    return q


# ---------------------------------------------------------------- reconstruct

def reconstruct(q: Potential, space: str, order: int = 4, substeps: int = 4) -> CurveSamples:
    """Curve of a potential: 2 F' F^-1 at theta (R^3) or F(1+theta) F(-1+theta)^-1 (S^3)."""
    th = q.theta
    if space == "r3":
        F, Fp = integrate_frames(q, [th], with_derivative=True, order=order, substeps=substeps)
        F, Fp = F[0], Fp[0]
        Finv = alg.adjugate(F)
        G = 2 * Fp @ Finv
        Gt = F @ alg.EPS @ Finv
        pts = alg.su2_project(G, tol=1e-6)
        tan = alg.su2_project(Gt, tol=1e-6)
        frame_gap = float(np.max(np.abs(F[-1] - F[0] * np.sign(np.real(alg.trace(F[-1]))))))
    elif space == "s3":
        F, _ = integrate_frames(q, [1 + th, -1 + th], order=order, substeps=substeps)
        F2inv = alg.adjugate(F[1])
        G = F[0] @ F2inv
        Gt = F[0] @ alg.EPS @ F2inv
        pts = alg.su2_to_quat(G, tol=1e-6)
        tan = alg.su2_to_quat(Gt, tol=1e-6)
        frame_gap = float(max(np.max(np.abs(F[k, -1] - F[k, 0] * np.sign(np.real(alg.trace(F[k, -1])))))
                              for k in range(2)))
    else:
        raise ValueError("space must be 'r3' or 's3'")
    gap = float(np.linalg.norm(pts[-1] - pts[0]))
    info = {"endpoint": pts[-1], "endpoint_gap": gap, "frame_gap": frame_gap, "theta": th}
    return CurveSamples(space, q.T, pts[:-1], tan[:-1], info)


# ---------------------------------------------------------------- closing

@dataclass
class ClosingReport:
    space: str
    theta: float
    eta: int
    mu: list
    mu_prime: list
    mu_residuals: list
    matrix_residuals: list
    endpoint_gap: float
    frame_gap: float
    closed: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "space": self.space, "theta": self.theta, "eta": self.eta,
            "mu": [[float(np.real(m)), float(np.imag(m))] for m in self.mu],
            "mu_prime": [[float(np.real(m)), float(np.imag(m))] for m in self.mu_prime],
            "mu_residuals": self.mu_residuals, "matrix_residuals": self.matrix_residuals,
            "endpoint_gap": self.endpoint_gap, "frame_gap": self.frame_gap,
            "closed": self.closed, "tol": self.tol,
        }


def check_closing(q: Potential, space: str, tol: float = 1e-8, order: int = 4) -> ClosingReport:
    """Closing conditions in eigenvalue form and matrix form, plus the endpoint gap they imply."""
    th = q.theta
    lams = np.array([th], complex) if space == "r3" else np.array([1 + th, -1 + th], complex)
    if space not in ("r3", "s3"):
        raise ValueError("space must be 'r3' or 's3'")
    M, Mp = monodromy_batch(q, lams, with_derivative=True, order=order)
    eta = 1 if np.real(alg.trace(M[0])) >= 0 else -1
    mus, mups, mres, xres = [], [], [], []
    for i in range(lams.size):
        cands = [mu_from_monodromy(M[i], s) for s in (1, -1)]
        s = 1 if abs(cands[0] - eta) <= abs(cands[1] - eta) else -1
        mus.append(complex(cands[0 if s == 1 else 1]))
        mres.append(float(abs(mus[-1] - eta)))
        xres.append(float(np.max(np.abs(M[i] - eta * alg.I2))))
        if space == "r3":
            mups.append(complex(mu_prime_from_monodromy(M[i], Mp[i], s)))
            mres.append(float(abs(mups[-1])))
            xres.append(float(np.max(np.abs(Mp[i]))))
    if space == "r3":
        gap = float(np.linalg.norm(alg.su2_project(2 * Mp[0] @ alg.adjugate(M[0]), tol=1e-6)))
    else:
        end = alg.su2_to_quat(M[0] @ alg.adjugate(M[1]), tol=1e-6)
        gap = float(np.linalg.norm(end - np.array([1.0, 0, 0, 0])))
    frame_gap = float(max(xres[0::2] if space == "r3" else xres))
    closed = max(mres + xres) < tol
    return ClosingReport(space, th, eta, mus, mups, mres, xres, gap, frame_gap, bool(closed), tol)


# ---------------------------------------------------------------- distances

def _kabsch(A, B, translate: bool):
    """Orthogonal R (det +1) and shift c minimizing |A R^t + c - B|."""
    ca = A.mean(axis=0) if translate else np.zeros(A.shape[1])
    cb = B.mean(axis=0) if translate else np.zeros(B.shape[1])
    H = (A - ca).T @ (B - cb)
    U, _, Vt = np.linalg.svd(H)
    D = np.eye(A.shape[1])
    D[-1, -1] = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ D @ U.T
    return R, cb - ca @ R.T


def align(c1: CurveSamples, c2: CurveSamples) -> CurveSamples:
    """Copy of c1 moved onto c2 by the best rigid motion (rotation + translation in R^3, SO(4) on S^3)."""
    R, c = _kabsch(c1.points, c2.points, translate=c1.space == "r3")
    tan = None if c1.tangents is None else c1.tangents @ R.T
    return CurveSamples(c1.space, c1.T, c1.points @ R.T + c, tan, dict(c1.info))


def sobolev_distance(c1: CurveSamples, c2: CurveSamples, order: int = 2, aligned: bool = False) -> float:
    """Discrete W^{order,2} distance: L2 norms of the difference and its central differences, summed."""
    if c1.space != c2.space or c1.n != c2.n or not np.isclose(c1.T, c2.T, rtol=1e-12):
        raise ValueError("curves live on different grids or spaces")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if aligned:
        c1 = align(c1, c2)
    e = c1.points - c2.points
    h = c1.h

    def l2(x):
        return float(np.sqrt(h * np.sum(x * x)))

    total = l2(e)
    if order >= 1:
        total += l2((np.roll(e, -1, 0) - np.roll(e, 1, 0)) / (2 * h))
    if order >= 2:
        total += l2((np.roll(e, -1, 0) - 2 * e + np.roll(e, 1, 0)) / (h * h))
    return total


# ---------------------------------------------------------------- test curves

def arclength_curve(func, n: int, space: str = "r3", length: float | None = None,
                    m: int = 4096) -> CurveSamples:
    """Sample a closed curve func(phi), phi in [0, 2 pi), at n equal arc-length steps.

    Arc length is integrated spectrally on m points and inverted by Newton on
    its Fourier series.  For R^3 the curve may be rescaled to total length
    `length`; on S^3 the length is intrinsic.
    """
    phi = 2 * np.pi * np.arange(m) / m
    X = np.asarray(func(phi), dtype=float)
    dX = spectral_derivative(X, 2 * np.pi)
    speed = np.linalg.norm(dX, axis=1)
    c = np.fft.rfft(speed) / m
    L = 2 * np.pi * c[0].real
    k = np.arange(1, c.size)

    coef = c[1:] / (1j * k)
    target = L * np.arange(n) / n
    p = 2 * np.pi * np.arange(n) / n
    for _ in range(50):
        # s(p) = c0 p + sum_k 2 Re(c_k e^{ikp} / (i k)) and its derivative
        e = np.exp(1j * np.outer(p, k))
        s = c[0].real * p + 2 * np.real(e @ coef)
        ds = c[0].real + 2 * np.real(e @ c[1:])
        step = (s - target) / ds
        p = p - step
        if np.max(np.abs(step)) < 1e-14:
            break
    pts = np.asarray(func(p), dtype=float)
    if space == "r3" and length is not None:
        pts = pts * (length / L)
        L = length
    return CurveSamples(space, float(L), pts)
