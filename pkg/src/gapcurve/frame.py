"""Extended frame dF/dt = F alpha, alpha = 1/2 (lam e + q e+ + conj(q) e-), F(0) = I.

Each grid cell is advanced by the exact exponential of a frozen generator:
order 2 uses the midpoint value of alpha, order 4 the two-point Gauss rule
with one commutator correction.  The lam-derivative F' is propagated with the
exact derivative of every cell exponential, so (F, F') is the derivative pair
of the discrete scheme itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from . import algebra as alg
from .errors import ResolutionError
from .potential import Potential, fft_shift

LAM_MAX_FACTOR = 10.0
# cells processed per vectorized block (bounds memory for large batches)
CHUNK_CELLS = 1 << 17


@dataclass
class FrameTrajectory:
    lam: complex
    times: np.ndarray
    frames: np.ndarray
    dframes: np.ndarray | None = None


@dataclass
class Monodromy:
    lam: complex
    M: np.ndarray
    Mprime: np.ndarray

    a = property(lambda self: self.M[..., 0, 0])
    b = property(lambda self: self.M[..., 0, 1])
    c = property(lambda self: self.M[..., 1, 0])
    d = property(lambda self: self.M[..., 1, 1])

    @property
    def delta(self):
        return alg.trace(self.M)


def lam_max(q: Potential, factor: float = LAM_MAX_FACTOR) -> float:
    return factor * q.n / q.T


def check_resolution(q: Potential, lams, factor: float = LAM_MAX_FACTOR):
    lams = np.asarray(lams)
    bound = lam_max(q, factor)
    if lams.size and np.max(np.abs(lams)) > bound:
        raise ResolutionError(
            f"|lambda| = {np.max(np.abs(lams)):.4g} exceeds the grid resolution bound "
            f"{bound:.4g}; increase n")


def alpha_matrix(qv, lam) -> np.ndarray:
    """1/2 (lam e + q e+ + conj(q) e-) broadcast over qv and lam."""
    qv = np.asarray(qv, dtype=complex)
    lam = np.asarray(lam, dtype=complex)
    shape = np.broadcast(qv, lam).shape
    out = np.zeros(shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 0.5j * lam
    out[..., 1, 1] = -0.5j * lam
    out[..., 0, 1] = 0.5 * qv
    out[..., 1, 0] = -0.5 * np.conj(qv)
    return out


def alpha_at(q: Potential, j: int, lam) -> np.ndarray:
    if not 0 <= j < q.n:
        raise IndexError(f"grid index {j} out of range")
    return alpha_matrix(q.samples[j], lam)


_G1 = 0.5 - np.sqrt(3) / 6
_G2 = 0.5 + np.sqrt(3) / 6


def cell_generators(q: Potential, lams, order: int = 2):
    """Per-cell generators Omega_j(lam) and their lam-derivatives, shape (L, n, 2, 2)."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    h = q.h
    half_eps = 0.5 * alg.EPS
    if order == 2:
        qm = fft_shift(q.samples, 0.5)
        Om = h * alpha_matrix(qm[None, :], lams[:, None])
        dOm = np.broadcast_to(h * half_eps, Om.shape)
    elif order == 4:
        q1 = fft_shift(q.samples, _G1)
        q2 = fft_shift(q.samples, _G2)
        a1 = alpha_matrix(q1[None, :], lams[:, None])
        a2 = alpha_matrix(q2[None, :], lams[:, None])
        c = np.sqrt(3) / 12 * h * h
        # right-multiplied system: the commutator sign is opposite to Y' = A Y
        Om = 0.5 * h * (a1 + a2) + c * alg.commutator(a1, a2)
        dOm = h * half_eps + c * (alg.commutator(half_eps, a2) + alg.commutator(a1, half_eps))
    else:
        raise ValueError("order must be 2 or 4")
    return Om, dOm


def cell_maps(q: Potential, lams, with_derivative: bool = True, order: int = 2):
    Om, dOm = cell_generators(q, lams, order)
    if not with_derivative:
        return alg.exp_traceless(Om, check=False), None
    return alg.exp_traceless_with_derivative(Om, dOm, check=False)


def _tree_product(E, D=None):
    """Ordered product E_0 E_1 ... E_{n-1} along axis -3 by pairwise reduction."""
    while E.shape[-3] > 1:
        m = E.shape[-3]
        even = m - (m % 2)
        left, right = E[..., 0:even:2, :, :], E[..., 1:even:2, :, :]
        newE = left @ right
        if D is not None:
            dl, dr = D[..., 0:even:2, :, :], D[..., 1:even:2, :, :]
            newD = left @ dr + dl @ right
        if m % 2:
            newE = np.concatenate([newE, E[..., -1:, :, :]], axis=-3)
            if D is not None:
                newD = np.concatenate([newD, D[..., -1:, :, :]], axis=-3)
        E = newE
        if D is not None:
            D = newD
    return E[..., 0, :, :], (None if D is None else D[..., 0, :, :])


def _chain(E, D=None):
    """Running products F_0 = I, F_{j+1} = F_j E_j (and F'_{j+1} = F'_j E_j + F_j D_j)."""
    L, n = E.shape[0], E.shape[1]
    F = np.empty((L, n + 1, 2, 2), dtype=complex)
    F[:, 0] = alg.I2
    Fp = None
    if D is not None:
        Fp = np.empty_like(F)
        Fp[:, 0] = 0
    for j in range(n):
        if D is not None:
            Fp[:, j + 1] = Fp[:, j] @ E[:, j] + F[:, j] @ D[:, j]
        F[:, j + 1] = F[:, j] @ E[:, j]
    return F, Fp


def _refined(q: Potential, substeps: int) -> Potential:
    return q if substeps == 1 else q.resampled(q.n * substeps)


def integrate_frames(q: Potential, lams, with_derivative: bool = False, order: int = 2,
                     substeps: int = 1, lam_factor: float = LAM_MAX_FACTOR):
    """Frames at the grid times t_0..t_n for a batch of lam; arrays (L, n+1, 2, 2)."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    check_resolution(q, lams, lam_factor)
    qr = _refined(q, substeps)
    E, D = cell_maps(qr, lams, with_derivative, order)
    F, Fp = _chain(E, D)
    if substeps > 1:
        F = F[:, ::substeps]
        Fp = None if Fp is None else Fp[:, ::substeps]
    return F, Fp


def integrate_frame(q: Potential, lam, with_derivative: bool = False, order: int = 2,
                    substeps: int = 1, lam_factor: float = LAM_MAX_FACTOR) -> FrameTrajectory:
    F, Fp = integrate_frames(q, [lam], with_derivative, order, substeps, lam_factor)
    times = np.arange(q.n + 1) * q.h
    return FrameTrajectory(complex(lam), times, F[0], None if Fp is None else Fp[0])


def monodromy_batch(q: Potential, lams, with_derivative: bool = True, order: int = 2,
                    substeps: int = 1, lam_factor: float = LAM_MAX_FACTOR):
    """M(lam) and M'(lam) for every lam in the batch (arrays of shape lams.shape + (2, 2))."""
    lams_arr = np.asarray(lams, dtype=complex)
    flat = np.atleast_1d(lams_arr).reshape(-1)
    check_resolution(q, flat, lam_factor)
    qr = _refined(q, substeps)
    M = np.empty((flat.size, 2, 2), dtype=complex)
    Mp = np.empty_like(M) if with_derivative else None
    step = max(1, CHUNK_CELLS // qr.n)
    for s in range(0, flat.size, step):
        E, D = cell_maps(qr, flat[s:s + step], with_derivative, order)
        Mc, Dc = _tree_product(E, D)
        M[s:s + step] = Mc
        if with_derivative:
            Mp[s:s + step] = Dc
    M = M.reshape(lams_arr.shape + (2, 2))
    if Mp is not None:
        Mp = Mp.reshape(lams_arr.shape + (2, 2))
    return M, Mp


def monodromy(q: Potential, lam, order: int = 2, substeps: int = 1,
              lam_factor: float = LAM_MAX_FACTOR) -> Monodromy:
    M, Mp = monodromy_batch(q, complex(lam), True, order, substeps, lam_factor)
    return Monodromy(complex(lam), M, Mp)


def vacuum_frame(t, lam) -> np.ndarray:
    """exp(lam t e / 2)."""
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=complex)
    z = 0.5j * lam * t
    out = np.zeros(np.broadcast(t, lam).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(z)
    out[..., 1, 1] = np.exp(-z)
    return out


def picard_series(q: Potential, lam, n_terms: int, tol: float | None = None,
                  oversample: int = 8) -> np.ndarray:
    """Sum of the first n_terms iterated integrals I + sum_m int ... alpha ... alpha.

    P_0 = I and P_m(t) = int_0^t P_{m-1}(s) alpha(s) ds, each integral by the
    cumulative trapezoid rule on an FFT-oversampled grid.  With tol set, the
    remainder bound (int |alpha|)^(n+1) / (n+1)! must fall below tol.
    """
    qf = q.resampled(q.n * oversample) if oversample > 1 else q
    t = np.arange(qf.n + 1) * qf.h
    qs = np.append(qf.samples, qf.samples[0])
    alpha = alpha_matrix(qs, complex(lam))
    if tol is not None:
        mass = trapezoid(alg.opnorm(alpha), t)
        bound = mass ** (n_terms + 1) / math.factorial(n_terms + 1)
        if bound > tol:
            raise ValueError(f"remainder bound {bound:.3e} above tolerance with {n_terms} terms")
    P = np.broadcast_to(alg.I2, alpha.shape).copy()
    total = alg.I2.copy()
    for _ in range(n_terms):
        P = cumulative_trapezoid(P @ alpha, t, axis=0, initial=0)
        total = total + P[-1]
    return total

