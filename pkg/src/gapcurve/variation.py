"""First variations of M, mu, lam_k and z_k with respect to the potential.

A variation dq enters through d alpha = 1/2 (dq e+ + conj(dq) e-), so every
derivative here is real-linear in dq.  The work horse is a sensitivity kernel
(P_j, Q_j) per spectral parameter with

    dM = sum_j P_j dq_j + Q_j conj(dq_j),

which turns many directions into one tensor contraction.  Two kernels exist:
"trapezoid" evaluates int_0^T F d(alpha) F^-1 dt . M on the stored frame
trajectory, "scheme" is the exact derivative of the discrete integrator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra as alg
from .errors import DomainError, MultiplicityError
from .frame import cell_generators, integrate_frames, monodromy_batch
from .potential import Potential, fft_shift, modes_to_samples
from .spectral import SpectralData, discriminant, perturbed_fourier

DEGENERATE_TOL = 1e-8


def _samples(dq, n):
    arr = dq.samples if isinstance(dq, Potential) else np.asarray(dq, dtype=complex)
    if arr.shape[-1] != n:
        raise ValueError("direction lives on a different grid")
    return arr


@dataclass
class Kernel:
    lams: np.ndarray
    M: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    midpoint: bool

    def apply(self, dq) -> np.ndarray:
        """dM for directions dq of shape (..., n); result (..., L, 2, 2)."""
        dq = np.asarray(dq, dtype=complex)
        if self.midpoint:
            dq = fft_shift(dq, 0.5)
        return (np.einsum("...j,ljab->...lab", dq, self.P)
                + np.einsum("...j,ljab->...lab", np.conj(dq), self.Q))


def sensitivity_kernel(q: Potential, lams, method: str = "trapezoid") -> Kernel:
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    F, _ = integrate_frames(q, lams)
    M = F[:, -1]
    Finv = alg.adjugate(F)
    h = q.h
    if method == "trapezoid":
        # g(t) = F d(alpha) F^-1 M; node n carries the data of node 0 (periodic dq)
        P = 0.5 * h * (F[:, :-1] @ alg.EPS_PLUS @ Finv[:, :-1] @ M[:, None])
        Q = 0.5 * h * (F[:, :-1] @ alg.EPS_MINUS @ Finv[:, :-1] @ M[:, None])
        end_p = 0.5 * h * (M @ alg.EPS_PLUS)
        end_q = 0.5 * h * (M @ alg.EPS_MINUS)
        P[:, 0] = 0.5 * (P[:, 0] + end_p)
        Q[:, 0] = 0.5 * (Q[:, 0] + end_q)
        return Kernel(lams, M, P, Q, midpoint=False)
    if method == "scheme":
        Om, _ = cell_generators(q, lams, order=2)
        u = -alg.det(Om)
        f, c = alg._sinhc(u)
        fu = alg._sinhc_du(u, f, c)
        base = (0.5 * f)[..., None, None] * alg.I2 + fu[..., None, None] * Om
        X = 0.5 * h * (Om[..., 1, 0, None, None] * base + f[..., None, None] * alg.EPS_PLUS)
        Y = 0.5 * h * (-Om[..., 0, 1, None, None] * base + f[..., None, None] * alg.EPS_MINUS)
        right = Finv[:, 1:] @ M[:, None]
        P = F[:, :-1] @ X @ right
        Q = F[:, :-1] @ Y @ right
        return Kernel(lams, M, P, Q, midpoint=True)
    raise ValueError("method must be 'trapezoid' or 'scheme'")


def delta_M(q: Potential, lam, dq, method: str = "trapezoid") -> np.ndarray:
    """dM(lam) = int_0^T F d(alpha) F^-1 dt . M(lam)."""
    ker = sensitivity_kernel(q, lam, method)
    out = ker.apply(_samples(dq, q.n))
    return out[..., 0, :, :] if np.ndim(lam) == 0 else out


def eigenvectors(M, mu_val):
    """Right/left eigenvectors (v, w) for mu, switching representation where (b, mu-a) degenerates."""
    a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    if abs(b) + abs(mu_val - a) >= abs(c) + abs(mu_val - d):
        v = np.array([b, mu_val - a])
        w = np.array([c, mu_val - a])
    else:
        v = np.array([mu_val - d, c])
        w = np.array([mu_val - d, b])
    return v, w


def delta_mu(q: Potential, lam, dq, branch_sign: int = 1, method: str = "trapezoid"):
    """d mu = mu / (w.v) int_0^T w(t)^t d(alpha) v(t) dt with v(t) = F^-1 v, w(t) = F^t w."""
    lam = complex(lam)
    dq = _samples(dq, q.n)
    F, _ = integrate_frames(q, [lam])
    F = F[0]
    M = F[-1]
    mu_val = 0.5 * alg.trace(M) + branch_sign * np.sqrt(discriminant(M))
    v, w = eigenvectors(M, mu_val)
    wv = w @ v
    if abs(wv) <= DEGENERATE_TOL * max(1.0, float(alg.opnorm(M))) ** 2:
        raise DomainError("eigenvector normalization degenerate (mu ~ +-1); use delta_M route")
    if method == "scheme":
        return np.asarray(w @ delta_M(q, lam, dq, method="scheme") @ v / wv)
    vt = alg.adjugate(F[:-1]) @ v
    wt = np.swapaxes(F[:-1], -1, -2) @ w
    # w^t d(alpha) v = 1/2 (w0 dq v1 - w1 conj(dq) v0); the integrand is periodic
    integrand = 0.5 * (wt[:, 0] * dq[..., :] * vt[:, 1] - wt[:, 1] * np.conj(dq) * vt[:, 0])
    return mu_val / wv * q.h * np.sum(integrand, axis=-1)


def _spectral(q, sd, k):
    if sd is None:
        sd = perturbed_fourier(q, max(abs(int(np.max(k))), abs(int(np.min(k)))))
    return sd


def _check_simple(sd: SpectralData, ks):
    for k in np.atleast_1d(ks):
        if sd.mult[sd.index(int(k))] > 1:
            raise MultiplicityError(f"lambda_{int(k)} is a multiple zero; its variation is undefined")


def delta_z_batch(q: Potential, sd: SpectralData, ks, directions, method: str = "trapezoid"):
    """(d lam_k, d z_k) for every k in ks and every direction; arrays of shape (m, len(ks))."""
    ks = np.atleast_1d(np.asarray(ks, dtype=int))
    _check_simple(sd, ks)
    lams = np.array([sd.lam_k(int(k)) for k in ks])
    ker = sensitivity_kernel(q, lams, method)
    _, Mp = monodromy_batch(q, lams, with_derivative=True)
    dM = ker.apply(np.atleast_2d(_samples(directions, q.n)))
    dfd = dM[..., 0, 0] - dM[..., 1, 1]
    fp = Mp[:, 0, 0] - Mp[:, 1, 1]
    dlam = -dfd / fp
    sign = np.where(ks % 2 == 0, 1.0, -1.0)
    dz = 2 * sign * (dM[..., 0, 1] + Mp[:, 0, 1] * dlam)
    return dlam, dz


def delta_lambda_k(q: Potential, k: int, dq, sd: SpectralData | None = None, method: str = "trapezoid"):
    """d lam_k = - d(a - d)(lam_k) / (a - d)'(lam_k)."""
    sd = _spectral(q, sd, k)
    dlam, _ = delta_z_batch(q, sd, [k], _samples(dq, q.n)[None, :], method)
    return complex(dlam[0, 0])


def delta_z_k(q: Potential, k: int, dq, sd: SpectralData | None = None, method: str = "trapezoid"):
    """d z_k = 2 (-1)^k (d b(lam_k) + b'(lam_k) d lam_k)."""
    sd = _spectral(q, sd, k)
    _, dz = delta_z_batch(q, sd, [k], _samples(dq, q.n)[None, :], method)
    return complex(dz[0, 0])


def fourier_directions(ks, n: int, T: float, normalized: bool = True):
    """Real basis of the modes in ks: exp(-2 pi i k t/T) and i exp(-2 pi i k t/T) per k.

    With normalized=True each direction has unit L2 norm.
    """
    ks = np.asarray(ks, dtype=int)
    eye = np.eye(ks.size)
    base = modes_to_samples(ks, eye, n, T) * T
    if normalized:
        base = base / np.sqrt(T)
    out = np.empty((2 * ks.size, n), dtype=complex)
    out[0::2] = base
    out[1::2] = 1j * base
    return out


def realify(Z) -> np.ndarray:
    """Complex outputs (directions, ks) to the real matrix with rows (Re z_k, Im z_k)."""
    Z = np.asarray(Z)
    R = np.empty((2 * Z.shape[1], Z.shape[0]))
    R[0::2] = Z.real.T
    R[1::2] = Z.imag.T
    return R


def jacobian_Phi(q: Potential, index_set, direction_basis=None, sd: SpectralData | None = None,
                 method: str = "trapezoid") -> np.ndarray:
    """Matrix of d z_k (rows k in index_set) over the direction basis (columns).

    The default basis is fourier_directions(index_set) without normalization, in
    which the vacuum Jacobian is T times the identity on the complex coefficients.
    """
    index_set = np.asarray(index_set, dtype=int)
    if sd is None:
        sd = perturbed_fourier(q, int(np.max(np.abs(index_set))))
    if direction_basis is None:
        direction_basis = fourier_directions(index_set, q.n, q.T, normalized=False)
    _, dz = delta_z_batch(q, sd, index_set, direction_basis, method)
    return dz.T


def contraction_norm(q: Potential, ks, sd: SpectralData | None = None, method: str = "trapezoid") -> float:
    """Spectral norm of (Jacobian - Fourier map) on the section spanned by modes ks.

    Directions are L2-normalized and outputs scaled by 1/sqrt(T), so the
    Fourier map becomes the identity (Plancherel).
    """
    ks = np.asarray(ks, dtype=int)
    if sd is None:
        sd = perturbed_fourier(q, int(np.max(np.abs(ks))))
    dirs = fourier_directions(ks, q.n, q.T, normalized=True)
    _, dz = delta_z_batch(q, sd, ks, dirs, method)
    J = realify(dz / np.sqrt(q.T))
    return float(np.linalg.norm(J - np.eye(J.shape[0]), 2))
