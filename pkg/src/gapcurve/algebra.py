"""2x2 complex matrix helpers, the sl2(C) basis and the su2 ~ R^3 identification.

Matrices are plain numpy arrays of shape (..., 2, 2); every function broadcasts
over leading axes so that a whole grid or a whole batch of spectral parameters
can be processed at once.
"""
from __future__ import annotations

import numpy as np

TRACE_TOL = 1e-12
_SERIES_CUT = 1e-3

I2 = np.eye(2, dtype=complex)
EPS = np.array([[1j, 0], [0, -1j]])
EPS_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
EPS_MINUS = np.array([[0, 0], [-1, 0]], dtype=complex)

# orthonormal su2 basis used for R^3 coordinates
SU2_BASIS = np.stack([EPS, EPS_PLUS + EPS_MINUS, 1j * (EPS_PLUS - EPS_MINUS)])


def as_mat2(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.shape[-2:] != (2, 2):
        raise ValueError(f"expected trailing shape (2, 2), got {A.shape}")
    return A


def trace(A) -> np.ndarray:
    return A[..., 0, 0] + A[..., 1, 1]


def det(A) -> np.ndarray:
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def adjugate(A) -> np.ndarray:
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 1, 1] = A[..., 0, 0]
    out[..., 0, 1] = -A[..., 0, 1]
    out[..., 1, 0] = -A[..., 1, 0]
    return out


def inverse(A, unimodular: bool = False) -> np.ndarray:
    """Inverse of 2x2 matrices; for unimodular input this is the adjugate."""
    A = as_mat2(A)
    if unimodular:
        return adjugate(A)
    d = det(A)
    if np.any(np.abs(d) == 0):
        raise ZeroDivisionError("singular 2x2 matrix")
    return adjugate(A) / d[..., None, None]


def dagger(A) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def commutator(X, Y) -> np.ndarray:
    return X @ Y - Y @ X


def inner(X, Y) -> np.ndarray:
    """Bilinear Ad-invariant product -1/2 tr(XY)."""
    return -0.5 * trace(X @ Y)


def norm(X) -> np.ndarray:
    """sqrt(det X); real and equal to the Euclidean length on su2."""
    return np.sqrt(det(X))


def opnorm(A) -> np.ndarray:
    """Maximum absolute row sum, the matrix norm used for the monodromy bounds."""
    return np.max(np.sum(np.abs(A), axis=-1), axis=-1)


def _sinhc(u):
    """sinh(s)/s and cosh(s) as functions of u = s**2 (both even in s)."""
    u = np.asarray(u, dtype=complex)
    s = np.sqrt(u)
    small = np.abs(s) < _SERIES_CUT
    s_safe = np.where(small, 1.0, s)
    f = np.where(small,
                 1 + u / 6 + u**2 / 120 + u**3 / 5040 + u**4 / 362880,
                 np.sinh(s_safe) / s_safe)
    c = np.cosh(s)
    return f, c


def _sinhc_du(u, f, c):
    """d/du of sinh(s)/s; the series branch avoids the cancellation in (c - f)/2u."""
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < 0.1
    u_safe = np.where(small, 1.0, u)
    series = np.zeros_like(u)
    fact = 6.0  # (2k+1)! for k = 1
    for k in range(1, 12):
        series = series + k * u ** (k - 1) / fact
        fact *= (2 * k + 2) * (2 * k + 3)
    return np.where(small, series, (c - f) / (2 * u_safe))


def _check_traceless(A):
    tr = trace(A)
    if np.any(np.abs(tr) > TRACE_TOL * np.maximum(1.0, np.max(np.abs(A), axis=(-1, -2)))):
        raise ValueError("exp_traceless needs a trace-free argument")


def exp_traceless(A, check: bool = True) -> np.ndarray:
    """exp(A) = cosh(s) I + sinh(s)/s A with s**2 = -det A, for tr A = 0.

    Only s**2 enters, so the branch of the square root does not matter.
    """
    A = as_mat2(A)
    if check:
        _check_traceless(A)
    u = -det(A)
    f, c = _sinhc(u)
    return c[..., None, None] * I2 + f[..., None, None] * A


def exp_traceless_with_derivative(A, dA, check: bool = True):
    """exp(A) together with its directional derivative along the traceless dA."""
    A = as_mat2(A)
    dA = as_mat2(dA)
    if check:
        _check_traceless(A)
    u = -det(A)
    # -det is quadratic: u = a00^2 + a01 a10 for traceless A
    du = 2 * A[..., 0, 0] * dA[..., 0, 0] + A[..., 0, 1] * dA[..., 1, 0] + A[..., 1, 0] * dA[..., 0, 1]
    f, c = _sinhc(u)
    fu = _sinhc_du(u, f, c)
    E = c[..., None, None] * I2 + f[..., None, None] * A
    dE = ((0.5 * f * du)[..., None, None] * I2 + (fu * du)[..., None, None] * A
          + f[..., None, None] * dA)
    return E, dE


def su2_embed(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("su2 vectors have three coordinates")
    return np.tensordot(x, SU2_BASIS, axes=([-1], [0]))


def su2_project(X, tol: float = 1e-8) -> np.ndarray:
    """Coordinates of a trace-free skew-Hermitian matrix in the su2 basis."""
    X = as_mat2(X)
    herm = 0.5 * (X + dagger(X))
    scale = np.maximum(1.0, np.max(np.abs(X), axis=(-1, -2)))
    if np.any(np.max(np.abs(herm), axis=(-1, -2)) > tol * scale) or np.any(np.abs(trace(X)) > tol * scale):
        raise ValueError("matrix is not in su2 (Hermitian or trace part above tolerance)")
    x1 = np.imag(X[..., 0, 0])
    x2 = np.real(X[..., 0, 1])
    x3 = np.imag(X[..., 0, 1])
    return np.stack([x1, x2, x3], axis=-1)


def quat_to_su2(p) -> np.ndarray:
    """Unit quaternion (scalar first) to the SU2 matrix p0 I + p1 e1 + p2 e2 + p3 e3."""
    p = np.asarray(p, dtype=float)
    return p[..., 0, None, None] * I2 + su2_embed(p[..., 1:])


def su2_to_quat(G, tol: float = 1e-8) -> np.ndarray:
    G = as_mat2(G)
    p0 = 0.5 * np.real(trace(G))
    rest = su2_project(G - p0[..., None, None] * I2, tol=tol)
    return np.concatenate([p0[..., None], rest], axis=-1)
