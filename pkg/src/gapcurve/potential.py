"""Periodic complex-curvature potentials on a uniform grid.

Fourier convention used throughout the package:

    qhat(k) = int_0^T q(t) exp(+2 pi i k t / T) dt,

evaluated by the (spectrally accurate) periodic trapezoid rule, so that
q(t) = exp(-2 pi i t / T) has qhat(1) = T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError
from .jsonio import atomic_write, dumps17, load_json


@dataclass(frozen=True)
class Potential:
    """Samples q_j = q(j T / n) of a T-periodic potential plus the torsion shift theta."""

    n: int
    T: float
    theta: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex).reshape(-1)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "theta", float(self.theta))
        if self.n < 8 or self.n % 2:
            raise ValueError("grid size must be even and at least 8")
        if samples.size != self.n:
            raise ValueError(f"expected {self.n} samples, got {samples.size}")
        if not self.T > 0:
            raise ValueError("period must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")

    @classmethod
    def from_function(cls, func, n: int, T: float, theta: float = 0.0) -> "Potential":
        t = np.arange(n) * (T / n)
        return cls(n, T, theta, np.broadcast_to(np.asarray(func(t), dtype=complex), (n,)))

    @classmethod
    def zero(cls, n: int, T: float, theta: float = 0.0) -> "Potential":
        return cls(n, T, theta, np.zeros(n, dtype=complex))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def with_samples(self, samples) -> "Potential":
        return Potential(self.n, self.T, self.theta, samples)

    def __add__(self, other: "Potential") -> "Potential":
        _check_grid(self, other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "Potential") -> "Potential":
        _check_grid(self, other)
        return self.with_samples(self.samples - other.samples)

    def scaled(self, c) -> "Potential":
        return self.with_samples(c * self.samples)

    def resampled(self, n: int) -> "Potential":
        """Band-limited (FFT) interpolation onto a grid of n points."""
        return Potential(n, self.T, self.theta, fft_resample(self.samples, n))

    def to_dict(self) -> dict:
        return {"n": self.n, "T": self.T, "theta": self.theta,
                "samples": [[float(z.real), float(z.imag)] for z in self.samples]}

    @classmethod
    def from_dict(cls, d) -> "Potential":
        if not isinstance(d, dict):
            raise ParseError("potential JSON must be an object")
        for key in ("n", "T", "theta", "samples"):
            if key not in d:
                raise ParseError(f"potential JSON lacks field '{key}'")
        try:
            n = d["n"]
            if not isinstance(n, int) or isinstance(n, bool):
                raise ParseError("field 'n' must be an integer")
            arr = np.asarray(d["samples"], dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ParseError("field 'samples' must be a list of [re, im] pairs")
            return cls(n, float(d["T"]), float(d["theta"]), arr[:, 0] + 1j * arr[:, 1])
        except ParseError:
            raise
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid potential: {exc}") from exc

    def save(self, path) -> None:
        atomic_write(path, dumps17(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Potential":
        return cls.from_dict(load_json(path))


@dataclass(frozen=True)
class FourierSeq:
    """Coefficients qhat(k) for k = -K..K."""

    K: int
    coeffs: np.ndarray
    T: float

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.K:
            raise IndexError(k)
        return self.coeffs[k + self.K]


def _check_grid(q1: Potential, q2: Potential):
    if q1.n != q2.n or not np.isclose(q1.T, q2.T, rtol=1e-14, atol=0):
        raise ValueError("potentials live on different grids")


def fft_resample(x, n_new: int) -> np.ndarray:
    """Band-limited resampling between even grid sizes."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    if n_new == n:
        return x.copy()
    c = np.fft.fft(x)
    out = np.zeros(n_new, dtype=complex)
    m = min(n, n_new) // 2
    out[:m] = c[:m]
    out[n_new - m + 1:] = c[n - m + 1:]
    if n_new > n:
        # split the old Nyquist mode symmetrically
        out[m] = 0.5 * c[m]
        out[n_new - m] = 0.5 * c[m]
    else:
        out[m] = c[m] + c[n - m]
    return np.fft.ifft(out) * (n_new / n)


def fft_shift(x, frac) -> np.ndarray:
    """Values of the band-limited interpolant at t_j + frac * h (Nyquist mode as a cosine)."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    phase = np.exp(2j * np.pi * k * frac / n)
    if n % 2 == 0:
        phase[n // 2] = np.cos(np.pi * frac)
    return np.fft.ifft(np.fft.fft(x, axis=-1) * phase, axis=-1)


def fourier(q: Potential, K: int) -> FourierSeq:
    if K < 0 or K > q.n // 2 - 1:
        raise ValueError(f"K must lie in [0, n/2 - 1] = [0, {q.n // 2 - 1}]")
    full = q.T * np.fft.ifft(q.samples)
    ks = np.arange(-K, K + 1)
    return FourierSeq(K, full[ks % q.n], q.T)


def fourier_coeffs(samples, T: float, ks) -> np.ndarray:
    """qhat(k) for arbitrary integer ks (|k| < n/2); works along the last axis."""
    samples = np.asarray(samples, dtype=complex)
    n = samples.shape[-1]
    full = T * np.fft.ifft(samples, axis=-1)
    return full[..., np.asarray(ks) % n]


def inverse_fourier(c: FourierSeq | dict, n: int, T: float, theta: float = 0.0) -> Potential:
    """Grid function (1/T) sum_k c_k exp(-2 pi i k t / T)."""
    if isinstance(c, FourierSeq):
        ks, vals = c.ks, c.coeffs
    else:
        ks = np.fromiter(c.keys(), dtype=int)
        vals = np.fromiter(c.values(), dtype=complex)
    return Potential(n, T, theta, modes_to_samples(ks, vals, n, T))


def modes_to_samples(ks, vals, n: int, T: float) -> np.ndarray:
    """Samples of (1/T) sum_k vals_k exp(-2 pi i k t / T); vals may carry leading axes."""
    ks = np.asarray(ks, dtype=int)
    if ks.size and np.max(np.abs(ks)) > n // 2 - 1:
        raise ValueError("mode index beyond the resolvable band")
    vals = np.asarray(vals, dtype=complex)
    C = np.zeros(vals.shape[:-1] + (n,), dtype=complex)
    C[..., ks % n] = vals
    return np.fft.fft(C, axis=-1) / T


def l2_norm(q: Potential) -> float:
    return float(np.sqrt(q.h * np.sum(np.abs(q.samples) ** 2)))


def l2_distance(q1: Potential, q2: Potential) -> float:
    _check_grid(q1, q2)
    return float(np.sqrt(q1.h * np.sum(np.abs(q1.samples - q2.samples) ** 2)))


def _theta_from_samples(raw, n, T, branch):
    amp = np.abs(raw)
    m = raw.size - n
    valid = amp[:m] > 0.01 * amp.max()
    valid &= amp[n:n + m] > 0.01 * amp.max()
    if not np.any(valid):
        raise DomainError("potential vanishes; torsion shift undefined")
    ratio = raw[n:n + m][valid] / raw[:m][valid]
    frac = np.angle(np.sum(ratio / np.abs(ratio)))
    winding = 0
    if branch == "unwrap" and amp.min() > 0.01 * amp.max():
        # the phase is continuous along the whole sequence: count full turns
        phase = np.unwrap(np.angle(raw))
        incr = phase[n:n + m] - phase[:m]
        winding = int(np.round(np.median((incr - frac) / (2 * np.pi))))
    elif branch not in ("unwrap", "minimal"):
        raise ValueError("branch must be 'unwrap' or 'minimal'")
    theta = (frac + 2 * np.pi * winding) / T
    if winding == 0 and np.isclose(frac, -np.pi):
        theta = np.pi / T
    return theta


def regauge(raw, T: float, n: int | None = None, theta: float | None = None,
            branch: str = "unwrap", tol: float = 1e-6) -> Potential:
    """Periodic potential exp(-i theta t) raw(t) from quasi-periodic samples.

    raw holds samples at spacing T/n covering more than one period (two full
    periods when n is omitted).  theta is read off raw(t+T)/raw(t); the number
    of full phase turns comes from the unwrapped phase when raw stays away from
    zero ("unwrap"), otherwise the representative of smallest modulus is used.
    """
    raw = np.asarray(raw, dtype=complex).reshape(-1)
    if n is None:
        if raw.size % 2:
            raise ValueError("without n the samples must cover two periods")
        n = raw.size // 2
    if raw.size <= n and theta is None:
        raise ValueError("need samples beyond one period to read the quasi-periodicity")
    if theta is None:
        theta = _theta_from_samples(raw, n, T, branch)
    t = np.arange(raw.size) * (T / n)
    tilde = np.exp(-1j * theta * t) * raw
    if raw.size > n:
        m = raw.size - n
        scale = max(np.abs(tilde).max(), 1e-300)
        defect = np.abs(tilde[n:n + m] - tilde[:m]).max() / scale
        if defect > tol:
            raise DomainError(f"regauged samples are not periodic (defect {defect:.2e}); "
                              "input does not cover one full period")
    return Potential(n, T, theta, tilde[:n])


def unregauge(q: Potential, periods: float = 1.0) -> np.ndarray:
    """Quasi-periodic samples exp(i theta t) q(t) over the requested number of periods."""
    m = int(round(periods * q.n))
    t = np.arange(m) * q.h
    return np.exp(1j * q.theta * t) * np.resize(q.samples, m)
