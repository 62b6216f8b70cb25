import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gapcurve.errors import DomainError, ParseError
from gapcurve.potential import (Potential, fft_resample, fft_shift, fourier, fourier_coeffs,
                                inverse_fourier, l2_distance, l2_norm, modes_to_samples, regauge,
                                unregauge)

from conftest import potentials, smooth_potential


def test_fourier_convention():
    # qhat(k) = int q exp(+2 pi i k t/T): exp(-2 pi i t/T) sits at k = +1 with weight T
    T = 3.0
    q = Potential.from_function(lambda t: np.exp(-2j * np.pi * t / T), 64, T)
    c = fourier(q, 4)
    assert np.isclose(c[1], T)
    assert np.allclose(np.delete(c.coeffs, 5), 0, atol=1e-13)
    q2 = Potential.from_function(lambda t: 0.05 * np.exp(2j * np.pi * t / T), 64, T)
    assert np.isclose(fourier(q2, 2)[-1], 0.05 * T)


@given(potentials())
def test_inverse_round_trip(q):
    c = fourier(q, q.n // 2 - 1)
    back = inverse_fourier(c, q.n, q.T)
    # the Nyquist mode is not in -K..K
    nyq = fourier_coeffs(q.samples, q.T, [q.n // 2])[0]
    assert l2_distance(back, q) <= abs(nyq) / np.sqrt(q.T) + 1e-12


@given(potentials())
def test_plancherel(q):
    c = fourier_coeffs(q.samples, q.T, np.arange(-q.n // 2, q.n // 2))
    assert np.isclose(np.sum(np.abs(c) ** 2) / q.T, l2_norm(q) ** 2, atol=1e-12)


def test_modes_to_samples_matches_inverse():
    ks = np.array([-2, 0, 3])
    vals = np.array([1 + 1j, 0.5, -2j])
    s = modes_to_samples(ks, vals, 32, 2.0)
    t = np.arange(32) * 2.0 / 32
    ref = sum(v * np.exp(-2j * np.pi * k * t / 2.0) for k, v in zip(ks, vals)) / 2.0
    assert np.allclose(s, ref)
    with pytest.raises(ValueError):
        modes_to_samples([16], [1.0], 32, 1.0)


def test_resample_exact_for_band_limited():
    q = smooth_potential(1, n=64, K=5)
    up = q.resampled(256)
    ref = modes_to_samples(np.arange(-5, 6), fourier_coeffs(q.samples, q.T, np.arange(-5, 6)), 256, q.T)
    assert np.allclose(up.samples, ref, atol=1e-13)
    assert np.allclose(up.resampled(64).samples, q.samples, atol=1e-13)


def test_fft_shift_half_cell():
    n, T = 64, 1.0
    f = lambda t: np.exp(2j * np.pi * 3 * t) + np.cos(2 * np.pi * t)
    x = f(np.arange(n) / n)
    assert np.allclose(fft_shift(x, 0.5), f((np.arange(n) + 0.5) / n), atol=1e-13)
    assert np.allclose(fft_resample(x, n), x)


def test_regauge_reads_theta():
    T, n = 2.0, 64
    t = np.arange(2 * n) * T / n
    raw = (1 + 0.2 * np.cos(2 * np.pi * t / T)) * np.exp(1j * t)
    q = regauge(raw, T)
    assert np.isclose(q.theta, 1.0)
    assert np.allclose(q.samples, 1 + 0.2 * np.cos(2 * np.pi * t[:n] / T))
    assert np.allclose(unregauge(q, 2), raw)


def test_regauge_branches():
    T, n = 1.0, 64
    t = np.arange(2 * n) * T / n
    # five full turns plus 0.5 rad per period
    raw = np.exp(1j * (2 * np.pi * 5 + 0.5) * t)
    assert np.isclose(regauge(raw, T, branch="unwrap").theta, 2 * np.pi * 5 + 0.5)
    assert np.isclose(regauge(raw, T, branch="minimal").theta, 0.5)
    with pytest.raises(ValueError):
        regauge(raw, T, branch="other")


def test_regauge_not_periodic():
    T, n = 1.0, 64
    t = np.arange(2 * n) * T / n
    raw = np.exp(1j * t) * (1 + t)
    with pytest.raises(DomainError):
        regauge(raw, T)
    with pytest.raises(DomainError):
        regauge(np.zeros(2 * n), T)


def test_validation():
    with pytest.raises(ValueError):
        Potential(7, 1.0, 0.0, np.zeros(7))
    with pytest.raises(ValueError):
        Potential(8, -1.0, 0.0, np.zeros(8))
    with pytest.raises(ValueError):
        Potential(8, 1.0, 0.0, np.full(8, np.nan))
    q = Potential.zero(8, 1.0)
    with pytest.raises(ValueError):
        q + Potential.zero(16, 1.0)
    with pytest.raises(ValueError):
        q.samples[0] = 1


def test_json_round_trip(tmpfile):
    q = smooth_potential(3, n=32).with_samples(smooth_potential(3, n=32).samples)
    q = Potential(q.n, q.T, 0.123456789012345678, q.samples)
    path = tmpfile("q.json")
    q.save(path)
    back = Potential.load(path)
    assert back.theta == q.theta and back.T == q.T
    assert np.array_equal(back.samples, q.samples)


@pytest.mark.parametrize("doc", [
    [],
    {"n": 8, "T": 1.0, "theta": 0.0},
    {"n": 8.0, "T": 1.0, "theta": 0.0, "samples": [[0, 0]] * 8},
    {"n": 8, "T": 1.0, "theta": 0.0, "samples": [[0, 0]] * 7},
    {"n": 8, "T": 1.0, "theta": 0.0, "samples": [[0, 0, 0]] * 8},
    {"n": 8, "T": "x", "theta": 0.0, "samples": [[0, 0]] * 8},
])
def test_json_schema_errors(doc, tmpfile):
    path = tmpfile("bad.json")
    with open(path, "w") as fh:
        json.dump(doc, fh)
    with pytest.raises(ParseError):
        Potential.load(path)


def test_invalid_json_text(tmpfile):
    path = tmpfile("bad.json")
    with open(path, "w") as fh:
        fh.write("{not json")
    with pytest.raises(ParseError):
        Potential.load(path)
