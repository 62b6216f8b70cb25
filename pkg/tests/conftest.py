import json
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from gapcurve.potential import Potential, modes_to_samples

DATA = os.path.join(os.path.dirname(__file__), "data")

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def load_frozen():
    with open(os.path.join(DATA, "frozen.json")) as fh:
        return json.load(fh)


def pair_matrix(m):
    arr = np.asarray(m)
    return arr[..., 0] + 1j * arr[..., 1]


def frozen_potential(n=256):
    T = load_frozen()["T"]
    w = 2 * np.pi / T
    return Potential.from_function(
        lambda t: 0.4 * np.exp(-1j * w * t) + 0.2j * np.exp(2j * w * t) + 0.1, n, T)


def smooth_potential(seed, n=256, T=1.0, amp=0.3, K=5, decay=1.0):
    """Random trigonometric potential with geometrically decaying modes and L2 norm amp."""
    rng = np.random.default_rng(seed)
    ks = np.arange(-K, K + 1)
    c = (rng.normal(size=ks.size) + 1j * rng.normal(size=ks.size)) * np.exp(-decay * np.abs(ks))
    samples = modes_to_samples(ks, c, n, T)
    q = Potential(n, T, 0.0, samples)
    norm = np.sqrt(q.h * np.sum(np.abs(samples) ** 2))
    return q.with_samples(samples * (amp / norm)) if norm > 0 else q.scaled(0.0)


@st.composite
def potentials(draw, n=128, T=None, max_amp=1.0, K=4):
    T = draw(st.sampled_from([1.0, 2 * np.pi])) if T is None else T
    seed = draw(st.integers(0, 2**31 - 1))
    amp = draw(st.floats(0.0, max_amp))
    return smooth_potential(seed, n=n, T=T, amp=amp, K=K)


@pytest.fixture
def tmpfile(tmp_path):
    return lambda name: str(tmp_path / name)


def decaying_potential(n=256, T=1.0, seed=1, amp=0.25, width=3.0, K=20):
    """Smooth non-finite-gap test potential: random phases, exp(-|k|/width) envelope."""
    rng = np.random.default_rng(seed)
    ks = np.arange(-K, K + 1)
    c = amp * np.exp(-np.abs(ks) / width) * np.exp(2j * np.pi * rng.random(ks.size))
    return Potential(n, T, 0.0, modes_to_samples(ks, c * T, n, T))


def poisson_bump(s, r=0.5):
    return (1 - r * r) / (1 - 2 * r * np.cos(s) + r * r) - 1


def perturbed_circle(eps):
    """Non-planar closed perturbation of the unit circle (analytic, all Fourier modes present)."""
    def curve(p):
        a = eps * poisson_bump(2 * p)
        b = eps * poisson_bump(p + 1)
        return np.stack([(1 + a) * np.cos(p), (1 + a) * np.sin(p), b], axis=1)
    return curve


def torus_knot(p, R=2.0, r=0.7):
    """(2, 3) torus knot."""
    rad = R + r * np.cos(3 * p)
    return np.stack([rad * np.cos(2 * p), rad * np.sin(2 * p), r * np.sin(3 * p)], axis=1)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def record_criterion(num, ok, detail):
    ACCEPTANCE[num] = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[num])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
