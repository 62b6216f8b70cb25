import numpy as np
import pytest
from hypothesis import given, strategies as st

from gapcurve import algebra as alg
from gapcurve.errors import DomainError, MultiplicityError
from gapcurve.frame import monodromy_batch
from gapcurve.potential import Potential, fourier_coeffs
from gapcurve.spectral import lattice, mu, newton_zeros, perturbed_fourier
from gapcurve.variation import (contraction_norm, delta_lambda_k, delta_M, delta_mu, delta_z_batch,
                                delta_z_k, fourier_directions, jacobian_Phi, realify,
                                sensitivity_kernel)

from conftest import potentials, smooth_potential

METHODS = ["scheme", "trapezoid"]


def z_after_newton(q, k, lam0):
    lam, ok = newton_zeros(q, [lam0])
    assert ok[0]
    M, _ = monodromy_batch(q, lam[0], with_derivative=False)
    return lam[0], 2 * (-1.0) ** k * M[0, 1]


def fd_pair(q, dq, h):
    return q.with_samples(q.samples + h * dq), q.with_samples(q.samples - h * dq)


@pytest.mark.parametrize("seed", range(3))
def test_scheme_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    q = smooth_potential(seed, amp=0.6)
    dq = smooth_potential(seed + 50, amp=1.0).samples
    lam, k, h = rng.uniform(-12, 12) + 0.5j, 3, 1e-5
    qp, qm = fd_pair(q, dq, h)
    fd = (monodromy_batch(qp, lam, False)[0] - monodromy_batch(qm, lam, False)[0]) / (2 * h)
    assert np.abs(delta_M(q, lam, dq, "scheme") - fd).max() < 1e-6 * np.abs(fd).max()
    fmu = (mu(qp, lam) - mu(qm, lam)) / (2 * h)
    assert abs(delta_mu(q, lam, dq, method="scheme") - fmu) < 1e-6 * abs(fmu)
    sd = perturbed_fourier(q, k)
    (lp, zp), (lm, zm) = (z_after_newton(x, k, sd.lam_k(k)) for x in (qp, qm))
    assert abs(delta_lambda_k(q, k, dq, sd, "scheme") - (lp - lm) / (2 * h)) < 1e-6 * abs(lp - lm) / (2 * h)
    assert abs(delta_z_k(q, k, dq, sd, "scheme") - (zp - zm) / (2 * h)) < 1e-6 * abs(zp - zm) / (2 * h)


def test_trapezoid_converges_to_scheme():
    # both kernels discretize the same integral; the gap is O(h^2)
    errs = []
    for n in (128, 256):
        q = smooth_potential(9, n=n, amp=0.5)
        dq = smooth_potential(10, n=n).samples
        a = delta_M(q, 4.0, dq, "trapezoid")
        b = delta_M(q, 4.0, dq, "scheme")
        errs.append(np.abs(a - b).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_delta_mu_trapezoid_matches_delta_M_route():
    q = smooth_potential(11, amp=0.5)
    dq = smooth_potential(12).samples
    lam = 3.3 + 0.2j
    M, _ = monodromy_batch(q, lam, False)
    dM = delta_M(q, lam, dq)
    m = mu(q, lam)
    # d mu from the characteristic equation: d mu (2 mu - tr) = mu d tr
    assert abs(delta_mu(q, lam, dq) - m * alg.trace(dM) / (2 * m - alg.trace(M))) < 1e-10


@given(potentials(n=64, max_amp=1.0), st.floats(-2, 2), st.floats(-2, 2))
def test_real_linearity(q, a, b):
    d1 = smooth_potential(1, n=64).samples
    d2 = smooth_potential(2, n=64).samples
    for method in METHODS:
        lhs = delta_M(q, 2.5, a * d1 + b * d2, method)
        rhs = a * delta_M(q, 2.5, d1, method) + b * delta_M(q, 2.5, d2, method)
        assert np.allclose(lhs, rhs, atol=1e-12)


@given(potentials(n=64, max_amp=1.5), st.floats(-10, 10))
def test_trace_of_log_variation_vanishes(q, lam):
    dq = smooth_potential(3, n=64).samples
    M, _ = monodromy_batch(q, lam, False)
    for method in METHODS:
        dM = delta_M(q, lam, dq, method)
        assert abs(alg.trace(alg.adjugate(M) @ dM)) < 1e-11


def test_vacuum_variation_formula():
    T = 2.0
    q = Potential.zero(128, T)
    dq = smooth_potential(4, n=128, T=T, K=6).samples
    for k in range(-5, 6):
        lam = lattice(k, T)
        dM = delta_M(q, lam, dq)
        c = fourier_coeffs(dq, T, [k])[0]
        cbar = fourier_coeffs(np.conj(dq), T, [-k])[0]
        expect = 0.5 * (-1) ** k * np.array([[0, c], [-cbar, 0]])
        assert np.allclose(dM, expect, atol=1e-12)


def test_vacuum_delta_mu_zero():
    q = Potential.zero(64, 1.0)
    dq = smooth_potential(5, n=64).samples
    assert abs(delta_mu(q, 1.3 + 0.1j, dq)) < 1e-13
    assert abs(delta_mu(q, 1.3 + 0.1j, dq, method="scheme")) < 1e-13
    with pytest.raises(DomainError):
        delta_mu(q, lattice(2, 1.0), dq)


def test_vacuum_jacobian_identity():
    T = 1.5
    q = Potential.zero(128, T)
    ks = np.arange(-6, 7)
    expect = np.zeros((ks.size, 2 * ks.size), dtype=complex)
    expect[np.arange(ks.size), 2 * np.arange(ks.size)] = T
    expect[np.arange(ks.size), 2 * np.arange(ks.size) + 1] = 1j * T
    assert np.allclose(jacobian_Phi(q, ks), expect, atol=1e-12)
    # the discrete-map derivative carries the cell factor sinc(h lam / 2)
    Js = jacobian_Phi(q, ks, method="scheme")
    factor = np.sinc(q.h * lattice(ks, T) / (2 * np.pi))
    assert np.allclose(Js, expect * factor[:, None], atol=1e-12)
    assert contraction_norm(q, ks) < 1e-12


def test_multiplicity_error():
    q = Potential.from_function(lambda t: 1.0, 128, 2 * np.pi)
    sd = perturbed_fourier(q, 3)
    dq = smooth_potential(6, n=128, T=2 * np.pi).samples
    with pytest.raises(MultiplicityError):
        delta_z_k(q, 0, dq, sd)
    delta_z_k(q, 3, dq, sd)


def test_batch_matches_single():
    q = smooth_potential(7, amp=0.4)
    sd = perturbed_fourier(q, 6)
    dirs = fourier_directions([2, 5], q.n, q.T)
    dlam, dz = delta_z_batch(q, sd, [3, -4, 6], dirs)
    assert dz.shape == (4, 3)
    assert np.isclose(dz[1, 2], delta_z_k(q, 6, dirs[1], sd))
    assert np.isclose(dlam[3, 0], delta_lambda_k(q, 3, dirs[3], sd))
    R = realify(dz)
    assert R.shape == (6, 4) and np.allclose(R[1::2], dz.imag.T)
    # directions carry unit L2 norm
    assert np.allclose(np.sqrt(q.h * np.sum(np.abs(dirs) ** 2, axis=1)), 1)


def test_contraction_small_for_small_potential():
    ks = np.arange(4, 12)
    norms = [contraction_norm(smooth_potential(8, amp=a), np.concatenate([-ks, ks])) for a in (0.1, 0.3)]
    assert norms[0] < norms[1] < 0.5


def test_kernel_rejects_unknown_method():
    with pytest.raises(ValueError):
        sensitivity_kernel(Potential.zero(16, 1.0), [0.0], "simpson")
    with pytest.raises(ValueError):
        delta_M(Potential.zero(16, 1.0), 0.0, np.zeros(8))
