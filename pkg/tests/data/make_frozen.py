"""Regenerate frozen.json: independent DOP853 reference values.

The reference monodromies are computed from the analytic potential with
scipy's adaptive Runge-Kutta solver, sharing no code with the package.
Run from the tests directory:  python3 data/make_frozen.py
"""
import json
import os

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import newton

T = 1.0


def q_ref(t):
    w = 2 * np.pi / T
    return 0.4 * np.exp(-1j * w * t) + 0.2j * np.exp(2j * w * t) + 0.1


def rhs(t, y, lam):
    F = y.reshape(2, 2)
    q = q_ref(t)
    A = 0.5 * np.array([[1j * lam, q], [-np.conj(q), -1j * lam]])
    return (F @ A).reshape(-1)


def monodromy_ref(lam):
    sol = solve_ivp(rhs, (0, T), np.eye(2, dtype=complex).reshape(-1), method="DOP853",
                    rtol=1e-13, atol=1e-14, args=(lam,))
    return sol.y[:, -1].reshape(2, 2)


def zk_ref(k):
    """lam_k by the secant method on a - d of the reference monodromy, then z_k."""
    f = lambda lam: (lambda M: M[0, 0] - M[1, 1])(monodromy_ref(lam))
    lam = newton(f, 2 * np.pi * k / T + 0.01, x1=2 * np.pi * k / T - 0.01, tol=1e-13, maxiter=100)
    return lam, 2 * (-1) ** k * monodromy_ref(lam)[0, 1]


LAMS = [0.0, 1.5, -3.0, 2 * np.pi, 7.0 + 0.5j, -4.0 - 2.0j, 20.0]

if __name__ == "__main__":
    out = {"T": T, "potential": "0.4 e^{-2 pi i t} + 0.2 i e^{4 pi i t} + 0.1", "entries": []}
    for lam in LAMS:
        M = monodromy_ref(lam)
        out["entries"].append({"lambda": [lam.real if isinstance(lam, complex) else lam,
                                          lam.imag if isinstance(lam, complex) else 0.0],
                               "M": [[[float(x.real), float(x.imag)] for x in row] for row in M]})
    out["zk"] = []
    for k in [-6, -3, 3, 5, 8]:
        lam, z = zk_ref(k)
        out["zk"].append({"k": k, "lambda": [lam.real, lam.imag], "z": [z.real, z.imag]})
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "frozen.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1)
    print("wrote", path)
