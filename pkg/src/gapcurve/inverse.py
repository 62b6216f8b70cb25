"""Inversion of the perturbed Fourier map on a spectral slice.

A slice fixes the Fourier coefficients |k| <= N of a base potential; the
remaining unknowns are the tail coefficients N < |k| <= K_max.  The forward
map sends a potential to its perturbed coefficients z_k on the same tail.
Because that map is a small perturbation of the ordinary Fourier transform,
the plain inverse FFT serves as approximate inverse Jacobian; an exact
Jacobian step is mixed in periodically or when progress stalls.

For closed curves extra real unknowns along band-limited directions absorb
the closing conditions, written in matrix form (M - eta I at the closing
spectral values, and M' for space curves).  At a closed potential these are
six independent real conditions, so six directions are used by default; any
number of at least two is accepted and solved in the least-squares sense.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError, MultiplicityError, ParseError, ResolutionError
from .frame import monodromy_batch
from .jsonio import atomic_write, dumps17, load_json
from .potential import Potential, fourier_coeffs, l2_distance, modes_to_samples
from .spectral import (SpectralData, default_K_central, mu_from_monodromy,
                       mu_prime_from_monodromy, perturbed_fourier)
from .variation import (contraction_norm, delta_z_batch, fourier_directions, realify,
                        sensitivity_kernel)

SPACES = ("r3", "s3")
LAM_STEP = 1e-5
MIN_CLOSING_BAND = 3


@dataclass
class SolverConfig:
    N: int | None = None
    n_trunc: int | None = None
    tol: float = 1e-8
    max_iter: int = 30
    exact_jacobian_every: int = 5
    damping_max: int = 8
    K_max: int | None = None

    def __post_init__(self):
        if self.N is not None and self.N < 0:
            raise ValueError("N must be non-negative")
        if self.n_trunc is not None and self.N is not None and self.n_trunc < self.N:
            raise ValueError("n_trunc must be at least N")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0 or self.exact_jacobian_every < 0 or self.damping_max < 0:
            raise ValueError("iteration counts must be non-negative")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d) -> "SolverConfig":
        if not isinstance(d, dict):
            raise ParseError("solver config must be a JSON object")
        known = {"N", "n_trunc", "tol", "max_iter", "exact_jacobian_every", "damping_max", "K_max"}
        extra = set(d) - known
        if extra:
            raise ParseError(f"unknown solver config fields: {sorted(extra)}")
        try:
            ints = {k: int(d[k]) for k in known - {"tol"} if k in d and d[k] is not None}
            if "tol" in d:
                ints["tol"] = float(d["tol"])
            return cls(**ints)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid solver config: {exc}") from exc

    def save(self, path) -> None:
        atomic_write(path, dumps17(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SolverConfig":
        return cls.from_dict(load_json(path))


@dataclass
class SliceSpec:
    """Base potential, frozen half-width N and optional closing directions (sample arrays)."""

    q: Potential
    N: int
    directions: list = field(default_factory=list)

    def __post_init__(self):
        if self.N < 0 or self.N > self.q.n // 2 - 2:
            raise ValueError("frozen band does not fit the grid")
        dirs = []
        for f in self.directions:
            f = f.samples if isinstance(f, Potential) else np.asarray(f, dtype=complex)
            if f.shape != (self.q.n,):
                raise ValueError("closing directions must live on the potential grid")
            dirs.append(f)
        for f in dirs:
            c = np.fft.ifft(f)
            ks = np.fft.fftfreq(self.q.n, d=1.0 / self.q.n)
            if np.max(np.abs(c[np.abs(ks) > self.N]), initial=0.0) > 1e-10 * max(np.max(np.abs(c)), 1e-300):
                raise ValueError("closing directions must be band-limited to |k| <= N")
        self.directions = dirs

    @property
    def frozen(self) -> np.ndarray:
        ks = np.arange(-self.N, self.N + 1)
        return fourier_coeffs(self.q.samples, self.q.T, ks)


@dataclass
class Target:
    """Tail values z_k keyed by k (N < |k| <= K_max) plus optional closing data."""

    tail: dict
    space: str | None = None
    eta: int | None = None

    def __post_init__(self):
        if self.space is not None and self.space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}")
        if self.eta is not None and self.eta not in (1, -1):
            raise ValueError("closing value must be +1 or -1")
        vals = np.array(list(self.tail.values()), dtype=complex)
        if not np.all(np.isfinite(vals)):
            raise ValueError("target values must be finite")

    def values(self, ks) -> np.ndarray:
        return np.array([self.tail.get(int(k), 0.0) for k in ks], dtype=complex)


@dataclass
class SolveResult:
    q: Potential
    iterations: int
    residual: float
    history: list
    closing_history: list = field(default_factory=list)
    exact_steps: int = 0
    sd: SpectralData | None = None
    tail_ks: np.ndarray | None = None
    coeffs: np.ndarray | None = None


def tail_indices(N: int, K_max: int) -> np.ndarray:
    ks = np.arange(-K_max, K_max + 1)
    return ks[np.abs(ks) > N]


def default_K_max(q: Potential) -> int:
    return q.n // 4


def truncated_target(sd: SpectralData, N: int, n_trunc: int, K_max: int | None = None,
                     space: str | None = None, eta: int | None = None) -> Target:
    """z^(n): the computed z_k for N < |k| <= n_trunc, zero beyond."""
    if K_max is None:
        K_max = sd.K
    tail = {}
    for k in tail_indices(N, K_max):
        tail[int(k)] = sd.z_k(int(k)) if abs(k) <= n_trunc else 0.0
    return Target(tail, space, eta)


# ---------------------------------------------------------------- N selection

def select_N(q: Potential, N_max: int = 16, bound: float = 0.4) -> int:
    """Smallest N whose section N < |k| <= 4N (at least N + 4) contracts below bound."""
    for N in range(N_max + 1):
        hi = max(4 * N, N + 4)
        ks = tail_indices(N, hi)
        try:
            sd = perturbed_fourier(q, hi)
            if np.any(sd.mult[np.abs(sd.ks) > N] > 1):
                continue
            if contraction_norm(q, ks, sd) < bound:
                return N
        except MultiplicityError:
            continue
    raise DomainError(f"no N <= {N_max} gives a contracting section; potential too large")


# ---------------------------------------------------------------- closing data

def closing_lams(space: str, theta: float) -> np.ndarray:
    if space == "s3":
        return np.array([1 + theta, -1 + theta], dtype=complex)
    if space == "r3":
        return np.array([theta], dtype=complex)
    raise ValueError(f"space must be one of {SPACES}")


def closing_eta(q: Potential, space: str) -> int:
    """The +-1 the closing monodromy is near, read from the trace at the closing value."""
    M, _ = monodromy_batch(q, closing_lams(space, q.theta)[:1], with_derivative=False)
    return 1 if np.real(M[0, 0, 0] + M[0, 1, 1]) >= 0 else -1


def closing_residual(q: Potential, space: str, eta: int, order: int = 4) -> np.ndarray:
    """Real vector of the matrix-form closing defects (fourth-order frames by default)."""
    lams = closing_lams(space, q.theta)
    M, Mp = monodromy_batch(q, lams, with_derivative=True, order=order)
    parts = [M - eta * np.eye(2)]
    if space == "r3":
        parts.append(Mp)
    z = np.concatenate([p.reshape(-1) for p in parts])
    return np.concatenate([z.real, z.imag])


def closing_mu_residuals(q: Potential, space: str, eta: int) -> dict:
    """mu-form residuals |mu - eta| (and |mu'| for space curves)."""
    lams = closing_lams(space, q.theta)
    M, Mp = monodromy_batch(q, lams, with_derivative=True, order=4)
    out = {}
    for i, lam in enumerate(lams):
        mus = [mu_from_monodromy(M[i], s) for s in (1, -1)]
        s = 1 if abs(mus[0] - eta) <= abs(mus[1] - eta) else -1
        out[f"mu({lam.real:.17g})"] = float(abs(mu_from_monodromy(M[i], s) - eta))
        if space == "r3":
            out[f"mu'({lam.real:.17g})"] = float(abs(mu_prime_from_monodromy(M[i], Mp[i], s)))
    return out


def closing_jacobian(q: Potential, space: str, directions) -> np.ndarray:
    """Derivative of closing_residual along each direction (columns)."""
    directions = np.atleast_2d(np.asarray(directions, dtype=complex))
    lams = closing_lams(space, q.theta)
    eps = LAM_STEP
    if space == "r3":
        lam = lams[0]
        ker = sensitivity_kernel(q, [lam - eps, lam, lam + eps], method="scheme")
        dM = ker.apply(directions)
        parts = [dM[:, 1], (dM[:, 2] - dM[:, 0]) / (2 * eps)]
    else:
        ker = sensitivity_kernel(q, lams, method="scheme")
        dM = ker.apply(directions)
        parts = [dM[:, 0], dM[:, 1]]
    z = np.concatenate([p.reshape(p.shape[0], -1) for p in parts], axis=1)
    return np.concatenate([z.real, z.imag], axis=1).T


def _is_single_mode(q: Potential, rel: float = 1e-10) -> bool:
    c = np.abs(np.fft.fft(q.samples)) ** 2
    total = c.sum()
    return total == 0 or c.max() >= (1 - rel) * total


def choose_closing_directions(q: Potential, space: str, theta: float | None = None, N: int = 2,
                              n_random: int = 8, seed: int = 0, tail_ks=None, sd=None,
                              threshold: float = 1e-8, count: int = 2):
    """Band-limited directions with the best conditioned closing matrix.

    Candidates are the real Fourier directions e_k, i e_k for |k| <= N and
    n_random random combinations of them.  A set is scored by the smallest
    singular value of its closing Jacobian; pairs are searched exhaustively,
    larger sets greedily.  With tail_ks and sd given, the Jacobian is first
    corrected for the tail response (the matrix the solver actually inverts).
    Returns (directions, smallest singular value).
    """
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}")
    if _is_single_mode(q):
        raise DomainError("potential of the form a exp(ct): closing directions do not exist")
    if theta is not None and theta != q.theta:
        q = Potential(q.n, q.T, theta, q.samples)
    ks = np.arange(-N, N + 1)
    base = fourier_directions(ks, q.n, q.T, normalized=True)
    if count > base.shape[0]:
        raise ValueError(f"band |k| <= {N} offers only {base.shape[0]} real directions")
    rng = np.random.default_rng(seed)
    mix = rng.standard_normal((n_random, base.shape[0]))
    mix /= np.linalg.norm(mix, axis=1, keepdims=True)
    cands = np.concatenate([base, mix @ base])
    G = closing_jacobian(q, space, cands)
    if tail_ks is not None:
        G = _schur_closing(q, space, sd, tail_ks, cands, G)

    def smin(cols):
        return np.linalg.svd(G[:, list(cols)], compute_uv=False)[-1]

    if count == 2:
        best, chosen = max((smin(p), p) for p in itertools.combinations(range(cands.shape[0]), 2))
    else:
        chosen = []
        for _ in range(count):
            rest = [j for j in range(cands.shape[0]) if j not in chosen]
            best, j = max((smin(chosen + [j]), j) for j in rest)
            chosen.append(j)
    if best < threshold:
        raise DomainError(f"all candidate closing directions are degenerate "
                          f"(best smallest singular value {best:.3e})")
    return [cands[j] for j in chosen], float(best)


def closing_rank(space: str) -> int:
    """Real conditions in the matrix-form closing system at a closed potential."""
    return 6


def _tail_step_samples(ks, dc_real, n, T):
    """Samples of the tail update with real coordinates (Re, Im) per coefficient."""
    dc = dc_real[..., 0::2] + 1j * dc_real[..., 1::2]
    return modes_to_samples(ks, dc, n, T)


def _tail_unit_samples(ks, n, T):
    """Real coordinate directions of the tail: one row per (k, Re/Im)."""
    eye = np.eye(2 * len(ks))
    return _tail_step_samples(ks, eye, n, T)


def _schur_closing(q, space, sd, tail_ks, dirs, G):
    """G - J_cc J_ts: closing response with the tail held at its target."""
    if sd is None:
        sd = perturbed_fourier(q, int(np.max(np.abs(tail_ks))))
    _, dz = delta_z_batch(q, sd, tail_ks, dirs)
    J_ts = realify(dz)
    J_cc = closing_jacobian(q, space, _tail_unit_samples(tail_ks, q.n, q.T))
    return G - J_cc @ J_ts


# ---------------------------------------------------------------- solvers

class _Evaluator:
    def __init__(self, K_max, K_central, ks, target):
        self.K_max = K_max
        self.K_central = K_central
        self.ks = ks
        self.goal = target.values(ks)

    def __call__(self, q):
        sd = perturbed_fourier(q, self.K_max, self.K_central)
        z = np.array([sd.z_k(int(k)) for k in self.ks])
        mult = np.array([sd.mult[sd.index(int(k))] for k in self.ks])
        if np.any(mult > 1):
            bad = [int(k) for k, m in zip(self.ks, mult) if m > 1]
            raise MultiplicityError(f"multiple zeros at tail indices {bad}")
        return sd, z - self.goal


def _setup(slice_: SliceSpec, target: Target, cfg: SolverConfig):
    q = slice_.q
    K_max = cfg.K_max or max(default_K_max(q), max((abs(k) for k in target.tail), default=0))
    if K_max > q.n // 2 - 2:
        raise ValueError("K_max beyond the grid band")
    ks = tail_indices(slice_.N, K_max)
    unknown = set(int(k) for k in target.tail) - set(int(k) for k in ks)
    if unknown:
        raise ValueError(f"target indices outside the tail range: {sorted(unknown)[:5]}")
    K_central = default_K_central(q)
    return K_max, ks, _Evaluator(K_max, K_central, ks, target)


def solve_Phi(slice_: SliceSpec, target: Target, cfg: SolverConfig | None = None) -> SolveResult:
    """Potential in the slice whose perturbed tail coefficients equal the target."""
    cfg = cfg or SolverConfig(N=slice_.N)
    q = slice_.q
    K_max, ks, evaluate = _setup(slice_, target, cfg)
    sd, r = evaluate(q)
    res = float(np.linalg.norm(r))
    history = [res]
    exact_steps = 0
    force_exact = False
    it = 0
    while res >= cfg.tol:
        if it >= cfg.max_iter:
            raise DivergenceError(f"no convergence in {cfg.max_iter} iterations", residual=res)
        it += 1
        exact = force_exact or (cfg.exact_jacobian_every and it % cfg.exact_jacobian_every == 0)
        if exact:
            step = _exact_phi_step(q, sd, ks, r)
            exact_steps += 1
        else:
            step = modes_to_samples(ks, -r, q.n, q.T)
        q, sd, r, new = _damped(q, step, evaluate, res, cfg.damping_max)
        force_exact = new > 0.5 * res
        res = new
        history.append(res)
    return SolveResult(q, it, res, history, exact_steps=exact_steps, sd=sd, tail_ks=ks,
                       coeffs=r + evaluate.goal)


def _exact_phi_step(q, sd, ks, r):
    dirs = fourier_directions(ks, q.n, q.T, normalized=False)
    _, dz = delta_z_batch(q, sd, ks, dirs)
    J = realify(dz)
    x = np.linalg.solve(J, -realify(r[None, :])[:, 0])
    return x @ dirs


def _damped(q, step, evaluate, res, damping_max, extra=None):
    t = 1.0
    last = res
    for _ in range(damping_max + 1):
        trial = q.with_samples(q.samples + t * step)
        try:
            sd, r = evaluate(trial)
            val = float(np.linalg.norm(r if extra is None else np.concatenate([r.view(float), extra(trial)])))
        except (MultiplicityError, ResolutionError):
            # a trial the grid cannot resolve counts as a failed step
            val = np.inf
        if val < res:
            return trial, sd, r, val
        last = val if np.isfinite(val) else last
        t *= 0.5
    raise DivergenceError("target outside local neighborhood; increase n or reduce perturbation",
                          residual=last)


def solve_Psi(slice_: SliceSpec, target: Target, cfg: SolverConfig | None = None) -> SolveResult:
    """Tail target plus closing conditions, with the two slice directions as extra unknowns."""
    cfg = cfg or SolverConfig(N=slice_.N)
    if target.space is None:
        raise ValueError("closing target needs a space")
    if len(slice_.directions) < 2:
        raise ValueError("slice needs closing directions; see choose_closing_directions")
    space = target.space
    q = slice_.q
    eta = target.eta if target.eta is not None else closing_eta(q, space)
    K_max, ks, evaluate = _setup(slice_, target, cfg)
    F = np.array(slice_.directions)
    units = _tail_unit_samples(ks, q.n, q.T)

    def close(p):
        return closing_residual(p, space, eta)

    sd, r = evaluate(q)
    rc = close(q)
    res = float(np.hypot(np.linalg.norm(r), np.linalg.norm(rc)))
    history, chist = [res], [float(np.linalg.norm(rc))]
    exact_steps = 0
    force_exact = False
    it = 0
    while res >= cfg.tol:
        if it >= cfg.max_iter:
            raise DivergenceError(f"no convergence in {cfg.max_iter} iterations", residual=res)
        it += 1
        exact = force_exact or (cfg.exact_jacobian_every and it % cfg.exact_jacobian_every == 0)
        _, dz = delta_z_batch(q, sd, ks, F)
        J_ts = realify(dz)
        J_cs = closing_jacobian(q, space, F)
        J_cc = closing_jacobian(q, space, units)
        rt = realify(r[None, :])[:, 0]
        if exact:
            _, dzc = delta_z_batch(q, sd, ks, units)
            J_tc = realify(dzc)
            J = np.block([[J_tc, J_ts], [J_cc, J_cs]])
            x = np.linalg.lstsq(J, -np.concatenate([rt, rc]), rcond=None)[0]
            dc, ds = x[:rt.size], x[rt.size:]
            exact_steps += 1
        else:
            S = J_cs - J_cc @ J_ts
            ds = np.linalg.lstsq(S, -(rc - J_cc @ rt), rcond=None)[0]
            dc = -rt - J_ts @ ds
        step = dc @ units + ds @ F
        q, sd, r, new = _damped(q, step, evaluate, res, cfg.damping_max, extra=close)
        rc = close(q)
        force_exact = new > 0.5 * res
        res = new
        history.append(res)
        chist.append(float(np.linalg.norm(rc)))
    return SolveResult(q, it, res, history, chist, exact_steps, sd, ks, r + evaluate.goal)


# ---------------------------------------------------------------- pipelines

@dataclass
class Approximation:
    q: Potential
    result: SolveResult
    N: int
    n_trunc: int
    distance: float
    closing: dict | None
    eta: int | None


def approximate(q: Potential, n_trunc: int, cfg: SolverConfig | None = None, space: str | None = None,
                seed: int = 0, closing_tol: float = 1e-7, n_closing: int | None = None) -> Approximation:
    """Finite-gap approximant of q keeping z_k for |k| <= n_trunc.

    With a space given and q closed there to closing_tol, the closing
    conditions are imposed as well; otherwise only the tail is matched.
    """
    cfg = cfg or SolverConfig()
    N = cfg.N if cfg.N is not None else select_N(q)
    if space is not None and cfg.N is None:
        # the closing block needs spare low-band directions to be well conditioned
        N = max(N, MIN_CLOSING_BAND)
    if n_trunc < N:
        raise ValueError(f"n_trunc = {n_trunc} below the frozen band N = {N}")
    K_max = cfg.K_max or max(default_K_max(q), n_trunc + 1)
    sd = perturbed_fourier(q, K_max)
    closed = False
    eta = None
    if space is not None:
        eta = closing_eta(q, space)
        closed = float(np.linalg.norm(closing_residual(q, space, eta))) < closing_tol
    target = truncated_target(sd, N, n_trunc, K_max, space if closed else None, eta if closed else None)
    run_cfg = SolverConfig(N, n_trunc, cfg.tol, cfg.max_iter, cfg.exact_jacobian_every,
                           cfg.damping_max, K_max)
    if closed:
        ks = tail_indices(N, K_max)
        dirs, _ = choose_closing_directions(q, space, N=N, seed=seed, tail_ks=ks, sd=sd,
                                            count=n_closing or closing_rank(space))
        result = solve_Psi(SliceSpec(q, N, dirs), target, run_cfg)
        report = closing_mu_residuals(result.q, space, eta)
        report["matrix"] = float(np.linalg.norm(closing_residual(result.q, space, eta)))
    else:
        result = solve_Phi(SliceSpec(q, N), target, run_cfg)
        report = None
    return Approximation(result.q, result, N, n_trunc, l2_distance(q, result.q), report,
                         eta if closed else None)


def close_potential(q: Potential, space: str, N: int, cfg: SolverConfig | None = None,
                    eta: int | None = None, seed: int = 0, n_closing: int | None = None) -> SolveResult:
    """Move q inside its slice so that it satisfies the closing conditions, keeping its own tail."""
    cfg = cfg or SolverConfig(N=N)
    K_max = cfg.K_max or default_K_max(q)
    sd = perturbed_fourier(q, K_max)
    eta = eta if eta is not None else closing_eta(q, space)
    ks = tail_indices(N, K_max)
    target = Target({int(k): sd.z_k(int(k)) for k in ks}, space, eta)
    dirs, _ = choose_closing_directions(q, space, N=N, seed=seed, tail_ks=ks, sd=sd,
                                        count=n_closing or closing_rank(space))
    run_cfg = SolverConfig(N, None, cfg.tol, cfg.max_iter, cfg.exact_jacobian_every,
                           cfg.damping_max, K_max)
    return solve_Psi(SliceSpec(q, N, dirs), target, run_cfg)
