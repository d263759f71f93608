"""Pointwise structural conditions on V and the (c, tau) feasibility search.

The coupling condition asks that the n(n+1) square block matrix

    [ nu(V''+cI)                        -T_1/2 ]
    [              ...                   ...   ]
    [                    nu(V''+cI)     -T_n/2 ]
    [ -T_1/2   ...       -T_n/2   (tau nu/2sigma)(V''+cI) ]

is positive semidefinite, where T_k are the third-derivative slices.
A cheaper sufficient condition bounds each slice by
sqrt(2 tau nu^2/(n sigma)) (alpha(x)+c) in the matrix order.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import matrixkit as mk
from .errors import RejectedInput
from .potential import Box, Potential, estimate_alpha0

FULL = "assumption_2_2"
SUFFICIENT = "assumption_2_2_prime"


@dataclass(frozen=True)
class HypoParams:
    nu: float
    sigma: float
    c: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if not (self.nu > 0 and self.sigma > 0):
            raise RejectedInput("nu and sigma must be positive")
        if not (0 <= self.tau < self.nu):
            raise RejectedInput(f"tau={self.tau} must lie in [0, nu={self.nu})")

    def with_(self, **kw) -> "HypoParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ConditionCertificate:
    params: HypoParams
    box: Box
    resolution: tuple
    passed: bool
    worst_point: np.ndarray
    worst_min_eig: float
    checked_condition: str
    tol: float = 0.0


def condition_matrix_from_jet(H, T, p: HypoParams) -> np.ndarray:
    H = np.atleast_2d(H)
    n = H.shape[0]
    Hc = H + p.c * np.eye(n)
    m = n * (n + 1)
    A = np.zeros((m, m))
    for k in range(n):
        s = slice(k * n, (k + 1) * n)
        A[s, s] = p.nu * Hc
        A[s, n * n:] = -0.5 * T[k]
        A[n * n:, s] = -0.5 * T[k]
    A[n * n:, n * n:] = p.tau * p.nu / (2 * p.sigma) * Hc
    return A


def condition_matrices(Hs, Ts, p: HypoParams) -> np.ndarray:
    """Batched version: Hs (N, n, n), Ts (N, n, n, n) -> (N, m, m)."""
    N, n = Hs.shape[0], Hs.shape[1]
    Hc = Hs + p.c * np.eye(n)
    m = n * (n + 1)
    A = np.zeros((N, m, m))
    for k in range(n):
        s = slice(k * n, (k + 1) * n)
        A[:, s, s] = p.nu * Hc
        A[:, s, n * n:] = -0.5 * Ts[:, k]
        A[:, n * n:, s] = -0.5 * Ts[:, k]
    A[:, n * n:, n * n:] = p.tau * p.nu / (2 * p.sigma) * Hc
    return A


def batch_min_eig_margin(A: np.ndarray) -> np.ndarray:
    """min eigenvalue + scale-aware tolerance for each matrix in a stack."""
    lo = np.linalg.eigvalsh(A)[:, 0]
    tol = 1e-10 * np.maximum(1.0, np.linalg.norm(A, axis=(1, 2)))
    return lo, tol


def sample_jets(V: Potential, pts) -> tuple[np.ndarray, np.ndarray]:
    jets = [V.jet(x) for x in pts]
    return np.array([j.hessian for j in jets]), np.array([j.third for j in jets])


def build_condition_matrix(V: Potential, x, p: HypoParams) -> np.ndarray:
    j = V.jet(x)
    return condition_matrix_from_jet(j.hessian, j.third, p)


def sufficient_margin(H, T, p: HypoParams) -> tuple[float, float]:
    """(worst min eigenvalue, scale) over all one-sided matrix inequalities."""
    H = np.atleast_2d(H)
    n = H.shape[0]
    I = np.eye(n)
    a = float(np.linalg.eigvalsh(H)[0])
    Hc = H + p.c * I
    bound = np.sqrt(2 * p.tau * p.nu ** 2 / (n * p.sigma)) * (a + p.c)
    mats = [Hc]
    for k in range(n):
        mats.append(bound * I - T[k])
        mats.append(bound * I + T[k])
    eigs = [float(np.linalg.eigvalsh(M)[0]) for M in mats]
    scale = max(float(np.linalg.norm(M)) for M in mats)
    return min(eigs), scale


def check_assumption(V: Potential, box: Box, resolution, p: HypoParams,
                     which: str = FULL) -> ConditionCertificate:
    if p.tau >= p.nu:
        raise RejectedInput("tau must be below nu")
    if which not in (FULL, SUFFICIENT):
        raise RejectedInput(f"unknown condition {which!r}")
    pts = box.grid(resolution)
    Hs, Ts = sample_jets(V, pts)
    if which == FULL:
        lo, tol = batch_min_eig_margin(condition_matrices(Hs, Ts, p))
    else:
        out = [sufficient_margin(H, T, p) for H, T in zip(Hs, Ts)]
        lo = np.array([o[0] for o in out])
        tol = 1e-10 * np.maximum(1.0, np.array([o[1] for o in out]))
    # worst point ranked by violation relative to its own tolerance
    i = int(np.argmin(lo + tol))
    passed = bool(np.all(lo >= -tol))
    worst, worst_x, worst_tol = lo[i], pts[i], tol[i]
    res = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(resolution), (box.n,)))
    return ConditionCertificate(p, box, res, passed, np.asarray(worst_x), float(worst),
                                which, float(worst_tol))


@dataclass(frozen=True)
class FeasibleResult:
    feasible: bool
    params: HypoParams | None
    certificate: ConditionCertificate | None
    rate: object | None  # RateReport when feasible
    alpha0: float
    reason: str = ""


def find_feasible(V: Potential, box: Box, resolution, nu: float, sigma: float,
                  c_pi: float, n_c: int = 64, n_tau: int = 32,
                  epsilon_b: float | None = None) -> FeasibleResult:
    """Grid search over (c, tau) for the largest certified decay rate.

    Never raises for infeasibility; inspect `.feasible`.
    """
    from .rates import UncoveredRegion, decay_rate

    a0 = V.exact_alpha0()
    if a0 is None:
        a0, _ = estimate_alpha0(V, box, resolution)
    cs = np.linspace(-a0, -a0 + 10 * max(1.0, nu ** 2), n_c)
    taus = np.linspace(0.0, 0.99 * nu, n_tau)

    # jets are reused for every (c, tau)
    Hs, Ts = sample_jets(V, box.grid(resolution))

    def passes(i, tau):
        lo, tol = batch_min_eig_margin(condition_matrices(Hs, Ts, HypoParams(nu, sigma, cs[i], tau)))
        return bool(np.all(lo >= -tol))

    best = None
    for tau in taus:
        # feasibility is monotone in c, so bisect for the first passing index
        if not passes(n_c - 1, tau):
            continue
        lo_i, hi_i = -1, n_c - 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) // 2
            if passes(mid, tau):
                hi_i = mid
            else:
                lo_i = mid
        first = hi_i
        for c in cs[first:]:
            p = HypoParams(nu, sigma, float(c), float(tau))
            try:
                r = decay_rate(p, a0, c_pi, epsilon_b)
            except UncoveredRegion:
                continue
            if best is None or r.lam > best[0].lam + 1e-12:
                best = (r, p)
            elif abs(r.lam - best[0].lam) <= 1e-12 and (tau, c) < (best[1].tau, best[1].c):
                best = (r, p)
    if best is None:
        return FeasibleResult(False, None, None, None, a0, "infeasible-on-grid")
    rep, p = best
    cert = check_assumption(V, box, resolution, p, FULL)
    return FeasibleResult(True, p, cert, rep, a0)
