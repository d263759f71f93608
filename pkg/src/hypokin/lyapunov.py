"""Weight matrices for the modified dissipation functional and their checks.

Q(x) = [[0, I], [-V'', nu I]] is the drift of the gradient pair
u = (grad_x h, grad_v h); the weight

    P(x) = [[2I, nu I], [nu I, 2V'' + 2aI]]

is positive definite once a + alpha0 > nu^2/4 and satisfies
QP + PQ^T + gamma D >= (nu - delta) P with D = diag(0, sigma I).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matrixkit as mk
from .assumptions import ConditionCertificate, HypoParams, sample_jets
from .errors import RejectedInput
from .potential import Box, Potential


@dataclass(frozen=True)
class LyapunovSelection:
    a: float
    gamma: float
    delta: float
    eta: float
    mu: float


@dataclass(frozen=True)
class SandwichConstants:
    c1: float
    c2: float


@dataclass(frozen=True)
class HypoellipticCertificate:
    t0: float
    epsilon: float
    gamma1: float
    gamma2: float
    feasible: bool
    worst_margin: float
    note: str = ""


def q_matrix(H, nu: float) -> np.ndarray:
    H = np.atleast_2d(H)
    n = H.shape[0]
    I = np.eye(n)
    return np.block([[np.zeros((n, n)), I], [-H, nu * I]])


def build_Q(V: Potential, x, nu: float) -> np.ndarray:
    return q_matrix(V.jet(x).hessian, nu)


def q_spectrum(alphas, nu: float) -> tuple[list[complex], float, bool]:
    """Closed-form nonzero eigenvalues of Q for Hessian eigenvalues alphas.

    Returns (eigenvalues, mu = smallest real part, positive_stable).
    """
    betas = []
    for al in np.atleast_1d(alphas):
        disc = nu * nu - 4 * al
        if disc >= 0:
            rt = math.sqrt(disc)
            betas += [complex((nu - rt) / 2), complex((nu + rt) / 2)]
        else:
            im = math.sqrt(-disc) / 2
            betas += [complex(nu / 2, -im), complex(nu / 2, im)]
    mu = min(b.real for b in betas)
    return betas, mu, bool(np.all(np.atleast_1d(alphas) > 0))


def p_matrix(H, nu: float, a: float) -> np.ndarray:
    H = np.atleast_2d(H)
    n = H.shape[0]
    I = np.eye(n)
    return np.block([[2 * I, nu * I], [nu * I, 2 * H + 2 * a * I]])


def build_P(V: Potential, x, a: float, nu: float, alpha0: float | None = None) -> np.ndarray:
    if alpha0 is None:
        alpha0 = V.exact_alpha0()
    if alpha0 is not None and a + alpha0 <= nu ** 2 / 4:
        raise RejectedInput("need a + alpha0 > nu^2/4 for a positive definite weight")
    return p_matrix(V.jet(x).hessian, nu, a)


def p_eigenvalues(alpha_i: float, a: float, nu: float) -> tuple[float, float]:
    z = alpha_i + a
    rt = math.sqrt((z + 1) ** 2 - (4 * z - nu ** 2))
    return 1 + z - rt, 1 + z + rt


def delta_of(a: float, gamma: float, nu: float, sigma: float, alpha0: float) -> float:
    k = a + alpha0 - nu ** 2 / 4
    g = gamma * sigma / (4 * math.sqrt(k))
    return (math.hypot(g, a) - g) / math.sqrt(k)


def delta_residual(delta: float, a: float, gamma: float, nu: float, sigma: float,
                   alpha0: float) -> float:
    k = a + alpha0 - nu ** 2 / 4
    return 4 * delta ** 2 * k + 2 * delta * gamma * sigma - 4 * a * a


def select_gamma_delta(a: float, gamma: float, nu: float, sigma: float,
                       alpha0: float) -> LyapunovSelection:
    if a + alpha0 <= nu ** 2 / 4:
        raise RejectedInput("need a + alpha0 > nu^2/4")
    if gamma < 0:
        raise RejectedInput("gamma must be nonnegative")
    from .rates import eta_of

    _, mu, _ = q_spectrum([alpha0], nu)
    return LyapunovSelection(a, gamma, delta_of(a, gamma, nu, sigma, alpha0),
                             eta_of(a, alpha0, nu), mu)


def select_from_s(a: float, s: float, nu: float, sigma: float,
                  alpha0: float) -> LyapunovSelection:
    """Same selection with gamma given through s = gamma sigma / (4 a sqrt(a+alpha0-nu^2/4))."""
    k = a + alpha0 - nu ** 2 / 4
    if k <= 0:
        raise RejectedInput("need a + alpha0 > nu^2/4")
    return select_gamma_delta(a, 4 * a * s * math.sqrt(k) / sigma, nu, sigma, alpha0)


def lyapunov_residual(H, sel: LyapunovSelection, nu: float, sigma: float) -> np.ndarray:
    """QP + PQ^T + gamma D - (nu - delta) P."""
    n = np.atleast_2d(H).shape[0]
    Q = q_matrix(H, nu)
    P = p_matrix(H, nu, sel.a)
    D = np.zeros((2 * n, 2 * n))
    D[n:, n:] = sigma * np.eye(n)
    return Q @ P + P @ Q.T + sel.gamma * D - (nu - sel.delta) * P


def verify_lyapunov_inequality(V: Potential, box: Box, resolution, sel: LyapunovSelection,
                               p: HypoParams, rel_tol: float = 1e-8) -> ConditionCertificate:
    pts = box.grid(resolution)
    Hs, _ = sample_jets(V, pts)
    Ms = np.array([lyapunov_residual(H, sel, p.nu, p.sigma) for H in Hs])
    Ms = 0.5 * (Ms + np.transpose(Ms, (0, 2, 1)))
    lo = np.linalg.eigvalsh(Ms)[:, 0]
    tol = rel_tol * np.maximum(1.0, np.linalg.norm(Ms, axis=(1, 2)))
    i = int(np.argmin(lo + tol))
    res = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(resolution), (box.n,)))
    return ConditionCertificate(p, box, res, bool(np.all(lo >= -tol)), pts[i], float(lo[i]),
                                "lyapunov_inequality", float(tol[i]))


def sandwich_constants(a: float, alpha0: float, nu: float) -> SandwichConstants:
    z = a + alpha0
    den = 4 * z - nu ** 2
    if den <= 0:
        raise RejectedInput("need 4(a + alpha0) > nu^2")
    top = z + 1 + math.sqrt((z - 1) ** 2 + nu ** 2)
    return SandwichConstants(1 / top, top / den)


def sandwich_margins(H, a: float, alpha0: float, nu: float,
                     sc: SandwichConstants | None = None) -> tuple[float, float]:
    """Min eigenvalues of c2 P - G and G - c1 P, G = diag(I, V'' + (1-alpha0) I)."""
    H = np.atleast_2d(H)
    n = H.shape[0]
    sc = sc or sandwich_constants(a, alpha0, nu)
    P = p_matrix(H, nu, a)
    G = np.zeros((2 * n, 2 * n))
    G[:n, :n] = np.eye(n)
    G[n:, n:] = H + (1 - alpha0) * np.eye(n)
    return mk.min_eig(sc.c2 * P - G), mk.min_eig(G - sc.c1 * P)


def verify_sandwich(V: Potential, box: Box, resolution, a: float, alpha0: float,
                    nu: float, tol: float = 1e-10) -> tuple[bool, float]:
    sc = sandwich_constants(a, alpha0, nu)
    worst = min(min(sandwich_margins(V.jet(x).hessian, a, alpha0, nu, sc))
                for x in box.grid(resolution))
    return worst >= -tol, worst


def trace_inequality_check(V: Potential, x, p: HypoParams,
                           tol: float = 1e-10) -> tuple[float, list[float], bool]:
    j = V.jet(x)
    Hc = j.hessian + p.c * np.eye(V.n)
    lhs = math.sqrt(2 * p.tau * p.nu ** 2 / p.sigma) * float(np.trace(Hc @ Hc))
    rhs = [float(np.trace(Hc @ T)) for T in j.third]
    scale = max(1.0, abs(lhs), *(abs(r) for r in rhs))
    return lhs, rhs, all(lhs >= r - tol * scale for r in rhs)


def kronecker_trace(V: Potential, x, p: HypoParams) -> list[float]:
    """Tr(X_delta Y_k) with delta = sqrt(2 sigma/tau); each must be >= 0."""
    if p.tau <= 0:
        raise RejectedInput("the Kronecker route needs tau > 0")
    j = V.jet(x)
    n = V.n
    Hc = j.hessian + p.c * np.eye(n)
    d = math.sqrt(2 * p.sigma / p.tau)
    X = mk.kron(np.array([[1.0, d], [d, d * d]]), Hc)
    out = []
    for T in j.third:
        Y = np.block([[p.nu * Hc, -0.5 * T], [-0.5 * T, p.tau * p.nu / (2 * p.sigma) * Hc]])
        out.append(float(np.trace(X @ Y)))
    return out


def eps_condition(eps: float, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return 1 - 3 * eps - eps * np.abs(1 - 2 * eps ** 2 * t ** 2)


def aux_expression(w, t, eps: float, g1: float, g2: float, p: HypoParams, n: int = 1):
    """Certificate expression as a quadratic in w = ||V'' + cI||_F; must be >= 0."""
    nu, sigma, c, tau = p.nu, p.sigma, p.c, p.tau
    w = np.asarray(w, dtype=float)
    t = np.asarray(t, dtype=float)
    lead = sigma * np.exp(-8 * tau * n * t) * g1 - np.abs(1 - 2 * eps ** 3 * t ** 2) / (2 * eps ** 3)
    lin = np.abs(-1 + 2 * nu * t - 2 * eps ** 2 * t ** 2) + tau * t
    num = (2 * c * eps ** 2 * t ** 2 + nu * eps * t + 2 * (1 - eps)) ** 2
    const = (2 * sigma * g2 + 2 * c * eps ** 2 * t ** 2 + 4 * eps * nu * t - 2 * eps
             - num / (2 * eps_condition(eps, t)))
    return lead * w ** 2 - lin * w + const


def largest_eps(t0: float, iters: int = 200) -> float:
    ts = np.linspace(0.0, t0, 1001)
    lo, hi = 0.0, 1.0 / 3.0  # at t = 0 the condition reads 1 - 4 eps > 0 anyway
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.all(eps_condition(mid, ts) > 0):
            lo = mid
        else:
            hi = mid
    return lo


def hypoelliptic_certificate(t0: float, p: HypoParams, hessnorm_max: float, n: int = 1,
                             eps: float | None = None, n_w: int = 1000, n_t: int = 1000,
                             g_start: float = 1e-3, g_cap: float = 1e12) -> HypoellipticCertificate:
    if t0 <= 0 or hessnorm_max < 0:
        raise RejectedInput("need t0 > 0 and hessnorm_max >= 0")
    ts = np.linspace(0.0, t0, n_t)
    if eps is None:
        eps = 0.5 * largest_eps(t0)
    if eps <= 0 or not np.all(eps_condition(eps, ts) > 0):
        return HypoellipticCertificate(t0, eps, 0.0, 0.0, False, -np.inf,
                                       "epsilon violates 1 - 3e - e|1 - 2e^2 t^2| > 0")
    ws = np.linspace(0.0, hessnorm_max, n_w) if hessnorm_max > 0 else np.zeros(1)
    W, T = np.meshgrid(ws, ts, indexing="ij")
    g1 = g2 = g_start
    margin = -np.inf
    while g1 <= g_cap:
        margin = float(np.min(aux_expression(W, T, eps, g1, g2, p, n)))
        if margin >= 0:
            return HypoellipticCertificate(t0, eps, g1, g2, True, margin)
        # raise whichever constant the binding term needs; both when unclear
        lead = np.min(p.sigma * np.exp(-8 * p.tau * n * ts) * g1
                      - np.abs(1 - 2 * eps ** 3 * ts ** 2) / (2 * eps ** 3))
        if lead > 0 or hessnorm_max == 0:
            g2 *= 2
        else:
            g1 *= 2
        if g2 > g_cap:
            break
    return HypoellipticCertificate(t0, eps, g1, g2, False, margin, "search exhausted")
