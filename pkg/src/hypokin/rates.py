"""Closed-form exponential decay rates.

The rate depends on (nu, sigma, c, tau), alpha0 = inf of the smallest Hessian
eigenvalue, and the Poincare constant C_PI. Four parameter regimes:

  a  alpha0 > nu^2/4, c <= -nu^2/4           2 lam = nu - tau
  b  c = -alpha0 = -nu^2/4                   2 lam = nu - tau - eps
  c  c > -nu^2/4, c + 2 alpha0 > nu^2/4      shift a = c + nu^2/4
  d  c > -nu^2/4, c + 2 alpha0 <= nu^2/4     shift a = 2(nu^2/4 - alpha0)

In c/d the rate is the maximum over s >= 0 of

  Lam(s) = (nu - tau - B (sqrt(1+s^2) - s)) / (1 + A B s)

with A = A(a), B = B(a) below; the maximizer is known in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .assumptions import HypoParams
from .errors import DomainError, NumericFailure, RejectedInput

BOUNDARY_TOL = 1e-9


class UncoveredRegion(ValueError):
    """(c, alpha0, nu) lies in none of the four regimes."""


@dataclass(frozen=True)
class RateReport:
    case_tag: str
    lam: float
    two_lambda: float
    c_pi: float
    params: HypoParams
    alpha0: float
    intermediates: dict = field(default_factory=dict)
    sharp: bool = False

    def csv_row(self) -> dict:
        i = self.intermediates
        return {"case": self.case_tag, "lambda": self.lam, "c": self.params.c,
                "tau": self.params.tau, "a": i.get("a"), "A": i.get("A"),
                "B": i.get("B"), "s": i.get("s"), "c_pi": self.c_pi}


CSV_COLUMNS = ["case", "lambda", "c", "tau", "a", "A", "B", "s", "c_pi"]


def poincare_constant_quadratic(nu: float, sigma: float, alpha0: float) -> float:
    if alpha0 <= 0:
        raise DomainError("quadratic steady state needs alpha0 > 0")
    return nu * min(1.0, alpha0) / sigma


def coef_A(a: float, alpha0: float, nu: float, sigma: float, c_pi: float) -> float:
    z = a + alpha0
    return (1 + z + math.sqrt((z - 1) ** 2 + nu ** 2)) / (2 * sigma * c_pi)


def coef_B(a: float, alpha0: float, nu: float) -> float:
    return a / math.sqrt(a + alpha0 - nu ** 2 / 4)


def eta_of(a: float, alpha0: float, nu: float) -> float:
    z = a + alpha0
    return 4 * (z - nu ** 2 / 4) / (1 + z + math.sqrt((z - 1) ** 2 + nu ** 2))


def big_lambda(s: float, A: float, B: float, r: float) -> float:
    """Candidate 2*lambda for the free parameter s >= 0 (r = nu - tau)."""
    return (r - B * (math.sqrt(1 + s * s) - s)) / (1 + A * B * s)


def stationarity_residual(s: float, A: float, B: float, r: float) -> float:
    return (1 - r * A) * math.sqrt(s * s + 1) - s + A * B


def optimal_s(A: float, B: float, r: float) -> float:
    """Closed-form maximizer of big_lambda (valid when r < 1/A + B)."""
    k = r * A - 2
    if k == 0:
        s = (A * A * B * B - 1) / (2 * A * B)
    else:
        root = math.sqrt(B * B + 2 * r / A - r * r)
        s = (abs((r * A - 1) / k) * root - B / k) / r
    if _is_stationary(s, A, B, r):
        return s
    # The formula solves the squared equation. For 1 < rA < 2 it lands on the
    # spurious root, and near rA = 2 it cancels badly. Solve the squared
    # quadratic (g^2-1) s^2 + 2AB s + (g^2 - A^2B^2) = 0 in stable form.
    g = 1 - r * A
    qa, qb, qc = g * g - 1, 2 * A * B, g * g - (A * B) ** 2
    disc = qb * qb - 4 * qa * qc
    if disc >= 0:
        q = -(qb + math.sqrt(disc)) / 2
        for alt in (qc / q if q != 0 else math.nan, q / qa if qa != 0 else math.nan):
            if _is_stationary(alt, A, B, r):
                return alt
    raise NumericFailure(f"no stationary point found for A={A}, B={B}, r={r}")


def _is_stationary(s: float, A: float, B: float, r: float) -> bool:
    if not (math.isfinite(s) and s >= 0):
        return False
    scale = max(1.0, abs(1 - r * A) * math.sqrt(1 + s * s), s, A * B)
    return abs(stationarity_residual(s, A, B, r)) <= 1e-10 * scale


def _shifted_case(tag: str, a: float, p: HypoParams, alpha0: float,
                  c_pi: float) -> RateReport | None:
    r = p.nu - p.tau
    if a + alpha0 - p.nu ** 2 / 4 <= 0:
        return None
    A = coef_A(a, alpha0, p.nu, p.sigma, c_pi)
    B = coef_B(a, alpha0, p.nu)
    if r >= 1 / A + B:
        s = 0.0
        two = r - B
    else:
        s = optimal_s(A, B, r)
        two = (r - B * (math.sqrt(1 + s * s) - s)) / (1 + A * s * B)
    k = a + alpha0 - p.nu ** 2 / 4
    gamma = 4 * a * s * math.sqrt(k) / p.sigma
    delta = B * (math.sqrt(1 + s * s) - s)
    inter = {"A": A, "B": B, "s": s, "a": a, "epsilon_b": None,
             "gamma": gamma, "delta": delta, "eta": eta_of(a, alpha0, p.nu)}
    return RateReport(tag, two / 2, two, c_pi, p, alpha0, inter)


def _candidates(p: HypoParams, alpha0: float, c_pi: float, eps: float) -> list[RateReport]:
    nu, tau, c = p.nu, p.tau, p.c
    q = nu ** 2 / 4
    r = nu - tau
    out = []
    if alpha0 > q and c <= -q + BOUNDARY_TOL:
        inter = {"A": coef_A(0.0, alpha0, nu, p.sigma, c_pi), "B": 0.0, "s": 0.0, "a": 0.0,
                 "epsilon_b": None, "gamma": 0.0, "delta": 0.0, "eta": eta_of(0.0, alpha0, nu)}
        out.append(RateReport("a", r / 2, r, c_pi, p, alpha0, inter))
    if abs(c + alpha0) <= BOUNDARY_TOL and abs(alpha0 - q) <= BOUNDARY_TOL:
        if not 0 < eps < r:
            raise RejectedInput(f"epsilon_b={eps} must lie in (0, nu - tau)")
        a = eps ** 2 / 2
        inter = {"A": coef_A(a, alpha0, nu, p.sigma, c_pi), "B": None, "s": 0.0, "a": a,
                 "epsilon_b": eps, "gamma": 0.0, "delta": eps,
                 "eta": 1 + (nu ** 2 + 2 * eps ** 2) / 4
                 - math.sqrt(((nu ** 2 + 2 * eps ** 2) / 4 - 1) ** 2 + nu ** 2)}
        out.append(RateReport("b", (r - eps) / 2, r - eps, c_pi, p, alpha0, inter))
    if c > -q:
        if c + 2 * alpha0 > q:
            out.append(_shifted_case("c", c + q, p, alpha0, c_pi))
        else:
            out.append(_shifted_case("d", 2 * (q - alpha0), p, alpha0, c_pi))
    return out


def decay_rate(p: HypoParams, alpha0: float, c_pi: float, epsilon_b: float | None = None,
               quadratic: bool = False) -> RateReport:
    if c_pi <= 0:
        raise RejectedInput("C_PI must be positive")
    r = p.nu - p.tau
    eps = 0.05 * r if epsilon_b is None else float(epsilon_b)
    cands = [rep for rep in _candidates(p, alpha0, c_pi, eps) if rep is not None]
    if not cands:
        raise UncoveredRegion(
            f"uncovered-parameter-region: c={p.c}, alpha0={alpha0}, nu={p.nu}")
    # boundary ties go to the larger rate
    best = max(cands, key=lambda rep: rep.lam)
    if best.lam <= 0:
        raise UncoveredRegion(f"non-positive rate {best.lam} for c={p.c}, alpha0={alpha0}")
    sharp = quadratic and best.case_tag in ("a", "d")
    return RateReport(best.case_tag, best.lam, best.two_lambda, c_pi, p, alpha0,
                      best.intermediates, sharp)


def check_a2_inequality(nu: float, sigma: float, alpha0: float) -> bool:
    """nu >= 1/A2 + sqrt(nu^2 - 4 alpha0) with the quadratic C_PI."""
    if not 0 < alpha0 < nu ** 2 / 4:
        raise DomainError("alpha0 must lie in (0, nu^2/4)")
    c_pi = poincare_constant_quadratic(nu, sigma, alpha0)
    A2 = coef_A(2 * (nu ** 2 / 4 - alpha0), alpha0, nu, sigma, c_pi)
    return nu >= 1 / A2 + math.sqrt(nu ** 2 - 4 * alpha0)


@dataclass(frozen=True)
class OptimizedRate:
    report: RateReport | None
    feasible: object  # assumptions.FeasibleResult


def optimize_rate(V, box, resolution, nu: float, sigma: float, c_pi: float | None = None,
                  epsilon_b: float | None = None) -> OptimizedRate:
    """Search (c, tau) and return the best certified rate.

    c_pi=None is only allowed for quadratic potentials.
    """
    from .assumptions import find_feasible
    from .potential import Quadratic

    quadratic = isinstance(V, Quadratic)
    if c_pi is None:
        if not quadratic:
            raise RejectedInput("C_PI must be supplied for non-quadratic potentials")
        c_pi = poincare_constant_quadratic(nu, sigma, V.exact_alpha0())
    res = find_feasible(V, box, resolution, nu, sigma, c_pi, epsilon_b=epsilon_b)
    if not res.feasible:
        return OptimizedRate(None, res)
    rep = res.rate
    if quadratic:
        rep = decay_rate(res.params, res.alpha0, c_pi, epsilon_b, quadratic=True)
    return OptimizedRate(rep, res)
