"""Propagator norms for quadratic potentials.

With V(x) = x^T M^{-1} x / 2 the equation preserves the span of linear
functions, and the L2 operator norm of the solution map on mean-zero data
equals ||exp(-C t)||_2 for the 2n x 2n drift

    C = K^{-1/2} (D + R) K^{-1/2} = [[0, -M^{-1/2}], [M^{-1/2}, nu I]].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matrixkit as mk
from .errors import DomainError, RejectedInput

EXP = "exp(nu/2)"
POLY_EXP = "poly_times_exp(nu/2)"
SLOW_EXP = "exp((nu-sqrt(nu^2-4 alpha0))/2)"
DEFECT_TOL = 1e-8


@dataclass(frozen=True)
class OdeSystem:
    n: int
    M_inv: np.ndarray
    nu: float
    sigma: float
    C: np.ndarray
    positive_stable: bool
    no_invariant_kerD_subspace: bool


@dataclass(frozen=True)
class JordanReport:
    classification: str
    alphas: np.ndarray
    betas: list  # (beta_minus, beta_plus) per alpha_i, complex
    multiplicities: dict  # alpha value -> multiplicity
    defective: list  # alpha values equal to nu^2/4
    jordan_size: int  # largest Jordan block


@dataclass
class PropagatorCurve:
    times: np.ndarray
    norms: np.ndarray
    classification: str
    fitted_rate: float = float("nan")
    fitted_poly_degree: int = -1
    extra: dict = field(default_factory=dict)


def build_ode(M_inv, nu: float, sigma: float) -> OdeSystem:
    M_inv = mk.symmetrize(np.atleast_2d(M_inv))
    n = M_inv.shape[0]
    _, lo = mk.is_psd(M_inv, 0.0)
    if lo <= 0:
        raise DomainError("M_inv must be symmetric positive definite")
    if nu <= 0 or sigma <= 0:
        raise RejectedInput("nu and sigma must be positive")
    M = np.linalg.inv(M_inv)
    K = (sigma / nu) * np.block([[M, np.zeros((n, n))], [np.zeros((n, n)), np.eye(n)]])
    Kmh = mk.spd_inv_sqrt(K)
    I, Z = np.eye(n), np.zeros((n, n))
    D = np.block([[Z, Z], [Z, sigma * I]])
    R = (sigma / nu) * np.block([[Z, -I], [I, Z]])
    C = Kmh @ (D + R) @ Kmh

    alphas = np.linalg.eigvalsh(M_inv)
    # largest A-invariant subspace inside Ker D is the unobservable space of (D, A)
    A = np.linalg.inv(K) @ (D - R)
    blocks, Ak = [], np.eye(2 * n)
    for _ in range(2 * n):
        blocks.append(D @ Ak)
        Ak = A @ Ak
    rank = np.linalg.matrix_rank(np.vstack(blocks))
    return OdeSystem(n, M_inv, nu, sigma, C, bool(np.all(alphas > 0)), rank == 2 * n)


def classify(M_inv, nu: float) -> JordanReport:
    M_inv = mk.symmetrize(np.atleast_2d(M_inv))
    alphas = np.linalg.eigvalsh(M_inv)
    q = nu * nu / 4
    a0 = float(alphas[0])
    if abs(a0 - q) <= DEFECT_TOL:
        cls = POLY_EXP
    elif a0 > q:
        cls = EXP
    else:
        cls = SLOW_EXP
    betas, mult = [], {}
    for al in alphas:
        rt = np.sqrt(complex(nu * nu - 4 * al))
        betas.append(((nu - rt) / 2, (nu + rt) / 2))
    # group clustered eigenvalues
    for al in alphas:
        key = next((k for k in mult if abs(k - al) <= DEFECT_TOL * max(1.0, abs(al))), float(al))
        mult[key] = mult.get(key, 0) + 1
    defective = [k for k in mult if abs(k - q) <= DEFECT_TOL]
    return JordanReport(cls, alphas, betas, mult, defective, 2 if defective else 1)


def default_times(nu: float = 1.0) -> np.ndarray:
    """50 points on [0, 1] and 200 on [1, 50], in units of 1/nu."""
    t = np.concatenate([np.linspace(0.0, 1.0, 50, endpoint=False), np.linspace(1.0, 50.0, 200)])
    return t / nu


def norm_curve(sys: OdeSystem, times=None) -> PropagatorCurve:
    times = default_times(sys.nu) if times is None else np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0):
        raise RejectedInput("time grid must be strictly ascending")
    if not (sys.positive_stable and sys.no_invariant_kerD_subspace):
        raise DomainError("drift hypotheses fail; norm curve is not a decay curve")
    norms = np.array([mk.op_norm2(mk.mat_exp(-sys.C, t)) for t in times])
    rep = classify(sys.M_inv, sys.nu)
    # oscillation frequencies of the blocks that set the slowest decay
    mu = min(b[0].real for b in rep.betas)
    omegas = sorted({round(abs(b[0].imag), 12) for b in rep.betas
                     if abs(b[0].real - mu) <= DEFECT_TOL and b[0].imag != 0})
    return PropagatorCurve(times, norms, rep.classification, extra={"omegas": omegas})


def fit_rate(curve: PropagatorCurve, window: tuple[float, float],
             harmonics: int = 3, min_periods: float = 4.0) -> tuple[float, int]:
    """Least squares of log norm on {1, t, log(1+t)} inside the window.

    For complex drift eigenvalues the norm is exp(-mu t) times a bounded
    factor of period pi/omega. When at least `min_periods` periods fit in the
    window, cos/sin terms of 2k omega (k <= harmonics) join the regression so
    the oscillation does not leak into the slope. Frequencies come from
    curve.extra["omegas"], filled by norm_curve.
    """
    lo, hi = window
    if not (hi > lo >= 1):
        raise RejectedInput("window must satisfy t_hi > t_lo >= 1")
    m = (curve.times >= lo) & (curve.times <= hi)
    if m.sum() < 4:
        raise RejectedInput("too few samples inside the fitting window")
    t, y = curve.times[m], np.log(curve.norms[m])
    cols = [np.ones_like(t), t, np.log1p(t)]
    for w in curve.extra.get("omegas", []):
        if w > 0 and math.pi / w <= (hi - lo) / min_periods:
            for k in range(1, harmonics + 1):
                cols += [np.cos(2 * k * w * t), np.sin(2 * k * w * t)]
    if len(cols) > m.sum():
        cols = cols[:3]
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rate, deg = -float(coef[1]), int(coef[2] > 0.5)
    curve.fitted_rate, curve.fitted_poly_degree = rate, deg
    return rate, deg


def envelopes(times, nu: float, alpha0: float) -> tuple[np.ndarray, np.ndarray]:
    """Reference envelopes exp(-mu t) and (1+t) exp(-mu t), mu the spectral abscissa."""
    mu = (nu - math.sqrt(max(nu * nu - 4 * alpha0, 0.0))) / 2
    e = np.exp(-mu * np.asarray(times))
    return e, (1 + np.asarray(times)) * e


CSV_COLUMNS = ["t", "norm", "envelope_exp", "envelope_poly"]


def curve_rows(curve: PropagatorCurve, nu: float, alpha0: float) -> list[dict]:
    e, ep = envelopes(curve.times, nu, alpha0)
    return [{"t": t, "norm": v, "envelope_exp": a, "envelope_poly": b}
            for t, v, a, b in zip(curve.times, curve.norms, e, ep)]
