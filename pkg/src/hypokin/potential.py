"""Confining potentials V(x) and their derivative jets.

Every downstream formula needs the same four objects at a point x:
V, grad V, the Hessian V'' and the third-derivative slices
T[k] = d^2(d_k V)/dx^2. `jet` returns all of them at once. Built-in kinds
differentiate analytically; the callback kind falls back to central
differences.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.optimize

from . import matrixkit as mk
from .errors import DomainError, RejectedInput


@dataclass(frozen=True)
class Jet:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    third: np.ndarray  # shape (n, n, n); third[k] is the k-th slice


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def of(cls, lo, hi, n: int | None = None) -> "Box":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if n is not None:
            lo = np.broadcast_to(lo, (n,)).copy()
            hi = np.broadcast_to(hi, (n,)).copy()
        if lo.shape != hi.shape or np.any(hi < lo) or lo.size == 0:
            raise RejectedInput(f"empty or malformed box [{lo}, {hi}]")
        return cls(lo, hi)

    @property
    def n(self) -> int:
        return self.lo.size

    def grid(self, resolution) -> np.ndarray:
        """Tensor grid of sample points, shape (N, n)."""
        res = np.broadcast_to(np.atleast_1d(resolution), (self.n,))
        if np.any(res < 1):
            raise RejectedInput("resolution must be positive")
        axes = [np.linspace(a, b, int(m)) if m > 1 else np.array([0.5 * (a + b)])
                for a, b, m in zip(self.lo, self.hi, res)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


class Polynomial:
    """Sparse multivariate polynomial sum_m c_m x^{p_m}."""

    def __init__(self, coefs, powers):
        self.coefs = np.asarray(coefs, dtype=float).ravel()
        powers = np.asarray(powers, dtype=int)
        self.powers = powers.reshape(self.coefs.size, powers.shape[-1])
        if np.any(self.powers < 0):
            raise RejectedInput("negative exponent in polynomial")

    @classmethod
    def univariate(cls, coefs) -> "Polynomial":
        coefs = np.asarray(coefs, dtype=float).ravel()
        return cls(coefs, np.arange(coefs.size)[:, None])

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(np.zeros(0), np.zeros((0, n), dtype=int))

    @property
    def n(self) -> int:
        return self.powers.shape[1]

    @property
    def degree(self) -> int:
        live = self.coefs != 0
        return int(self.powers[live].sum(axis=1).max()) if live.any() else -1

    def diff(self, i: int) -> "Polynomial":
        p = self.powers[:, i]
        keep = p > 0
        powers = self.powers[keep].copy()
        powers[:, i] -= 1
        return Polynomial(self.coefs[keep] * p[keep], powers.reshape(-1, self.n))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.coefs.size == 0:
            return 0.0
        return float(np.sum(self.coefs * np.prod(x ** self.powers, axis=1)))

    def hessian_bound(self) -> float:
        """A with ||D^2 p(x)||_2 <= A (1 + |x|^(deg-2)) for all x."""
        total = 0.0
        for c, p in zip(self.coefs, self.powers):
            H = np.outer(p, p) - np.diag(p)
            total += abs(c) * np.linalg.norm(H)
        return float(total)


class Potential:
    n: int
    kind: str

    def value(self, x) -> float:
        raise NotImplementedError

    def jet(self, x) -> Jet:
        raise NotImplementedError

    def exact_alpha0(self) -> float | None:
        return None

    def _point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,) or not np.all(np.isfinite(x)):
            raise RejectedInput(f"bad point {x!r} for n={self.n}")
        return x

    @staticmethod
    def _finish(x, v, g, H, T) -> Jet:
        if not (np.isfinite(v) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))
                and np.all(np.isfinite(T))):
            raise DomainError(f"non-finite potential data at x={x}")
        return Jet(x, float(v), g, 0.5 * (H + H.T), _sym3(T))


def _sym3(T: np.ndarray) -> np.ndarray:
    return sum(np.transpose(T, perm) for perm in itertools.permutations(range(3))) / 6.0


class Quadratic(Potential):
    """V(x) = x^T M_inv x / 2 + p.x + q."""

    kind = "quadratic"

    def __init__(self, M_inv, p=None, q: float = 0.0):
        M_inv = np.atleast_2d(np.asarray(M_inv, dtype=float))
        M_inv = mk.symmetrize(M_inv)
        ok, lo = mk.is_psd(M_inv, 0.0)
        if not ok or lo <= 0:
            raise DomainError("quadratic potential needs an SPD M_inv")
        self.M_inv = M_inv
        self.n = M_inv.shape[0]
        self.p = np.zeros(self.n) if p is None else np.asarray(p, dtype=float).reshape(self.n)
        self.q = float(q)

    def value(self, x) -> float:
        x = self._point(x)
        return float(0.5 * x @ self.M_inv @ x + self.p @ x + self.q)

    def jet(self, x) -> Jet:
        x = self._point(x)
        g = self.M_inv @ x + self.p
        return self._finish(x, self.value(x), g, self.M_inv.copy(),
                            np.zeros((self.n,) * 3))

    def exact_alpha0(self) -> float:
        return float(np.linalg.eigvalsh(self.M_inv)[0])


class RadialPoly(Potential):
    """V(x) = r |x|^{2k} + V0(x) with deg V0 < 2k."""

    kind = "radial_poly"

    def __init__(self, r: float, k: int, V0: Polynomial | None = None, n: int = 1):
        if r <= 0 or int(k) != k or k < 2:
            raise RejectedInput("radial_poly needs r > 0 and integer k >= 2")
        self.r, self.k = float(r), int(k)
        self.V0 = V0 if V0 is not None else Polynomial.zero(n)
        self.n = self.V0.n if self.V0.coefs.size else n
        if self.V0.coefs.size and self.V0.n != self.n:
            raise RejectedInput("V0 dimension mismatch")
        if self.V0.degree >= 2 * self.k:
            raise RejectedInput("deg V0 must be below 2k")
        d1 = [self.V0.diff(i) for i in range(self.n)]
        d2 = [[d.diff(j) for j in range(self.n)] for d in d1]
        d3 = [[[d.diff(l) for l in range(self.n)] for d in row] for row in d2]
        self._d1, self._d2, self._d3 = d1, d2, d3

    def value(self, x) -> float:
        x = self._point(x)
        return self.r * float(x @ x) ** self.k + self.V0(x)

    def jet(self, x) -> Jet:
        x = self._point(x)
        n, k, r = self.n, self.k, self.r
        s = float(x @ x)
        I = np.eye(n)
        g = r * k * s ** (k - 1) * 2 * x
        H = r * (4 * k * (k - 1) * s ** (k - 2) * np.outer(x, x) + 2 * k * s ** (k - 1) * I)
        # d_l H_ij = 4k(k-1) s^(k-2) (d_il x_j + d_jl x_i + d_ij x_l)
        #            + 8k(k-1)(k-2) s^(k-3) x_i x_j x_l
        T = 4 * k * (k - 1) * s ** (k - 2) * (
            np.einsum("il,j->lij", I, x) + np.einsum("jl,i->lij", I, x)
            + np.einsum("ij,l->lij", I, x))
        if k >= 3:
            T = T + 8 * k * (k - 1) * (k - 2) * s ** (k - 3) * np.einsum("i,j,l->lij", x, x, x)
        T = r * T
        g = g + np.array([d(x) for d in self._d1])
        H = H + np.array([[d(x) for d in row] for row in self._d2])
        T = T + np.array([[[self._d3[i][j][l](x) for j in range(n)] for i in range(n)]
                          for l in range(n)])
        return self._finish(x, self.value(x), g, H, T)

    def growth_constant(self) -> float:
        """A in  V'' >= (2kr|x|^{2k-2} - A|x|^{2k-3} - A) I."""
        return self.V0.hessian_bound()


class DoubleWell(RadialPoly):
    """V(x) = r1 |x|^4 - r2 |x|^2."""

    kind = "double_well"

    def __init__(self, r1: float, r2: float, n: int = 1):
        if r1 <= 0 or r2 <= 0:
            raise RejectedInput("double_well needs r1, r2 > 0")
        powers = np.eye(n, dtype=int) * 2
        super().__init__(r1, 2, Polynomial(-r2 * np.ones(n), powers), n=n)
        self.r1, self.r2 = float(r1), float(r2)

    def exact_alpha0(self) -> float:
        # V'' = 4 r1 (|x|^2 I + 2 x x^T) - 2 r2 I, smallest at the origin
        return -2.0 * self.r2


class Tabulated(Potential):
    """User callback V(x); derivatives by central differences."""

    kind = "tabulated"

    def __init__(self, func: Callable[[np.ndarray], float], n: int = 1,
                 rel_step: float = 1e-4, rel_step3: float = 1e-3):
        self.func, self.n = func, int(n)
        self.rel_step, self.rel_step3 = rel_step, rel_step3

    def value(self, x) -> float:
        return float(self.func(self._point(x)))

    def _hess(self, x, h) -> np.ndarray:
        n = self.n
        E = np.eye(n) * h
        f = self.func
        H = np.empty((n, n))
        f0 = f(x)
        for i in range(n):
            H[i, i] = (f(x + E[i]) - 2 * f0 + f(x - E[i])) / h ** 2
            for j in range(i + 1, n):
                H[i, j] = H[j, i] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j])
                                     - f(x - E[i] + E[j]) + f(x - E[i] - E[j])) / (4 * h ** 2)
        return H

    def jet(self, x) -> Jet:
        x = self._point(x)
        n = self.n
        h = self.rel_step * (1 + np.linalg.norm(x))
        E = np.eye(n) * h
        g = np.array([(self.func(x + E[i]) - self.func(x - E[i])) / (2 * h) for i in range(n)])
        H = self._hess(x, h)
        # a third derivative from values needs a wider stencil to beat rounding
        h3 = self.rel_step3 * (1 + np.linalg.norm(x))
        E3 = np.eye(n) * h3
        T = np.array([(self._hess(x + E3[l], h3) - self._hess(x - E3[l], h3)) / (2 * h3)
                      for l in range(n)])
        return self._finish(x, self.value(x), g, H, T)


def alpha(V: Potential, x) -> float:
    """Smallest Hessian eigenvalue at x."""
    return float(np.linalg.eigvalsh(V.jet(x).hessian)[0])


def estimate_alpha0(V: Potential, box: Box, resolution) -> tuple[float, np.ndarray]:
    """Grid minimum of alpha over the box, polished by a bounded local search."""
    pts = box.grid(resolution)
    vals = np.array([alpha(V, x) for x in pts])
    i = int(np.argmin(vals))
    best, xbest = float(vals[i]), pts[i]
    res = scipy.optimize.minimize(lambda y: alpha(V, y), xbest, method="L-BFGS-B",
                                  bounds=list(zip(box.lo, box.hi)))
    if res.fun < best:
        best, xbest = float(res.fun), np.asarray(res.x, dtype=float)
    return best, xbest


def from_spec(spec: dict) -> Potential:
    """Build a potential from a plain mapping (the config-file block)."""
    kind = spec["kind"]
    n = int(spec.get("n", 1))
    if kind == "quadratic":
        M = np.atleast_2d(np.asarray(spec["M_inv"], dtype=float))
        return Quadratic(M, spec.get("p"), spec.get("q", 0.0))
    if kind == "radial_poly":
        V0 = spec.get("V0")
        if V0 is None:
            poly = None
        elif isinstance(V0, dict):
            poly = Polynomial(V0["coefs"], V0["powers"])
        else:
            poly = Polynomial.univariate(V0)
        return RadialPoly(spec["r"], spec["k"], poly, n=n)
    if kind == "double_well":
        return DoubleWell(spec["r1"], spec["r2"], n=n)
    raise RejectedInput(f"unknown potential kind {kind!r}")
