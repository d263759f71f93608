"""Finite-volume solver for the kinetic Fokker-Planck equation in one space dimension.

The unknown is h = f / f_inf on a cell-centred grid over [-Lx, Lx] x [-Lv, Lv]:

    dh/dt + v dh/dx - V'(x) dh/dv = sigma d2h/dv2 - nu v dh/dv.

Transport is written in conservative form for f = h f_inf. The advecting
field (v f_inf, -V' f_inf) is divergence free; its face fluxes are taken as
differences of a stream function stored on cell corners, so the discrete
divergence vanishes identically, constants stay fixed and the weighted mass
sum(m h) changes only by rounding. The stream function is zeroed on the
outer ring of corners, which closes the box to flux.

The velocity part is (1/w) d/dv (sigma w dh/dv) with w = exp(-nu v^2/(2 sigma)),
discretised symmetrically in the w-weighted inner product and advanced by
Crank-Nicolson, one tridiagonal system shared by all x columns.

Steps are Strang split: transport dt/2, velocity dt, transport dt/2.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericFailure, RejectedInput
from .potential import Potential

CFL_LIMIT = 0.9
SNAPSHOT_MAGIC = b"HKFP"
SNAPSHOT_VERSION = 1
SERIES_COLUMNS = ["t", "mass", "l2sq", "gradx_sq", "gradv_weighted", "S", "Phi"]


@dataclass
class PhaseGrid:
    Lx: float
    Lv: float
    nx: int
    nv: int

    def __post_init__(self):
        if self.nx < 64 or self.nv < 64:
            raise RejectedInput("grids need at least 64 cells per direction")

    @property
    def dx(self) -> float:
        return 2 * self.Lx / self.nx

    @property
    def dv(self) -> float:
        return 2 * self.Lv / self.nv

    @property
    def x(self) -> np.ndarray:
        return -self.Lx + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def v(self) -> np.ndarray:
        return -self.Lv + (np.arange(self.nv) + 0.5) * self.dv


def default_grid(V: Potential, nu: float, sigma: float, nx: int = 256, nv: int = 256,
                 tail: float = 1e-14) -> PhaseGrid:
    """Lv = 1 + 6 sqrt(sigma/nu); Lx where exp(-(nu/sigma)(V - min V)) drops below tail."""
    if V.n != 1:
        raise RejectedInput("the phase-space solver handles n = 1 only")
    beta = nu / sigma
    xs = np.linspace(-50, 50, 20001)
    vals = np.array([V.value(x) for x in xs])
    vmin = vals.min()
    cut = -math.log(tail) / beta
    inside = np.nonzero(vals - vmin <= cut)[0]
    L = max(abs(xs[inside[0]]), abs(xs[inside[-1]])) + 2 * (xs[1] - xs[0])
    return PhaseGrid(float(L), 1 + 6 * math.sqrt(sigma / nu), nx, nv)


class KFPSolver:
    """Holds the grid, the equilibrium weights and the split operators."""

    def __init__(self, V: Potential, nu: float, sigma: float, grid: PhaseGrid,
                 alpha0: float | None = None):
        if V.n != 1:
            raise RejectedInput("the phase-space solver handles n = 1 only")
        self.V, self.nu, self.sigma, self.grid = V, float(nu), float(sigma), grid
        self.beta = self.nu / self.sigma
        g = grid
        x, v = g.x, g.v
        jets = [V.jet(xi) for xi in x]
        self.Vx = np.array([j.value for j in jets])
        self.dV = np.array([j.gradient[0] for j in jets])
        self.d2V = np.array([j.hessian[0, 0] for j in jets])
        self.d3V = np.array([j.third[0, 0, 0] for j in jets])
        a0 = V.exact_alpha0() if alpha0 is None else alpha0
        self.alpha0 = float(self.d2V.min()) if a0 is None else float(a0)

        vmin = self.Vx.min()
        gx = np.exp(-self.beta * (self.Vx - vmin))
        wv = np.exp(-self.beta * v ** 2 / 2)
        self.Z = gx.sum() * wv.sum() * g.dx * g.dv
        self.m = np.outer(gx, wv) / self.Z  # cell weights, sum(m) dx dv = 1
        self.cell = g.dx * g.dv

        # stream function on corners: psi = -(sigma/nu) f_inf
        xn = -g.Lx + np.arange(g.nx + 1) * g.dx
        vn = -g.Lv + np.arange(g.nv + 1) * g.dv
        Vn = np.array([V.value(xi) for xi in xn])
        psi = -(1 / self.beta) * np.outer(np.exp(-self.beta * (Vn - vmin)),
                                          np.exp(-self.beta * vn ** 2 / 2)) / self.Z
        psi[0, :] = psi[-1, :] = psi[:, 0] = psi[:, -1] = 0.0
        self.Ux = (psi[:, 1:] - psi[:, :-1]) / g.dv  # (nx+1, nv) through x faces
        self.Uv = -(psi[1:, :] - psi[:-1, :]) / g.dx  # (nx, nv+1) through v faces
        # fourth-difference dissipation weights, |U|/12 averaged onto interior cells
        ax, av = np.abs(self.Ux), np.abs(self.Uv)
        self._cx = ((ax[:-1] + ax[1:]) / 24)[1:-1]
        self._cv = ((av[:, :-1] + av[:, 1:]) / 24)[:, 1:-1]
        outflow = (np.maximum(self.Ux[1:], 0) - np.minimum(self.Ux[:-1], 0)) / g.dx \
            + (np.maximum(self.Uv[:, 1:], 0) - np.minimum(self.Uv[:, :-1], 0)) / g.dv
        self._rate = float(np.max(outflow / self.m))

        # velocity operator: (L h)_j = sigma/(w_j dv^2) [w+ (h_{j+1}-h_j) - w- (h_j-h_{j-1})]
        wf = np.exp(-self.beta * vn ** 2 / 2)
        wf[0] = wf[-1] = 0.0
        c = self.sigma / (wv * g.dv ** 2)
        self._lo = c * wf[:-1]
        self._hi = c * wf[1:]
        self._ou_dt = None

    # -- stability ---------------------------------------------------------
    def nominal_cfl(self, dt: float) -> float:
        g = self.grid
        return np.abs(g.v).max() * dt / g.dx + np.abs(self.dV).max() * dt / g.dv

    def discrete_cfl(self, dt: float) -> float:
        """max over cells of dt * outflow / mass, the positivity bound of the upwind scheme."""
        return dt * self._rate

    def stable_dt(self, safety: float = CFL_LIMIT) -> float:
        """Largest dt keeping both the nominal and the discrete CFL numbers below safety."""
        return safety / max(self.nominal_cfl(1.0), self._rate)

    # -- transport ---------------------------------------------------------
    @staticmethod
    def _face_flux(h: np.ndarray, U: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Interior face fluxes along axis 0.

        Central part U (h_i + h_{i+1}) / 2 plus q_{i+1} - q_i with
        q = c * (second difference of h), q = 0 in the end cells. With a
        divergence-free U the central part conserves sum(m h^2) and the q part
        removes sum(c (d2 h)^2), so the weighted L2 norm cannot grow.
        """
        q = np.zeros_like(h)
        q[1:-1] = c * (h[:-2] - 2 * h[1:-1] + h[2:])
        return U * 0.5 * (h[:-1] + h[1:]) + (q[1:] - q[:-1])

    def transport_rhs(self, h: np.ndarray) -> np.ndarray:
        g = self.grid
        Fx = np.zeros_like(self.Ux)
        Fx[1:-1] = self._face_flux(h, self.Ux[1:-1], self._cx)
        Fv = np.zeros_like(self.Uv)
        Fv[:, 1:-1] = self._face_flux(h.T, self.Uv[:, 1:-1].T, self._cv.T).T
        div = (Fx[1:] - Fx[:-1]) / g.dx + (Fv[:, 1:] - Fv[:, :-1]) / g.dv
        return -div / self.m

    def transport(self, h: np.ndarray, dt: float) -> np.ndarray:
        # SSP Runge-Kutta 3
        L = self.transport_rhs
        h1 = h + dt * L(h)
        h2 = 0.75 * h + 0.25 * (h1 + dt * L(h1))
        return h / 3 + 2 / 3 * (h2 + dt * L(h2))

    # -- velocity diffusion ------------------------------------------------
    def ou_apply(self, h: np.ndarray) -> np.ndarray:
        """(L h) along v for every x row."""
        out = np.zeros_like(h)
        d = h[:, 1:] - h[:, :-1]
        out[:, :-1] += self._hi[:-1] * d
        out[:, 1:] -= self._lo[1:] * d
        return out

    def _ou_system(self, dt: float):
        if self._ou_dt != dt:
            nv = self.grid.nv
            ab = np.zeros((3, nv))
            k = 0.5 * dt
            ab[0, 1:] = -k * self._hi[:-1]
            ab[1] = 1 + k * (self._lo + self._hi)
            ab[2, :-1] = -k * self._lo[1:]
            self._ab, self._ou_dt = ab, dt
        return self._ab

    def ou(self, h: np.ndarray, dt: float) -> np.ndarray:
        rhs = h + 0.5 * dt * self.ou_apply(h)
        return scipy.linalg.solve_banded((1, 1), self._ou_system(dt), rhs.T,
                                         check_finite=False).T

    # -- stepping ----------------------------------------------------------
    def check_dt(self, dt: float):
        if dt <= 0:
            raise RejectedInput("dt must be positive")
        if self.nominal_cfl(dt) > CFL_LIMIT:
            raise NumericFailure(f"CFL violation: nominal number {self.nominal_cfl(dt):.3f} > 0.9")
        if self.discrete_cfl(dt) > 1.5:
            raise NumericFailure(
                f"CFL violation: boundary cells see {self.discrete_cfl(dt):.3f}; use dt <= {self.stable_dt():.3e}")

    def step(self, h: np.ndarray, dt: float) -> np.ndarray:
        self.check_dt(dt)
        h = self.transport(h, 0.5 * dt)
        h = self.ou(h, dt)
        return self.transport(h, 0.5 * dt)

    def advance(self, h: np.ndarray, dt: float, nsteps: int) -> np.ndarray:
        """nsteps Strang steps with the adjacent transport half steps merged."""
        if nsteps <= 0:
            return h
        self.check_dt(dt)
        h = self.transport(h, 0.5 * dt)
        for k in range(nsteps):
            h = self.ou(h, dt)
            h = self.transport(h, dt if k < nsteps - 1 else 0.5 * dt)
        return h

    # -- initial data ------------------------------------------------------
    def normalize(self, h: np.ndarray) -> np.ndarray:
        mass = self.mass(h)
        if not np.isfinite(mass) or mass <= 0:
            raise RejectedInput("initial datum is not normalizable on the grid")
        return h / mass

    def init(self, spec: dict) -> np.ndarray:
        g = self.grid
        X, W = np.meshgrid(g.x, g.v, indexing="ij")
        kind = spec.get("kind")
        if kind == "steady":
            return np.ones((g.nx, g.nv))
        if kind == "gaussian_shifted":
            mean = np.asarray(spec.get("mean", [1.0, 0.0]), dtype=float)
            cov = spec.get("cov")
            if cov is None:
                # equilibrium covariance of a quadratic well around its minimum
                cov = np.diag([1 / (self.beta * self.d2V.max()), 1 / self.beta])
            cov = np.asarray(cov, dtype=float)
            P = np.linalg.inv(cov)
            dX, dW = X - mean[0], W - mean[1]
            logf0 = -0.5 * (P[0, 0] * dX ** 2 + 2 * P[0, 1] * dX * dW + P[1, 1] * dW ** 2)
            logfinf = -self.beta * (self.Vx[:, None] - self.Vx.min() + W ** 2 / 2)
            return self.normalize(np.exp(logf0 - logfinf))
        if kind == "h_perturbation":
            amp = float(spec.get("amplitude", 0.5))
            cx, cv = spec.get("center", [0.0, 0.0])
            wdt = float(spec.get("width", 1.0))
            h = 1 + amp * np.exp(-((X - cx) ** 2 + (W - cv) ** 2) / (2 * wdt ** 2))
            return self.normalize(h)
        if kind == "rough_indicator":
            a, b = spec.get("interval", [-1.0, 1.0])
            s = float(spec.get("smoothing", 0.0))
            if s > 0:
                h = 0.5 * (np.tanh((X - a) / s) - np.tanh((X - b) / s))
            else:
                h = ((X >= a) & (X <= b)).astype(float)
            return self.normalize(h)
        raise RejectedInput(f"unknown initial datum {kind!r}")

    # -- functionals -------------------------------------------------------
    def mass(self, h: np.ndarray) -> float:
        return float(np.sum(self.m * h) * self.cell)

    def _integral(self, q: np.ndarray) -> float:
        return float(np.sum(self.m * q) * self.cell)

    def gradients(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        return (np.gradient(h, g.dx, axis=0, edge_order=2),
                np.gradient(h, g.dv, axis=1, edge_order=2))

    def weight_P(self, a: float | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Entries (P11, P12, P22) on the x grid; a=None selects the identity."""
        if a is None:
            one = np.ones(self.grid.nx)
            return one, 0 * one, one
        return (2 * np.ones(self.grid.nx), self.nu * np.ones(self.grid.nx),
                2 * self.d2V + 2 * a)

    def functionals(self, h: np.ndarray, a: float | None = 0.0, gamma: float = 0.0) -> dict:
        u1, u2 = self.gradients(h)
        P11, P12, P22 = (p[:, None] for p in self.weight_P(a))
        S = 2 * self._integral(P11 * u1 ** 2 + 2 * P12 * u1 * u2 + P22 * u2 ** 2)
        l2 = self._integral((h - 1) ** 2)
        return {
            "mass": self.mass(h),
            "l2sq": l2,
            "gradx_sq": self._integral(u1 ** 2),
            "gradv_weighted": self._integral((self.d2V[:, None] + 1 - self.alpha0) * u2 ** 2),
            "S": S,
            "Phi": gamma * l2 + S,
        }

    def ds_dt_rhs(self, h: np.ndarray, a: float | None) -> dict:
        """The three integrals whose sum is dS/dt for the weight P(x); a=None is the identity."""
        g = self.grid
        u1, u2 = self.gradients(h)
        u1v = np.gradient(u1, g.dv, axis=1, edge_order=2)
        u2v = np.gradient(u2, g.dv, axis=1, edge_order=2)
        P11, P12, P22 = (p[:, None] for p in self.weight_P(a))
        second = -4 * self.sigma * self._integral(
            P11 * u1v ** 2 + 2 * P12 * u1v * u2v + P22 * u2v ** 2)
        # QP + PQ^T for n = 1, Q = [[0, 1], [-V'', nu]]
        Vpp = self.d2V[:, None]
        M11 = 2 * P12
        M12 = P22 - Vpp * P11 + self.nu * P12
        M22 = 2 * (-Vpp * P12 + self.nu * P22)
        drift = -2 * self._integral(M11 * u1 ** 2 + 2 * M12 * u1 * u2 + M22 * u2 ** 2)
        # [V' d_v - v d_x + nu v d_v - sigma d_vv - d_t] P(x) = -v dP/dx
        if a is None:
            moving = 0.0
        else:
            # only P22 = 2V'' + 2a depends on x
            moving = 2 * self._integral(g.v[None, :] * 2 * self.d3V[:, None] * u2 ** 2)
        return {"second": second, "drift": drift, "moving": moving,
                "total": second + drift + moving}


@dataclass
class FunctionalSeries:
    times: np.ndarray
    values: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.values[name])

    def rows(self) -> list[dict]:
        return [{"t": t, **{k: self.values[k][i] for k in SERIES_COLUMNS[1:]}}
                for i, t in enumerate(self.times)]


def evolve(solver: KFPSolver, h: np.ndarray, T: float, dt: float, sample_every: int = 10,
           a: float | None = 0.0, gamma: float = 0.0) -> tuple[np.ndarray, FunctionalSeries]:
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise RejectedInput("T must be a positive multiple of dt")
    times = [0.0]
    vals = {k: [v] for k, v in solver.functionals(h, a, gamma).items()}
    done = 0
    while done < nsteps:
        k = min(sample_every, nsteps - done)
        h = solver.advance(h, dt, k)
        done += k
        times.append(done * dt)
        for key, val in solver.functionals(h, a, gamma).items():
            vals[key].append(val)
        if not np.isfinite(vals["l2sq"][-1]):
            raise NumericFailure(f"solution blew up at t={done * dt:.4g}")
    return h, FunctionalSeries(np.array(times), {k: np.array(v) for k, v in vals.items()})


def fit_decay(series: FunctionalSeries, name: str = "l2sq", frac: float = 0.5) -> float:
    """Exponential rate of a functional from a line fit to its log over the last frac of samples."""
    t, y = series.times, series.column(name)
    k = int(len(t) * (1 - frac))
    coef = np.polyfit(t[k:], np.log(y[k:]), 1)
    return -float(coef[0])


def ds_dt_residual(solver: KFPSolver, h: np.ndarray, dt: float, a: float | None = 0.0) -> dict:
    """Centred difference of S along the scheme against the dS/dt integrals at the midpoint."""
    h1 = solver.step(h, dt)
    h2 = solver.step(h1, dt)
    S0 = solver.functionals(h, a)["S"]
    S2 = solver.functionals(h2, a)["S"]
    fd = (S2 - S0) / (2 * dt)
    rhs = solver.ds_dt_rhs(h1, a)
    res = abs(fd - rhs["total"]) / max(abs(fd), np.finfo(float).eps)
    return {"fd": fd, "rhs": rhs["total"], "residual": res, **{k: rhs[k] for k in ("second", "drift", "moving")}}


def hypoelliptic_experiment(solver: KFPSolver, h0: np.ndarray, window=(2e-3, 2e-2),
                            dt: float = 1e-4) -> dict:
    """Log-log slopes of the x- and v-gradient functionals inside the window."""
    t_lo, t_hi = window
    if not 0 < t_lo < t_hi:
        raise RejectedInput("bad time window")
    if t_lo < 10 * dt:
        raise NumericFailure("window starts below ten time steps; refine dt")
    nsteps = int(round(t_hi / dt))
    h = h0
    ts, gx, gv = [], [], []
    for k in range(1, nsteps + 1):
        h = solver.step(h, dt)
        t = k * dt
        if t >= t_lo - 1e-12:
            f = solver.functionals(h)
            ts.append(t)
            gx.append(f["gradx_sq"])
            gv.append(f["gradv_weighted"])
    lt = np.log(ts)
    sx = float(np.polyfit(lt, np.log(gx), 1)[0])
    sv = float(np.polyfit(lt, np.log(gv), 1)[0])
    return {"slope_x": sx, "slope_v": sv, "times": np.array(ts),
            "gradx_sq": np.array(gx), "gradv_weighted": np.array(gv)}


def save_snapshot(path, solver: KFPSolver, h: np.ndarray):
    g = solver.grid
    head = SNAPSHOT_MAGIC + struct.pack("<III4d", SNAPSHOT_VERSION, g.nx, g.nv,
                                        -g.Lx, g.Lx, -g.Lv, g.Lv)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(h, dtype="<f8").tobytes())


def load_snapshot(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SNAPSHOT_MAGIC:
        raise RejectedInput(f"{path}: not a snapshot file")
    version, nx, nv, x0, x1, v0, v1 = struct.unpack_from("<III4d", data, 4)
    if version != SNAPSHOT_VERSION:
        raise RejectedInput(f"{path}: unsupported snapshot version {version}")
    off = 4 + struct.calcsize("<III4d")
    h = np.frombuffer(data, dtype="<f8", offset=off).reshape(nx, nv).copy()
    return {"nx": nx, "nv": nv, "x_extent": (x0, x1), "v_extent": (v0, v1)}, h
