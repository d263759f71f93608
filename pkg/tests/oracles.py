"""Independent reference computations used only by the tests."""
import math

import numpy as np


def golden_max(f, lo, hi, tol=1e-13, iters=400):
    """Maximize a unimodal f on [lo, hi] by golden-section search."""
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def jacobi_eigvals(A, sweeps=60):
    """Cyclic Jacobi eigenvalues of a small symmetric matrix."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(max(np.sum(A ** 2) - np.sum(np.diag(A) ** 2), 0.0))
        if off < 1e-15 * max(1.0, np.linalg.norm(A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0:
                    continue
                th = 0.5 * math.atan2(2 * A[p, q], A[q, q] - A[p, p])
                c, s = math.cos(th), math.sin(th)
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))


def expm_taylor(A, t=1.0):
    """Scaling and squaring with a long Taylor series."""
    B = np.asarray(A, dtype=float) * t
    s = max(0, int(math.ceil(math.log2(max(np.linalg.norm(B, 1), 1e-300)))) + 1)
    B = B / 2 ** s
    E = np.eye(B.shape[0])
    term = np.eye(B.shape[0])
    for k in range(1, 30):
        term = term @ B / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def sharp_two_lambda(nu, alpha0):
    """Spectral gap of the quadratic drift: 2 lam = nu - Re sqrt(nu^2 - 4 alpha0)."""
    d = nu * nu - 4 * alpha0
    return nu - math.sqrt(d) if d > 0 else nu


def random_spd(rng, n, lo=0.05, hi=5.0):
    Qm, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (Qm * rng.uniform(lo, hi, n)) @ Qm.T
