"""Independent reference computations used by the tests.

None of these call into the package under test.
"""

import numpy as np
from scipy import integrate


def ball_potential_quadrature(x, center, a):
    """``int_{|y-c|<a} dy / |x - y|`` by adaptive quadrature in (rho, theta) about the ball center.

    The azimuthal integral is exact (2 pi) by symmetry about the axis through
    ``x``; the radial range is split at ``rho = |x - c|`` where the integrand
    has its (integrable) singularity.
    """
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(center, float)))

    def inner(rho):
        f = lambda t: np.sin(t) / np.sqrt(max(r * r + rho * rho - 2 * r * rho * np.cos(t), 1e-300))  # noqa: E731
        val, _ = integrate.quad(f, 0.0, np.pi, epsabs=0, epsrel=1e-12, limit=200)
        return 2 * np.pi * rho * rho * val

    breaks = [0.0] + ([r] if 0 < r < a else []) + [a]
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        v, _ = integrate.quad(inner, lo, hi, epsabs=0, epsrel=1e-11, limit=200)
        total += v
    return total


def gauss_eliminate(A, b):
    """Gaussian elimination with partial pivoting, written out row by row."""
    A = np.array(A, dtype=complex)
    b = np.array(b, dtype=complex)
    n = len(b)
    for c in range(n):
        p = c + int(np.argmax(np.abs(A[c:, c])))
        if p != c:
            A[[c, p]] = A[[p, c]]
            b[[c, p]] = b[[p, c]]
        for r in range(c + 1, n):
            f = A[r, c] / A[c, c]
            A[r, c:] -= f * A[c, c:]
            b[r] -= f * b[c]
    x = np.zeros(n, dtype=complex)
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - A[r, r + 1:] @ x[r + 1:]) / A[r, r]
    return x


def helmholtz_green(k, x, y):
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float))
    return np.exp(1j * k * r) / (4 * np.pi * r)


def fd_plane_wave_error(k, alpha, h):
    """|sum_d (2 cos(k alpha_d h_d) - 2) / h_d^2 + k^2| for a unit plane wave."""
    kd = k * np.asarray(alpha, float) / np.linalg.norm(alpha)
    h = np.broadcast_to(np.asarray(h, float), (3,))
    return abs(np.sum((2 * np.cos(kd * h) - 2) / h**2) + k * k)
