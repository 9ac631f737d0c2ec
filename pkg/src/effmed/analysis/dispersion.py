"""Negative refraction from a dispersion law ``n(omega)``.

With ``omega n(omega) = c |k|`` the group velocity is
``v_g = c k_hat / (n + omega dn/domega)``, so it points against the phase
velocity exactly where ``d(omega) = n + omega dn/domega < 0``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import GridTooSmall, SingularDispersion, ValidationError

# d must be below -ZERO_TOL * max|omega n| to count as negative, so round-off
# in a d == 0 family does not create spurious bands
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class DispersionSamples:
    omega: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float).reshape(-1)
        n = np.asarray(self.n, dtype=float).reshape(-1)
        if len(w) < 3:
            raise GridTooSmall(f"need at least 3 frequency samples, got {len(w)}")
        if len(n) != len(w):
            raise ValidationError("omega and n must have equal length")
        if np.any(w <= 0):
            raise ValidationError("frequencies must be positive")
        if np.any(np.diff(w) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_function(cls, n, omega):
        omega = np.asarray(omega, dtype=float)
        return cls(omega, np.asarray(n(omega), dtype=float))


def dispersion_factor(samples):
    """``d = n + omega dn/domega = d(omega n)/domega`` by second-order differences.

    Central differences inside, one-sided second-order formulas at the ends.
    Differencing the product ``omega n`` makes ``d`` exact whenever
    ``omega n`` is quadratic in ``omega``.
    """
    return np.gradient(samples.omega * samples.n, samples.omega, edge_order=2)


def negative_refraction_bands(samples):
    """Maximal frequency intervals where ``d(omega) < 0``.

    Interior endpoints are the zeros of the piecewise-linear interpolant of
    ``d``; a band touching the grid edge ends at that grid point.
    """
    w = samples.omega
    d = dispersion_factor(samples)
    tol = ZERO_TOL * max(float(np.max(np.abs(w * samples.n))), 1e-300)
    neg = d < -tol
    bands = []
    i = 0
    n = len(w)
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        lo = w[i] if i == 0 else _crossing(w[i - 1], w[i], d[i - 1], d[i])
        hi = w[j] if j == n - 1 else _crossing(w[j], w[j + 1], d[j], d[j + 1])
        bands.append((float(lo), float(hi)))
        i = j + 1
    return bands


def _crossing(w0, w1, d0, d1):
    if d1 == d0:
        return 0.5 * (w0 + w1)
    return w0 + (w1 - w0) * d0 / (d0 - d1)


def group_velocity(n, dn_domega, omega, k_hat, c=1.0):
    """``v_g = c k_hat / (n + omega dn/domega)``.

    Raises :class:`SingularDispersion` when ``|n + omega dn/domega| < 1e-12 |n|``.
    """
    den = float(n) + float(omega) * float(dn_domega)
    if abs(den) < 1e-12 * abs(float(n)) or den == 0.0:
        raise SingularDispersion(f"n + omega dn/domega = {den:.3e} vanishes")
    k_hat = np.asarray(k_hat, dtype=float)
    norm = np.linalg.norm(k_hat)
    if k_hat.shape != (3,) or norm == 0:
        raise ValidationError("k_hat must be a non-zero 3-vector")
    return float(c) * (k_hat / norm) / den


def save_bands(bands, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_lo", "omega_hi"])
        for lo, hi in bands:
            w.writerow([f"{lo:.12e}", f"{hi:.12e}"])
