"""Particle counts for potential inhomogeneities versus impedance particles.

Balls of volume ``V(a)`` need ``N |D| / V(a)`` particles; impedance particles
with boundary impedance ``h / a**kappa`` need ``N |D| / a**(2 - kappa)``.
"""

import numpy as np

from ..errors import InvalidKappa, InvalidRadius, ValidationError
from ..kernels import ball_volume


def recipe_count_compare(a, kappa, N_level, domain):
    """``(M1, M2, M1 / M2)`` for radius ``a``; ``domain`` is a Domain or a volume."""
    if not a > 0:
        raise InvalidRadius(f"radius must be positive, got {a}")
    if not 0 < kappa <= 1:
        raise InvalidKappa(f"kappa must lie in (0, 1], got {kappa}")
    volume = float(domain.volume) if hasattr(domain, "volume") else float(domain)
    if not volume > 0 or N_level < 0:
        raise ValidationError("volume must be positive and N_level non-negative")
    M1 = N_level * volume / float(ball_volume(a))
    M2 = N_level * volume / float(a) ** (2.0 - kappa)
    ratio = float(a) ** (2.0 - kappa) / float(ball_volume(a))
    return float(M1), float(M2), float(ratio)


def ratio_growth_per_halving(kappa):
    """Exact factor ``2**(1 + kappa)`` by which ``M1 / M2`` grows when ``a`` halves."""
    return float(np.exp2(1.0 + kappa))
