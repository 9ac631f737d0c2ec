from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class WaveContext:
    """Wavenumber ``k`` and incident plane wave ``amplitude * exp(i k alpha . x)``."""

    k: float
    alpha: tuple = (0.0, 0.0, 1.0)
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValidationError(f"wavenumber must be positive, got {self.k}")
        a = np.asarray(self.alpha, dtype=float)
        n = np.linalg.norm(a)
        if a.shape != (3,) or n == 0:
            raise ValidationError(f"incident direction must be a non-zero 3-vector, got {self.alpha}")
        object.__setattr__(self, "alpha", tuple(a / n))
        object.__setattr__(self, "k", float(self.k))

    def u0(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(1j * self.k * (x @ np.asarray(self.alpha)))

    def with_alpha(self, alpha):
        return WaveContext(self.k, tuple(alpha), self.amplitude)
