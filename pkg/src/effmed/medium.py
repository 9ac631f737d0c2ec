"""Potentials, refraction coefficients and the design map ``q = A N``.

Conventions: ``q = k**2 - k**2 * n2``; a passive medium has ``Im n2 >= 0``,
i.e. ``Im q <= 0``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DivisionByZeroSupport, InputError, PackingViolation, ValidationError
from .samplers import Constant, sampler_from_json, sampler_to_json

DEFAULT_P_MAX = 0.74


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lo, hi]`` with a regular voxel grid."""

    lo: tuple
    hi: tuple
    nvox: tuple = (1, 1, 1)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        nvox = tuple(int(v) for v in self.nvox)
        if len(lo) != 3 or len(hi) != 3 or len(nvox) != 3:
            raise ValidationError("domain corners and voxel counts must have 3 components")
        if not all(h > l for l, h in zip(lo, hi)):
            raise ValidationError(f"domain upper corner {hi} must exceed lower corner {lo}")
        if not all(n >= 1 for n in nvox):
            raise ValidationError(f"voxel counts must be >= 1, got {nvox}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "nvox", nvox)

    @classmethod
    def unit_cube(cls, n=1):
        return cls((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (n, n, n))

    def with_nvox(self, nvox):
        if np.isscalar(nvox):
            nvox = (nvox,) * 3
        return Domain(self.lo, self.hi, tuple(nvox))

    @property
    def edges(self):
        return np.subtract(self.hi, self.lo)

    @property
    def spacing(self):
        return self.edges / np.asarray(self.nvox)

    @property
    def voxel_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.edges))

    @property
    def size(self):
        return int(np.prod(self.nvox))

    @property
    def center(self):
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def axes(self):
        return [self.lo[d] + (np.arange(self.nvox[d]) + 0.5) * self.spacing[d] for d in range(3)]

    def indices(self):
        """Voxel index triples ``(i, j, l)`` in lexicographic order, shape ``(n, 3)``."""
        grids = np.meshgrid(*[np.arange(n) for n in self.nvox], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def centers(self):
        """Voxel centers in the same lexicographic order as :meth:`indices`."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def contains(self, x, closed=True):
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((x >= lo) & (x <= hi), axis=-1)
        return np.all((x >= lo) & (x < hi), axis=-1)

    def to_json(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "nvox": list(self.nvox)}

    @classmethod
    def from_json(cls, d):
        try:
            return cls(tuple(d["lo"]), tuple(d["hi"]), tuple(d.get("nvox", (1, 1, 1))))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed domain {d!r}: {exc}") from None


def restrict(sampler, domain):
    """Wrap ``sampler`` so that it returns zero outside ``domain``."""

    def restricted(x):
        x = np.asarray(x, dtype=float)
        values = np.asarray(sampler(x))
        return np.where(domain.contains(x), values, 0)

    return restricted


def potential_from_refraction(n2, k):
    """Return the sampler ``q(x) = k**2 (1 - n2(x))``."""
    k2 = float(k) ** 2

    def q(x):
        return k2 * (1.0 - np.asarray(n2(x)))

    return q


def refraction_from_potential(q, k):
    """Inverse of :func:`potential_from_refraction`: ``n2(x) = 1 - q(x) / k**2``."""
    k2 = float(k) ** 2

    def n2(x):
        return 1.0 - np.asarray(q(x)) / k2

    return n2


def recipe_i_design(q_target, N_choice, p_max=DEFAULT_P_MAX, domain=None, points=None):
    """Split a target potential into an amplitude ``A`` and density ``N``.

    The constraints are validated at ``points`` (default: the voxel centers of
    ``domain``). Returns ``(A, N)`` samplers with ``A(x) N(x) = q_target(x)``.

    Raises :class:`PackingViolation` if ``N >= p_max`` or ``N < 0`` at a
    sample point and :class:`DivisionByZeroSupport` if ``q_target != 0``
    where ``N == 0``.
    """
    if not 0.0 < p_max < 1.0:
        raise ValidationError(f"p_max must lie in (0, 1), got {p_max}")
    if points is None:
        if domain is None:
            raise ValidationError("recipe_i_design needs a domain or explicit sample points")
        points = domain.centers()
    points = np.asarray(points, dtype=float)
    qv = np.asarray(q_target(points))
    nv = np.asarray(N_choice(points), dtype=float)
    if np.any(nv < 0):
        raise PackingViolation("N must be non-negative")
    if np.any(nv >= p_max):
        raise PackingViolation(
            f"N reaches {nv.max():.6g} >= packing bound p_max = {p_max}"
        )
    if np.any((nv == 0) & (qv != 0)):
        raise DivisionByZeroSupport("q_target is non-zero where N vanishes")

    def A(x):
        qx = np.asarray(q_target(x))
        nx = np.asarray(N_choice(x), dtype=float)
        out = np.zeros(np.broadcast(qx, nx).shape, dtype=np.result_type(qx, float))
        np.divide(qx, nx, out=out, where=nx > 0)
        return out

    return A, N_choice


def passivity_check(q, grid, k=1.0):
    """Voxel centers where ``Im q > 1e-12 k**2`` (gain, i.e. ``Im n2 < 0``)."""
    pts = grid.centers()
    imq = np.imag(np.asarray(q(pts)))
    tol = 1e-12 * float(k) ** 2
    return pts[np.broadcast_to(imq, pts.shape[:1]) > tol]


@dataclass
class MediumSpec:
    """A medium on a bounded box: potential, refraction coefficient and recipe split.

    Exactly one of ``q`` / ``n2`` has to be given; the other is derived. If
    ``N`` is given, ``A`` is derived from ``q = A N``.
    """

    domain: Domain
    k: float
    q: object = None
    n2: object = None
    N: object = None
    A: object = None
    p_max: float = DEFAULT_P_MAX
    source: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.k <= 0:
            raise ValidationError(f"wavenumber must be positive, got {self.k}")
        if (self.q is None) == (self.n2 is None):
            raise ValidationError("exactly one of q and n2 must be given")
        raw_q = self.q if self.q is not None else potential_from_refraction(self.n2, self.k)
        raw_n2 = self.n2 if self.n2 is not None else refraction_from_potential(self.q, self.k)
        self.q = restrict(raw_q, self.domain)
        # outside D the background is vacuum
        inner_n2 = restrict(raw_n2, self.domain)
        self.n2 = lambda x: np.where(self.domain.contains(x), inner_n2(x), 1.0)
        if self.N is not None and self.A is None:
            A, N = recipe_i_design(raw_q, self.N, self.p_max, self.domain)
            self.A = restrict(A, self.domain)
            self.N = restrict(N, self.domain)

    def q_grid(self, grid=None):
        grid = grid or self.domain
        return np.asarray(self.q(grid.centers()), dtype=complex)

    def to_json(self):
        if self.source is not None:
            return self.source
        raise InputError("only media loaded from JSON can be re-serialised")

    @classmethod
    def from_json(cls, d):
        try:
            domain = Domain.from_json(d["domain"])
            k = float(d["k"])
        except KeyError as exc:
            raise InputError(f"medium is missing field {exc}") from None
        if ("q" in d) == ("n2" in d):
            raise InputError("medium must define exactly one of 'q' and 'n2'")
        kwargs = {}
        if "q" in d:
            kwargs["q"] = sampler_from_json(d["q"])
        else:
            kwargs["n2"] = sampler_from_json(d["n2"])
        if "N" in d:
            kwargs["N"] = sampler_from_json(d["N"])
        return cls(domain=domain, k=k, p_max=float(d.get("p_max", DEFAULT_P_MAX)), source=d, **kwargs)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read medium file {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"medium file {path} is not valid JSON: {exc}") from None
        return cls.from_json(d)


def medium_json(domain, k, q=None, n2=None, N=None, p_max=DEFAULT_P_MAX):
    """Build the JSON document for a medium from serialisable samplers."""
    d = {"domain": domain.to_json(), "k": float(k), "p_max": float(p_max)}
    if q is not None:
        d["q"] = sampler_to_json(q)
    if n2 is not None:
        d["n2"] = sampler_to_json(n2)
    if N is not None:
        d["N"] = sampler_to_json(N)
    return d


__all__ = [
    "Constant",
    "DEFAULT_P_MAX",
    "Domain",
    "MediumSpec",
    "medium_json",
    "passivity_check",
    "potential_from_refraction",
    "recipe_i_design",
    "refraction_from_potential",
    "restrict",
]
