"""Scattering amplitude on the unit sphere and the physics checks built on it.

With ``u = u0 + A(beta) exp(ikr)/r + o(1/r)`` along ``x = r beta``,

    A(beta) = -(1/4 pi) sum_m exp(-ik beta . y_m) q_m u_m w_m

for collocation nodes ``y_m`` with weights ``w_m`` (``V(a)`` for balls,
``h**3`` for voxels).
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from ..discrete_solver import CenterField
from ..effective_solver import ComplexGridField, assemble_ls_system, solve_effective
from ..errors import InputError, MissingForwardDirection, ValidationError
from ..placement import ScattererConfig
from ..wave import WaveContext


@dataclass(frozen=True)
class SphereQuadrature:
    """Directions on S^2 with weights; ``theta``/``phi`` are the polar angles."""

    directions: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return len(self.weights)


def _angles(directions):
    d = np.asarray(directions, dtype=float)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
    return theta, phi


def sphere_quadrature(n_theta=16, n_phi=32, extra=()):
    """Gauss-Legendre in ``cos theta`` times the uniform rule in ``phi``.

    Exact for spherical harmonics of degree below ``min(2 n_theta, n_phi)``.
    ``extra`` directions are appended with zero weight, so values can be
    sampled there (e.g. the forward direction) without changing integrals.
    """
    if n_theta < 1 or n_phi < 1:
        raise ValidationError("quadrature sizes must be positive")
    x, wx = np.polynomial.legendre.leggauss(int(n_theta))
    phi = 2 * np.pi * np.arange(int(n_phi)) / n_phi
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    w = np.repeat(wx, n_phi) * (2 * np.pi / n_phi)
    if len(extra):
        ex = np.asarray(extra, dtype=float).reshape(-1, 3)
        ex = ex / np.linalg.norm(ex, axis=1, keepdims=True)
        dirs = np.vstack([dirs, ex])
        w = np.concatenate([w, np.zeros(len(ex))])
    theta, phi = _angles(dirs)
    return SphereQuadrature(dirs, w, theta, phi)


@dataclass(frozen=True)
class FarFieldPattern:
    quadrature: SphereQuadrature
    values: np.ndarray
    alpha: tuple
    k: float

    @property
    def directions(self):
        return self.quadrature.directions

    @property
    def weights(self):
        return self.quadrature.weights

    def index_of(self, beta, tol=1e-12):
        d = np.linalg.norm(self.directions - np.asarray(beta, dtype=float), axis=1)
        i = int(np.argmin(d)) if len(d) else -1
        return i if i >= 0 and d[i] <= tol else None

    def forward(self):
        i = self.index_of(self.alpha)
        if i is None:
            raise MissingForwardDirection("pattern has no sample at the incident direction")
        return complex(self.values[i])

    def total_cross_section_integral(self):
        """``int_{S^2} |A|^2 d beta`` by the pattern's quadrature."""
        return float(np.sum(self.weights * np.abs(self.values) ** 2))

    def norm(self, other=None):
        """Weighted L2 norm on S^2 of the pattern (or of its difference to ``other``)."""
        v = self.values if other is None else self.values - np.asarray(other)
        return float(np.sqrt(np.sum(self.weights * np.abs(v) ** 2)))


def amplitude_from_sources(nodes, strengths, k, directions):
    """``-(1/4 pi) sum_m exp(-ik beta . y_m) s_m`` for each direction ``beta``."""
    nodes = np.asarray(nodes, dtype=float)
    s = np.asarray(strengths, dtype=complex)
    if len(s) == 0:
        return np.zeros(len(directions), dtype=complex)
    phase = np.exp(-1j * k * (np.asarray(directions) @ nodes.T))
    return -(phase @ s) / (4 * np.pi)


def far_field(source, field, ctx, quadrature=None):
    """Scattering amplitude of a solved discrete or voxel field.

    ``source`` is a :class:`ScattererConfig` with ``field`` a center field,
    or voxel potential values (array or sampler) with ``field`` a
    :class:`ComplexGridField`. ``quadrature`` defaults to the 16 x 32 product
    rule with the incident direction appended.
    """
    quad = quadrature or sphere_quadrature(extra=[ctx.alpha])
    if isinstance(source, ScattererConfig):
        if not isinstance(field, CenterField):
            raise ValidationError("a scatterer configuration needs a center field")
        nodes = source.centers
        strengths = source.amplitudes * field.values * source.V
    else:
        if not isinstance(field, ComplexGridField):
            raise ValidationError("a voxel potential needs a grid field")
        grid = field.grid
        qv = source(grid.centers()) if callable(source) else source
        qv = np.broadcast_to(np.asarray(qv, dtype=complex).reshape(-1), (grid.size,))
        nodes = grid.centers()
        strengths = qv * field.values * grid.voxel_volume
    vals = amplitude_from_sources(nodes, strengths, ctx.k, quad.directions)
    return FarFieldPattern(quad, vals, tuple(ctx.alpha), float(ctx.k))


@dataclass(frozen=True)
class OpticalTheoremResult:
    lhs: float
    rhs: float
    relative_gap: float
    verdict: bool


def optical_theorem_check(pattern, absorbing=False, tol=1e-2):
    """Compare ``Im A(alpha, alpha)`` with ``(k/4 pi) int |A|^2``.

    For real potentials the two agree: verdict is ``|lhs - rhs| / scale < tol``
    with ``scale = max(|lhs|, rhs, 1e-14)``. For absorbing media
    (``Im q <= 0``) the verdict is ``lhs >= rhs - tol * scale``.
    """
    lhs = float(np.imag(pattern.forward()))
    rhs = float(pattern.k / (4 * np.pi) * pattern.total_cross_section_integral())
    scale = max(abs(lhs), abs(rhs), 1e-14)
    gap = (lhs - rhs) / scale
    verdict = gap >= -tol if absorbing else abs(gap) < tol
    return OpticalTheoremResult(lhs, rhs, float(gap), bool(verdict))


def _solve_for(system, ctx):
    rhs = np.asarray(ctx.u0(system.grid.centers()), dtype=complex)
    return solve_effective(replace(system, ctx=ctx, rhs=rhs))


def amplitude_matrix(q, grid, k, alphas, betas, system=None):
    """``A(beta_i, alpha_j)`` for voxel potential ``q`` (one solve per ``alpha``)."""
    alphas = np.asarray(alphas, dtype=float).reshape(-1, 3)
    betas = np.asarray(betas, dtype=float).reshape(-1, 3)
    base = WaveContext(k, tuple(alphas[0]))
    system = system or assemble_ls_system(q, grid, base)
    out = np.empty((len(betas), len(alphas)), dtype=complex)
    for j, alpha in enumerate(alphas):
        ctx = base.with_alpha(alpha)
        fld = _solve_for(system, ctx)
        out[:, j] = amplitude_from_sources(grid.centers(), system.q * fld.values * grid.voxel_volume,
                                           k, betas / np.linalg.norm(betas, axis=1, keepdims=True))
    return out


def reciprocity_check(q, grid, k, pairs):
    """``max |A(beta, alpha) - A(-alpha, -beta)|`` over ``(alpha, beta)`` pairs.

    Returns ``(absolute, relative)``; the relative value divides by the
    largest amplitude modulus involved (or 1 when all vanish).
    """
    pairs = [(np.asarray(a, float) / np.linalg.norm(a), np.asarray(b, float) / np.linalg.norm(b))
             for a, b in pairs]
    base = WaveContext(k, tuple(pairs[0][0]))
    system = assemble_ls_system(q, grid, base)
    worst = 0.0
    scale = 0.0
    for alpha, beta in pairs:
        a1 = amplitude_matrix(q, grid, k, [alpha], [beta], system)[0, 0]
        a2 = amplitude_matrix(q, grid, k, [-beta], [-alpha], system)[0, 0]
        worst = max(worst, abs(a1 - a2))
        scale = max(scale, abs(a1), abs(a2))
    return float(worst), float(worst / scale) if scale > 0 else 0.0


def save_pattern(pattern, path):
    q = pattern.quadrature
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "phi", "weight", "A_re", "A_im"])
        for t, p, wt, v in zip(q.theta, q.phi, q.weights, pattern.values):
            w.writerow([f"{x:.12e}" for x in (t, p, wt, v.real, v.imag)])


def load_pattern_values(path):
    """Read ``theta,phi,weight,A_re,A_im``; returns ``(SphereQuadrature, values)``."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read far-field pattern {path}: {exc}") from None
    if data.size == 0 or data.shape[1] != 5:
        raise InputError(f"{path}: expected columns theta,phi,weight,A_re,A_im")
    t, p = data[:, 0], data[:, 1]
    dirs = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)
    return SphereQuadrature(dirs, data[:, 2], t, p), data[:, 3] + 1j * data[:, 4]
