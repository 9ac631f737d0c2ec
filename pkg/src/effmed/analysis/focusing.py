"""Designing a potential whose far-field pattern approximates a target.

The amplitude is linearised about the incident wave,

    A_q(beta) ~ -(1/4 pi) int_D exp(-ik (beta - alpha) . y) q(y) dy,

discretised on voxel centers, and the ridge problem

    min_q  ||L q - f||^2_{S^2} + reg ||q||^2_{L^2(D)}

is solved through the SVD of the weighted operator. The designed ``q`` is
then checked against the full (nonlinear) forward model.
"""

from dataclasses import dataclass

import numpy as np

from ..effective_solver import assemble_ls_system, solve_effective
from ..errors import IllConditioned, ValidationError
from .farfield import far_field, sphere_quadrature


def born_operator(grid, ctx, directions):
    """Matrix of the linearised amplitude map, rows = directions, columns = voxels."""
    y = grid.centers()
    kv = ctx.k * (np.asarray(directions, float) - np.asarray(ctx.alpha)[None, :])
    return -np.exp(-1j * kv @ y.T) * grid.voxel_volume / (4 * np.pi)


@dataclass(frozen=True)
class FocusingDesign:
    q: np.ndarray
    linear_residual: float
    relative_linear_residual: float
    nonlinear_residual: float
    relative_nonlinear_residual: float
    condition: float
    target_norm: float

    def to_json(self):
        return {k: getattr(self, k) for k in (
            "linear_residual", "relative_linear_residual", "nonlinear_residual",
            "relative_nonlinear_residual", "condition", "target_norm")}


def solid_angle_target(quadrature, axis, half_angle):
    """Indicator of the cone of directions within ``half_angle`` of ``axis``."""
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    return (quadrature.directions @ axis >= np.cos(half_angle)).astype(complex)


def born_focusing_design(f_target, grid, ctx, regularization, quadrature=None, forward=True):
    """Ridge least-squares potential for the target pattern ``f_target``.

    ``f_target`` holds values on ``quadrature`` (default 16 x 32 rule), or is
    a :class:`FarFieldPattern`. Norms on S^2 use the quadrature weights; the
    penalty is the voxel L2 norm ``sum |q|^2 h**3``. With ``regularization ==
    0`` the operator must have full column rank, else :class:`IllConditioned`
    is raised with the condition number. ``forward=False`` skips the
    nonlinear check (reported as NaN).
    """
    reg = float(regularization)
    if reg < 0 or not np.isfinite(reg):
        raise ValidationError("regularization must be a non-negative number")
    if hasattr(f_target, "quadrature"):
        quadrature, f = f_target.quadrature, np.asarray(f_target.values, dtype=complex)
    else:
        quadrature = quadrature or sphere_quadrature()
        f = np.asarray(f_target, dtype=complex).reshape(-1)
    if len(f) != len(quadrature):
        raise ValidationError(f"target has {len(f)} values for {len(quadrature)} directions")
    sw = np.sqrt(quadrature.weights)
    h3 = grid.voxel_volume
    L = born_operator(grid, ctx, quadrature.directions)
    Lw = sw[:, None] * L / np.sqrt(h3)
    U, s, Vh = np.linalg.svd(Lw, full_matrices=False)
    smax = float(s[0]) if s.size else 0.0
    # smallest singular value of the full operator, counting the null space
    smin = 0.0 if grid.size > len(s) or not s.size else float(s[-1])
    if reg == 0:
        cond = np.inf if smin == 0 else smax / smin
        if not np.isfinite(cond) or cond > 1.0 / (np.finfo(float).eps * max(Lw.shape)):
            raise IllConditioned(
                f"Born operator has no full column rank (condition {cond:.3e}); use regularization > 0",
                condition=cond)
        filt = 1.0 / s
    else:
        filt = s / (s**2 + reg)
        # condition number of the regularised normal matrix
        cond = (smax**2 + reg) / (smin**2 + reg)
    p = Vh.conj().T @ (filt * (U.conj().T @ (sw * f)))
    q = p / np.sqrt(h3)
    fnorm = float(np.sqrt(np.sum(quadrature.weights * np.abs(f) ** 2)))
    lin = float(np.sqrt(np.sum(quadrature.weights * np.abs(L @ q - f) ** 2)))
    if forward:
        field = solve_effective(assemble_ls_system(q, grid, ctx))
        pat = far_field(q, field, ctx, quadrature)
        nonlin = pat.norm(f)
    else:
        nonlin = float("nan")
    rel = (lambda r: r / fnorm if fnorm > 0 else r)
    return FocusingDesign(q, lin, rel(lin), float(nonlin), rel(nonlin), float(cond), fnorm)
