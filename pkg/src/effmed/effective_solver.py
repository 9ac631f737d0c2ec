"""Voxel collocation for the volume integral equation

    u(x) = u0(x) - int_D g(x, y) q(y) u(y) dy,   g = exp(ik|x-y|) / (4 pi |x-y|).

Each voxel is one collocation node with midpoint weight ``h**3``. The singular
self-interaction uses the ball of equal volume, radius
``a_cell = (3 h**3 / (4 pi))**(1/3)``, whose exact static value at the center
is ``a_cell**2 / 2``. ``self_kernel="helmholtz"`` instead integrates the full
kernel over that ball, ``((1 - ik a) exp(ik a) - 1) / k**2``, whose imaginary
part carries the radiation loss of the voxel itself.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceWarning, GridTooSmall, InputError, ResolutionError, ResolutionWarning, ValidationError
from .kernels import LatticeConvolution, ball_newtonian_potential, pairwise_kernel_matrix
from .linalg import SolveInfo, solve_dense, solve_iterative

DENSE_MAX = 4096
KH_WARN = 0.5
KH_REFUSE = 1.0


def cell_radius(h3):
    """Radius of the ball with volume ``h3``."""
    return (3.0 * h3 / (4.0 * np.pi)) ** (1.0 / 3.0)


def self_weight(k, h3, self_kernel="static"):
    """Diagonal weight: the ball integral of the static or Helmholtz kernel."""
    a = cell_radius(h3)
    if self_kernel == "static":
        return a**2 / 2.0
    if self_kernel == "helmholtz":
        ka = k * a
        if ka < 1e-3:
            return a**2 / 2.0 + 1j * k * a**3 / 3.0 - k**2 * a**4 / 8.0
        return complex((np.exp(1j * ka) * (1 - 1j * ka) - 1) / k**2)
    raise ValidationError(f"unknown self kernel {self_kernel!r}")


def _q_values(q, grid):
    if callable(q):
        values = q(grid.centers())
    else:
        values = q
    values = np.asarray(values, dtype=complex).reshape(-1)
    values = np.broadcast_to(values, (grid.size,)) if values.size == 1 else values
    if values.size != grid.size:
        raise ValidationError(f"q has {values.size} values for a grid of {grid.size} voxels")
    return np.array(values, dtype=complex)


@dataclass(frozen=True, eq=False)
class EffectiveSystem:
    """``(I + W_diag + G Q h**3) u = u0`` on the voxel centers of ``grid``."""

    grid: object
    q: np.ndarray
    ctx: object
    rhs: np.ndarray
    w_diag: complex
    matrix: np.ndarray = None
    backend: str = "dense"
    _conv: object = field(default=None, repr=False)

    @property
    def n(self):
        return len(self.rhs)

    @property
    def h3(self):
        return self.grid.voxel_volume

    def apply_scattering(self, u):
        """``(A - I) u``: the integral operator applied to ``u``."""
        u = np.asarray(u, dtype=complex)
        if self.matrix is not None:
            return self.matrix @ u - u
        diag = self.q * self.w_diag * u
        return diag + self._conv(self.q * self.h3 * u).ravel()

    def apply(self, u):
        u = np.asarray(u, dtype=complex)
        if self.matrix is not None:
            return self.matrix @ u
        return u + self.apply_scattering(u)

    def dense(self):
        if self.matrix is not None:
            return self.matrix
        return _dense_matrix(self.grid, self.q, self.ctx.k, self.w_diag)


@dataclass(frozen=True, eq=False)
class ComplexGridField:
    """Complex values at the voxel centers of ``grid`` in lexicographic order."""

    values: np.ndarray
    grid: object
    info: SolveInfo = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.size != self.grid.size:
            raise ValidationError(f"field has {v.size} values for {self.grid.size} voxels")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_array(self):
        return self.values.reshape(self.grid.nvox)


def check_resolution(k, grid):
    kh = float(k) * float(np.max(grid.spacing))
    if kh >= KH_REFUSE:
        raise ResolutionError(f"kh = {kh:.4g} >= {KH_REFUSE}: grid too coarse for the wavelength")
    if kh > KH_WARN:
        warnings.warn(f"kh = {kh:.4g} > {KH_WARN}: grid is under-resolved", ResolutionWarning,
                      stacklevel=3)
    return kh


def _dense_matrix(grid, q, k, w_diag):
    pts = grid.centers()
    mat = pairwise_kernel_matrix(k, pts, pts) * (q * grid.voxel_volume)[None, :]
    mat[np.diag_indices_from(mat)] = 1.0 + q * w_diag
    return mat


def assemble_ls_system(q, grid, ctx, method="auto", self_kernel="static"):
    """Collocation system for potential ``q`` (sampler or voxel values) on ``grid``.

    ``method``: ``"dense"``, ``"matrix-free"`` (FFT convolution) or ``"auto"``
    (dense up to ``DENSE_MAX`` voxels). ``self_kernel`` selects the diagonal
    weight, see :func:`self_weight`. Raises :class:`ResolutionError` if
    ``kh >= 1``; warns above 0.5.
    """
    if method not in ("auto", "dense", "matrix-free"):
        raise ValidationError(f"unknown assembly method {method!r}")
    check_resolution(ctx.k, grid)
    qv = _q_values(q, grid)
    w_diag = self_weight(ctx.k, grid.voxel_volume, self_kernel)
    rhs = np.asarray(ctx.u0(grid.centers()), dtype=complex)
    if method == "dense" or (method == "auto" and grid.size <= DENSE_MAX):
        return EffectiveSystem(grid, qv, ctx, rhs, w_diag, _dense_matrix(grid, qv, ctx.k, w_diag), "dense")
    conv = LatticeConvolution(grid.nvox, grid.spacing, ctx.k)
    return EffectiveSystem(grid, qv, ctx, rhs, w_diag, None, "fft", conv)


def solve_effective(system, method=None, tol=1e-10):
    """Solve for the voxel field. Dense systems report a condition estimate."""
    if method is None:
        method = "dense" if system.matrix is not None else "iterative"
    if not np.any(system.q):
        u, info = system.rhs.copy(), SolveInfo(method, 0.0, 1.0 if method == "dense" else None)
    elif method == "dense":
        mat = system.dense()
        cols = np.sum(np.abs(mat), axis=0) - np.abs(np.diag(mat)) + 1.0 + np.abs(system.q * system.w_diag)
        u, info = solve_dense(mat, system.rhs, tol, scale=float(np.max(cols)))
    elif method == "iterative":
        u, info = solve_iterative(system.apply, system.rhs, tol, x0=system.rhs)
    else:
        raise ValidationError(f"unknown solve method {method!r}")
    return ComplexGridField(u, system.grid, info)


def neumann_bound(system):
    """``max|q| (w_diag + max_j sum_{m != j} |g_jm| h**3)``; below 1 the Born series converges."""
    static = LatticeConvolution(system.grid.nvox, system.grid.spacing, 0.0)
    row = np.real(static(np.full(system.grid.nvox, system.h3))).max()
    return float(np.max(np.abs(system.q)) * (abs(system.w_diag) + row))


def born_series(q, ctx, grid, n_terms, system=None):
    """Partial sum ``u0 - K u0 + K K u0 - ...`` with ``n_terms`` terms.

    ``K`` is the collocated integral operator of :func:`assemble_ls_system`,
    so the series converges to :func:`solve_effective` when it converges.
    Warns with :class:`DivergenceWarning` if ``neumann_bound >= 1``.
    """
    if int(n_terms) < 1:
        raise ValidationError("n_terms must be >= 1")
    system = system or assemble_ls_system(q, grid, ctx, method="matrix-free")
    bound = neumann_bound(system)
    if bound >= 1.0:
        warnings.warn(f"Born series may diverge: operator bound {bound:.3g} >= 1", DivergenceWarning,
                      stacklevel=2)
    term = system.rhs.copy()
    total = term.copy()
    for _ in range(int(n_terms) - 1):
        term = -system.apply_scattering(term)
        total = total + term
    return ComplexGridField(total, grid, SolveInfo("born", float("nan"), None, int(n_terms)))


def laplacian_7pt(u, spacing):
    """Seven-point Laplacian at interior nodes of a 3-D array."""
    hx, hy, hz = spacing
    c = u[1:-1, 1:-1, 1:-1]
    return ((u[2:, 1:-1, 1:-1] - 2 * c + u[:-2, 1:-1, 1:-1]) / hx**2
            + (u[1:-1, 2:, 1:-1] - 2 * c + u[1:-1, :-2, 1:-1]) / hy**2
            + (u[1:-1, 1:-1, 2:] - 2 * c + u[1:-1, 1:-1, :-2]) / hz**2)


def residual_check(field, q, ctx):
    """``max |lap u + k**2 u - q u|`` over interior voxels (finite-difference diagnostic)."""
    grid = field.grid
    if min(grid.nvox) < 3:
        raise GridTooSmall(f"residual check needs >= 3 voxels per axis, got {list(grid.nvox)}")
    u = field.as_array()
    qv = _q_values(q, grid).reshape(grid.nvox)
    c = u[1:-1, 1:-1, 1:-1]
    r = laplacian_7pt(u, grid.spacing) + ctx.k**2 * c - qv[1:-1, 1:-1, 1:-1] * c
    return float(np.max(np.abs(r)))


def plane_wave_fd_error(ctx, grid):
    """Exact modulus of the 7-point Laplacian error for the incident plane wave."""
    kd = ctx.k * np.asarray(ctx.alpha)
    symbol = np.sum((2 * np.cos(kd * grid.spacing) - 2) / grid.spacing**2)
    return float(abs(ctx.amplitude) * abs(symbol + ctx.k**2))


def evaluate_field_effective(points, field, q, ctx, block=2_000_000):
    """Field anywhere from the voxel solution; voxels act as equal-volume balls.

    At voxel centers this reproduces the collocation equations exactly.
    """
    grid = field.grid
    qv = _q_values(q, grid)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    out = np.asarray(ctx.u0(pts), dtype=complex).copy()
    src = grid.centers()
    coef = qv * field.values / (4.0 * np.pi)
    keep = coef != 0
    src, coef = src[keep], coef[keep]
    a_cell = cell_radius(grid.voxel_volume)
    if len(src):
        rows = max(1, block // len(src))
        for s in range(0, len(pts), rows):
            p = pts[s:s + rows]
            r = np.linalg.norm(p[:, None, :] - src[None, :, :], axis=-1)
            ball = ball_newtonian_potential(p[:, None, :], src[None, :, :], a_cell)
            out[s:s + rows] -= (np.exp(1j * ctx.k * r) * ball) @ coef
    return out[0] if single else out


def save_grid_field(field, path, names=("u_re", "u_im")):
    """CSV ``i,j,l,x,y,z,<re>,<im>`` in lexicographic voxel order."""
    grid = field.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "l", "x", "y", "z", *names])
        for (i, j, l), x, u in zip(grid.indices(), grid.centers(), field.values):
            w.writerow([i, j, l] + [f"{v:.12e}" for v in (x[0], x[1], x[2], u.real, u.imag)])


def save_grid_values(values, grid, path, names=("q_re", "q_im")):
    save_grid_field(ComplexGridField(values, grid), path, names)


def load_grid_values(path, grid):
    """Read ``i,j,l,x,y,z,re,im`` rows (any order) into a lexicographic voxel array."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read grid values {path}: {exc}") from None
    if data.size == 0 or data.shape[1] != 8:
        raise InputError(f"{path}: expected columns i,j,l,x,y,z,re,im")
    idx = np.rint(data[:, :3]).astype(int)
    nv = np.asarray(grid.nvox)
    if np.any(idx < 0) or np.any(idx >= nv) or len(idx) != grid.size:
        raise InputError(f"{path}: indices do not cover the {list(grid.nvox)} grid")
    flat = np.ravel_multi_index(idx.T, grid.nvox)
    if len(np.unique(flat)) != grid.size:
        raise InputError(f"{path}: duplicate voxel indices")
    out = np.empty(grid.size, dtype=complex)
    out[flat] = data[:, 6] + 1j * data[:, 7]
    return out


class GridSampler:
    """Piecewise-constant sampler from voxel values (zero outside the grid)."""

    def __init__(self, values, grid):
        self.values = np.asarray(values, dtype=complex).reshape(grid.nvox)
        self.grid = grid

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        rel = (x - np.asarray(self.grid.lo)) / self.grid.spacing
        idx = np.floor(rel).astype(int)
        nv = np.asarray(self.grid.nvox)
        idx = np.clip(idx, 0, nv - 1)
        inside = self.grid.contains(x)
        vals = self.values[idx[..., 0], idx[..., 1], idx[..., 2]]
        return np.where(inside, vals, 0)
