"""The M-body collocation system for many small balls and field evaluation.

For balls ``B_m`` of radius ``a`` with amplitudes ``A_m`` the field at the
centers solves

    u_j + sum_{m != j} g(x_j, x_m) A_m V(a) u_m [+ A_j a**2 / 2 u_j] = u0(x_j)

where the bracketed self term is the ball's own contribution at its center
(optional; off by default). Away from the centers the field is recovered
from the center values with the exact ball integral of the static kernel.
"""

import csv
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, KaTooLarge, KaWarning, OverlapError, ValidationError
from .kernels import LatticeConvolution, ball_newtonian_potential, pairwise_apply, pairwise_kernel_matrix
from .linalg import SolveInfo, solve_dense, solve_iterative

DENSE_MAX = 4000
KA_WARN = 0.1
KA_REFUSE = 0.5
DUMP_MAGIC = b"EMD1"
DUMP_HEADER = struct.Struct("<4sIQdd")


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Collocation system at the ball centers.

    ``matrix`` is the dense ``M x M`` matrix when ``M <= DENSE_MAX`` (or when
    requested); otherwise it is ``None`` and :meth:`apply` is matrix-free.
    """

    config: object
    ctx: object
    self_term: bool
    rhs: np.ndarray
    matrix: np.ndarray = None
    backend: str = "dense"
    _operator: object = field(default=None, repr=False)

    @property
    def M(self):
        return len(self.rhs)

    @property
    def k(self):
        return self.ctx.k

    @property
    def a(self):
        return self.config.a

    @property
    def V(self):
        return self.config.V

    def diagonal(self):
        if self.self_term:
            return 1.0 + self.config.amplitudes * self.a**2 / 2.0
        return np.ones(self.M, dtype=complex)

    def apply(self, u):
        u = np.asarray(u, dtype=complex)
        if self.matrix is not None:
            return self.matrix @ u
        return self._operator(u)

    def dense(self):
        """The full matrix (assembled on demand for matrix-free systems)."""
        if self.matrix is not None:
            return self.matrix
        return _dense_matrix(self.config, self.k, self.self_term)


@dataclass(frozen=True, eq=False)
class CenterField:
    values: np.ndarray
    config: object
    info: SolveInfo = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def check_ka(k, a):
    ka = float(k) * float(a)
    if ka >= KA_REFUSE:
        raise KaTooLarge(f"ka = {ka:.4g} >= {KA_REFUSE}: balls are not small on the wavelength scale")
    if ka >= KA_WARN:
        warnings.warn(f"ka = {ka:.4g} >= {KA_WARN}: small-ball reduction is inaccurate", KaWarning,
                      stacklevel=3)
    return ka


def _dense_matrix(config, k, self_term):
    weights = config.amplitudes * config.V
    mat = pairwise_kernel_matrix(k, config.centers, config.centers) * weights[None, :]
    diag = 1.0 + (config.amplitudes * config.a**2 / 2.0 if self_term else 0.0)
    mat[np.diag_indices_from(mat)] = diag
    return mat


def _lattice_operator(config, k, diag):
    lat = config.lattice
    conv = LatticeConvolution(lat.shape, lat.spacing, k)
    idx = tuple(np.asarray(config.indices).T)
    weights = config.amplitudes * config.V
    buf_shape = lat.shape

    def apply(u):
        buf = np.zeros(buf_shape, dtype=complex)
        buf[idx] = weights * u
        return diag * u + conv(buf)[idx]

    return apply


def _pairwise_operator(config, k, diag):
    centers = config.centers
    weights = config.amplitudes * config.V

    def apply(u):
        return diag * u + pairwise_apply(k, centers, centers, weights * u)

    return apply


def assemble_discrete_system(config, ctx, self_term=False, method="auto"):
    """Build the collocation system for ``config`` under incident wave ``ctx``.

    ``method`` is ``"dense"``, ``"matrix-free"`` or ``"auto"`` (dense up to
    ``DENSE_MAX`` unknowns). Matrix-free products use an FFT on the placement
    lattice when the centers carry lattice indices, and direct summation
    otherwise.

    Raises :class:`OverlapError` if two balls intersect and
    :class:`KaTooLarge` if ``ka >= 0.5`` (warns from ``ka >= 0.1``).
    """
    if method not in ("auto", "dense", "matrix-free"):
        raise ValidationError(f"unknown assembly method {method!r}")
    check_ka(ctx.k, config.a)
    if config.M >= 2:
        sep = config.min_separation()
        if sep < 2 * config.a:
            raise OverlapError(f"ball centers {sep:.6g} apart, below 2a = {2 * config.a:.6g}")
    rhs = ctx.u0(config.centers) if config.M else np.zeros(0, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if method == "dense" or (method == "auto" and config.M <= DENSE_MAX):
        mat = _dense_matrix(config, ctx.k, self_term)
        return DiscreteSystem(config, ctx, bool(self_term), rhs, mat, "dense")
    diag = 1.0 + (config.amplitudes * config.a**2 / 2.0 if self_term else np.zeros(config.M))
    if config.lattice is not None and config.indices is not None:
        op, backend = _lattice_operator(config, ctx.k, diag), "fft"
    else:
        op, backend = _pairwise_operator(config, ctx.k, diag), "pairwise"
    return DiscreteSystem(config, ctx, bool(self_term), rhs, None, backend, op)


def solve_discrete(system, method=None, tol=1e-10):
    """Solve the system; ``method`` is ``"dense"`` or ``"iterative"``.

    The default follows the assembly (LU for dense systems, GMRES for
    matrix-free ones). Either way ``||A u - b||_inf <= tol ||b||_inf`` is
    checked before returning; :class:`SingularSystem` is raised otherwise.
    """
    if system.M == 0:
        return CenterField(np.zeros(0, dtype=complex), system.config, SolveInfo("dense", 0.0, 1.0))
    if method is None:
        method = "dense" if system.matrix is not None else "iterative"
    if method == "dense":
        mat = system.dense()
        u, info = solve_dense(mat, system.rhs, tol, scale=_term_norm(mat, system.diagonal()))
    elif method == "iterative":
        u, info = solve_iterative(system.apply, system.rhs, tol, x0=system.rhs)
    else:
        raise ValidationError(f"unknown solve method {method!r}")
    return CenterField(u, system.config, info)


def _term_norm(mat, diag):
    """1-norm of ``|I| + |K|``: the diagonal split back into 1 and the self term."""
    cols = np.sum(np.abs(mat), axis=0) - np.abs(np.diag(mat)) + 1.0 + np.abs(diag - 1.0)
    return float(np.max(cols))


def evaluate_field_discrete(points, config, center_field, ctx, block=2_000_000):
    """``u_M(x) = u0(x) - sum_m exp(ik|x - x_m|)/(4 pi) A_m u_m int_{B_m} dy/|x - y|``.

    Uses the interior branch of the ball integral for points inside a ball.
    Accepts a single point or an ``(n, 3)`` array.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    out = np.asarray(ctx.u0(pts), dtype=complex).copy()
    if config.M:
        coef = config.amplitudes * np.asarray(center_field.values) / (4.0 * np.pi)
        rows = max(1, block // config.M)
        for s in range(0, len(pts), rows):
            p = pts[s:s + rows]
            r = np.linalg.norm(p[:, None, :] - config.centers[None, :, :], axis=-1)
            ball = ball_newtonian_potential(p[:, None, :], config.centers[None, :, :], config.a)
            out[s:s + rows] -= (np.exp(1j * ctx.k * r) * ball) @ coef
    return out[0] if single else out


def far_zone_bound(points, config, ctx):
    """``max|A| M V / (4 pi dist)`` bound on ``|u_M - u0|`` scaled by ``max|u_m|``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if config.M == 0:
        return np.zeros(len(pts))
    dist = np.min(np.linalg.norm(pts[:, None, :] - config.centers[None, :, :], axis=-1), axis=1)
    return np.max(np.abs(config.amplitudes)) * config.M * config.V / (4 * np.pi * dist)


def save_center_field(center_field, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "u_re", "u_im"])
        for m, u in enumerate(center_field.values):
            w.writerow([m, f"{u.real:.12e}", f"{u.imag:.12e}"])


def load_center_field(path, config):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read center field {path}: {exc}") from None
    if data.size == 0:
        data = np.zeros((0, 3))
    if data.shape[1] != 3 or len(data) != config.M:
        raise InputError(f"{path}: expected {config.M} rows of m,u_re,u_im")
    return CenterField(data[:, 1] + 1j * data[:, 2], config)


def dump_system(system, path):
    """Binary dump: 32-byte header (magic, flags, M, k, a), then row-major complex128."""
    mat = np.ascontiguousarray(system.dense(), dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(DUMP_HEADER.pack(DUMP_MAGIC, int(system.self_term), system.M, system.k, system.a))
        fh.write(mat.tobytes(order="C"))


def read_system_dump(path):
    """Returns ``(matrix, header dict)`` from a :func:`dump_system` file."""
    with open(path, "rb") as fh:
        head = fh.read(DUMP_HEADER.size)
        if len(head) != DUMP_HEADER.size:
            raise InputError(f"{path}: truncated header")
        magic, flags, M, k, a = DUMP_HEADER.unpack(head)
        if magic != DUMP_MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != M * M:
        raise InputError(f"{path}: expected {M * M} entries, found {data.size}")
    return data.reshape(M, M).astype(complex), {"self_term": bool(flags & 1), "M": M, "k": k, "a": a}
