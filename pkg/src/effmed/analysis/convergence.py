"""Small-ball limit studies: field discrepancy and Riemann sums as ``a -> 0``."""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..discrete_solver import KA_REFUSE, assemble_discrete_system, evaluate_field_discrete, solve_discrete
from ..effective_solver import assemble_ls_system, evaluate_field_effective, solve_effective
from ..errors import ValidationError
from ..kernels import green
from ..medium import DEFAULT_P_MAX, recipe_i_design
from ..placement import integrate_midpoint, place_inhomogeneities, riemann_sum


def default_probes(domain, distance):
    """14 points at ``distance`` from the box: 6 beyond the faces, 8 beyond the corners."""
    c = domain.center
    half = 0.5 * domain.edges
    probes = []
    for d in range(3):
        for s in (-1.0, 1.0):
            p = c.copy()
            p[d] += s * (half[d] + distance)
            probes.append(p)
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                v = np.array([sx, sy, sz])
                probes.append(c + v * half + v * distance / np.sqrt(3.0))
    return np.array(probes)


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def strictly_decreasing(values):
    v = np.asarray(values, float)
    return bool(np.all(np.diff(v) < 0))


def _check_sequence(a_sequence, k):
    a = np.asarray(a_sequence, dtype=float)
    if a.ndim != 1 or len(a) == 0 or np.any(a <= 0):
        raise ValidationError("a_sequence must be a non-empty list of positive radii")
    if np.any(np.diff(a) >= 0):
        raise ValidationError("a_sequence must be strictly decreasing")
    if k * a[0] >= KA_REFUSE:
        raise ValidationError(f"ka = {k * a[0]:.3g} must stay below {KA_REFUSE}")
    return a


@dataclass
class ConvergenceReport:
    """Per-radius discrepancy ``max_probe |u_M - u_e|`` against one effective solve."""

    a: np.ndarray
    M: np.ndarray
    sup_err: np.ndarray
    seconds: np.ndarray
    scale: float
    slope: float
    probes: np.ndarray = field(repr=False, default=None)
    details: dict = field(default_factory=dict)

    @property
    def relative_err(self):
        return self.sup_err / self.scale if self.scale > 0 else np.where(self.sup_err > 0, np.inf, 0.0)

    @property
    def monotone(self):
        return strictly_decreasing(self.sup_err)

    def to_json(self):
        return {
            "a": self.a.tolist(), "M": self.M.tolist(), "sup_err": self.sup_err.tolist(),
            "relative_err": np.asarray(self.relative_err).tolist(), "scale": self.scale,
            "slope": self.slope, "strictly_decreasing": self.monotone, **self.details,
        }


def convergence_study(q_target, N, ctx, a_sequence, domain, probes=None, p_max=DEFAULT_P_MAX,
                      n_effective=64, self_term=False, random=False, seed=0):
    """Compare the many-ball field with the effective field along ``a_sequence``.

    Amplitudes come from ``q = A N``. The effective field is solved once on
    an ``n_effective**3`` voxel grid. Probes default to the 14 points at
    distance ``1/k`` from the domain. ``scale`` is ``max_probe |u_e - u0|``,
    the size of the scattered field the discrepancy is measured against.
    """
    a_seq = _check_sequence(a_sequence, ctx.k)
    grid = domain.with_nvox(n_effective)
    A, N = recipe_i_design(q_target, N, p_max, grid)
    probes = default_probes(domain, 1.0 / ctx.k) if probes is None else np.asarray(probes, float).reshape(-1, 3)

    t0 = time.perf_counter()
    eff = solve_effective(assemble_ls_system(q_target, grid, ctx))
    u_e = evaluate_field_effective(probes, eff, q_target, ctx)
    t_eff = time.perf_counter() - t0
    scale = float(np.max(np.abs(u_e - ctx.u0(probes))))

    Ms, errs, secs, backends, iters = [], [], [], [], []
    for a in a_seq:
        t0 = time.perf_counter()
        cfg = place_inhomogeneities(N, a, domain, p_max, random=random, seed=seed).with_amplitudes(A)
        system = assemble_discrete_system(cfg, ctx, self_term=self_term)
        cf = solve_discrete(system)
        u_M = evaluate_field_discrete(probes, cfg, cf, ctx)
        secs.append(time.perf_counter() - t0)
        Ms.append(cfg.M)
        errs.append(float(np.max(np.abs(u_M - u_e))))
        backends.append(system.backend)
        iters.append(cf.info.iterations)
    errs = np.array(errs)
    return ConvergenceReport(
        a_seq, np.array(Ms), errs, np.array(secs), scale, loglog_slope(a_seq, errs), probes,
        {"n_effective": int(n_effective), "effective_seconds": t_eff, "backends": backends,
         "iterations": iters},
    )


def save_convergence(report, path, timings=False):
    """CSV ``a,M,sup_err`` (plus ``seconds`` when ``timings``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "M", "sup_err"] + (["seconds"] if timings else []))
        for i, (a, M, e) in enumerate(zip(report.a, report.M, report.sup_err)):
            row = [f"{a:.12e}", int(M), f"{e:.12e}"]
            if timings:
                row.append(f"{report.seconds[i]:.12e}")
            w.writerow(row)


def green_integrand(k, z):
    """``f(x) = g(x, z)`` for a fixed source ``z`` (smooth on any box avoiding ``z``)."""
    z = np.asarray(z, dtype=float)

    def f(x):
        return green(k, np.linalg.norm(np.asarray(x, float) - z, axis=-1))

    return f


@dataclass
class RiemannReport:
    a: np.ndarray
    M: np.ndarray
    value: np.ndarray
    reference: complex
    error: np.ndarray

    @property
    def relative_err(self):
        return self.error / abs(self.reference) if self.reference != 0 else self.error

    @property
    def monotone(self):
        return strictly_decreasing(self.error)

    def to_json(self):
        return {"a": self.a.tolist(), "M": self.M.tolist(),
                "value": [[v.real, v.imag] for v in self.value],
                "reference": [self.reference.real, self.reference.imag],
                "error": self.error.tolist(), "relative_err": np.asarray(self.relative_err).tolist(),
                "strictly_decreasing": self.monotone}


def riemann_study(f, N, domain, a_sequence, p_max=DEFAULT_P_MAX, n_reference=64):
    """``sum_m f(x_m) V(a)`` over placed centers against the midpoint integral of ``f N``."""
    a_seq = np.asarray(a_sequence, dtype=float)
    if len(a_seq) == 0 or np.any(np.diff(a_seq) >= 0):
        raise ValidationError("a_sequence must be strictly decreasing")
    ref = integrate_midpoint(lambda x: np.asarray(f(x)) * np.asarray(N(x)), (domain.lo, domain.hi), n_reference)
    Ms, vals = [], []
    for a in a_seq:
        cfg = place_inhomogeneities(N, a, domain, p_max)
        Ms.append(cfg.M)
        vals.append(riemann_sum(f, cfg))
    vals = np.array(vals, dtype=complex)
    return RiemannReport(a_seq, np.array(Ms), vals, ref, np.abs(vals - ref))


def save_riemann(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "M", "sum_re", "sum_im", "ref_re", "ref_im", "abs_err"])
        for a, M, v, e in zip(report.a, report.M, report.value, report.error):
            w.writerow([f"{a:.12e}", int(M), f"{v.real:.12e}", f"{v.imag:.12e}",
                        f"{report.reference.real:.12e}", f"{report.reference.imag:.12e}", f"{e:.12e}"])
