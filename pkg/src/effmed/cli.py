"""Batch front end: ``effmed <command> manifest.json``.

Each command reads a JSON manifest (schema in ``manifest.schema.json``),
writes CSV tables plus ``summary.json`` into the output directory and exits
with 0 on success, 2 on invalid input and 3 on numerical failure. Failures
also write ``error.json`` and print the same object on stderr.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EffmedError, InputError, ManifestError

COMMANDS = ("design", "solve-discrete", "solve-effective", "farfield", "converge",
            "lemma1", "dispersion", "focus", "counts")


def load_schema():
    with resources.files(__package__).joinpath("manifest.schema.json").open() as fh:
        return json.load(fh)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """A validated manifest with resolved paths."""

    def __init__(self, manifest, base_dir, out_dir=None):
        self.manifest = manifest
        self.base = Path(base_dir)
        self.command = manifest["command"]
        self.params = dict(manifest.get("parameters", {}))
        self.tolerances = {"residual": 1e-10, "optical_theorem": 1e-2, **manifest.get("tolerances", {})}
        self.seed = int(manifest.get("seed", 0))
        self.threads = int(manifest.get("threads", 1))
        out = out_dir or manifest.get("output_dir") or f"out/{self.command}"
        self.out = Path(out) if Path(out).is_absolute() or out_dir else self.base / out
        self.inputs = {}
        for name, rel in manifest.get("inputs", {}).items():
            p = Path(rel) if Path(rel).is_absolute() else self.base / rel
            if not p.is_file():
                raise InputError(f"input '{name}' not found: {p}")
            self.inputs[name] = p
        self.results = {}
        self.written = []

    def input_hashes(self):
        return {k: {"path": str(v), "sha256": sha256_file(v)} for k, v in sorted(self.inputs.items())}

    def path(self, name):
        p = self.out / name
        self.written.append(name)
        return p


def _read_manifest(path):
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from None
    import jsonschema

    try:
        jsonschema.validate(manifest, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ManifestError(f"manifest {path} invalid at {where}: {exc.message}") from None
    return manifest


# ----------------------------------------------------------------- helpers


def _vec(v, default):
    return tuple(float(x) for x in (v if v is not None else default))


def _medium(run, key="medium"):
    from .medium import MediumSpec

    if key not in run.inputs:
        raise InputError(f"command '{run.command}' needs input '{key}'")
    return MediumSpec.load(run.inputs[key])


def _grid(domain, nvox):
    if nvox is None:
        return domain
    return domain.with_nvox(nvox)


def _ctx(k, alpha):
    from .wave import WaveContext

    return WaveContext(float(k), _vec(alpha, (0.0, 0.0, 1.0)))


def _predicted_count(N, a, domain):
    from .kernels import ball_volume
    from .placement import integrate_midpoint

    return integrate_midpoint(N, (domain.lo, domain.hi), 32).real / float(ball_volume(a))


def _discrete_memory(M, a, domain, N):
    from .discrete_solver import DENSE_MAX
    from .kernels import ball_volume

    if M <= DENSE_MAX:
        return {"backend": "dense", "bytes": int(16 * M * M)}
    peak = float(np.max(N(domain.with_nvox(16).centers())))
    c = (2 * float(ball_volume(a)) / max(peak, 1e-300)) ** (1 / 3)
    cells = np.ceil(domain.edges / c)
    padded = float(np.prod(4 * cells))
    # kernel transform, padded work array and its transform, plus GMRES basis
    return {"backend": "fft", "bytes": int(16 * (3 * padded + 62 * M))}


def _effective_memory(n):
    from .effective_solver import DENSE_MAX

    if n <= DENSE_MAX:
        return {"backend": "dense", "bytes": int(16 * n * n)}
    return {"backend": "fft", "bytes": int(16 * (3 * 8 * n + 62 * n))}


# ---------------------------------------------------------------- commands


def cmd_design(run, dry):
    from .medium import passivity_check
    from .placement import place_inhomogeneities, save_config

    med = _medium(run)
    if med.N is None:
        raise InputError("design needs a medium with a density 'N'")
    a = float(run.params["a"])
    predicted = _predicted_count(med.N, a, med.domain)
    if dry:
        return {"predicted_M": predicted, "memory": _discrete_memory(int(predicted), a, med.domain, med.N)}
    violations = passivity_check(med.q, med.domain, med.k)
    cfg = place_inhomogeneities(med.N, a, med.domain, med.p_max, random=bool(run.params.get("random", False)),
                                seed=run.seed).with_amplitudes(med.A)
    save_config(cfg, run.path("config.csv"), k=med.k)
    run.written.append("config.json")
    return {"M": cfg.M, "predicted_M": predicted, "passivity_violations": len(violations),
            "ka": med.k * a, **{k: cfg.info[k] for k in ("count_error", "volume_fraction", "cells")}}


def cmd_solve_discrete(run, dry):
    from .discrete_solver import (assemble_discrete_system, dump_system, evaluate_field_discrete,
                                  save_center_field, solve_discrete)
    from .placement import load_config

    cfg, k_side = load_config(run.inputs["config"])
    k = run.params.get("k", k_side)
    if k is None:
        raise InputError("wavenumber k missing from both parameters and config sidecar")
    ctx = _ctx(k, run.params.get("alpha"))
    method = run.params.get("method", "auto")
    if dry:
        mem = {"backend": "dense", "bytes": 16 * cfg.M**2} if method == "dense" or cfg.M <= 4000 else \
            {"backend": "fft" if cfg.lattice is not None else "pairwise", "bytes": int(16 * 64 * cfg.M)}
        return {"M": cfg.M, "memory": mem}
    assemble = "dense" if method == "dense" else ("matrix-free" if method == "iterative" else "auto")
    system = assemble_discrete_system(cfg, ctx, bool(run.params.get("self_term", False)), assemble)
    field = solve_discrete(system, tol=run.tolerances["residual"])
    save_center_field(field, run.path("center_field.csv"))
    if run.params.get("dump_system"):
        dump_system(system, run.path("system.bin"))
    out = {"M": cfg.M, "backend": system.backend, "solve": field.info.to_json(), "ka": ctx.k * cfg.a}
    probes = run.params.get("probes")
    if probes:
        pts = np.asarray(probes, dtype=float)
        vals = evaluate_field_discrete(pts, cfg, field, ctx)
        _save_points(run.path("probes.csv"), pts, vals)
        out["probe_max_scattered"] = float(np.max(np.abs(vals - ctx.u0(pts))))
    return out


def _save_points(path, pts, vals):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "u_re", "u_im"])
        for x, v in zip(pts, vals):
            w.writerow([f"{c:.12e}" for c in (x[0], x[1], x[2], v.real, v.imag)])


def _effective_source(run):
    """``(q values or sampler, grid, k)`` from a medium file or a voxel table."""
    from .effective_solver import load_grid_values
    from .medium import Domain

    if "medium" in run.inputs:
        med = _medium(run)
        grid = _grid(med.domain, run.params.get("nvox"))
        return med.q, grid, float(run.params.get("k", med.k))
    if "q_grid" in run.inputs:
        if "domain" not in run.params or "k" not in run.params:
            raise InputError("a q_grid input needs 'domain' (with nvox) and 'k' parameters")
        grid = _grid(Domain.from_json(run.params["domain"]), run.params.get("nvox"))
        return load_grid_values(run.inputs["q_grid"], grid), grid, float(run.params["k"])
    raise InputError(f"command '{run.command}' needs input 'medium' or 'q_grid'")


def _method_pair(method):
    return {"dense": ("dense", "dense"), "iterative": ("matrix-free", "iterative")}.get(method, ("auto", None))


def cmd_solve_effective(run, dry):
    from .effective_solver import (assemble_ls_system, born_series, residual_check, save_grid_field,
                                   solve_effective)

    q, grid, k = _effective_source(run)
    ctx = _ctx(k, run.params.get("alpha"))
    if dry:
        return {"voxels": grid.size, "kh": k * float(np.max(grid.spacing)), "memory": _effective_memory(grid.size)}
    assemble, solve = _method_pair(run.params.get("method", "auto"))
    system = assemble_ls_system(q, grid, ctx, assemble, run.params.get("self_kernel", "static"))
    field = solve_effective(system, solve, tol=run.tolerances["residual"])
    save_grid_field(field, run.path("field.csv"))
    out = {"voxels": grid.size, "backend": system.backend, "solve": field.info.to_json(),
           "max_scattered": float(np.max(np.abs(field.values - system.rhs)))}
    if min(grid.nvox) >= 3:
        out["pde_residual"] = residual_check(field, system.q, ctx)
    nb = run.params.get("born_terms")
    if nb:
        born = born_series(system.q, ctx, grid, int(nb), system)
        save_grid_field(born, run.path("born.csv"))
        out["born_difference"] = float(np.max(np.abs(born.values - field.values)))
    return out


def cmd_farfield(run, dry):
    from .analysis.farfield import far_field, optical_theorem_check, reciprocity_check, save_pattern, sphere_quadrature
    from .discrete_solver import assemble_discrete_system, solve_discrete
    from .effective_solver import assemble_ls_system, solve_effective
    from .placement import load_config

    nt, nph = int(run.params.get("n_theta", 16)), int(run.params.get("n_phi", 32))
    if "config" in run.inputs:
        cfg, k_side = load_config(run.inputs["config"])
        k = run.params.get("k", k_side)
        if k is None:
            raise InputError("wavenumber k missing from both parameters and config sidecar")
        ctx = _ctx(k, run.params.get("alpha"))
        if dry:
            return {"M": cfg.M, "directions": nt * nph + 1}
        field = solve_discrete(assemble_discrete_system(cfg, ctx, bool(run.params.get("self_term", False))),
                               tol=run.tolerances["residual"])
        source, absorbing = cfg, bool(np.any(cfg.amplitudes.imag < 0))
        q_for_pairs = None
    else:
        q, grid, k = _effective_source(run)
        ctx = _ctx(k, run.params.get("alpha"))
        if dry:
            return {"voxels": grid.size, "directions": nt * nph + 1, "memory": _effective_memory(grid.size)}
        system = assemble_ls_system(q, grid, ctx, self_kernel=run.params.get("self_kernel", "static"))
        field = solve_effective(system, tol=run.tolerances["residual"])
        source, absorbing = system.q, bool(np.any(system.q.imag < 0))
        q_for_pairs = (system.q, grid)
    quad = sphere_quadrature(nt, nph, extra=[ctx.alpha])
    pattern = far_field(source, field, ctx, quad)
    save_pattern(pattern, run.path("farfield.csv"))
    ot = optical_theorem_check(pattern, absorbing=absorbing, tol=run.tolerances["optical_theorem"])
    out = {"optical_theorem": {"lhs": ot.lhs, "rhs": ot.rhs, "relative_gap": ot.relative_gap,
                               "absorbing": absorbing, "verdict": ot.verdict},
           "max_amplitude": float(np.max(np.abs(pattern.values)))}
    pairs = run.params.get("reciprocity_pairs")
    if pairs:
        if q_for_pairs is None:
            raise InputError("reciprocity pairs are supported for voxel media only")
        absd, reld = reciprocity_check(q_for_pairs[0], q_for_pairs[1], ctx.k, pairs)
        out["reciprocity"] = {"absolute": absd, "relative": reld}
    return out


def cmd_converge(run, dry, timings=False):
    from .analysis.convergence import convergence_study, save_convergence

    med = _medium(run)
    if med.N is None:
        raise InputError("converge needs a medium with a density 'N'")
    a_seq = [float(a) for a in run.params["a_sequence"]]
    ctx = _ctx(med.k, run.params.get("alpha"))
    if dry:
        pred = [_predicted_count(med.N, a, med.domain) for a in a_seq]
        return {"predicted_M": pred, "memory": [_discrete_memory(int(m), a, med.domain, med.N)
                                                 for m, a in zip(pred, a_seq)]}
    rep = convergence_study(med.q, med.N, ctx, a_seq, med.domain, probes=run.params.get("probes"),
                            p_max=med.p_max, n_effective=int(run.params.get("n_effective", 64)),
                            self_term=bool(run.params.get("self_term", False)),
                            random=bool(run.params.get("random", False)), seed=run.seed)
    save_convergence(rep, run.path("convergence.csv"), timings=timings)
    out = rep.to_json()
    out["seconds"] = rep.seconds.tolist()
    return out


def cmd_lemma1(run, dry):
    from .analysis.convergence import green_integrand, riemann_study, save_riemann
    from .medium import DEFAULT_P_MAX, Domain
    from .samplers import sampler_from_json

    domain = Domain.from_json(run.params["domain"])
    N = sampler_from_json(run.params["N"])
    z = np.asarray(run.params["source"], dtype=float)
    if domain.contains(z):
        raise InputError("the Green-kernel source point must lie outside the domain")
    a_seq = [float(a) for a in run.params["a_sequence"]]
    if dry:
        return {"predicted_M": [_predicted_count(N, a, domain) for a in a_seq]}
    f = green_integrand(float(run.params["k"]), z)
    rep = riemann_study(f, N, domain, a_seq, float(run.params.get("p_max", DEFAULT_P_MAX)),
                        int(run.params.get("n_reference", 64)))
    save_riemann(rep, run.path("lemma1.csv"))
    return rep.to_json()


def cmd_dispersion(run, dry):
    import csv

    from .analysis.dispersion import DispersionSamples, dispersion_factor, negative_refraction_bands, save_bands
    from .samplers import scalar_function

    if "samples" in run.inputs:
        try:
            data = np.loadtxt(run.inputs["samples"], delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise InputError(f"cannot parse dispersion samples: {exc}") from None
        if data.shape[1] < 2:
            raise InputError("dispersion samples need columns omega,n")
        samples = DispersionSamples(data[:, 0], data[:, 1])
    else:
        if "n_expression" not in run.params or "omega_range" not in run.params:
            raise InputError("dispersion needs a 'samples' input or 'n_expression' with 'omega_range'")
        lo, hi = run.params["omega_range"]
        omega = np.linspace(float(lo), float(hi), int(run.params.get("samples", 101)))
        samples = DispersionSamples.from_function(scalar_function(run.params["n_expression"], "omega"), omega)
    if dry:
        return {"samples": len(samples.omega)}
    d = dispersion_factor(samples)
    bands = negative_refraction_bands(samples)
    save_bands(bands, run.path("bands.csv"))
    with open(run.path("dispersion.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "n", "d"])
        for row in zip(samples.omega, samples.n, d):
            w.writerow([f"{v:.12e}" for v in row])
    return {"bands": bands, "min_d": float(d.min())}


def cmd_focus(run, dry):
    from .analysis.farfield import FarFieldPattern, load_pattern_values, save_pattern, sphere_quadrature
    from .analysis.focusing import born_focusing_design, born_operator, solid_angle_target
    from .effective_solver import save_grid_values
    from .medium import Domain

    grid = _grid(Domain.from_json(run.params["domain"]), run.params.get("nvox"))
    ctx = _ctx(run.params["k"], run.params.get("alpha"))
    if "target" in run.inputs:
        quad, f = load_pattern_values(run.inputs["target"])
    else:
        quad = sphere_quadrature(int(run.params.get("n_theta", 16)), int(run.params.get("n_phi", 32)))
        t = run.params.get("target", {"kind": "solid_angle"})
        f = float(t.get("amplitude", 1.0)) * solid_angle_target(
            quad, _vec(t.get("axis"), (0.0, 0.0, 1.0)), float(t.get("half_angle", np.pi / 6)))
    if dry:
        return {"voxels": grid.size, "directions": len(quad), "memory": {"bytes": int(16 * 3 * grid.size * len(quad))}}
    forward = bool(run.params.get("forward", True))
    design = born_focusing_design(f, grid, ctx, float(run.params["regularization"]), quad, forward=forward)
    save_grid_values(design.q, grid, run.path("q_design.csv"))
    lin = born_operator(grid, ctx, quad.directions) @ design.q
    save_pattern(FarFieldPattern(quad, lin, tuple(ctx.alpha), ctx.k), run.path("born_pattern.csv"))
    return {**design.to_json(), "voxels": grid.size, "directions": len(quad),
            "max_abs_q": float(np.max(np.abs(design.q)))}


def cmd_counts(run, dry):
    import csv

    from .analysis.counts import recipe_count_compare
    from .medium import Domain

    a_list = run.params["a"] if isinstance(run.params["a"], list) else [run.params["a"]]
    kappas = run.params["kappa"] if isinstance(run.params["kappa"], list) else [run.params["kappa"]]
    if "domain" in run.params:
        vol = Domain.from_json(run.params["domain"]).volume
    else:
        vol = float(run.params.get("volume", 1.0))
    rows = [(float(a), float(kp), *recipe_count_compare(float(a), float(kp), float(run.params["N_level"]), vol))
            for kp in kappas for a in a_list]
    if dry:
        return {"rows": len(rows)}
    with open(run.path("counts.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "kappa", "M1", "M2", "ratio"])
        for row in rows:
            w.writerow([f"{v:.12e}" for v in row])
    return {"rows": [dict(zip(("a", "kappa", "M1", "M2", "ratio"), r)) for r in rows]}


HANDLERS = {
    "design": cmd_design,
    "solve-discrete": cmd_solve_discrete,
    "solve-effective": cmd_solve_effective,
    "farfield": cmd_farfield,
    "converge": cmd_converge,
    "lemma1": cmd_lemma1,
    "dispersion": cmd_dispersion,
    "focus": cmd_focus,
    "counts": cmd_counts,
}


def execute(manifest_path, command=None, out_dir=None, dry_run=False, timings=False):
    """Run one manifest; returns the summary dict. Raises :class:`EffmedError`."""
    manifest = _read_manifest(manifest_path)
    if command is not None and command != manifest["command"]:
        raise ManifestError(f"manifest is for '{manifest['command']}', not '{command}'")
    run = Run(manifest, Path(manifest_path).resolve().parent, out_dir)
    os.environ.setdefault("EFFMED_THREADS", str(run.threads))
    handler = HANDLERS[run.command]
    t0 = time.perf_counter()
    kwargs = {"timings": timings} if run.command == "converge" else {}
    if dry_run:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            predicted = handler(run, True, **kwargs)
        return {"command": run.command, "dry_run": True, "valid": True, "inputs": run.input_hashes(),
                "parameters": run.params, "predicted": predicted,
                "warnings": [str(w.message) for w in caught]}
    run.out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results = handler(run, False, **kwargs)
    summary = {
        "command": run.command,
        "version": __version__,
        "manifest": {"path": str(Path(manifest_path).resolve()), "sha256": sha256_file(manifest_path)},
        "inputs": run.input_hashes(),
        "parameters": run.params,
        "tolerances": run.tolerances,
        "seed": run.seed,
        "threads": int(os.environ.get("EFFMED_THREADS", run.threads)),
        "results": results,
        "outputs": sorted(run.written),
        "warnings": [str(w.message) for w in caught],
        "wall_seconds": time.perf_counter() - t0,
    }
    _write_json(run.out / "summary.json", summary)
    return summary


def build_parser():
    p = argparse.ArgumentParser(prog="effmed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"effmed {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("run",):
        sp = sub.add_parser(name, help="run the manifest's command" if name == "run" else f"{name} study")
        sp.add_argument("manifest", help="path to the JSON manifest")
        sp.add_argument("--out", help="output directory (overrides the manifest)")
        sp.add_argument("--dry-run", action="store_true",
                        help="validate inputs and print predicted sizes and memory without solving")
        sp.add_argument("--timings", action="store_true",
                        help="add wall-clock columns to CSV tables (breaks byte-identical reruns)")
    return p


def _error_out(exc, out_dir):
    obj = _jsonable(exc.to_json())
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            _write_json(Path(out_dir) / "error.json", obj)
        except OSError:
            pass


def _guess_out_dir(args):
    if args.out:
        return args.out
    try:
        with open(args.manifest) as fh:
            m = json.load(fh)
        out = m.get("output_dir") or f"out/{m.get('command', 'run')}"
        return out if Path(out).is_absolute() else Path(args.manifest).resolve().parent / out
    except (OSError, ValueError, AttributeError):
        return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    command = None if args.command == "run" else args.command
    try:
        summary = execute(args.manifest, command, args.out, args.dry_run, args.timings)
    except EffmedError as exc:
        _error_out(exc, None if args.dry_run else _guess_out_dir(args))
        return exc.exit_status
    if args.dry_run:
        print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    else:
        print(json.dumps(_jsonable({"command": summary["command"], "outputs": summary["outputs"],
                                    "wall_seconds": summary["wall_seconds"]}), sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
