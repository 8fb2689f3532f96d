"""Command-line harness: correctness checks, performance-model reports,
parameter sweeps, benchmark timing, and kernel-source emission.

Wall-clock numbers from ``bench`` and ``sweep`` time the host simulation of
the virtual device; they are not comparable to hardware measurements.  Flop
rates are therefore derived from the analytic per-batch flop model, which is
also how the instrumented counters are cross-checked.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend as _backend
from . import perf_model
from .codegen import generate_kernel_source
from .element import quadrature_rule, tabulate
from .errors import CapacityError, ConfigurationError
from .executor import DEFAULT_SHARED_MEM_LIMIT, integrate_transposed, scalar_dtype
from .mesh import (
    FieldLayout,
    Mesh,
    compute_geometry,
    generate_unit_simplex_mesh,
)
from .physics import CellAux, elasticity_form, poisson_form, poisson_varcoef_form
from .reference import assemble_residual, integrate_reference
from .schedule import derive_execution_geometry

__all__ = ["RunConfig", "run", "seeded_field", "main"]

_FORMS = {
    "poisson": poisson_form,
    "poisson-varcoef": poisson_varcoef_form,
    "elasticity": elasticity_form,
}

_SWEEP_BLOCKS = (16, 20, 24, 28, 32, 36)
_SWEEP_BATCHES = (4, 8, 12, 16)

_CHECK_TOLERANCE = {"f32": 1e-5, "f64": 1e-11}


@dataclass
class RunConfig:
    mode: str
    dim: int = 2
    physics: str = "poisson"
    refine: int = 8
    n_bl: int = 16
    n_cb: int = 8
    scalar: str = "f64"
    output: Optional[str] = None
    seed: int = 1234
    jobs: int = 1
    reps: int = 5
    field: str = "random"
    tolerance: Optional[float] = None
    shared_mem_limit: Optional[int] = DEFAULT_SHARED_MEM_LIMIT
    backend: Optional[str] = None


def seeded_field(mesh: Mesh, layout: FieldLayout, kind: str, seed: int) -> np.ndarray:
    """Deterministic global coefficient vector.

    random: standard normal draws from the seeded generator.
    affine: component c holds (c+1)*(2x + 3y [- z] + 1) at each vertex.
    constant: all ones.
    """
    size = layout.global_size(mesh)
    if kind == "random":
        rng = np.random.default_rng(seed)
        return rng.standard_normal(size)
    if kind == "constant":
        return np.ones(size)
    if kind == "affine":
        v = mesh.vertices
        base = 2.0 * v[:, 0] + 3.0 * v[:, 1] + 1.0
        if mesh.dim == 3:
            base = base - v[:, 2]
        out = np.empty((mesh.n_vertices, layout.n_comp))
        for c in range(layout.n_comp):
            out[:, c] = (c + 1) * base
        return out.ravel()
    raise ValueError(f"unknown field kind {kind!r}")


def _seeded_aux(mesh: Mesh, seed: int) -> CellAux:
    """Per-cell constant coefficient in [0.5, 1.5), deterministic."""
    rng = np.random.default_rng(seed + 1)
    return CellAux(space="p0", values=rng.uniform(0.5, 1.5, size=(mesh.n_cells, 1)))


def max_relative_error(result: np.ndarray, reference: np.ndarray) -> float:
    """max |result - reference| relative to the reference's max magnitude."""
    scale = max(float(np.max(np.abs(reference))), 1e-300)
    return float(np.max(np.abs(result.astype(np.float64) - reference))) / scale


def _problem(config: RunConfig):
    form = _FORMS[config.physics](config.dim)
    mesh = generate_unit_simplex_mesh(config.dim, config.refine)
    layout = FieldLayout(n_comp=form.n_comp)
    rule = quadrature_rule(config.dim, 1)
    tab = tabulate(config.dim, rule)
    cell_geom = compute_geometry(mesh)
    coeffs = seeded_field(mesh, layout, config.field, config.seed)
    aux = _seeded_aux(mesh, config.seed) if form.n_aux else None
    return form, mesh, layout, rule, tab, cell_geom, coeffs, aux


def _reference_residual(mesh, layout, tab, rule, cell_geom, form, coeffs, aux):
    from .mesh import gather_coefficients

    blocks = gather_coefficients(mesh, layout, coeffs)
    elem = integrate_reference(tab, rule, cell_geom, form, blocks, aux)
    return assemble_residual(mesh, layout, elem)


def _model_totals(geom, scalar_width):
    bytes_pb, flops_pb = perf_model.traffic_and_flops(geom, scalar_width)
    batches = geom.n_chunks * geom.n_cb
    return bytes_pb * batches, flops_pb * batches


def _run_check(config: RunConfig) -> int:
    form, mesh, layout, rule, tab, cell_geom, coeffs, aux = _problem(config)
    ref = _reference_residual(mesh, layout, tab, rule, cell_geom, form, coeffs, aux)
    residual, trace = integrate_transposed(
        mesh, layout, tab, rule, form, coeffs, aux,
        n_bl=config.n_bl, n_cb=config.n_cb, dtype=config.scalar,
        jobs=config.jobs, shared_mem_limit=config.shared_mem_limit,
        backend=config.backend, cell_geom=cell_geom,
    )
    err = max_relative_error(residual, ref)
    tol = config.tolerance if config.tolerance is not None else _CHECK_TOLERANCE[config.scalar]
    ok = err <= tol
    print(
        f"check {config.physics} {config.dim}D {config.scalar} "
        f"refine={config.refine} n_bl={config.n_bl} n_cb={config.n_cb}: "
        f"{mesh.n_cells} cells, {trace.remainder_cells} on the remainder path"
    )
    print(f"max relative error {err:.3e} (tolerance {tol:.1e}): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _time_once(call) -> float:
    t0 = time.perf_counter()
    call()
    return time.perf_counter() - t0


def _run_bench(config: RunConfig) -> int:
    form, mesh, layout, rule, tab, cell_geom, coeffs, aux = _problem(config)
    geom = derive_execution_geometry(
        mesh.dim, tab.n_b, form.n_comp, rule.n_q, config.n_bl, config.n_cb, mesh.n_cells
    )
    width = scalar_dtype(config.scalar).itemsize
    _, model_flops = _model_totals(geom, width)
    reps = max(config.reps, 5)

    print("bench: wall times measure the host simulation of the virtual device,")
    print("bench: not device hardware; flop rates use the analytic flop model.")
    print(
        f"bench {config.physics} {config.dim}D {config.scalar} refine={config.refine} "
        f"n_bl={config.n_bl} n_cb={config.n_cb}: {mesh.n_cells} cells, "
        f"{geom.n_chunks} chunks, {trace_cells(geom)} device cells, "
        f"model flops {model_flops}"
    )

    lanes = [config.backend] if config.backend else _available_lanes(form, rule, aux)
    for lane in lanes:
        def call():
            integrate_transposed(
                mesh, layout, tab, rule, form, coeffs, aux,
                n_bl=config.n_bl, n_cb=config.n_cb, dtype=config.scalar,
                jobs=config.jobs, shared_mem_limit=config.shared_mem_limit,
                backend=lane, cell_geom=cell_geom,
            )

        times = [_time_once(call) for _ in range(reps)]
        wall = statistics.median(times)
        rate = model_flops / wall / 1e6 if wall > 0 else float("inf")
        print(
            f"  backend={lane:8s} median {wall * 1e3:9.3f} ms over {reps} reps, "
            f"{rate:12.1f} model MFLOP/s"
        )
    return 0


def trace_cells(geom) -> int:
    return geom.n_chunks * geom.n_chunk


def _available_lanes(form, rule, aux) -> list[str]:
    lanes = []
    if _backend.compiled_kernel(form, rule.n_q, aux) is not None:
        lanes.append("compiled")
    lanes.append("python")
    return lanes


def _run_model(config: RunConfig) -> int:
    form = _FORMS[config.physics](config.dim)
    rule = quadrature_rule(config.dim, 1)
    geom = derive_execution_geometry(
        config.dim, config.dim + 1, form.n_comp, rule.n_q,
        config.n_bl, config.n_cb, 0,
    )
    width = scalar_dtype(config.scalar).itemsize
    est = perf_model.build_estimate(geom, width, needs_f0=form.has_f0)
    print(f"performance model for {config.physics} in {config.dim}D ({config.scalar})")
    print(perf_model.estimate_table(est))
    bound = perf_model.predict_bandwidth_bound(perf_model.balance(geom), 150.0)
    print(f"bandwidth-bound rate at 150 GB/s: {bound:.1f} GFLOP/s")
    if config.output:
        with open(config.output, "w", newline="") as f:
            perf_model.write_estimate_csv(f, [est])
        print(f"wrote {config.output}")
    return 0


_SWEEP_COLUMNS = [
    "dim", "physics", "scalar", "n_bl", "n_cb", "n_cells", "max_rel_err",
    "model_flops", "bytes", "beta", "wall_ms", "mflops_rate",
]


def _run_sweep(config: RunConfig) -> int:
    form, mesh, layout, rule, tab, cell_geom, coeffs, aux = _problem(config)
    ref = _reference_residual(mesh, layout, tab, rule, cell_geom, form, coeffs, aux)
    tol = config.tolerance if config.tolerance is not None else _CHECK_TOLERANCE[config.scalar]
    width = scalar_dtype(config.scalar).itemsize

    rows = []
    failures = 0
    for n_bl in _SWEEP_BLOCKS:
        for n_cb in _SWEEP_BATCHES:
            geom = derive_execution_geometry(
                mesh.dim, tab.n_b, form.n_comp, rule.n_q, n_bl, n_cb, mesh.n_cells
            )

            def call():
                return integrate_transposed(
                    mesh, layout, tab, rule, form, coeffs, aux,
                    n_bl=n_bl, n_cb=n_cb, dtype=config.scalar,
                    jobs=config.jobs, shared_mem_limit=config.shared_mem_limit,
                    backend=config.backend, cell_geom=cell_geom,
                )

            t0 = time.perf_counter()
            residual, _ = call()
            wall = time.perf_counter() - t0
            err = max_relative_error(residual, ref)
            ok = err <= tol
            failures += 0 if ok else 1
            model_bytes, model_flops = _model_totals(geom, width)
            beta = model_flops / model_bytes if model_bytes else 0.0
            rows.append(
                [
                    mesh.dim, config.physics, config.scalar, n_bl, n_cb, mesh.n_cells,
                    f"{err:.6e}", model_flops, model_bytes, f"{beta:.6f}",
                    f"{wall * 1e3:.3f}",
                    f"{model_flops / wall / 1e6:.1f}" if wall > 0 else "inf",
                ]
            )
            print(
                f"sweep n_bl={n_bl:3d} n_cb={n_cb:3d}: err {err:.3e} "
                f"{'PASS' if ok else 'FAIL'} wall {wall * 1e3:9.3f} ms"
            )

    if config.output:
        with open(config.output, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(_SWEEP_COLUMNS)
            writer.writerows(rows)
        print(f"wrote {config.output} ({len(rows)} rows)")
    print(f"sweep: {len(rows) - failures}/{len(rows)} configurations passed")
    return 0 if failures == 0 else 1


def _run_emit_kernel(config: RunConfig) -> int:
    form = _FORMS[config.physics](config.dim)
    rule = quadrature_rule(config.dim, 1)
    geom = derive_execution_geometry(
        config.dim, config.dim + 1, form.n_comp, rule.n_q,
        config.n_bl, config.n_cb, 0,
    )
    source = generate_kernel_source(geom, form, config.scalar)
    if config.output:
        with open(config.output, "w") as f:
            f.write(source.text)
        print(f"wrote {source.entry_name} to {config.output}")
    else:
        sys.stdout.write(source.text)
    return 0


def run(config: RunConfig) -> int:
    """Execute one mode; returns the process exit code."""
    handlers = {
        "check": _run_check,
        "bench": _run_bench,
        "model": _run_model,
        "sweep": _run_sweep,
        "emit-kernel": _run_emit_kernel,
    }
    try:
        return handlers[config.mode](config)
    except (ConfigurationError, CapacityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="txfem",
        description="Thread-transposed FEM residual integration on a simulated device.",
    )
    parser.add_argument(
        "--mode", required=True, choices=["check", "bench", "model", "sweep", "emit-kernel"]
    )
    parser.add_argument("--dim", type=int, default=2, choices=[2, 3])
    parser.add_argument("--physics", default="poisson", choices=sorted(_FORMS))
    parser.add_argument("--refine", type=int, default=8, help="grid subdivisions per axis")
    parser.add_argument("--num-blocks", dest="n_bl", type=int, default=16,
                        help="concurrent cell blocks per batch")
    parser.add_argument("--num-batches", dest="n_cb", type=int, default=8,
                        help="serial batches per chunk")
    parser.add_argument("--real", dest="scalar", default="f64", choices=["f32", "f64"])
    parser.add_argument("--output", default=None, help="CSV / kernel output path")
    parser.add_argument("--seed", type=int, default=1234)
    parser.add_argument("--jobs", type=int, default=1, help="host threads for chunks")
    parser.add_argument("--reps", type=int, default=5, help="bench repetitions")
    parser.add_argument("--field", default="random", choices=["random", "affine", "constant"])
    parser.add_argument("--tolerance", type=float, default=None,
                        help="override the check tolerance")
    parser.add_argument("--shared-mem-kib", type=float, default=48.0,
                        help="shared-memory budget in KiB, 0 disables the check")
    parser.add_argument("--backend", default=None,
                        choices=["compiled", "python", "simulated"])
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    limit = None if args.shared_mem_kib == 0 else int(args.shared_mem_kib * 1024)
    config = RunConfig(
        mode=args.mode,
        dim=args.dim,
        physics=args.physics,
        refine=args.refine,
        n_bl=args.n_bl,
        n_cb=args.n_cb,
        scalar=args.scalar,
        output=args.output,
        seed=args.seed,
        jobs=args.jobs,
        reps=args.reps,
        field=args.field,
        tolerance=args.tolerance,
        shared_mem_limit=limit,
        backend=args.backend,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
