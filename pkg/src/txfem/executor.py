"""Two-phase, thread-transposed residual integration over chunks of cells.

``integrate_transposed`` partitions the mesh into full chunks plus a
remainder: chunks run on the virtual device (compiled, vectorized, or
simulated lane, all bit-identical), remainder cells go through the serial
reference integrator, and everything is scatter-added in a fixed order.  The
residual is therefore independent of the (n_bl, n_cb) partitioning, bitwise
so in float64.

``execute_chunk`` is the per-chunk entry point.  When ``jobs`` > 1, distinct
chunks run on a thread pool; each writes a disjoint slice of the element
vector array, so results match the serial order exactly.  With ``jobs`` == 1
and no task logging, all full chunks are handed to the lane kernel as one
span, which is arithmetically the same cells in the same per-cell order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional, Union

import numpy as np

from . import backend as _backend
from . import _kernels_py
from .device import (
    ChunkTrace,
    ExecutionTrace,
    model_batch_counters,
    shared_image_bytes,
    simulate_chunk,
)
from .element import QuadratureRule, Tabulation
from .errors import CapacityError, ShapeError
from .mesh import CellGeometry, FieldLayout, Mesh, gather_coefficients, scatter_add_element_vectors
from .physics import CellAux, PhysicsForm
from .reference import integrate_reference
from .schedule import DEFAULT_THREAD_LIMIT, ExecutionGeometry, derive_execution_geometry

__all__ = [
    "DEFAULT_SHARED_MEM_LIMIT",
    "scalar_dtype",
    "execute_chunk",
    "integrate_transposed",
]

DEFAULT_SHARED_MEM_LIMIT = 48 * 1024

_DTYPE_NAMES = {"f32": np.float32, "f64": np.float64}


def scalar_dtype(spec: Union[str, np.dtype, type]) -> np.dtype:
    """Normalize 'f32'/'f64' or a numpy dtype to np.dtype."""
    if isinstance(spec, str):
        try:
            return np.dtype(_DTYPE_NAMES[spec])
        except KeyError:
            raise ValueError(f"scalar must be 'f32' or 'f64', got {spec!r}") from None
    dt = np.dtype(spec)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"scalar must be float32 or float64, got {dt}")
    return dt


def _check_capacity(geom: ExecutionGeometry, width: int, needs_f0: bool, limit: Optional[int]):
    required = shared_image_bytes(geom, width, needs_f0)
    if limit is not None and required > limit:
        raise CapacityError(
            f"shared-memory image needs {required} bytes, budget is {limit} "
            f"(n_bl={geom.n_bl}, scalar width {width})",
            required_bytes=required,
            limit_bytes=limit,
        )


def _device_arrays(tab, rule, cell_geom, coeffs, aux, dtype):
    """Cast all device inputs to the configured scalar type, once."""
    dev_aux = None
    if aux is not None:
        dev_aux = CellAux(space=aux.space, values=np.ascontiguousarray(aux.values, dtype=dtype))
    return (
        np.ascontiguousarray(tab.basis, dtype=dtype),
        np.ascontiguousarray(tab.basis_der, dtype=dtype),
        np.ascontiguousarray(rule.weights, dtype=dtype),
        np.ascontiguousarray(cell_geom.inv_jacobians, dtype=dtype),
        np.ascontiguousarray(cell_geom.determinants, dtype=dtype),
        np.ascontiguousarray(coeffs, dtype=dtype),
        dev_aux,
    )


def _resolve_backend(requested: Optional[str], form: PhysicsForm, n_q: int, aux) -> str:
    if requested == "compiled":
        if _backend.compiled_kernel(form, n_q, aux) is None:
            raise ValueError(
                "compiled backend requested but unavailable for this configuration"
            )
        return "compiled"
    if requested in ("python", "simulated"):
        return requested
    if requested is not None:
        raise ValueError(f"unknown backend {requested!r}")
    if _backend.compiled_kernel(form, n_q, aux) is not None:
        return "compiled"
    return "python"


def _run_span(lane, form, basis, basis_der, weights, inv_j, det_j, coeffs, aux, out):
    if lane == "compiled":
        kernel = _backend.compiled_kernel(form, basis.shape[0], aux)
        _backend.run_compiled(kernel, basis, basis_der, weights, inv_j, det_j, coeffs, aux, out)
    else:
        _kernels_py.integrate_cells(form, basis, basis_der, weights, inv_j, det_j, coeffs, aux, out)


def execute_chunk(
    geom: ExecutionGeometry,
    tab: Tabulation,
    rule: QuadratureRule,
    cell_geom: CellGeometry,
    coeffs: np.ndarray,
    aux: Optional[CellAux],
    form: PhysicsForm,
    *,
    dtype: Union[str, np.dtype] = "f64",
    chunk_index: int = 0,
    shared_mem_limit: Optional[int] = DEFAULT_SHARED_MEM_LIMIT,
    log_tasks: bool = False,
    backend: Optional[str] = None,
) -> tuple[np.ndarray, ChunkTrace]:
    """Integrate exactly one chunk of cells on the virtual device."""
    dt = scalar_dtype(dtype)
    if cell_geom.n_cells != geom.n_chunk or coeffs.shape[0] != geom.n_chunk:
        raise ShapeError(
            f"chunk slice covers {cell_geom.n_cells} cells, expected {geom.n_chunk}"
        )
    form.require_aux(aux)
    _check_capacity(geom, dt.itemsize, form.has_f0, shared_mem_limit)

    arrays = _device_arrays(tab, rule, cell_geom, coeffs, aux, dt)
    basis, basis_der, weights, inv_j, det_j, dev_coeffs, dev_aux = arrays

    if log_tasks or backend == "simulated":
        return simulate_chunk(
            geom, chunk_index, basis, basis_der, weights, inv_j, det_j,
            dev_coeffs, dev_aux, form, log_tasks=log_tasks,
        )

    lane = _resolve_backend(backend, form, geom.n_q, dev_aux)
    out = np.empty((geom.n_chunk, geom.n_b, form.n_comp), dtype=dt)
    _run_span(lane, form, basis, basis_der, weights, inv_j, det_j, dev_coeffs, dev_aux, out)
    per_batch = model_batch_counters(geom, form, dt.itemsize, dev_aux)
    trace = ChunkTrace(
        chunk_index=chunk_index,
        batches=[replace(per_batch) for _ in range(geom.n_cb)],
    )
    return out, trace


def integrate_transposed(
    mesh: Mesh,
    layout: FieldLayout,
    tab: Tabulation,
    rule: QuadratureRule,
    form: PhysicsForm,
    coeffs_global: np.ndarray,
    aux: Optional[CellAux] = None,
    *,
    n_bl: int,
    n_cb: int,
    dtype: Union[str, np.dtype] = "f64",
    jobs: int = 1,
    shared_mem_limit: Optional[int] = DEFAULT_SHARED_MEM_LIMIT,
    thread_limit: int = DEFAULT_THREAD_LIMIT,
    log_tasks: bool = False,
    backend: Optional[str] = None,
    cell_geom: Optional[CellGeometry] = None,
) -> tuple[np.ndarray, ExecutionTrace]:
    """Assemble the global residual with the transposed schedule.

    Returns (residual, trace).  The residual dtype is the configured scalar;
    remainder cells are integrated by the reference path in float64 and then
    cast.  Pass a precomputed ``cell_geom`` to skip recomputing Jacobians.
    """
    dt = scalar_dtype(dtype)
    geom = derive_execution_geometry(
        mesh.dim, tab.n_b, form.n_comp, rule.n_q, n_bl, n_cb, mesh.n_cells,
        thread_limit=thread_limit,
    )
    form.require_aux(aux)
    _check_capacity(geom, dt.itemsize, form.has_f0, shared_mem_limit)

    if cell_geom is None:
        from .mesh import compute_geometry

        cell_geom = compute_geometry(mesh)
    coeffs = gather_coefficients(mesh, layout, np.asarray(coeffs_global, dtype=np.float64))

    span = geom.n_chunks * geom.n_chunk
    elem = np.empty((mesh.n_cells, geom.n_b, form.n_comp), dtype=dt)
    trace = ExecutionTrace(geom=geom, scalar_width=dt.itemsize, remainder_cells=geom.n_r)

    if span:
        arrays = _device_arrays(
            tab, rule,
            CellGeometry(cell_geom.inv_jacobians[:span], cell_geom.determinants[:span]),
            coeffs[:span],
            None if aux is None else aux.cell_slice(0, span),
            dt,
        )
        basis, basis_der, weights, inv_j, det_j, dev_coeffs, dev_aux = arrays

        if log_tasks or backend == "simulated":
            for ci in range(geom.n_chunks):
                lo, hi = ci * geom.n_chunk, (ci + 1) * geom.n_chunk
                chunk_elem, chunk_trace = simulate_chunk(
                    geom, ci, basis, basis_der, weights,
                    inv_j[lo:hi], det_j[lo:hi], dev_coeffs[lo:hi],
                    None if dev_aux is None else dev_aux.cell_slice(lo, hi),
                    form, log_tasks=log_tasks,
                )
                elem[lo:hi] = chunk_elem
                trace.chunks.append(chunk_trace)
        else:
            lane = _resolve_backend(backend, form, geom.n_q, dev_aux)

            def run_chunk(ci: int) -> None:
                lo, hi = ci * geom.n_chunk, (ci + 1) * geom.n_chunk
                _run_span(
                    lane, form, basis, basis_der, weights,
                    inv_j[lo:hi], det_j[lo:hi], dev_coeffs[lo:hi],
                    None if dev_aux is None else dev_aux.cell_slice(lo, hi),
                    elem[lo:hi],
                )

            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    list(pool.map(run_chunk, range(geom.n_chunks)))
            else:
                # One kernel invocation over all full chunks: the same cells
                # in the same per-cell order, so bit-identical to chunk-wise
                # execution (asserted in the test suite).
                _run_span(
                    lane, form, basis, basis_der, weights,
                    inv_j, det_j, dev_coeffs, dev_aux, elem[:span],
                )

            per_batch = model_batch_counters(geom, form, dt.itemsize, dev_aux)
            for ci in range(geom.n_chunks):
                trace.chunks.append(
                    ChunkTrace(
                        chunk_index=ci,
                        batches=[replace(per_batch) for _ in range(geom.n_cb)],
                    )
                )

    if geom.n_r:
        rem_geom = CellGeometry(
            cell_geom.inv_jacobians[span:], cell_geom.determinants[span:]
        )
        rem_aux = None if aux is None else aux.cell_slice(span, mesh.n_cells)
        rem = integrate_reference(tab, rule, rem_geom, form, coeffs[span:], rem_aux)
        elem[span:] = rem.astype(dt)

    residual = scatter_add_element_vectors(mesh, layout, elem)
    return residual, trace
