"""Deterministic virtual device.

A thread block is simulated as n_t sequential task executions per phase with
one logical barrier between the phases; "concurrency" is a property of the
schedule (asserted from the task log), not of the host execution.  Every lane
of the executor (this simulated walk, the vectorized fallback, the compiled
kernels) realizes the same per-cell arithmetic sequence, so their outputs are
bit-identical and the trace below describes all of them.

Counter conventions
-------------------
Arithmetic is tallied by model category so instrumented counts can be compared
structurally against the closed-form traffic/compute model:

* ``flops_interp``     field and gradient interpolation at quadrature points,
                       counted once per (cell, point); multiply and add each
                       count 1, including the first accumulation into zero.
* ``flops_scale_f1``   scaling flux values by detJ and the quadrature weight.
* ``flops_reduce_f1``  basis-phase reduction of flux values against
                       transformed test gradients.
* ``flops_scale_f0`` / ``flops_reduce_f0``  same for the value term, kept in
                       their own buckets because the model's compute count
                       covers gradient-only forms.
* ``flops_form``       self-reported arithmetic inside the physics functions.
* ``flops_aux``        auxiliary-field evaluation at quadrature points.
* ``flops_redundant``  duplicate interpolation by the extra per-component
                       threads (each quadrature-phase thread recomputes all
                       components of u and grad u locally).

``model_flops`` (interp + scale_f1 + reduce_f1) is the quantity the model
predicts per batch.

``bytes_loaded`` counts the per-batch transfer of the geometry, coefficient,
and f-value areas at the device layout's granularity: geometry and coefficient
slots are replicated per component thread (n_t slots rather than n_bc), and
the f-value transfer always covers d+1 slots per (cell, point, component)
even when no f0 slot is written.  Auxiliary-field traffic is tallied
separately in ``bytes_aux`` (per-cell, no replication).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .physics import CellAux, PhysicsForm, PointState
from .schedule import ExecutionGeometry

__all__ = [
    "BatchCounters",
    "TaskRecord",
    "ChunkTrace",
    "ExecutionTrace",
    "shared_image_entries",
    "shared_image_bytes",
    "batch_loaded_bytes",
    "aux_loaded_bytes",
    "model_batch_counters",
    "simulate_chunk",
]


@dataclass
class BatchCounters:
    flops_interp: int = 0
    flops_scale_f1: int = 0
    flops_scale_f0: int = 0
    flops_reduce_f1: int = 0
    flops_reduce_f0: int = 0
    flops_form: int = 0
    flops_aux: int = 0
    flops_redundant: int = 0
    bytes_loaded: int = 0
    bytes_aux: int = 0
    barriers: int = 0

    @property
    def model_flops(self) -> int:
        return self.flops_interp + self.flops_scale_f1 + self.flops_reduce_f1

    @property
    def total_flops(self) -> int:
        return (
            self.model_flops
            + self.flops_scale_f0
            + self.flops_reduce_f0
            + self.flops_form
            + self.flops_aux
            + self.flops_redundant
        )


@dataclass(frozen=True)
class TaskRecord:
    """One (thread, cell) visit.  index is the quadrature point in phase 1
    and the scalar basis function in phase 2; cell is chunk-local."""

    phase: int
    batch: int
    step: int
    thread: int
    block: int
    cell: int
    index: int
    comp: int


@dataclass
class ChunkTrace:
    chunk_index: int
    batches: list[BatchCounters] = field(default_factory=list)
    task_log: Optional[list[TaskRecord]] = None

    @property
    def barrier_count(self) -> int:
        return sum(b.barriers for b in self.batches)


@dataclass
class ExecutionTrace:
    geom: ExecutionGeometry
    scalar_width: int
    chunks: list[ChunkTrace] = field(default_factory=list)
    remainder_cells: int = 0

    def totals(self) -> BatchCounters:
        agg = BatchCounters()
        for chunk in self.chunks:
            for b in chunk.batches:
                for name in vars(agg):
                    setattr(agg, name, getattr(agg, name) + getattr(b, name))
        return agg

    def write_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream)
        writer.writerow(["chunk", "batch", "flops", "bytes_loaded", "barriers"])
        for chunk in self.chunks:
            for i, b in enumerate(chunk.batches):
                writer.writerow(
                    [chunk.chunk_index, i, b.model_flops, b.bytes_loaded, b.barriers]
                )


def shared_image_entries(geom: ExecutionGeometry, needs_f0: bool) -> dict[str, int]:
    """Scalar slot counts of each shared-memory area for one batch.

    Geometry and coefficient areas are sized per thread (one slot group per
    component thread); the tabulation and f-value areas carry d+1 slots per
    basis/point when the form has an f0 term and d otherwise.
    """
    d = geom.dim
    g = d + 1 if needs_f0 else d
    return {
        "tabulation": g * geom.n_bt * geom.n_q,
        "geometry": (d * d + 1) * geom.n_t,
        "coefficients": geom.n_t * geom.n_bt,
        "f_values": g * geom.n_t * geom.n_sqc,
    }


def shared_image_bytes(geom: ExecutionGeometry, scalar_width: int, needs_f0: bool) -> int:
    return scalar_width * sum(shared_image_entries(geom, needs_f0).values())


def batch_loaded_bytes(geom: ExecutionGeometry, scalar_width: int) -> int:
    """Bytes moved per batch: every per-batch area except the tabulation,
    which is loaded once per chunk.  The f-value transfer is counted at full
    d+1 width regardless of whether an f0 slot is written."""
    d = geom.dim
    entries = (
        (d * d + 1) * geom.n_t
        + geom.n_t * geom.n_bt
        + (d + 1) * geom.n_t * geom.n_sqc
    )
    return scalar_width * entries


def aux_loaded_bytes(geom: ExecutionGeometry, scalar_width: int, aux: Optional[CellAux]) -> int:
    if aux is None:
        return 0
    per_cell = aux.n_aux if aux.space == "p0" else aux.n_aux * geom.n_b
    return scalar_width * per_cell * geom.n_bc


def model_batch_counters(
    geom: ExecutionGeometry,
    form: PhysicsForm,
    scalar_width: int,
    aux: Optional[CellAux] = None,
) -> BatchCounters:
    """Closed-form tallies for one full batch.

    The simulated walk produces these same numbers by counting individual
    operations; the fast lanes reuse this builder directly.
    """
    d = geom.dim
    n_bc, n_q, n_bt, n_comp, n_b = geom.n_bc, geom.n_q, geom.n_bt, geom.n_comp, geom.n_b

    interp = n_bc * n_q * n_bt * (2 + (2 + 2 * d) * d)
    scale_f1 = n_bc * n_q * n_comp * 2 * d
    reduce_f1 = n_bc * n_bt * n_q * (2 + 2 * d) * d
    scale_f0 = n_bc * n_q * n_comp * 2 if form.has_f0 else 0
    reduce_f0 = n_bc * n_bt * n_q * 2 if form.has_f0 else 0
    form_flops = n_bc * n_q * n_comp * (form.flops_f1 + (form.flops_f0 if form.has_f0 else 0))

    aux_flops = 0
    if aux is not None and aux.space == "p1":
        aux_flops = n_bc * n_q * 2 * n_b * aux.n_aux
        if form.uses_grad_a:
            aux_flops += n_bc * n_q * 2 * n_b * aux.n_aux * d

    return BatchCounters(
        flops_interp=interp,
        flops_scale_f1=scale_f1,
        flops_scale_f0=scale_f0,
        flops_reduce_f1=reduce_f1,
        flops_reduce_f0=reduce_f0,
        flops_form=form_flops,
        flops_aux=aux_flops,
        flops_redundant=(n_comp - 1) * (interp + aux_flops),
        bytes_loaded=batch_loaded_bytes(geom, scalar_width),
        bytes_aux=aux_loaded_bytes(geom, scalar_width, aux),
        barriers=1,
    )


def simulate_chunk(
    geom: ExecutionGeometry,
    chunk_index: int,
    basis: np.ndarray,
    basis_der: np.ndarray,
    weights: np.ndarray,
    inv_j: np.ndarray,
    det_j: np.ndarray,
    coeffs: np.ndarray,
    aux: Optional[CellAux],
    form: PhysicsForm,
    log_tasks: bool = False,
) -> tuple[np.ndarray, ChunkTrace]:
    """Walk every virtual thread of one chunk, batch by batch.

    All array arguments must already be in the configured scalar dtype and
    cover exactly n_chunk cells.  Returns the element vectors and the chunk's
    trace; per-operation tallies land in the trace as they execute.
    """
    d = geom.dim
    n_b, n_comp, n_q = geom.n_b, geom.n_comp, geom.n_q
    dtype = coeffs.dtype
    zero = dtype.type(0.0)
    scalar_width = dtype.itemsize

    elem = np.zeros((geom.n_chunk, n_b, n_comp), dtype=dtype)
    trace = ChunkTrace(chunk_index=chunk_index, task_log=[] if log_tasks else None)

    for batch in range(geom.n_cb):
        base = batch * geom.n_bc
        counters = BatchCounters()
        counters.bytes_loaded = batch_loaded_bytes(geom, scalar_width)
        counters.bytes_aux = aux_loaded_bytes(geom, scalar_width, aux)

        f1_store = np.zeros((geom.n_bc, n_q, n_comp, d), dtype=dtype)
        f0_store = np.zeros((geom.n_bc, n_q, n_comp), dtype=dtype) if form.has_f0 else None

        # Quadrature phase: thread -> (block, quadrature point, component).
        for t in range(geom.n_t):
            blk = t // geom.block_threads
            slot = t % geom.block_threads
            qgroup = slot // geom.n_tq
            rest = slot % geom.n_tq
            q = rest // n_comp
            thread_comp = rest % n_comp
            primary = thread_comp == 0  # whose interpolation ops count as model work

            for s in range(geom.n_sqc):
                cell = blk * geom.n_bs + s * n_b + qgroup
                cg = base + cell
                inv = inv_j[cg]
                det = det_j[cg]

                u = np.zeros(n_comp, dtype=dtype)
                grad = np.zeros((n_comp, d), dtype=dtype)
                trans = np.zeros((n_b, d), dtype=dtype)
                ops = 0
                for b in range(n_b):
                    phi = basis[q, b]
                    for c in range(n_comp):
                        # The device recomputes the pulled-back gradient for
                        # every component thread and every component.
                        for k in range(d):
                            acc = zero
                            for j in range(d):
                                acc = acc + basis_der[q, b, j] * inv[j, k]
                                ops += 2
                            trans[b, k] = acc
                        u[c] = u[c] + coeffs[cg, b, c] * phi
                        ops += 2
                        for k in range(d):
                            grad[c, k] = grad[c, k] + coeffs[cg, b, c] * trans[b, k]
                            ops += 2

                a_val, grad_a, aux_ops = _simulate_aux(
                    aux, form, cg, basis, trans, q, n_b, d, dtype
                )
                if primary:
                    counters.flops_interp += ops
                    counters.flops_aux += aux_ops
                else:
                    counters.flops_redundant += ops + aux_ops

                state = PointState(u=u, grad_u=grad, a=a_val, grad_a=grad_a)
                f1v = form.f1(state, thread_comp)
                counters.flops_form += form.flops_f1
                for k in range(d):
                    tmp = f1v[k] * det
                    f1_store[cell, q, thread_comp, k] = tmp * weights[q]
                    counters.flops_scale_f1 += 2
                if form.has_f0:
                    f0v = form.f0(state, thread_comp)
                    counters.flops_form += form.flops_f0
                    tmp = f0v * det
                    f0_store[cell, q, thread_comp] = tmp * weights[q]
                    counters.flops_scale_f0 += 2

                if log_tasks:
                    trace.task_log.append(
                        TaskRecord(1, batch, s, t, blk, base + cell, q, thread_comp)
                    )

        # ==== transpose threads ====
        counters.barriers += 1

        # Basis phase: thread -> (block, basis function, component).
        for t in range(geom.n_t):
            blk = t // geom.block_threads
            slot = t % geom.block_threads
            bgroup = slot // geom.n_bt
            rest = slot % geom.n_bt
            b = rest // n_comp
            thread_comp = rest % n_comp

            for s in range(geom.n_sbc):
                cell = blk * geom.n_bs + s * n_q + bgroup
                cg = base + cell
                inv = inv_j[cg]

                e = zero
                for q in range(n_q):
                    if form.has_f0:
                        e = e + basis[q, b] * f0_store[cell, q, thread_comp]
                        counters.flops_reduce_f0 += 2
                    for k in range(d):
                        acc = zero
                        for j in range(d):
                            acc = acc + basis_der[q, b, j] * inv[j, k]
                            counters.flops_reduce_f1 += 2
                        e = e + acc * f1_store[cell, q, thread_comp, k]
                        counters.flops_reduce_f1 += 2
                elem[cg, b, thread_comp] = e

                if log_tasks:
                    trace.task_log.append(
                        TaskRecord(2, batch, s, t, blk, base + cell, b, thread_comp)
                    )

        trace.batches.append(counters)

    return elem, trace


def _simulate_aux(aux, form, cg, basis, trans, q, n_b, d, dtype):
    """Auxiliary field at one quadrature point of one cell; returns the value,
    the gradient (zeros unless the form declares it reads grad a), and the
    flop tally."""
    if aux is None:
        return None, None, 0
    zero = dtype.type(0.0)
    n_aux = aux.n_aux
    ops = 0
    if aux.space == "p0":
        a_val = aux.values[cg].copy()
        grad_a = np.zeros((n_aux, d), dtype=dtype)
        return a_val, grad_a, ops
    a_val = np.zeros(n_aux, dtype=dtype)
    grad_a = np.zeros((n_aux, d), dtype=dtype)
    for b in range(n_b):
        for j in range(n_aux):
            a_val[j] = a_val[j] + aux.values[cg, b, j] * basis[q, b]
            ops += 2
    if form.uses_grad_a:
        for b in range(n_b):
            for j in range(n_aux):
                for k in range(d):
                    grad_a[j, k] = grad_a[j, k] + aux.values[cg, b, j] * trans[b, k]
                    ops += 2
    return a_val, grad_a, ops
