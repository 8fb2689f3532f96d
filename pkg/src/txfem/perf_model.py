"""Closed-form device model: shared-memory footprint, per-batch traffic and
compute, algorithmic balance, and an occupancy hint.

Everything here is exact integer/rational arithmetic over the execution
geometry; the executor's instrumented counters must match these values
exactly, which the test suite asserts for a spread of geometries.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import IO

import csv

from .schedule import ExecutionGeometry

__all__ = [
    "PerfEstimate",
    "shared_memory_bytes",
    "traffic_and_flops",
    "balance",
    "predict_bandwidth_bound",
    "occupancy_hint",
    "build_estimate",
    "estimate_table",
    "write_estimate_csv",
]

DEFAULT_SHARED_MEM_CAP = 48 * 1024


@dataclass(frozen=True)
class PerfEstimate:
    geom: ExecutionGeometry
    scalar_width: int
    shared_bytes_block: int  # M
    shared_bytes_per_cell: Fraction  # M_c = M / n_bc
    bytes_per_batch: int
    flops_per_batch: int
    balance: Fraction  # flops per byte at this scalar width
    occupancy_hint: int


def shared_memory_bytes(
    geom: ExecutionGeometry, scalar_width: int, needs_f0: bool = True
) -> tuple[int, Fraction]:
    """Shared-memory footprint of one thread block, total and per cell.

    Areas: per-thread geometry slots (d^2+1 each), basis tabulation, per-thread
    coefficient slots, and the f-value staging area.  Gradient-only forms skip
    the value slots, shrinking the tabulation and f areas from d+1 to d
    entries per basis/point.
    """
    d = geom.dim
    g = d + 1 if needs_f0 else d
    entries = (
        (d * d + 1) * geom.n_t
        + g * geom.n_bt * geom.n_q
        + geom.n_t * geom.n_bt
        + g * geom.n_t * geom.n_sqc
    )
    m = scalar_width * entries
    return m, Fraction(m, geom.n_bc)


def traffic_and_flops(geom: ExecutionGeometry, scalar_width: int) -> tuple[int, int]:
    """Bytes moved and flops executed per cell batch.

    Traffic covers the geometry, coefficient, and f-value transfers (the
    tabulation is loaded once per chunk); the flop count covers field and
    gradient interpolation, flux scaling, and the basis-phase reduction.
    """
    d = geom.dim
    bytes_per_batch = scalar_width * geom.n_t * (
        (d * d + 1) + geom.n_bt + (d + 1) * geom.n_q
    )
    flops_per_cell = (
        (2 + (2 + 2 * d) * d) * geom.n_bt * geom.n_q
        + 2 * d * geom.n_comp * geom.n_q
        + (2 + 2 * d) * d * geom.n_q * geom.n_bt
    )
    flops_per_batch = flops_per_cell * geom.n_bs * geom.n_bl
    return bytes_per_batch, flops_per_batch


def balance(geom: ExecutionGeometry) -> Fraction:
    """Algorithmic balance in flops per byte, at 4-byte scalars."""
    bytes_per_batch, flops_per_batch = traffic_and_flops(geom, 4)
    return Fraction(flops_per_batch, bytes_per_batch)


def predict_bandwidth_bound(beta, achievable_bw_gbs: float) -> float:
    """Bandwidth-bound flop-rate ceiling in GFLOP/s."""
    if beta <= 0 or achievable_bw_gbs < 0:
        raise ValueError("balance must be positive and bandwidth non-negative")
    return float(beta) * achievable_bw_gbs


def occupancy_hint(shared_bytes_block: int, cap: int = DEFAULT_SHARED_MEM_CAP) -> int:
    """How many thread blocks fit in the shared-memory cap."""
    return cap // shared_bytes_block


def build_estimate(
    geom: ExecutionGeometry,
    scalar_width: int = 4,
    needs_f0: bool = False,
    cap: int = DEFAULT_SHARED_MEM_CAP,
) -> PerfEstimate:
    m, m_c = shared_memory_bytes(geom, scalar_width, needs_f0)
    bytes_per_batch, flops_per_batch = traffic_and_flops(geom, scalar_width)
    return PerfEstimate(
        geom=geom,
        scalar_width=scalar_width,
        shared_bytes_block=m,
        shared_bytes_per_cell=m_c,
        bytes_per_batch=bytes_per_batch,
        flops_per_batch=flops_per_batch,
        balance=Fraction(flops_per_batch, bytes_per_batch),
        occupancy_hint=occupancy_hint(m, cap),
    )


_CSV_FIELDS = [
    "dim", "n_b", "n_comp", "n_q", "n_bl", "n_cb", "n_t", "n_bc",
    "scalar_width", "shared_bytes_block", "shared_bytes_per_cell",
    "bytes_per_batch", "flops_per_batch", "balance", "occupancy_hint",
]


def estimate_table(est: PerfEstimate) -> str:
    """Human-readable report of one estimate."""
    g = est.geom
    anchor = balance(g)
    lines = [
        f"execution geometry   d={g.dim} n_b={g.n_b} n_comp={g.n_comp} n_q={g.n_q}",
        f"decomposition        n_bl={g.n_bl} n_cb={g.n_cb} "
        f"(block {g.n_bs} cells, batch {g.n_bc} cells, chunk {g.n_chunk} cells)",
        f"threads per block    {g.n_t}",
        f"scalar width         {est.scalar_width} bytes",
        f"shared memory M      {est.shared_bytes_block} bytes "
        f"({est.shared_bytes_block / 1024:.2f} KiB)",
        f"shared per cell M_c  {float(est.shared_bytes_per_cell):.2f} bytes",
        f"bytes per batch      {est.bytes_per_batch}",
        f"flops per batch      {est.flops_per_batch}",
        f"balance (this width) {est.balance} = {float(est.balance):.4f} flop/byte",
        f"balance (4-byte)     {anchor} = {float(anchor):.4f} flop/byte",
        f"occupancy hint       {est.occupancy_hint} resident blocks",
    ]
    return "\n".join(lines)


def write_estimate_csv(stream: IO[str], estimates: list[PerfEstimate]) -> None:
    writer = csv.writer(stream)
    writer.writerow(_CSV_FIELDS)
    for est in estimates:
        g = est.geom
        writer.writerow(
            [
                g.dim, g.n_b, g.n_comp, g.n_q, g.n_bl, g.n_cb, g.n_t, g.n_bc,
                est.scalar_width, est.shared_bytes_block,
                f"{float(est.shared_bytes_per_cell):.6g}",
                est.bytes_per_batch, est.flops_per_batch,
                f"{float(est.balance):.9g}", est.occupancy_hint,
            ]
        )
