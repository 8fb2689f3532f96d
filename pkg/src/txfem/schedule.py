"""Derived scheduling quantities for the chunk/batch/block decomposition.

The mesh is cut into chunks (one per simulated thread block), each chunk into
n_cb batches executed in sequence, each batch into n_bl cell blocks executed
concurrently.  A block holds n_bs = n_b * n_q cells, which is the smallest
group that keeps every thread busy in both phases: the quadrature phase puts
n_q * n_comp threads on each cell, the basis phase n_b * n_comp.

n_bs uses the product of the basis and quadrature sizes rather than their
least common multiple; the per-phase serial counts (n_sqc = n_q, n_sbc = n_b)
cover every cell exactly once only for the product, and product == LCM for
all shipped elements anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError

__all__ = ["ExecutionGeometry", "derive_execution_geometry", "DEFAULT_THREAD_LIMIT"]

DEFAULT_THREAD_LIMIT = 1024


@dataclass(frozen=True)
class ExecutionGeometry:
    dim: int
    n_b: int  # scalar basis functions per element
    n_comp: int  # field components
    n_q: int  # quadrature points
    n_bt: int  # total scalar basis functions: n_b * n_comp
    n_bs: int  # cells per block: n_b * n_q
    n_bl: int  # concurrent blocks per batch
    n_bc: int  # cells per batch: n_bs * n_bl
    n_cb: int  # batches per chunk
    n_chunk: int  # cells per chunk: n_cb * n_bc
    n_t: int  # threads per thread block: n_bc * n_comp
    n_tq: int  # quadrature-phase threads per cell: n_q * n_comp
    n_sqc: int  # sequential cells per thread, quadrature phase
    n_sbc: int  # sequential cells per thread, basis phase
    n_cbc: int  # concurrently written cells, basis phase: n_bl * n_q
    n_cells: int
    n_chunks: int  # full chunks
    n_r: int  # remainder cells

    @property
    def block_threads(self) -> int:
        """Threads assigned to one cell block: n_bs * n_comp."""
        return self.n_bs * self.n_comp


def derive_execution_geometry(
    dim: int,
    n_b: int,
    n_comp: int,
    n_q: int,
    n_bl: int,
    n_cb: int,
    n_cells: int,
    thread_limit: int = DEFAULT_THREAD_LIMIT,
) -> ExecutionGeometry:
    """Derive every scheduling quantity from the element and the decomposition
    parameters.

    Raises ConfigurationError when the thread block would exceed the device
    thread limit.
    """
    for name, value in (
        ("dim", dim),
        ("n_b", n_b),
        ("n_comp", n_comp),
        ("n_q", n_q),
        ("n_bl", n_bl),
        ("n_cb", n_cb),
    ):
        if value < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {value}")
    if n_cells < 0:
        raise ConfigurationError(f"n_cells must be >= 0, got {n_cells}")

    n_bt = n_b * n_comp
    n_bs = n_b * n_q
    n_bc = n_bs * n_bl
    n_t = n_bc * n_comp
    if n_t > thread_limit:
        raise ConfigurationError(
            f"thread block needs {n_t} threads, device limit is {thread_limit} "
            f"(n_bs={n_bs} * n_comp={n_comp} * n_bl={n_bl})"
        )
    n_chunk = n_cb * n_bc
    n_chunks, n_r = divmod(n_cells, n_chunk)

    return ExecutionGeometry(
        dim=dim,
        n_b=n_b,
        n_comp=n_comp,
        n_q=n_q,
        n_bt=n_bt,
        n_bs=n_bs,
        n_bl=n_bl,
        n_bc=n_bc,
        n_cb=n_cb,
        n_chunk=n_chunk,
        n_t=n_t,
        n_tq=n_q * n_comp,
        n_sqc=n_q,
        n_sbc=n_b,
        n_cbc=n_bl * n_q,
        n_cells=n_cells,
        n_chunks=n_chunks,
        n_r=n_r,
    )
