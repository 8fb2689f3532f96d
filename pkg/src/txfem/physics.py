"""Pointwise weak-form functions f0 and f1.

A form contributes two pointwise terms to the residual: a value term f0
multiplied against test functions and a flux term f1 contracted against test
gradients.  Each shipped form carries

* scalar evaluators, used by the simulated device one quadrature point at a
  time,
* vectorized evaluators over arrays of points, used by the fast lanes (the
  arithmetic is elementwise-identical to the scalar evaluators, so both
  produce bit-equal results),
* self-reported flop counts per evaluation (multiplies/adds count 1, copies
  and sign flips count 0), consumed by the performance model,
* kernel source text consumed only by the source generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidDimensionError, MissingAuxiliaryError

__all__ = [
    "PointState",
    "PhysicsForm",
    "CellAux",
    "poisson_form",
    "poisson_varcoef_form",
    "elasticity_form",
    "user_form",
]


@dataclass(frozen=True)
class PointState:
    """Field data at a single quadrature point."""

    u: np.ndarray  # (n_comp,)
    grad_u: np.ndarray  # (n_comp, d)
    a: Optional[np.ndarray] = None  # (n_aux,)
    grad_a: Optional[np.ndarray] = None  # (n_aux, d)


@dataclass(frozen=True)
class CellAux:
    """Auxiliary field data gathered per cell.

    space "p0": values has shape (n_cells, n_aux), constant per cell, zero
    gradient.  space "p1": values has shape (n_cells, n_b, n_aux), same basis
    as the solution.
    """

    space: str
    values: np.ndarray

    def __post_init__(self):
        if self.space not in ("p0", "p1"):
            raise ValueError(f"aux space must be 'p0' or 'p1', got {self.space!r}")

    @property
    def n_aux(self) -> int:
        return self.values.shape[-1]

    def cell_slice(self, lo: int, hi: int) -> "CellAux":
        return CellAux(space=self.space, values=self.values[lo:hi])


@dataclass(frozen=True)
class PhysicsForm:
    name: str
    dim: int
    n_comp: int
    n_aux: int
    has_f0: bool
    f1: Callable[[PointState, int], np.ndarray]
    f1_many: Callable[..., np.ndarray]
    flops_f1: int
    source_f1: str
    f0: Optional[Callable[[PointState, int], float]] = None
    f0_many: Optional[Callable[..., np.ndarray]] = None
    flops_f0: int = 0
    source_f0: Optional[str] = None
    uses_grad_a: bool = False

    def __post_init__(self):
        if not self.has_f0 and (self.f0 is not None or self.flops_f0 != 0):
            raise ValueError("forms without f0 must carry no f0 evaluator and zero f0 flops")

    def require_aux(self, aux: Optional[CellAux]) -> None:
        if self.n_aux > 0:
            if aux is None:
                raise MissingAuxiliaryError(
                    f"form {self.name!r} needs {self.n_aux} auxiliary field(s)"
                )
            if aux.n_aux != self.n_aux:
                raise MissingAuxiliaryError(
                    f"form {self.name!r} needs {self.n_aux} auxiliary field(s), "
                    f"got {aux.n_aux}"
                )


def _check_dim(dim: int) -> None:
    if dim not in (2, 3):
        raise InvalidDimensionError(f"dim must be 2 or 3, got {dim}")


# Kernel source text follows the runtime string-injection interface: each f1
# is a function of (u, gradU, a, gradA, comp) returning a d-vector.

_POISSON_SRC = """\
realv f1_poisson(const real u[], const realv gradU[], const real a[], const realv gradA[], int comp)
{
  return gradU[comp];
}
"""

_VARCOEF_SRC = """\
realv f1_poisson_varcoef(const real u[], const realv gradU[], const real a[], const realv gradA[], int comp)
{
  return a[0]*gradU[comp];
}
"""

_ELASTICITY_SRC_2D = """\
realv f1_elasticity(const real u[], const realv gradU[], const real a[], const realv gradA[], int comp)
{
  realv f1;

  switch(comp) {
  case 0:
    f1.x = 0.5*(gradU[0].x + gradU[0].x);
    f1.y = 0.5*(gradU[0].y + gradU[1].x);
    break;
  case 1:
    f1.x = 0.5*(gradU[1].x + gradU[0].y);
    f1.y = 0.5*(gradU[1].y + gradU[1].y);
  }
  return f1;
}
"""

_ELASTICITY_SRC_3D = """\
realv f1_elasticity(const real u[], const realv gradU[], const real a[], const realv gradA[], int comp)
{
  realv f1;

  switch(comp) {
  case 0:
    f1.x = 0.5*(gradU[0].x + gradU[0].x);
    f1.y = 0.5*(gradU[0].y + gradU[1].x);
    f1.z = 0.5*(gradU[0].z + gradU[2].x);
    break;
  case 1:
    f1.x = 0.5*(gradU[1].x + gradU[0].y);
    f1.y = 0.5*(gradU[1].y + gradU[1].y);
    f1.z = 0.5*(gradU[1].z + gradU[2].y);
    break;
  case 2:
    f1.x = 0.5*(gradU[2].x + gradU[0].z);
    f1.y = 0.5*(gradU[2].y + gradU[1].z);
    f1.z = 0.5*(gradU[2].z + gradU[2].z);
  }
  return f1;
}
"""


def poisson_form(dim: int) -> PhysicsForm:
    """Scalar Laplacian flux: f1 = grad u.  A pure copy, zero flops."""
    _check_dim(dim)

    def f1(state: PointState, comp: int) -> np.ndarray:
        return state.grad_u[comp].copy()

    def f1_many(u, grad_u, a, grad_a):
        return grad_u.copy()

    return PhysicsForm(
        name="poisson",
        dim=dim,
        n_comp=1,
        n_aux=0,
        has_f0=False,
        f1=f1,
        f1_many=f1_many,
        flops_f1=0,
        source_f1=_POISSON_SRC,
    )


def poisson_varcoef_form(dim: int) -> PhysicsForm:
    """Variable-coefficient Laplacian flux: f1 = a * grad u (d multiplies)."""
    _check_dim(dim)

    def f1(state: PointState, comp: int) -> np.ndarray:
        if state.a is None or state.a.shape[0] < 1:
            raise MissingAuxiliaryError("poisson_varcoef needs the coefficient field a")
        return state.a[0] * state.grad_u[comp]

    def f1_many(u, grad_u, a, grad_a):
        if a is None:
            raise MissingAuxiliaryError("poisson_varcoef needs the coefficient field a")
        return a[:, 0, None, None] * grad_u

    return PhysicsForm(
        name="poisson_varcoef",
        dim=dim,
        n_comp=1,
        n_aux=1,
        has_f0=False,
        f1=f1,
        f1_many=f1_many,
        flops_f1=dim,
        source_f1=_VARCOEF_SRC,
    )


def elasticity_form(dim: int) -> PhysicsForm:
    """Symmetric-gradient flux: row comp of eps(u) = (grad u + grad u^T)/2.

    Per component evaluation: d adds plus d multiplies.
    """
    _check_dim(dim)

    def f1(state: PointState, comp: int) -> np.ndarray:
        g = state.grad_u
        if comp >= g.shape[0]:
            raise IndexError(f"component {comp} out of range for {g.shape[0]} components")
        out = np.empty(g.shape[1], dtype=g.dtype)
        half = g.dtype.type(0.5)
        for k in range(g.shape[1]):
            out[k] = half * (g[comp, k] + g[k, comp])
        return out

    def f1_many(u, grad_u, a, grad_a):
        d = grad_u.shape[-1]
        out = np.empty_like(grad_u)
        half = grad_u.dtype.type(0.5)
        for c in range(d):
            for k in range(d):
                out[:, c, k] = half * (grad_u[:, c, k] + grad_u[:, k, c])
        return out

    return PhysicsForm(
        name="elasticity",
        dim=dim,
        n_comp=dim,
        n_aux=0,
        has_f0=False,
        f1=f1,
        f1_many=f1_many,
        flops_f1=2 * dim,
        source_f1=_ELASTICITY_SRC_2D if dim == 2 else _ELASTICITY_SRC_3D,
    )


def user_form(
    name: str,
    dim: int,
    n_comp: int,
    f1: Callable[[PointState, int], np.ndarray],
    flops_f1: int,
    source_f1: str,
    *,
    n_aux: int = 0,
    f1_many: Optional[Callable[..., np.ndarray]] = None,
    f0: Optional[Callable[[PointState, int], float]] = None,
    f0_many: Optional[Callable[..., np.ndarray]] = None,
    flops_f0: int = 0,
    source_f0: Optional[str] = None,
    uses_grad_a: bool = False,
) -> PhysicsForm:
    """Wrap user-supplied evaluators and source text into a form.

    Missing vectorized evaluators are synthesized by looping the scalar ones,
    which is slow but keeps small experiments convenient.
    """
    _check_dim(dim)
    has_f0 = f0 is not None

    if f1_many is None:
        f1_many = _loop_many(f1, n_comp, vector=True)
    if has_f0 and f0_many is None:
        f0_many = _loop_many(f0, n_comp, vector=False)

    return PhysicsForm(
        name=name,
        dim=dim,
        n_comp=n_comp,
        n_aux=n_aux,
        has_f0=has_f0,
        f1=f1,
        f1_many=f1_many,
        flops_f1=flops_f1,
        source_f1=source_f1,
        f0=f0,
        f0_many=f0_many,
        flops_f0=flops_f0 if has_f0 else 0,
        source_f0=source_f0,
        uses_grad_a=uses_grad_a,
    )


def _loop_many(pointwise: Callable, n_comp: int, vector: bool) -> Callable:
    def many(u, grad_u, a, grad_a):
        npts, _, d = grad_u.shape
        shape = (npts, n_comp, d) if vector else (npts, n_comp)
        out = np.empty(shape, dtype=grad_u.dtype)
        for i in range(npts):
            state = PointState(
                u=u[i],
                grad_u=grad_u[i],
                a=None if a is None else a[i],
                grad_a=None if grad_a is None else grad_a[i],
            )
            for c in range(n_comp):
                out[i, c] = pointwise(state, c)
        return out

    return many
