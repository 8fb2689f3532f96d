"""Selection between the compiled extension core and the pure-Python lane.

The compiled module is optional: it is picked at import time when present,
unless TXFEM_PURE_PYTHON=1 forces the fallback.  Individual calls can also
pin a lane explicitly.  Both lanes produce bit-identical element vectors.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

from .physics import CellAux, PhysicsForm

__all__ = ["compiled_available", "active_backend", "compiled_kernel", "run_compiled"]

_kernels_cy = None
if os.environ.get("TXFEM_PURE_PYTHON", "0").lower() not in ("1", "true", "yes"):
    try:
        from . import _kernels_cy  # type: ignore[attr-defined]
    except ImportError:
        _kernels_cy = None

_FORM_CODES = {"poisson": 0, "poisson_varcoef": 1, "elasticity": 2}
_AUX_MODES = {None: 0, "p0": 1, "p1": 2}


def compiled_available() -> bool:
    return _kernels_cy is not None


def active_backend() -> str:
    return "compiled" if compiled_available() else "python"


def compiled_kernel(form: PhysicsForm, n_q: int, aux: Optional[CellAux]):
    """Return the (form_code, aux_mode) pair if the compiled core covers this
    configuration, else None."""
    if _kernels_cy is None:
        return None
    code = _FORM_CODES.get(form.name)
    if code is None or form.has_f0 or form.uses_grad_a:
        return None
    if form.dim > _kernels_cy.MAX_DIM or form.n_comp > _kernels_cy.MAX_COMPONENTS:
        return None
    if form.dim + 1 > _kernels_cy.MAX_BASIS or n_q > _kernels_cy.MAX_QUAD:
        return None
    if aux is not None and (aux.n_aux != 1 or form.n_aux != 1):
        return None
    return code, _AUX_MODES[None if aux is None else aux.space]


def run_compiled(
    kernel: tuple[int, int],
    basis: np.ndarray,
    basis_der: np.ndarray,
    weights: np.ndarray,
    inv_j: np.ndarray,
    det_j: np.ndarray,
    coeffs: np.ndarray,
    aux: Optional[CellAux],
    out: np.ndarray,
) -> None:
    form_code, aux_mode = kernel
    dtype = coeffs.dtype
    empty2 = np.empty((0, 0), dtype=dtype)
    empty3 = np.empty((0, 0, 0), dtype=dtype)
    aux_const, aux_nodal = empty2, empty3
    if aux_mode == 1:
        aux_const = np.ascontiguousarray(aux.values)
    elif aux_mode == 2:
        aux_nodal = np.ascontiguousarray(aux.values)
    _kernels_cy.integrate_cells(
        form_code,
        aux_mode,
        np.ascontiguousarray(basis),
        np.ascontiguousarray(basis_der),
        np.ascontiguousarray(weights),
        np.ascontiguousarray(inv_j),
        np.ascontiguousarray(det_j),
        np.ascontiguousarray(coeffs),
        aux_const,
        aux_nodal,
        out,
    )
