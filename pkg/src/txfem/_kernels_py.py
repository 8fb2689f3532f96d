"""Vectorized fallback kernels.

Same per-cell operation sequence as the simulated device, with the cell axis
vectorized: reductions over basis functions, quadrature points, and space
dimensions stay explicit loops, and every numpy operation is elementwise, so
each cell sees the exact rounding sequence of a scalar implementation.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .physics import CellAux, PhysicsForm

__all__ = ["integrate_cells"]


def integrate_cells(
    form: PhysicsForm,
    basis: np.ndarray,
    basis_der: np.ndarray,
    weights: np.ndarray,
    inv_j: np.ndarray,
    det_j: np.ndarray,
    coeffs: np.ndarray,
    aux: Optional[CellAux],
    out: np.ndarray,
) -> None:
    """Fill out[cell][basis][comp] for a span of cells.

    All arrays share one floating dtype; out is fully overwritten.
    """
    n_span = det_j.shape[0]
    n_q, n_b = basis.shape
    d = basis_der.shape[2]
    n_comp = form.n_comp
    dtype = coeffs.dtype

    f1_store = np.empty((n_span, n_q, n_comp, d), dtype=dtype)
    f0_store = np.empty((n_span, n_q, n_comp), dtype=dtype) if form.has_f0 else None

    for q in range(n_q):
        trans = _transforms(basis_der, inv_j, q, n_b, d, dtype)

        u = np.zeros((n_span, n_comp), dtype=dtype)
        grad = np.zeros((n_span, n_comp, d), dtype=dtype)
        for b in range(n_b):
            for c in range(n_comp):
                u[:, c] += coeffs[:, b, c] * basis[q, b]
                for k in range(d):
                    grad[:, c, k] += coeffs[:, b, c] * trans[b][k]

        a_val, grad_a = _aux_values(aux, form, basis, trans, q, n_b, d, dtype, n_span)

        f1_val = form.f1_many(u, grad, a_val, grad_a)
        f1_val = f1_val * det_j[:, None, None]
        f1_val = f1_val * weights[q]
        f1_store[:, q] = f1_val
        if form.has_f0:
            f0_val = form.f0_many(u, grad, a_val, grad_a)
            f0_val = f0_val * det_j[:, None]
            f0_val = f0_val * weights[q]
            f0_store[:, q] = f0_val

    out[:] = 0
    for q in range(n_q):
        trans = _transforms(basis_der, inv_j, q, n_b, d, dtype)
        for b in range(n_b):
            for c in range(n_comp):
                if form.has_f0:
                    out[:, b, c] += basis[q, b] * f0_store[:, q, c]
                for k in range(d):
                    out[:, b, c] += trans[b][k] * f1_store[:, q, c, k]


def _transforms(basis_der, inv_j, q, n_b, d, dtype):
    """Pulled-back basis gradients at point q: trans[b][k] over the span."""
    n_span = inv_j.shape[0]
    trans = []
    for b in range(n_b):
        cols = []
        for k in range(d):
            acc = np.zeros(n_span, dtype=dtype)
            for j in range(d):
                acc += basis_der[q, b, j] * inv_j[:, j, k]
            cols.append(acc)
        trans.append(cols)
    return trans


def _aux_values(aux, form, basis, trans, q, n_b, d, dtype, n_span):
    if aux is None:
        return None, None
    n_aux = aux.n_aux
    if aux.space == "p0":
        grad_a = np.zeros((n_span, n_aux, d), dtype=dtype)
        return aux.values, grad_a
    a_val = np.zeros((n_span, n_aux), dtype=dtype)
    grad_a = np.zeros((n_span, n_aux, d), dtype=dtype)
    for b in range(n_b):
        for j in range(n_aux):
            a_val[:, j] += aux.values[:, b, j] * basis[q, b]
    if form.uses_grad_a:
        for b in range(n_b):
            for j in range(n_aux):
                for k in range(d):
                    grad_a[:, j, k] += aux.values[:, b, j] * trans[b][k]
    return a_val, grad_a
