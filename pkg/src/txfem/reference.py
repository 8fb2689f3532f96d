"""Serial reference integrator: the plainly-written evaluation of the
quadrature weak form, used both as the correctness oracle for the transposed
executor and as the execution path for remainder cells.

All arithmetic here is float64 regardless of what precision the executor is
configured with.  The per-cell operation sequence is pinned (documented
below) because remainder cells computed here must agree bit-for-bit with
executor cells in float64 runs:

  for each quadrature point q (ascending):
      u[c]       = sum_b coeff[b][c] * B[q][b]            (b ascending)
      grad[c][k] = sum_b coeff[b][c] * T[q][b][k]         (b ascending)
      where T[q][b][k] = sum_j D[q][b][j] * invJ[j][k]    (j ascending)
      stored f1[q][c][k] = (f1_form(...)[k] * detJ) * w[q]
      stored f0[q][c]    = (f0_form(...)    * detJ) * w[q]   when present
  for each (basis b, component c):
      e = 0
      for q ascending: e += B[q][b] * f0[q][c]  (when present)
                       e += sum_k T[q][b][k] * f1[q][c][k]  (k ascending)

Only the cell axis is vectorized; reductions over basis functions,
quadrature points, and space dimensions are explicit loops so the float
rounding sequence is identical to a scalar implementation.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .element import QuadratureRule, Tabulation
from .errors import ShapeError
from .mesh import CellGeometry, FieldLayout, Mesh, scatter_add_element_vectors
from .physics import CellAux, PhysicsForm

__all__ = ["integrate_reference", "assemble_residual"]


def integrate_reference(
    tab: Tabulation,
    rule: QuadratureRule,
    geom: CellGeometry,
    form: PhysicsForm,
    coeffs: np.ndarray,
    aux: Optional[CellAux] = None,
) -> np.ndarray:
    """Integrate the residual contribution of every cell.

    coeffs has shape (n_cells, n_b, n_comp); the result has the same shape
    and float64 dtype.
    """
    n_cells = geom.n_cells
    d = tab.dim
    n_b = tab.n_b
    n_q = rule.n_q
    n_comp = form.n_comp

    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (n_cells, n_b, n_comp):
        raise ShapeError(
            f"coefficients have shape {coeffs.shape}, "
            f"expected {(n_cells, n_b, n_comp)}"
        )
    form.require_aux(aux)
    if aux is not None and aux.values.shape[0] != n_cells:
        raise ShapeError(
            f"auxiliary data covers {aux.values.shape[0]} cells, expected {n_cells}"
        )

    B = np.asarray(tab.basis, dtype=np.float64)
    D = np.asarray(tab.basis_der, dtype=np.float64)
    w = np.asarray(rule.weights, dtype=np.float64)
    inv_j = np.asarray(geom.inv_jacobians, dtype=np.float64)
    det_j = np.asarray(geom.determinants, dtype=np.float64)

    f1_store = np.empty((n_cells, n_q, n_comp, d))
    f0_store = np.empty((n_cells, n_q, n_comp)) if form.has_f0 else None

    for q in range(n_q):
        trans = _physical_gradients(D, inv_j, q, n_b, d)

        u = np.zeros((n_cells, n_comp))
        grad = np.zeros((n_cells, n_comp, d))
        for b in range(n_b):
            for c in range(n_comp):
                u[:, c] += coeffs[:, b, c] * B[q, b]
                for k in range(d):
                    grad[:, c, k] += coeffs[:, b, c] * trans[b][k]

        a_val, grad_a = _aux_at_point(aux, form, B, trans, q, n_b, d)

        f1_val = form.f1_many(u, grad, a_val, grad_a)
        f1_val = f1_val * det_j[:, None, None]
        f1_val = f1_val * w[q]
        f1_store[:, q] = f1_val
        if form.has_f0:
            f0_val = form.f0_many(u, grad, a_val, grad_a)
            f0_val = f0_val * det_j[:, None]
            f0_val = f0_val * w[q]
            f0_store[:, q] = f0_val

    elem = np.zeros((n_cells, n_b, n_comp))
    for q in range(n_q):
        trans = _physical_gradients(D, inv_j, q, n_b, d)
        for b in range(n_b):
            for c in range(n_comp):
                if form.has_f0:
                    elem[:, b, c] += B[q, b] * f0_store[:, q, c]
                for k in range(d):
                    elem[:, b, c] += trans[b][k] * f1_store[:, q, c, k]
    return elem


def _physical_gradients(D, inv_j, q, n_b, d):
    """Reference gradients pulled back to physical space, per cell.

    trans[b][k] is a length-n_cells array holding sum_j D[q,b,j]*invJ[j,k].
    """
    n_cells = inv_j.shape[0]
    trans = []
    for b in range(n_b):
        cols = []
        for k in range(d):
            acc = np.zeros(n_cells)
            for j in range(d):
                acc += D[q, b, j] * inv_j[:, j, k]
            cols.append(acc)
        trans.append(cols)
    return trans


def _aux_at_point(aux, form, B, trans, q, n_b, d):
    """Auxiliary field value (and gradient, if the form reads it) at point q."""
    if aux is None:
        return None, None
    n_aux = aux.n_aux
    if aux.space == "p0":
        a_val = aux.values.astype(np.float64, copy=True)
        grad_a = np.zeros((aux.values.shape[0], n_aux, d))
        return a_val, grad_a
    vals = np.asarray(aux.values, dtype=np.float64)
    n_cells = vals.shape[0]
    a_val = np.zeros((n_cells, n_aux))
    grad_a = np.zeros((n_cells, n_aux, d))
    for b in range(n_b):
        for j in range(n_aux):
            a_val[:, j] += vals[:, b, j] * B[q, b]
    if form.uses_grad_a:
        for b in range(n_b):
            for j in range(n_aux):
                for k in range(d):
                    grad_a[:, j, k] += vals[:, b, j] * trans[b][k]
    return a_val, grad_a


def assemble_residual(mesh: Mesh, layout: FieldLayout, elem_vecs: np.ndarray) -> np.ndarray:
    """Scatter-add element vectors into the global residual."""
    return scatter_add_element_vectors(mesh, layout, elem_vecs)
