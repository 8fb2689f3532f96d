# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled integration kernels for the shipped physics forms.

Same per-cell operation sequence as the pure lanes.  Built with
-ffp-contract=off so no multiply-add fusion can perturb the rounding; outputs
are bit-identical to the vectorized fallback for both float32 and float64.

Form codes: 0 = gradient copy (poisson), 1 = coefficient * gradient
(poisson_varcoef), 2 = symmetric gradient (elasticity).
Aux modes: 0 = none, 1 = one constant per cell, 2 = one nodal field.
"""

cimport cython

ctypedef fused floating:
    float
    double

cdef enum:
    MAX_D = 3
    MAX_B = 4
    MAX_COMP = 3
    MAX_Q = 8

FORM_POISSON = 0
FORM_VARCOEF = 1
FORM_ELASTICITY = 2

MAX_DIM = MAX_D
MAX_BASIS = MAX_B
MAX_COMPONENTS = MAX_COMP
MAX_QUAD = MAX_Q


@cython.boundscheck(False)
@cython.wraparound(False)
def integrate_cells(
    int form_code,
    int aux_mode,
    floating[:, ::1] basis,          # (n_q, n_b)
    floating[:, :, ::1] basis_der,   # (n_q, n_b, d)
    floating[::1] weights,           # (n_q,)
    floating[:, :, ::1] inv_j,       # (n, d, d)
    floating[::1] det_j,             # (n,)
    floating[:, :, ::1] coeffs,      # (n, n_b, n_comp)
    floating[:, ::1] aux_const,      # (n, 1) when aux_mode == 1, else (0, 0)
    floating[:, :, ::1] aux_nodal,   # (n, n_b, 1) when aux_mode == 2, else (0, 0, 0)
    floating[:, :, ::1] out,         # (n, n_b, n_comp)
):
    cdef Py_ssize_t n = det_j.shape[0]
    cdef int n_q = basis.shape[0]
    cdef int n_b = basis.shape[1]
    cdef int d = basis_der.shape[2]
    cdef int n_comp = out.shape[2]

    cdef floating trans[MAX_B * MAX_D]
    cdef floating u[MAX_COMP]
    cdef floating grad[MAX_COMP * MAX_D]
    cdef floating fv[MAX_D]
    cdef floating f1s[MAX_Q * MAX_COMP * MAX_D]
    cdef floating acc, e, det, wq, a0, t, tmp
    cdef floating half = 0.5
    cdef Py_ssize_t cell
    cdef int q, b, c, k, j

    if n_q > MAX_Q or n_b > MAX_B or d > MAX_D or n_comp > MAX_COMP:
        raise ValueError("kernel buffers too small for this element")

    for cell in range(n):
        # --- quadrature phase ---
        for q in range(n_q):
            for b in range(n_b):
                for k in range(d):
                    acc = 0
                    for j in range(d):
                        acc = acc + basis_der[q, b, j] * inv_j[cell, j, k]
                    trans[b * d + k] = acc

            for c in range(n_comp):
                u[c] = 0
                for k in range(d):
                    grad[c * d + k] = 0
            for b in range(n_b):
                for c in range(n_comp):
                    u[c] = u[c] + coeffs[cell, b, c] * basis[q, b]
                    for k in range(d):
                        grad[c * d + k] = grad[c * d + k] + coeffs[cell, b, c] * trans[b * d + k]

            a0 = 0
            if aux_mode == 1:
                a0 = aux_const[cell, 0]
            elif aux_mode == 2:
                for b in range(n_b):
                    a0 = a0 + aux_nodal[cell, b, 0] * basis[q, b]

            det = det_j[cell]
            wq = weights[q]
            for c in range(n_comp):
                if form_code == 0:
                    for k in range(d):
                        fv[k] = grad[c * d + k]
                elif form_code == 1:
                    for k in range(d):
                        fv[k] = a0 * grad[c * d + k]
                else:
                    for k in range(d):
                        t = grad[c * d + k] + grad[k * d + c]
                        fv[k] = half * t
                for k in range(d):
                    tmp = fv[k] * det
                    f1s[(q * n_comp + c) * d + k] = tmp * wq

        # --- basis phase ---
        for b in range(n_b):
            for c in range(n_comp):
                e = 0
                for q in range(n_q):
                    for k in range(d):
                        acc = 0
                        for j in range(d):
                            acc = acc + basis_der[q, b, j] * inv_j[cell, j, k]
                        e = e + acc * f1s[(q * n_comp + c) * d + k]
                out[cell, b, c] = e
