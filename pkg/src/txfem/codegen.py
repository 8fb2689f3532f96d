"""Runtime assembly of portable compute-kernel source text.

The emitted kernel mirrors the integration routine the executor simulates:
baked specialization constants, tabulation load, a batch loop with the
quadrature phase, one barrier at the thread transposition point, the basis
phase, and the element-vector store.  The user form's f0/f1 source strings
are inlined verbatim.  The text is assembled deterministically from runtime
parameters and never compiled or executed here; emitting it to a device
just-in-time compiler is an integration concern outside this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .element import Tabulation, quadrature_rule, tabulate, two_point_rule
from .errors import CodegenError
from .physics import PhysicsForm
from .schedule import ExecutionGeometry

__all__ = ["KernelSource", "generate_kernel_source"]

_SCALAR_TYPES = {"f32": ("float", "f"), "f64": ("double", "")}


@dataclass(frozen=True)
class KernelSource:
    text: str
    entry_name: str
    specialization: tuple  # (dim, n_b, n_comp, n_q, n_bl, scalar type name)


def _literal(value: float, suffix: str) -> str:
    text = f"{value:.17g}"
    if "." not in text and "e" not in text:
        text += ".0"
    return text + suffix


def _tab_for(geom: ExecutionGeometry) -> Tabulation:
    if geom.n_q == 1:
        return tabulate(geom.dim, quadrature_rule(geom.dim, 1))
    if geom.n_q == 2:
        return tabulate(geom.dim, two_point_rule(geom.dim))
    raise CodegenError(f"no baked quadrature rule with {geom.n_q} points")


def generate_kernel_source(
    geom: ExecutionGeometry,
    form: PhysicsForm,
    scalar: str = "f32",
    tab: Tabulation | None = None,
    weights: np.ndarray | None = None,
) -> KernelSource:
    """Assemble the kernel text for one (geometry, form, scalar) combination.

    Identical inputs yield byte-identical text.
    """
    if scalar not in _SCALAR_TYPES:
        raise CodegenError(f"scalar must be 'f32' or 'f64', got {scalar!r}")
    if not form.source_f1:
        raise CodegenError(f"form {form.name!r} carries no f1 source string")
    if form.has_f0 and not form.source_f0:
        raise CodegenError(f"form {form.name!r} has f0 but no f0 source string")
    if form.dim != geom.dim or form.n_comp != geom.n_comp:
        raise CodegenError("form and execution geometry disagree on dim or components")

    ctype, suffix = _SCALAR_TYPES[scalar]
    d = geom.dim
    if tab is None:
        tab = _tab_for(geom)
        if geom.n_q == 1:
            weights = quadrature_rule(d, 1).weights
        else:
            weights = two_point_rule(d).weights
    elif weights is None:
        raise CodegenError("explicit tabulation needs explicit weights")

    vec = f"{ctype}{d}"
    entry = f"residual_{form.name}_{d}d_{scalar}"
    n_aux_slots = max(form.n_aux, 1)
    axes = "xyz"[:d]

    w_lits = ", ".join(_literal(w, suffix) for w in weights)
    basis_lits = ", ".join(
        _literal(tab.basis[q, b], suffix) for q in range(geom.n_q) for b in range(geom.n_b)
    )
    der_lits = ", ".join(
        _literal(tab.basis_der[q, b, k], suffix)
        for q in range(geom.n_q)
        for b in range(geom.n_b)
        for k in range(d)
    )

    lines: list[str] = []
    emit = lines.append
    emit(f"/* {entry}: runtime-assembled residual integration kernel */")
    emit(f"/* specialization: dim={d} N_b={geom.n_b} N_comp={geom.n_comp} "
         f"N_q={geom.n_q} N_bl={geom.n_bl} scalar={ctype} */")
    emit("")
    emit(f"typedef {ctype} real;")
    emit(f"typedef {vec} realv;")
    emit("")
    emit(f"#define DIM    {d}")
    emit(f"#define N_b    {geom.n_b}")
    emit(f"#define N_comp {geom.n_comp}")
    emit(f"#define N_q    {geom.n_q}")
    emit(f"#define N_bt   {geom.n_bt}   /* scalar basis functions */")
    emit(f"#define N_bst  {geom.block_threads}   /* threads per cell block */")
    emit(f"#define N_bl   {geom.n_bl}   /* concurrent cell blocks */")
    emit(f"#define N_bs   {geom.n_bs}   /* cells per block */")
    emit(f"#define N_t    {geom.n_t}   /* threads per thread block */")
    emit(f"#define N_bc   {geom.n_bc}   /* cells per batch */")
    emit(f"#define N_cb   {geom.n_cb}   /* serial batches per chunk */")
    emit(f"#define N_tq   {geom.n_tq}   /* quadrature-phase threads per cell */")
    emit(f"#define N_sqc  {geom.n_sqc}   /* serial cells per thread, quadrature phase */")
    emit(f"#define N_sbc  {geom.n_sbc}   /* serial cells per thread, basis phase */")
    emit(f"#define N_aux  {form.n_aux}")
    emit("")
    emit(f"__constant real quadWeights_0[N_q] = {{ {w_lits} }};")
    emit(f"__constant real Basis_0[N_q*N_b] = {{ {basis_lits} }};")
    emit(f"__constant real BasisDerivatives_0[N_q*N_b*DIM] = {{ {der_lits} }};")
    emit("")
    emit("realv pullbackGradient(__local const real *invJcell, __local const real *refDer)")
    emit("{")
    emit("  realv g;")
    for k, ax in enumerate(axes):
        terms = " + ".join(f"refDer[{j}]*invJcell[{j}*DIM + {k}]" for j in range(d))
        emit(f"  g.{ax} = {terms};")
    emit("  return g;")
    emit("}")
    emit("")
    if form.has_f0:
        emit(form.source_f0.rstrip("\n"))
        emit("")
    emit(form.source_f1.rstrip("\n"))
    emit("")

    args = [
        "__global const real *coefficients",
        "__global const real *jacobianInverses",
        "__global const real *jacobianDeterminants",
    ]
    if form.n_aux:
        args.append("__global const real *auxData")
    args.append("__global real *elemVec")
    arg_lines = ",\n".join(" " * (len(entry) + 15) + a for a in args[1:])
    emit(f"__kernel void {entry}({args[0]},")
    emit(arg_lines + ")")
    emit("{")
    emit("  const int tid   = get_local_id(0);")
    emit("  const int chunk = get_group_id(0);")
    emit("")
    emit("  /* quadrature-phase ownership */")
    emit("  const int qBlock = tid / N_bst;")
    emit("  const int qSlot  = tid % N_bst;")
    emit("  const int qCell  = qSlot / N_tq;")
    emit("  const int qPoint = (qSlot % N_tq) / N_comp;")
    emit("  const int qComp  = qSlot % N_comp;")
    emit("  /* basis-phase ownership */")
    emit("  const int bCell  = qSlot / N_bt;")
    emit("  const int bFunc  = (qSlot % N_bt) / N_comp;")
    emit("  const int bComp  = qSlot % N_comp;")
    emit("")
    emit("  /* thread-private quadrature weight */")
    emit("  const real w = quadWeights_0[qPoint];")
    emit("")
    emit("  __local real phi_i[N_q*N_b];")
    emit("  __local real phiDer_i[N_q*N_b*DIM];")
    emit("  __local real invJ[N_bc*DIM*DIM];")
    emit("  __local real detJ[N_bc];")
    emit("  __local real u_i[N_bc*N_bt];")
    emit("  __local real f_1[N_bc*N_q*N_comp*DIM];")
    if form.has_f0:
        emit("  __local real f_0[N_bc*N_q*N_comp];")
    emit("")
    emit("  /* load basis tabulation, once per chunk */")
    emit("  for (int i = tid; i < N_q*N_b; i += N_t) {")
    emit("    phi_i[i] = Basis_0[i];")
    emit("    for (int k = 0; k < DIM; ++k)")
    emit("      phiDer_i[i*DIM + k] = BasisDerivatives_0[i*DIM + k];")
    emit("  }")
    emit("")
    emit("  for (int batch = 0; batch < N_cb; ++batch) {")
    emit("    const int cellOffset = (chunk*N_cb + batch)*N_bc;")
    emit("")
    emit("    /* load geometry and coefficients for this batch */")
    emit("    for (int c = tid; c < N_bc; c += N_t) {")
    emit("      detJ[c] = jacobianDeterminants[cellOffset + c];")
    emit("      for (int m = 0; m < DIM*DIM; ++m)")
    emit("        invJ[c*DIM*DIM + m] = jacobianInverses[(cellOffset + c)*DIM*DIM + m];")
    emit("      for (int i = 0; i < N_bt; ++i)")
    emit("        u_i[c*N_bt + i] = coefficients[(cellOffset + c)*N_bt + i];")
    emit("    }")
    emit("")
    emit("    /* map coefficients to values at quadrature points */")
    emit("    for (int c = 0; c < N_sqc; ++c) {")
    emit("      const int cell = qBlock*N_bs + c*N_b + qCell;")
    emit("      real u[N_comp];")
    emit("      realv gradU[N_comp];")
    emit(f"      real a[{n_aux_slots}];")
    emit(f"      realv gradA[{n_aux_slots}];")
    emit("      for (int comp = 0; comp < N_comp; ++comp) {")
    emit("        u[comp] = 0.0;")
    emit("        gradU[comp] = (realv)(0.0);")
    emit("      }")
    if form.n_aux:
        emit("      for (int j = 0; j < N_aux; ++j) {")
        emit("        a[j] = auxData[(cellOffset + cell)*N_aux + j];")
        emit("        gradA[j] = (realv)(0.0);")
        emit("      }")
    emit("      for (int i = 0; i < N_b; ++i) {")
    emit("        for (int comp = 0; comp < N_comp; ++comp) {")
    emit("          u[comp] += u_i[cell*N_bt + i*N_comp + comp]*phi_i[qPoint*N_b + i];")
    emit("          gradU[comp] += u_i[cell*N_bt + i*N_comp + comp]")
    emit("              *pullbackGradient(&invJ[cell*DIM*DIM], &phiDer_i[(qPoint*N_b + i)*DIM]);")
    emit("        }")
    emit("      }")
    emit("      /* process values at this quadrature point */")
    if form.has_f0:
        emit(f"      const real f0val = f0_{form.name}(u, gradU, a, gradA, qComp)*detJ[cell]*w;")
        emit("      f_0[(cell*N_q + qPoint)*N_comp + qComp] = f0val;")
    emit(f"      const realv f1val = f1_{form.name}(u, gradU, a, gradA, qComp)*detJ[cell]*w;")
    for k, ax in enumerate(axes):
        emit(f"      f_1[((cell*N_q + qPoint)*N_comp + qComp)*DIM + {k}] = f1val.{ax};")
    emit("    }")
    emit("")
    emit("    /* ==== TRANSPOSE THREADS ==== */")
    emit("    barrier(CLK_LOCAL_MEM_FENCE);")
    emit("")
    emit("    /* map values at quadrature points to coefficients */")
    emit("    for (int c = 0; c < N_sbc; ++c) {")
    emit("      const int cell = qBlock*N_bs + c*N_q + bCell;")
    emit("      real e_i = 0.0;")
    emit("      for (int q = 0; q < N_q; ++q) {")
    if form.has_f0:
        emit("        e_i += phi_i[q*N_b + bFunc]*f_0[(cell*N_q + q)*N_comp + bComp];")
    emit("        const realv testGrad = pullbackGradient(&invJ[cell*DIM*DIM],")
    emit("            &phiDer_i[(q*N_b + bFunc)*DIM]);")
    for k, ax in enumerate(axes):
        emit(f"        e_i += testGrad.{ax}*f_1[((cell*N_q + q)*N_comp + bComp)*DIM + {k}];")
    emit("      }")
    emit("      /* write element vectors, N_bl*N_q cells at a time */")
    emit("      elemVec[(cellOffset + cell)*N_bt + bFunc*N_comp + bComp] = e_i;")
    emit("    }")
    emit("  }")
    emit("}")
    emit("")

    return KernelSource(
        text="\n".join(lines),
        entry_name=entry,
        specialization=(d, geom.n_b, geom.n_comp, geom.n_q, geom.n_bl, ctype),
    )
