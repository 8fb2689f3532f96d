import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import txfem
from txfem.physics import CellAux, user_form


def rel_err(result, reference):
    scale = max(float(np.max(np.abs(reference))), 1e-300)
    return float(np.max(np.abs(np.asarray(result, dtype=np.float64) - reference))) / scale


def make_problem(dim, form_factory, n, seed=0, rule=None):
    """Mesh, layout, rule, tabulation, geometry, random coefficients."""
    form = form_factory(dim)
    mesh = txfem.generate_unit_simplex_mesh(dim, n)
    layout = txfem.FieldLayout(n_comp=form.n_comp)
    if rule is None:
        rule = txfem.quadrature_rule(dim, 1)
    tab = txfem.tabulate(dim, rule)
    cell_geom = txfem.compute_geometry(mesh)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(layout.global_size(mesh))
    return form, mesh, layout, rule, tab, cell_geom, coeffs


def p0_aux(n_cells, seed=0, n_aux=1):
    rng = np.random.default_rng(seed + 1)
    return CellAux(space="p0", values=rng.uniform(0.5, 1.5, size=(n_cells, n_aux)))


def p1_aux(mesh, seed=0, n_aux=1):
    rng = np.random.default_rng(seed + 2)
    nodal = rng.uniform(0.5, 1.5, size=(mesh.n_vertices, n_aux))
    return CellAux(space="p1", values=nodal[mesh.cells])


def reaction_form(dim):
    """Synthetic form with an f0 term (f0 = u, a copy): exercises the value
    pipeline that no shipped form uses."""

    def f0(state, comp):
        return state.u[comp]

    def f0_many(u, grad_u, a, grad_a):
        return u.copy()

    def f1(state, comp):
        return state.grad_u[comp].copy()

    def f1_many(u, grad_u, a, grad_a):
        return grad_u.copy()

    return user_form(
        name="reaction",
        dim=dim,
        n_comp=1,
        f1=f1,
        f1_many=f1_many,
        flops_f1=0,
        source_f1=(
            "realv f1_reaction(const real u[], const realv gradU[], "
            "const real a[], const realv gradA[], int comp)\n"
            "{\n  return gradU[comp];\n}\n"
        ),
        f0=f0,
        f0_many=f0_many,
        flops_f0=0,
        source_f0=(
            "real f0_reaction(const real u[], const realv gradU[], "
            "const real a[], const realv gradA[], int comp)\n"
            "{\n  return u[comp];\n}\n"
        ),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
