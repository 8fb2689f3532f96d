import numpy as np
import pytest

import txfem
from txfem.errors import MissingAuxiliaryError, ShapeError
from txfem.mesh import Mesh
from txfem.physics import user_form

from _oracle import oracle_integrate
from conftest import make_problem, p0_aux, p1_aux, reaction_form, rel_err


def reference_triangle_setup():
    mesh = Mesh(dim=2, vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                cells=np.array([[0, 1, 2]]))
    rule = txfem.quadrature_rule(2, 1)
    tab = txfem.tabulate(2, rule)
    return mesh, rule, tab, txfem.compute_geometry(mesh)


def test_constant_field_gives_zero_elements():
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_form, 3)
    coeffs = np.ones((mesh.n_cells, 3, 1))
    elem = txfem.integrate_reference(tab, rule, geom, form, coeffs)
    assert (elem == 0).all()


def test_linear_field_on_the_reference_triangle():
    # u = x: gradient (1, 0), so e_b = w * grad(phi_b) . (1, 0)
    mesh, rule, tab, geom = reference_triangle_setup()
    coeffs = np.array([[[0.0], [1.0], [0.0]]])
    elem = txfem.integrate_reference(tab, rule, geom, txfem.poisson_form(2), coeffs)
    np.testing.assert_array_equal(elem[0, :, 0], [-0.5, 0.5, 0.0])


def test_elasticity_on_the_reference_triangle():
    # u = (x, 0): strain rows (1,0) and (0,0)
    mesh, rule, tab, geom = reference_triangle_setup()
    coeffs = np.zeros((1, 3, 2))
    coeffs[0, 1, 0] = 1.0
    elem = txfem.integrate_reference(tab, rule, geom, txfem.elasticity_form(2), coeffs)
    expected = np.array([[-0.5, 0.0], [0.5, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(elem[0], expected)


@pytest.mark.parametrize("dim", [2, 3])
def test_affine_field_has_zero_interior_residual(dim):
    form, mesh, layout, rule, tab, geom, _ = make_problem(dim, txfem.poisson_form, 4)
    v = mesh.vertices
    u = 2.0 * v[:, 0] + 3.0 * v[:, 1] + 1.0
    if dim == 3:
        u = u - v[:, 2]
    blocks = txfem.gather_coefficients(mesh, layout, u)
    residual = txfem.assemble_residual(
        mesh, layout, txfem.integrate_reference(tab, rule, geom, form, blocks)
    )
    interior = txfem.interior_vertex_mask(mesh)
    assert np.abs(residual.reshape(-1, 1)[interior]).max() <= 1e-12


def test_quadratic_field_has_nonzero_interior_residual():
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_form, 4)
    u = mesh.vertices[:, 0] ** 2
    blocks = txfem.gather_coefficients(mesh, layout, u)
    residual = txfem.assemble_residual(
        mesh, layout, txfem.integrate_reference(tab, rule, geom, form, blocks)
    )
    interior = txfem.interior_vertex_mask(mesh)
    assert np.abs(residual.reshape(-1, 1)[interior]).max() > 1e-6


@pytest.mark.parametrize(
    "factory", [txfem.poisson_form, txfem.poisson_varcoef_form, txfem.elasticity_form]
)
def test_linearity_in_the_coefficients(factory, rng):
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, factory, 3)
    aux = p0_aux(mesh.n_cells) if form.n_aux else None
    shape = (mesh.n_cells, tab.n_b, form.n_comp)
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    alpha = 1.7

    def integ(c):
        return txfem.integrate_reference(tab, rule, geom, form, c, aux)

    combined = integ(alpha * x + y)
    separate = alpha * integ(x) + integ(y)
    assert rel_err(combined, separate) < 1e-12


def test_poisson_elements_match_the_gram_matrix_oracle(rng):
    # e = detJ * w * G^T (G coeff) with G the physical gradient matrix
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_form, 2, seed=5)
    coeffs = rng.standard_normal((mesh.n_cells, 3, 1))
    elem = txfem.integrate_reference(tab, rule, geom, form, coeffs)
    for c in range(mesh.n_cells):
        g = tab.basis_der[0] @ geom.inv_jacobians[c]  # (n_b, d) physical gradients
        expected = geom.determinants[c] * rule.weights[0] * (g @ (g.T @ coeffs[c, :, 0]))
        np.testing.assert_allclose(elem[c, :, 0], expected, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize(
    "factory", [txfem.poisson_form, txfem.poisson_varcoef_form, txfem.elasticity_form]
)
def test_bitwise_agreement_with_the_loop_oracle(dim, factory, rng):
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(dim, factory, 2, seed=9)
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    aux = p0_aux(mesh.n_cells, seed=9) if form.n_aux else None
    fast = txfem.integrate_reference(tab, rule, geom, form, blocks, aux)
    slow = oracle_integrate(tab, rule, geom, form, blocks, aux)
    np.testing.assert_array_equal(fast, slow)


def test_bitwise_agreement_with_nodal_aux_and_two_point_rule(rng):
    rule = txfem.two_point_rule(2)
    form, mesh, layout, _, tab, geom, coeffs = make_problem(
        2, txfem.poisson_varcoef_form, 2, seed=11, rule=rule
    )
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    aux = p1_aux(mesh, seed=11)
    fast = txfem.integrate_reference(tab, rule, geom, form, blocks, aux)
    slow = oracle_integrate(tab, rule, geom, form, blocks, aux)
    np.testing.assert_array_equal(fast, slow)


def test_bitwise_agreement_for_a_form_with_f0(rng):
    form = reaction_form(2)
    _, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 2, seed=13)
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    fast = txfem.integrate_reference(tab, rule, geom, form, blocks)
    slow = oracle_integrate(tab, rule, geom, form, blocks)
    np.testing.assert_array_equal(fast, slow)
    # and the value term actually contributes
    plain = txfem.integrate_reference(tab, rule, geom, txfem.poisson_form(2), blocks)
    assert not np.array_equal(fast, plain)


def test_bitwise_agreement_for_a_form_reading_grad_a(rng):
    def f1(state, comp):
        return state.grad_u[comp] + state.grad_a[0]

    def f1_many(u, grad_u, a, grad_a):
        return grad_u + grad_a

    form = user_form(
        name="aux_gradient", dim=2, n_comp=1, f1=f1, f1_many=f1_many,
        flops_f1=2, source_f1="realv f1_aux_gradient(...) { return gradU[comp] + gradA[0]; }",
        n_aux=1, uses_grad_a=True,
    )
    _, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 2, seed=17)
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    aux = p1_aux(mesh, seed=17)
    fast = txfem.integrate_reference(tab, rule, geom, form, blocks, aux)
    slow = oracle_integrate(tab, rule, geom, form, blocks, aux)
    np.testing.assert_array_equal(fast, slow)


def test_shape_and_aux_errors():
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_varcoef_form, 2)
    good = np.zeros((mesh.n_cells, 3, 1))
    with pytest.raises(ShapeError):
        txfem.integrate_reference(tab, rule, geom, form, np.zeros((2, 3, 1)), p0_aux(mesh.n_cells))
    with pytest.raises(MissingAuxiliaryError):
        txfem.integrate_reference(tab, rule, geom, form, good)
    with pytest.raises(ShapeError):
        txfem.integrate_reference(tab, rule, geom, form, good, p0_aux(mesh.n_cells + 1))


def test_result_is_always_float64():
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_form, 2)
    coeffs = np.ones((mesh.n_cells, 3, 1), dtype=np.float32)
    elem = txfem.integrate_reference(tab, rule, geom, form, coeffs)
    assert elem.dtype == np.float64
