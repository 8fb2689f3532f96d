import io
from collections import Counter, defaultdict

import numpy as np
import pytest

import txfem
from txfem.device import model_batch_counters
from txfem.errors import CapacityError, ShapeError
from txfem.mesh import CellGeometry

from conftest import make_problem, p0_aux, p1_aux, reaction_form, rel_err

ALL_FORMS = [txfem.poisson_form, txfem.poisson_varcoef_form, txfem.elasticity_form]


def run_both(dim, factory, n, n_bl, n_cb, dtype, seed=0, rule=None, aux_space=None,
             **kwargs):
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(
        dim, factory, n, seed=seed, rule=rule
    )
    if form.n_aux:
        aux = p1_aux(mesh, seed) if aux_space == "p1" else p0_aux(mesh.n_cells, seed)
    else:
        aux = None
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    ref_elem = txfem.integrate_reference(tab, rule, geom, form, blocks, aux)
    reference = txfem.assemble_residual(mesh, layout, ref_elem)
    residual, trace = txfem.integrate_transposed(
        mesh, layout, tab, rule, form, coeffs, aux,
        n_bl=n_bl, n_cb=n_cb, dtype=dtype, cell_geom=geom, **kwargs
    )
    return residual, reference, trace


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("factory", ALL_FORMS)
def test_float64_runs_match_the_reference_bitwise(dim, factory):
    residual, reference, trace = run_both(dim, factory, 4, n_bl=3, n_cb=2, dtype="f64")
    np.testing.assert_array_equal(residual, reference)
    assert trace.remainder_cells == trace.geom.n_r


@pytest.mark.parametrize("factory", ALL_FORMS)
def test_float32_runs_stay_within_tolerance(factory):
    residual, reference, _ = run_both(2, factory, 8, n_bl=4, n_cb=2, dtype="f32")
    assert residual.dtype == np.float32
    assert rel_err(residual, reference) < 1e-6


def test_two_point_rule_and_nodal_aux_match_bitwise():
    residual, reference, _ = run_both(
        2, txfem.poisson_varcoef_form, 4, n_bl=2, n_cb=2, dtype="f64",
        rule=txfem.two_point_rule(2), aux_space="p1",
    )
    np.testing.assert_array_equal(residual, reference)


def test_form_with_f0_matches_bitwise():
    form = reaction_form(2)
    _, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 4, seed=3)
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    reference = txfem.assemble_residual(
        mesh, layout, txfem.integrate_reference(tab, rule, geom, form, blocks)
    )
    for backend in (None, "simulated"):
        residual, _ = txfem.integrate_transposed(
            mesh, layout, tab, rule, form, coeffs,
            n_bl=2, n_cb=2, dtype="f64", cell_geom=geom, backend=backend,
        )
        np.testing.assert_array_equal(residual, reference)


@pytest.mark.parametrize("dtype", ["f32", "f64"])
@pytest.mark.parametrize("factory", ALL_FORMS)
def test_all_lanes_agree_bitwise(factory, dtype):
    results = {}
    for backend in ("simulated", "python", "compiled"):
        if backend == "compiled" and not txfem.compiled_available():
            continue
        residual, _, _ = run_both(
            2, factory, 4, n_bl=2, n_cb=3, dtype=dtype, seed=1, backend=backend
        )
        results[backend] = residual
    base = results.pop("simulated")
    for backend, residual in results.items():
        np.testing.assert_array_equal(residual, base, err_msg=backend)


def test_constant_coefficients_give_exact_zero():
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_form, 4)
    residual, _ = txfem.integrate_transposed(
        mesh, layout, tab, rule, form, np.ones(layout.global_size(mesh)),
        n_bl=2, n_cb=2, dtype="f32", cell_geom=geom,
    )
    assert (residual == 0).all()


def synthetic_chunk(geom, seed=0):
    """Random positively oriented cell geometry covering one chunk."""
    rng = np.random.default_rng(seed)
    jac = np.broadcast_to(np.eye(geom.dim), (geom.n_chunk, geom.dim, geom.dim)).copy()
    jac += 0.2 * rng.uniform(-1.0, 1.0, jac.shape)
    det = np.linalg.det(jac)
    assert (det > 0).all()
    return CellGeometry(inv_jacobians=np.linalg.inv(jac), determinants=det)


def test_execute_chunk_on_reference_triangle_copies():
    geom = txfem.derive_execution_geometry(2, 3, 1, 1, 1, 2, 6)
    assert geom.n_chunk == 6
    cells = CellGeometry(
        inv_jacobians=np.broadcast_to(np.eye(2), (6, 2, 2)).copy(),
        determinants=np.ones(6),
    )
    coeffs = np.zeros((6, 3, 1))
    coeffs[:, 1, 0] = 1.0  # u = x on every copy
    rule = txfem.quadrature_rule(2, 1)
    tab = txfem.tabulate(2, rule)
    elem, trace = txfem.execute_chunk(
        geom, tab, rule, cells, coeffs, None, txfem.poisson_form(2)
    )
    for c in range(6):
        np.testing.assert_array_equal(elem[c, :, 0], [-0.5, 0.5, 0.0])
    assert len(trace.batches) == 2


def test_vector_two_point_chunk_matches_reference_to_zero_ulp():
    # two-component element, two-point rule, two concurrent blocks: 12 cells
    geom = txfem.derive_execution_geometry(2, 3, 2, 2, 2, 1, 12)
    assert geom.n_chunk == 12 and geom.n_t == 24
    cells = synthetic_chunk(geom, seed=7)
    rng = np.random.default_rng(8)
    coeffs = rng.standard_normal((12, 3, 2))
    rule = txfem.two_point_rule(2)
    tab = txfem.tabulate(2, rule)
    form = txfem.elasticity_form(2)
    expected = txfem.integrate_reference(tab, rule, cells, form, coeffs)
    for backend in ("simulated", "python", None):
        elem, _ = txfem.execute_chunk(
            geom, tab, rule, cells, coeffs, None, form, backend=backend
        )
        np.testing.assert_array_equal(elem, expected)


def test_execute_chunk_rejects_wrong_slice():
    geom = txfem.derive_execution_geometry(2, 3, 1, 1, 1, 2, 6)
    cells = synthetic_chunk(geom)
    rule = txfem.quadrature_rule(2, 1)
    tab = txfem.tabulate(2, rule)
    with pytest.raises(ShapeError):
        txfem.execute_chunk(
            geom, tab, rule,
            CellGeometry(cells.inv_jacobians[:4], cells.determinants[:4]),
            np.zeros((4, 3, 1)), None, txfem.poisson_form(2),
        )


@pytest.mark.parametrize("dtype,tol", [("f64", 0.0), ("f32", 1e-6)])
def test_partition_invariance_across_decompositions(dtype, tol):
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 16)
    assert mesh.n_cells == 512
    results = []
    for n_bl, n_cb in ((16, 8), (32, 4), (4, 2), (1, 1), (20, 16)):
        residual, _ = txfem.integrate_transposed(
            mesh, layout, tab, rule, form, coeffs,
            n_bl=n_bl, n_cb=n_cb, dtype=dtype, cell_geom=geom,
        )
        results.append(residual)
    for other in results[1:]:
        if dtype == "f64":
            np.testing.assert_array_equal(other, results[0])
        else:
            assert rel_err(other, results[0]) < tol


def test_jobs_do_not_change_the_result():
    for dtype in ("f64", "f32"):
        serial, _, _ = run_both(3, txfem.elasticity_form, 3, n_bl=2, n_cb=2,
                                dtype=dtype, jobs=1)
        threaded, _, _ = run_both(3, txfem.elasticity_form, 3, n_bl=2, n_cb=2,
                                  dtype=dtype, jobs=8)
        np.testing.assert_array_equal(threaded, serial)


def test_tiny_mesh_runs_entirely_on_the_remainder_path():
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 2)
    residual, trace = txfem.integrate_transposed(
        mesh, layout, tab, rule, form, coeffs,
        n_bl=16, n_cb=8, dtype="f64", cell_geom=geom,
    )
    assert trace.geom.n_chunks == 0 and trace.remainder_cells == mesh.n_cells
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    reference = txfem.assemble_residual(
        mesh, layout, txfem.integrate_reference(tab, rule, geom, form, blocks)
    )
    np.testing.assert_array_equal(residual, reference)


def test_affine_field_zero_interior_residual_through_the_executor():
    form, mesh, layout, rule, tab, geom, _ = make_problem(2, txfem.poisson_form, 8)
    v = mesh.vertices
    u = 2.0 * v[:, 0] + 3.0 * v[:, 1] + 1.0
    residual, _ = txfem.integrate_transposed(
        mesh, layout, tab, rule, form, u, n_bl=4, n_cb=2, dtype="f64", cell_geom=geom
    )
    interior = txfem.interior_vertex_mask(mesh)
    assert np.abs(residual[interior]).max() <= 1e-12


def test_capacity_error_reports_the_requirement():
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 4)
    with pytest.raises(CapacityError) as excinfo:
        txfem.integrate_transposed(
            mesh, layout, tab, rule, form, coeffs,
            n_bl=8, n_cb=2, dtype="f64", shared_mem_limit=256, cell_geom=geom,
        )
    err = excinfo.value
    exec_geom = txfem.derive_execution_geometry(2, 3, 1, 1, 8, 2, mesh.n_cells)
    assert err.required_bytes == txfem.shared_image_bytes(exec_geom, 8, False)
    assert err.limit_bytes == 256
    assert str(err.required_bytes) in str(err)


def test_unsupported_compiled_request_raises():
    form = reaction_form(2)
    _, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 4)
    with pytest.raises(ValueError, match="compiled backend"):
        txfem.integrate_transposed(
            mesh, layout, tab, rule, form, coeffs,
            n_bl=2, n_cb=2, backend="compiled", cell_geom=geom,
        )


def task_logged_run(dim=2, factory=None, n=4, n_bl=2, n_cb=2, rule=None):
    factory = factory or txfem.elasticity_form
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(dim, factory, n, rule=rule)
    residual, trace = txfem.integrate_transposed(
        mesh, layout, tab, rule, form, coeffs,
        n_bl=n_bl, n_cb=n_cb, dtype="f64", log_tasks=True, cell_geom=geom,
    )
    return form, trace


def test_schedule_coverage_from_the_task_log():
    form, trace = task_logged_run(rule=txfem.two_point_rule(2))
    g = trace.geom
    assert g.n_chunks >= 1
    for chunk in trace.chunks:
        phase1 = Counter(
            (r.cell, r.index, r.comp) for r in chunk.task_log if r.phase == 1
        )
        phase2 = Counter(
            (r.cell, r.index, r.comp) for r in chunk.task_log if r.phase == 2
        )
        cells = {r.cell for r in chunk.task_log}
        assert len(cells) == g.n_chunk
        # every (cell, point, comp) and (cell, basis, comp) pair exactly once
        assert all(v == 1 for v in phase1.values())
        assert all(v == 1 for v in phase2.values())
        assert len(phase1) == g.n_chunk * g.n_q * g.n_comp
        assert len(phase2) == g.n_chunk * g.n_b * g.n_comp
        # per-cell touch counts
        per_cell1 = Counter(r.cell for r in chunk.task_log if r.phase == 1)
        per_cell2 = Counter(r.cell for r in chunk.task_log if r.phase == 2)
        assert set(per_cell1.values()) == {g.n_q * g.n_comp}
        assert set(per_cell2.values()) == {g.n_b * g.n_comp}


def test_one_barrier_per_batch():
    _, trace = task_logged_run()
    for chunk in trace.chunks:
        assert chunk.barrier_count == trace.geom.n_cb
        assert all(b.barriers == 1 for b in chunk.batches)


def test_concurrent_write_width_in_the_basis_phase():
    _, trace = task_logged_run(rule=txfem.two_point_rule(2))
    g = trace.geom
    for chunk in trace.chunks:
        written = defaultdict(set)
        for r in chunk.task_log:
            if r.phase == 2:
                written[(r.batch, r.step)].add(r.cell)
        assert all(len(cells) == g.n_cbc for cells in written.values())


def test_simulated_counters_match_the_structural_builder():
    for factory, aux_fn in (
        (txfem.poisson_form, None),
        (txfem.elasticity_form, None),
        (txfem.poisson_varcoef_form, "p0"),
        (txfem.poisson_varcoef_form, "p1"),
    ):
        form, mesh, layout, rule, tab, geom, coeffs = make_problem(2, factory, 4)
        aux = None
        if aux_fn == "p0":
            aux = p0_aux(mesh.n_cells)
        elif aux_fn == "p1":
            aux = p1_aux(mesh)
        _, trace = txfem.integrate_transposed(
            mesh, layout, tab, rule, form, coeffs, aux,
            n_bl=2, n_cb=2, dtype="f64", backend="simulated", cell_geom=geom,
        )
        expected = model_batch_counters(trace.geom, form, 8, aux)
        for chunk in trace.chunks:
            for batch in chunk.batches:
                assert batch == expected


def test_trace_csv_export():
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(2, txfem.poisson_form, 8)
    _, trace = txfem.integrate_transposed(
        mesh, layout, tab, rule, form, coeffs,
        n_bl=4, n_cb=2, dtype="f32", cell_geom=geom,
    )
    buf = io.StringIO()
    trace.write_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "chunk,batch,flops,bytes_loaded,barriers"
    g = trace.geom
    assert len(lines) == 1 + g.n_chunks * g.n_cb
    chunk, batch, flops, bytes_loaded, barriers = lines[1].split(",")
    assert (int(chunk), int(batch), int(barriers)) == (0, 0, 1)
    assert int(flops) == trace.chunks[0].batches[0].model_flops
    assert int(bytes_loaded) == trace.chunks[0].batches[0].bytes_loaded


@pytest.mark.parametrize("dim,n", [(2, 48), (3, 11)])
@pytest.mark.parametrize("factory", ALL_FORMS)
def test_oracle_equivalence_over_the_full_decomposition_grid(dim, factory, n):
    """Every decomposition of the invariant grid reproduces the reference,
    at roundoff for f32 and bitwise for f64 (meshes of a few thousand cells,
    so many grid points exercise partial-chunk and pure-remainder splits)."""
    form, mesh, layout, rule, tab, geom, coeffs = make_problem(dim, factory, n, seed=31)
    aux = p0_aux(mesh.n_cells, seed=31) if form.n_aux else None
    blocks = txfem.gather_coefficients(mesh, layout, coeffs)
    reference = txfem.assemble_residual(
        mesh, layout, txfem.integrate_reference(tab, rule, geom, form, blocks, aux)
    )
    for n_bl in (1, 2, 4, 16, 20, 24, 28, 32, 36):
        for n_cb in (1, 4, 8, 12, 16):
            for dtype, tol in (("f32", 1e-6), ("f64", 0.0)):
                residual, _ = txfem.integrate_transposed(
                    mesh, layout, tab, rule, form, coeffs, aux,
                    n_bl=n_bl, n_cb=n_cb, dtype=dtype,
                    shared_mem_limit=None, cell_geom=geom,
                )
                if dtype == "f64":
                    np.testing.assert_array_equal(residual, reference)
                else:
                    assert rel_err(residual, reference) < tol, (n_bl, n_cb)


def test_shared_image_accounting_is_conditional_on_f0():
    g = txfem.derive_execution_geometry(2, 3, 1, 1, 1, 1, 3)
    with_f0 = txfem.shared_image_bytes(g, 4, True)
    without = txfem.shared_image_bytes(g, 4, False)
    assert with_f0 == 168
    assert without < with_f0
