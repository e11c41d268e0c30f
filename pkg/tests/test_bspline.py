import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirbench.bspline import (
    BSplineEvaluator,
    BSplineGrid,
    affected_region,
    basis_weights,
    bending_energy,
    min_jacobian_determinant,
    partial_contribution,
    read_grid,
    whole_region,
    write_grid,
)
from dirbench.errors import DomainError
from dirbench.imaging import ScalarImage
from dirbench.objectives import draw_samples


def cubic_kernel(t):
    """Centered cubic B-spline, independent of the module's basis polynomials."""
    a = np.abs(t)
    return np.where(a < 1, 2 / 3 - a**2 + a**3 / 2, np.where(a < 2, (2 - a) ** 3 / 6, 0.0))


def brute_force_transform(grid, pts):
    """Sum over every control point of the tensor-product kernel times its coefficient."""
    pos = grid.control_positions()
    w = np.ones((len(pts), len(pos)))
    for k in range(grid.ndim):
        w *= cubic_kernel((pts[:, None, k] - pos[None, :, k]) / grid.spacing[k])
    return pts + w @ grid.coefficients


def random_grid(rng, ndim=2, dims=None, scale=2.0):
    dims = dims or tuple(rng.integers(4, 8, size=ndim))
    lo = rng.uniform(-5, 5, ndim)
    hi = lo + rng.uniform(10, 40, ndim)
    spacing = (hi - lo) / (np.asarray(dims) - 3)
    grid = BSplineGrid(dims, spacing, lo, hi)
    return grid.with_coefficients(rng.normal(scale=scale, size=grid.coefficients.shape))


def inside_points(grid, rng, n):
    return grid.domain_min + rng.uniform(0, 1, (n, grid.ndim)) * (grid.domain_max - grid.domain_min)


def test_basis_closed_forms():
    np.testing.assert_allclose(basis_weights(0.0), [1 / 6, 2 / 3, 1 / 6, 0.0], atol=1e-15)
    np.testing.assert_allclose(basis_weights(0.5), [1 / 48, 23 / 48, 23 / 48, 1 / 48], atol=1e-15)


@given(st.floats(0.0, 1.0, exclude_max=True))
def test_partition_of_unity(u):
    w = basis_weights(u)
    assert abs(w.sum() - 1.0) < 1e-14 and np.all(w >= 0)


def test_zero_grid_is_identity_and_constant_grid_translates():
    rng = np.random.default_rng(0)
    grid = random_grid(rng).with_coefficients(None)
    pts = inside_points(grid, rng, 50)
    np.testing.assert_array_equal(grid.transform_points(pts), pts)
    v = np.array([1.5, -0.25])
    shifted = grid.with_coefficients(np.tile(v, (grid.n_points, 1)))
    np.testing.assert_allclose(shifted.transform_points(pts), pts + v, atol=1e-12)


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_transform_matches_full_lattice_oracle(seed, ndim):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, ndim)
    pts = inside_points(grid, rng, 30)
    np.testing.assert_allclose(grid.transform_points(pts), brute_force_transform(grid, pts), atol=1e-10)


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_affine_reproduction(seed, ndim):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, ndim)
    a, b = rng.normal(scale=0.2, size=(ndim, ndim)), rng.normal(size=ndim)
    affine = grid.with_coefficients(grid.control_positions() @ a.T + b)
    pts = inside_points(grid, rng, 25)
    np.testing.assert_allclose(affine.transform_points(pts), pts + pts @ a.T + b, atol=1e-9)
    assert bending_energy(affine, pts) < 1e-9


def test_transform_point_outside_domain_raises():
    grid = BSplineGrid.for_image(ScalarImage(np.zeros((10, 10))), 7)
    grid.transform_point((9.0, 0.0))
    with pytest.raises(DomainError):
        grid.transform_point((9.5, 0.0))


def test_affected_region_counts():
    g2 = BSplineGrid.for_image(ScalarImage(np.zeros((20, 20))), 9)
    r = affected_region(g2, (4, 4))
    assert r.n_cells == 16 and len(r.spanned_points()) == 25 and len(r.stencil_points()) == 49
    g3 = BSplineGrid.for_image(ScalarImage(np.zeros((12, 12, 12))), 9)
    r3 = affected_region(g3, (4, 4, 4))
    assert r3.n_cells == 64 and len(r3.spanned_points()) == 125
    corner = affected_region(g2, (0, 0))
    assert corner.n_cells <= 4


def test_affected_region_is_exactly_the_influence_set():
    rng = np.random.default_rng(1)
    grid = random_grid(rng, 2, dims=(8, 7))
    for flat in range(grid.n_points):
        region = affected_region(grid, flat)
        cells = set(region.cells().tolist())
        st = grid.stencils(inside_points(grid, rng, 400))
        touched = set(st.cell[np.any(st.idx == flat, axis=1)].tolist())
        assert touched <= cells


def fd_bending(grid, pts, h):
    """Bending energy with second derivatives from central differences of the transform."""
    d = grid.ndim
    total = np.zeros(len(pts))
    f = grid.transform_points
    for a in range(d):
        for b in range(a, d):
            ea, eb = np.eye(d)[a] * h[a], np.eye(d)[b] * h[b]
            if a == b:
                sec = (f(pts + ea) - 2 * f(pts) + f(pts - ea)) / h[a] ** 2
            else:
                sec = (f(pts + ea + eb) - f(pts + ea - eb) - f(pts - ea + eb) + f(pts - ea - eb)) / (4 * h[a] * h[b])
            total += (1.0 if a == b else 2.0) * np.sum(sec**2, axis=1)
    return float(np.mean(total))


def test_bending_energy_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(50):
        grid = random_grid(rng, int(rng.integers(2, 4)))
        h = 1e-3 * grid.spacing
        pts = inside_points(grid, rng, 40)
        t = (pts - grid.domain_min) / grid.spacing
        frac = t - np.floor(t)
        pts = pts[np.all((frac > 0.01) & (frac < 0.99), axis=1)]  # stay off cell faces
        exact = bending_energy(grid, pts)
        assert abs(fd_bending(grid, pts, h) - exact) <= 1e-4 * exact


def test_second_derivatives_continuous_across_cell_face():
    rng = np.random.default_rng(3)
    grid = random_grid(rng, 2)
    face = grid.domain_min[0] + 2 * grid.spacing[0]
    y = grid.domain_min[1] + 0.37 * (grid.domain_max[1] - grid.domain_min[1])
    eps = 1e-9 * grid.spacing[0]
    below = grid.hessians(np.array([[face - eps, y]]))
    above = grid.hessians(np.array([[face + eps, y]]))
    np.testing.assert_allclose(below, above, atol=1e-6 * np.abs(below).max())


def test_zero_grid_has_no_bending_and_unit_jacobian():
    grid = BSplineGrid.for_image(ScalarImage(np.zeros((16, 16))), 7)
    pts = inside_points(grid, np.random.default_rng(4), 20)
    assert bending_energy(grid, pts) == 0.0
    assert min_jacobian_determinant(grid, pts) == pytest.approx(1.0)


def test_min_jacobian_reports_folds_without_enforcing():
    grid = BSplineGrid.for_image(ScalarImage(np.zeros((16, 16))), 7)
    rng = np.random.default_rng(5)
    folded = grid.with_coefficients(rng.normal(scale=3 * grid.spacing[0], size=grid.coefficients.shape))
    pts = inside_points(grid, rng, 500)
    assert min_jacobian_determinant(folded, pts) < 0
    folded.transform_points(pts)  # still a valid transform object


def test_whole_region_partial_equals_full(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    ev = BSplineEvaluator(blob_problem, grid)
    sol = ev.evaluate(ev.random_genotype(np.random.default_rng(6)))
    sim, bend = partial_contribution(ev.decode(sol.genotype), whole_region(grid), blob_problem)
    np.testing.assert_allclose([sim, bend], sol.objectives, rtol=1e-12)


def test_partial_contributions_sum_over_cells(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 6)
    ev = BSplineEvaluator(blob_problem, grid)
    g = ev.decode(ev.random_genotype(np.random.default_rng(7)))
    full = ev.evaluate(g.genotype()).objectives
    parts = np.zeros(2)
    from dirbench.bspline import PatchRegion

    for i in range(grid.cell_dims[0]):
        region = PatchRegion((i, 0), (i + 1, grid.cell_dims[1]), grid.cell_dims)
        parts += partial_contribution(g, region, blob_problem)
    np.testing.assert_allclose(parts, full, rtol=1e-10)


def _relative(a, b):
    return np.max(np.abs(np.asarray(a) - b) / np.maximum(np.abs(b), 1e-300))


def test_incremental_single_moves_match_full(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    ev = BSplineEvaluator(blob_problem, grid)
    rng = np.random.default_rng(8)
    sol = ev.evaluate(ev.random_genotype(rng))
    fos = ev.fos()
    for _ in range(200):
        e = fos[int(rng.integers(len(fos)))]
        undo = ev.apply(sol, e, sol.genotype[e.indices] + rng.normal(scale=1.0, size=len(e)))
        assert _relative(sol.objectives, ev.evaluate(sol.genotype).objectives) < 1e-8
        if rng.random() < 0.5:
            ev.revert(sol, undo)
            assert _relative(sol.objectives, ev.evaluate(sol.genotype).objectives) < 1e-8


def test_order_of_non_overlapping_moves_is_irrelevant(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 9)
    ev = BSplineEvaluator(blob_problem, grid)
    rng = np.random.default_rng(9)
    g0 = ev.random_genotype(rng)
    fos = ev.fos()
    a, b = fos[grid.flat_index((1, 1))], fos[grid.flat_index((7, 7))]
    va, vb = rng.normal(size=2), rng.normal(size=2)
    s1 = ev.evaluate(g0)
    ev.apply(s1, a, va)
    ev.apply(s1, b, vb)
    s2 = ev.evaluate(g0)
    ev.apply(s2, b, vb)
    ev.apply(s2, a, va)
    assert _relative(s1.objectives, s2.objectives) < 1e-8
    assert _relative(s1.objectives, ev.evaluate(s1.genotype).objectives) < 1e-8


def test_revert_restores_exact_state(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    ev = BSplineEvaluator(blob_problem, grid)
    rng = np.random.default_rng(10)
    sol = ev.evaluate(ev.random_genotype(rng))
    g, f = sol.genotype.copy(), sol.objectives.copy()
    e = ev.fos()[20]
    undo = ev.apply(sol, e, rng.normal(size=2))
    ev.revert(sol, undo)
    np.testing.assert_array_equal(sol.genotype, g)
    np.testing.assert_array_equal(sol.objectives, f)


def test_3d_variable_count_and_fos():
    img = ScalarImage(np.zeros((10, 10, 10)))
    grid = BSplineGrid.for_image(img, 7)
    assert grid.n_vars == 1029
    from dirbench.objectives import RegistrationProblem

    ev = BSplineEvaluator(RegistrationProblem.from_images(img, img, 50), grid)
    fos = ev.fos()
    assert len(fos) == 343 and all(len(e) == 3 for e in fos)
    assert np.array_equal(np.sort(np.concatenate([e.indices for e in fos])), np.arange(1029))


def test_random_genotype_within_init_range(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    ev = BSplineEvaluator(blob_problem, grid)
    g = ev.random_genotype(np.random.default_rng(11)).reshape(-1, 2)
    assert np.all(np.abs(g) <= 0.3 * grid.spacing)


def test_grid_file_round_trip(tmp_path):
    grid = random_grid(np.random.default_rng(12), 3)
    write_grid(tmp_path / "g.grid", grid)
    back = read_grid(tmp_path / "g.grid")
    assert back.control_dims == grid.control_dims
    np.testing.assert_array_equal(back.coefficients, grid.coefficients)
    np.testing.assert_array_equal(back.spacing, grid.spacing)


def test_samples_drawn_for_grid_are_in_domain(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    assert np.all(grid.contains(draw_samples(blob_problem.target, 100, 1).points))
