import numpy as np
import pytest

from dirbench.baseline import (
    InnerRunConfig,
    MinibatchSchedule,
    WeightEvaluator,
    WeightGenotype,
    inner_register,
    outer_optimize,
    weighted_gradient,
    weighted_gradient_reference,
)
from dirbench.bspline import BSplineEvaluator, BSplineGrid, bending_energy
from dirbench.errors import InnerRunError
from dirbench.imaging import ScalarImage, interpolate_many
from dirbench.objectives import RegistrationProblem
from dirbench.pareto import non_dominated_mask


def bilinear_problem(n=16, seed=0):
    """Dyadic bilinear images: stored exactly, so the interpolant is a single polynomial (no kinks)."""
    rng = np.random.default_rng(seed)
    x, y = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float), indexing="ij")
    a = rng.integers(-4, 5, size=4)
    b = rng.integers(-4, 5, size=4)
    src = ScalarImage(a[0] + a[1] * x + a[2] * y + a[3] * x * y / n)
    tgt = ScalarImage(b[0] + b[1] * x + b[2] * y + b[3] * x * y / n)
    return RegistrationProblem.from_images(src, tgt, 200, seed)


def weighted_objective(grid, w, problem, pts, values):
    moved = grid.transform_points(pts)
    sim = np.mean((values - interpolate_many(problem.source, moved)) ** 2)
    return w[0] * sim + w[1] * bending_energy(grid, pts)


def fd_gradient(grid, w, problem, pts, values, h=0.05):
    # the objective is quadratic along each coefficient here, so central differences are exact
    g0 = grid.genotype()
    out = np.zeros_like(g0)
    for i in range(len(g0)):
        e = np.zeros_like(g0)
        e[i] = h
        up = weighted_objective(grid.with_coefficients(g0 + e), w, problem, pts, values)
        dn = weighted_objective(grid.with_coefficients(g0 - e), w, problem, pts, values)
        out[i] = (up - dn) / (2 * h)
    return out


def inside(problem, rng, n, margin):
    lo, hi = problem.target.domain_min + margin, problem.target.domain_max - margin
    return lo + rng.uniform(size=(n, problem.ndim)) * (hi - lo)


def test_weight_genotype_normalization():
    w = WeightGenotype(3.0, 1.0).normalized()
    assert (w.w_sim, w.w_mag) == (0.75, 0.25)
    with pytest.raises(ValueError):
        WeightGenotype(0.0, 0.0)
    with pytest.raises(ValueError):
        WeightGenotype(-1.0, 2.0)


def test_step_schedule():
    cfg = InnerRunConfig()
    assert cfg.step(0) == pytest.approx(20 ** -0.602)
    assert cfg.step(10) < cfg.step(0)


def test_compiled_gradient_matches_numpy_reference(blob_problem):
    rng = np.random.default_rng(1)
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    grid = grid.with_coefficients(rng.normal(scale=1.0, size=grid.coefficients.shape))
    pts = inside(blob_problem, rng, 100, 0.0)
    vals = interpolate_many(blob_problem.target, pts)
    for w in ([1.0, 0.0], [0.0, 1.0], [0.3, 0.7]):
        g, parts = weighted_gradient(grid, w, blob_problem, pts, vals)
        ref, ref_parts = weighted_gradient_reference(grid, w, blob_problem, pts, vals)
        np.testing.assert_allclose(g, ref, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(parts, ref_parts, rtol=1e-12)


def test_gradient_matches_finite_differences_on_smooth_images():
    rng = np.random.default_rng(2)
    for trial in range(5):
        problem = bilinear_problem(seed=trial)
        grid = BSplineGrid.for_image(problem.target, 6)
        grid = grid.with_coefficients(rng.normal(scale=0.3, size=grid.coefficients.shape))
        pts = inside(problem, rng, 60, 3.0)
        vals = interpolate_many(problem.target, pts)
        w = rng.dirichlet([1, 1])
        g, _ = weighted_gradient(grid, w, problem, pts, vals)
        fd = fd_gradient(grid, w, problem, pts, vals)
        floor = 1e-8 * np.max(np.abs(fd))
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), floor)) < 1e-4


def test_gradient_trivial_zeros(blob_pair):
    tgt = blob_pair[1]
    same = RegistrationProblem.from_images(tgt, tgt, 200, 1)
    grid = BSplineGrid.for_image(tgt, 7)
    pts = same.samples.points
    g, _ = weighted_gradient(grid, [1.0, 0.0], same, pts)
    assert np.max(np.abs(g)) < 1e-12
    a = np.array([[0.05, -0.02], [0.01, 0.03]])
    affine = grid.with_coefficients(grid.control_positions() @ a.T + 1.0)
    g, _ = weighted_gradient(affine, [0.0, 1.0], same, pts)
    assert np.max(np.abs(g)) < 1e-9


def test_minibatches_are_reproducible(blob_problem):
    a = MinibatchSchedule(blob_problem, 32, 4)
    b = MinibatchSchedule(blob_problem, 32, 4)
    pa, va = a.batches(5)
    pb, vb = b.batches(3)
    np.testing.assert_array_equal(pa[:3], pb)
    np.testing.assert_array_equal(a.batch(4)[0], pa[4])


SMALL = InnerRunConfig(samples=64, iterations=60)


def test_inner_register_zero_iterations_is_identity(blob_problem):
    sol = inner_register(blob_problem, WeightGenotype(0.5, 0.5), InnerRunConfig(samples=8, iterations=0))
    ev = BSplineEvaluator(blob_problem, BSplineGrid.for_image(blob_problem.target, 7))
    np.testing.assert_array_equal(sol.objectives, ev.evaluate(np.zeros(ev.n_vars)).objectives)
    assert np.all(sol.payload == 0)


def test_inner_register_identical_images_stays_optimal(blob_pair):
    tgt = blob_pair[1]
    same = RegistrationProblem.from_images(tgt, tgt, 300, 1)
    sol = inner_register(same, WeightGenotype(0.7, 0.3), SMALL)
    assert sol.objectives[0] <= 0.0


def test_inner_register_deterministic_and_improves(blob_problem):
    a = inner_register(blob_problem, WeightGenotype(1.0, 0.0), SMALL, seed=3)
    b = inner_register(blob_problem, WeightGenotype(1.0, 0.0), SMALL, seed=3)
    np.testing.assert_array_equal(a.payload, b.payload)
    identity = inner_register(blob_problem, WeightGenotype(1.0, 0.0), InnerRunConfig(samples=8, iterations=0))
    assert a.objectives[0] < identity.objectives[0]


def test_heavy_smoothness_weight_stays_near_identity(blob_problem):
    sol = inner_register(blob_problem, WeightGenotype(0.001, 0.999), SMALL)
    grid = BSplineGrid.for_image(blob_problem.target, 7)
    ev = BSplineEvaluator(blob_problem, grid)
    jittered = ev.evaluate(ev.random_genotype(np.random.default_rng(0)))
    assert sol.objectives[1] < jittered.objectives[1]
    assert np.max(np.abs(sol.payload)) < 0.1 * grid.spacing.min()


def test_divergence_raises_and_is_marked_infeasible(blob_problem):
    wild = InnerRunConfig(samples=64, iterations=50, a=1e7)
    with pytest.raises(InnerRunError):
        inner_register(blob_problem, WeightGenotype(1.0, 0.0), wild)
    ev = WeightEvaluator(blob_problem, wild)
    s = ev.evaluate([1.0, 0.0])
    assert not s.feasible and np.all(np.isinf(s.objectives)) and ev.failures == 1


def test_weight_evaluator_memoizes_and_normalizes(blob_problem):
    ev = WeightEvaluator(blob_problem, SMALL)
    a = ev.evaluate([2.0, 2.0])
    b = ev.evaluate([0.5, 0.5])
    assert ev.inner_runs == 1
    np.testing.assert_array_equal(a.genotype, [0.5, 0.5])
    np.testing.assert_array_equal(a.objectives, b.objectives)
    assert len(ev.fos()) == 1 and list(ev.fos()[0].indices) == [0, 1]


def test_outer_zero_generations_is_front_of_initial_runs(blob_problem):
    res = outer_optimize(blob_problem, population=4, generations=0, seed=5, config=SMALL, clusters=4)
    ev = res.evaluator
    pop = res.population
    assert [tuple(p.genotype) for p in pop[:2]] == [(1.0, 0.0), (0.0, 1.0)]
    objs = np.array([p.objectives for p in pop])
    expected = sorted(map(tuple, objs[non_dominated_mask(objs)]))
    assert sorted(map(tuple, res.archive.objectives)) == expected
    assert ev.inner_runs == 4


def test_pure_similarity_weight_anchors_front(blob_problem):
    wins = 0
    for seed in range(10):
        res = outer_optimize(blob_problem, population=8, generations=3, seed=seed, config=SMALL, clusters=4)
        members = res.archive.members
        best = min(members, key=lambda m: m.objectives[0])
        wins += bool(np.allclose(best.genotype, [1.0, 0.0]))
    assert wins >= 9
