import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dirbench.bspline import BSplineEvaluator, BSplineGrid
from dirbench.errors import ConfigError
from dirbench.gomea import (
    ElitistArchive,
    FOSElement,
    Solution,
    cluster_population,
    fit_gaussian,
    gom_step,
    run,
    select_members,
    verify_caches,
)
from dirbench.gomea.core import GaussianModel
from dirbench.pareto import non_dominated_mask


class ToyEvaluator:
    """Bi-objective sphere pair: f0 = |x - 1|^2, f1 = |x + 1|^2 (front is the segment between)."""

    kind = "toy"

    def __init__(self, n=6):
        self.n_vars = n

    def fos(self):
        return [FOSElement(np.array([i, i + 1])) for i in range(0, self.n_vars, 2)]

    def random_genotype(self, rng):
        return rng.uniform(-3, 3, self.n_vars)

    def _objs(self, g):
        return np.array([np.sum((g - 1) ** 2), np.sum((g + 1) ** 2)])

    def evaluate(self, genotype):
        g = np.array(genotype, dtype=float)
        return Solution(g, self._objs(g))

    def apply(self, sol, element, values):
        undo = (element, sol.genotype[element.indices].copy(), sol.objectives.copy())
        sol.genotype[element.indices] = values
        sol.objectives = self._objs(sol.genotype)
        return undo

    def revert(self, sol, undo):
        element, values, objs = undo
        sol.genotype[element.indices] = values
        sol.objectives = objs


def sol(f, feasible=True):
    return Solution(np.zeros(1), np.asarray(f, dtype=float), feasible)


def test_archive_basic_rules():
    a = ElitistArchive(10)
    assert a.insert(sol([2, 2]))
    assert not a.insert(sol([2, 2]))
    assert a.insert(sol([1, 3])) and a.insert(sol([3, 1]))
    assert not a.insert(sol([0, 0], feasible=False))
    assert not a.insert(sol([np.inf, 0]))
    assert a.insert(sol([0, 0])) and len(a) == 1


def test_archive_stores_copies():
    a = ElitistArchive(5)
    s = sol([1, 1])
    a.insert(s)
    s.genotype[0] = 7.0
    assert a.members[0].genotype[0] == 0.0


@given(st.integers(0, 10_000), st.integers(3, 40))
def test_archive_never_holds_dominated_pairs(seed, capacity):
    rng = np.random.default_rng(seed)
    a = ElitistArchive(capacity)
    for _ in range(300):
        a.insert(sol(rng.uniform(0, 1, 2) ** rng.uniform(0.5, 2)))
        assert np.all(non_dominated_mask(a.objectives))
    if a.reached_capacity and a.adaptations:
        assert len(a) <= 4 * capacity / 3


def test_archive_size_bounds_on_dense_front():
    a = ElitistArchive(30)
    rng = np.random.default_rng(1)
    for x in rng.uniform(0, 1, 2000):
        a.insert(sol([x, 1 - x]))
        if a.reached_capacity:
            assert 15 <= len(a) <= 40, len(a)
    assert a.adaptations > 0 and not a.check_invariants()


def test_cluster_population_examples():
    rng = np.random.default_rng(2)
    objs = rng.uniform(size=(10, 2))
    cl = cluster_population(objs, 10)
    assert sorted(len(c) for c in cl) == [1] * 10
    same = np.ones((23, 2))
    sizes = [len(c) for c in cluster_population(same, 10)]
    assert max(sizes) - min(sizes) <= 1 and sum(sizes) == 23
    big = cluster_population(rng.uniform(size=(200, 2)), 10)
    assert all(len(c) == 20 for c in big)
    assert np.array_equal(np.sort(np.concatenate([c.members for c in big])), np.arange(200))
    with pytest.raises(ConfigError):
        cluster_population(objs[:5], 10)


def test_edge_clusters_contain_extremes():
    rng = np.random.default_rng(3)
    objs = rng.uniform(size=(50, 2))
    cl = cluster_population(objs, 10)
    assert cl[0].edge_objective == 0 and cl[1].edge_objective == 1
    assert int(np.argmin(objs[:, 0])) in cl[0].members
    assert int(np.argmin(objs[:, 1])) in cl[1].members


def test_select_members_fraction():
    rng = np.random.default_rng(4)
    objs = rng.uniform(size=(20, 2))
    chosen = select_members(objs, np.arange(20))
    assert len(chosen) == 7
    nd = np.nonzero(non_dominated_mask(objs))[0]
    assert set(nd[: min(len(nd), 7)]) & set(chosen)


def test_fit_gaussian_examples():
    g = fit_gaussian([[1.0, 2.0]] * 5)
    np.testing.assert_array_equal(g.mean, [1.0, 2.0])
    assert np.all(g.covariance == 0)
    g2 = fit_gaussian([[0.0, 0.0], [2.0, 4.0]])
    np.testing.assert_allclose(g2.mean, [1.0, 2.0])
    x = np.random.default_rng(5).normal(size=(30, 4))
    g3 = fit_gaussian(x)
    mu = x.sum(axis=0) / 30
    cov = sum(np.outer(r - mu, r - mu) for r in x) / 30
    np.testing.assert_allclose(g3.covariance - 1e-10 * np.trace(cov) * np.eye(4), cov, atol=1e-10)
    np.testing.assert_allclose(g3.factor @ g3.factor.T, g3.covariance, atol=1e-10)


def test_zero_covariance_step_leaves_solution_unchanged():
    ev = ToyEvaluator()
    s = ev.evaluate(np.arange(6.0))
    before = s.genotype.copy()
    fos = ev.fos()
    models = [GaussianModel(s.genotype[e.indices].copy(), np.zeros((2, 2)), np.zeros((2, 2))) for e in fos]
    archive = ElitistArchive(10)
    archive.insert(s)
    gom_step(s, ev, fos, models, np.ones(len(fos)), archive, np.random.default_rng(0))
    np.testing.assert_array_equal(s.genotype, before)


def toy_objs(result):
    return np.array(sorted(map(tuple, result.archive.objectives)))


def test_run_zero_generations_archives_initial_front():
    ev = ToyEvaluator()
    res = run(ev, 20, 0, seed=3)
    rng = np.random.default_rng(3)
    init = np.array([ev._objs(ev.random_genotype(rng)) for _ in range(20)])
    expected = np.array(sorted(map(tuple, init[non_dominated_mask(init)])))
    np.testing.assert_array_equal(toy_objs(res), expected)
    assert len(res.history) == 1


def test_run_is_deterministic_and_improves():
    a = run(ToyEvaluator(), 30, 15, seed=7)
    b = run(ToyEvaluator(), 30, 15, seed=7)
    np.testing.assert_array_equal(toy_objs(a), toy_objs(b))
    assert [m.genotype.tobytes() for m in a.archive.members] == [m.genotype.tobytes() for m in b.archive.members]
    assert a.history[-1]["hypervolume"] > a.history[0]["hypervolume"]


def test_run_invariants_and_monotone_hypervolume():
    res = run(ToyEvaluator(), 30, 20, seed=1, capacity=1000, check_invariants=True)
    hv = [h["hypervolume"] for h in res.history]
    assert res.archive.adaptations == 0
    assert all(b >= a - 1e-12 for a, b in zip(hv, hv[1:]))
    keys = {"generation", "hypervolume", "archive_size", "best_similarity", "best_magnitude", "elapsed",
            "acceptance", "folds_rejected", "forced_improvements"}
    assert keys <= set(res.history[-1])


def test_verify_caches_repairs_divergence(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 5)
    ev = BSplineEvaluator(blob_problem, grid)
    rng = np.random.default_rng(8)
    pop = [ev.evaluate(ev.random_genotype(rng)) for _ in range(3)]
    assert verify_caches(ev, pop) == 0
    pop[1].objectives = pop[1].objectives * 1.01
    assert verify_caches(ev, pop) == 1
    assert verify_caches(ev, pop) == 0


def test_bspline_run_smoke(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 5)
    res = run(BSplineEvaluator(blob_problem, grid), 20, 3, seed=2, check_invariants=True)
    assert len(res.archive) >= 1 and res.fos_size == 25
