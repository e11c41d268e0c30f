"""Weight-tuning baseline: SGD B-spline registrations driven by an outer weight search.

Each outer solution is a pair of objective weights.  Evaluating it runs a
full single-objective registration on ``w_sim * SSD + w_mag * bending``
from the identity grid and reports that registration's own objectives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bspline import BSplineEvaluator, BSplineGrid, Stencils, derivative_pairs
from .errors import InnerRunError
from .gomea import FOSElement, Solution, run
from .imaging import interpolate_many
from .objectives import RegistrationProblem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightGenotype:
    w_sim: float
    w_mag: float

    def __post_init__(self):
        if self.w_sim < 0 or self.w_mag < 0 or not np.isfinite([self.w_sim, self.w_mag]).all():
            raise ValueError("weights must be finite and nonnegative")
        if self.w_sim + self.w_mag <= 0:
            raise ValueError("weights must not both be zero")

    def normalized(self) -> "WeightGenotype":
        total = self.w_sim + self.w_mag
        return WeightGenotype(self.w_sim / total, self.w_mag / total)

    def as_array(self) -> np.ndarray:
        return np.array([self.w_sim, self.w_mag])


@dataclass(frozen=True)
class InnerRunConfig:
    """Stochastic gradient descent settings; step size ``a / (t + A) ** alpha``."""

    samples: int = 5000
    iterations: int = 2000
    a: float = 1.0
    A: float = 20.0
    alpha: float = 0.602

    def __post_init__(self):
        if self.samples < 1 or self.iterations < 0:
            raise ValueError("need samples >= 1 and iterations >= 0")

    def step(self, t: int) -> float:
        return self.a / (t + self.A) ** self.alpha


def weighted_gradient_reference(grid: BSplineGrid, weights, problem: RegistrationProblem, points,
                                target_values=None):
    """Pure-numpy gradient of the weighted objective on ``points``; returns ``(grad, (sim, bend))``."""
    w = weights.normalized().as_array() if isinstance(weights, WeightGenotype) else np.asarray(weights, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if target_values is None:
        target_values = interpolate_many(problem.target, pts)
    st = Stencils.build(grid, pts, order=2)
    coef = grid.coefficients[st.idx]
    moved = pts + np.einsum("sk,skm->sm", st.w0, coef)
    value, img_grad = interpolate_many(problem.source, moved, gradient=True)
    r = target_values - value
    hess = np.einsum("spk,skm->spm", st.w2, coef)
    _, mult = derivative_pairs(grid.ndim)
    grad = np.zeros_like(grid.coefficients)
    sim_part = (-2.0 * w[0] / n) * r[:, None, None] * st.w0[:, :, None] * img_grad[:, None, :]
    bend_part = (2.0 * w[1] / n) * np.einsum("p,spm,spk->skm", mult, hess, st.w2)
    np.add.at(grad, st.idx, sim_part + bend_part)
    sim = float(np.mean(r * r))
    bend = float(np.mean(np.einsum("spm,p->s", hess * hess, mult)))
    return grad.ravel(), (sim, bend)


class _GradientKernel:
    """Compiled weighted gradient bound to one grid layout and problem."""

    def __init__(self, grid: BSplineGrid, problem: RegistrationProblem):
        d = grid.ndim
        self.grid = grid
        self.problem = problem
        self.ctrl_dims = np.asarray(grid.control_dims, dtype=np.int64)
        self.cell_dims = np.asarray(grid.cell_dims, dtype=np.int64)
        self.offsets = np.array(np.meshgrid(*[np.arange(4)] * d, indexing="ij")).reshape(d, -1).T.astype(np.int64)
        pairs, self.mult = derivative_pairs(d)
        self.orders = np.zeros((len(pairs), d), dtype=np.int64)
        for p, (a, b) in enumerate(pairs):
            self.orders[p, a] += 1
            self.orders[p, b] += 1

    def __call__(self, coefficients, weights, points, target_values):
        grad = np.zeros_like(coefficients)
        sim, bend = _kernels.weighted_gradient_kernel(
            coefficients, self.ctrl_dims, self.grid.domain_min, self.grid.spacing, self.cell_dims,
            np.ascontiguousarray(points), np.ascontiguousarray(target_values), *self.problem.source.kernel_data(),
            float(weights[0]), float(weights[1]), self.offsets, self.orders, self.mult, grad,
        )
        return grad, (sim, bend)


def weighted_gradient(grid: BSplineGrid, weights, problem: RegistrationProblem, points, target_values=None):
    """Analytic gradient of ``w_sim * SSD + w_mag * bending`` on a minibatch, w.r.t. all coefficients.

    Returns ``(gradient of length n_vars, (similarity, bending) on the minibatch)``.
    """
    w = weights.normalized().as_array() if isinstance(weights, WeightGenotype) else np.asarray(weights, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if target_values is None:
        target_values = interpolate_many(problem.target, pts)
    grad, parts = _GradientKernel(grid, problem)(np.ascontiguousarray(grid.coefficients), w, pts, target_values)
    return grad.ravel(), parts


class MinibatchSchedule:
    """Per-iteration uniform minibatches, identical for all inner runs sharing a seed."""

    def __init__(self, problem: RegistrationProblem, samples: int, seed: int):
        self.problem = problem
        self.samples = samples
        self.seed = seed
        self._points = np.zeros((0, samples, problem.ndim))
        self._values = np.zeros((0, samples))

    def batch(self, t: int):
        target = self.problem.target
        rng = np.random.default_rng([self.seed, t])
        lo, hi = target.domain_min, target.domain_max
        pts = lo + rng.random((self.samples, target.ndim)) * (hi - lo)
        return pts, interpolate_many(target, pts)

    def batches(self, iterations: int):
        """Stacked ``(points, values)`` of the first ``iterations`` minibatches."""
        have = len(self._points)
        if iterations > have:
            extra = [self.batch(t) for t in range(have, iterations)]
            self._points = np.concatenate([self._points, np.array([e[0] for e in extra])])
            self._values = np.concatenate([self._values, np.array([e[1] for e in extra])])
        return self._points[:iterations], self._values[:iterations]


def inner_register(problem: RegistrationProblem, weights, config: InnerRunConfig = InnerRunConfig(),
                   seed: int = 0, control_dims=7, schedule: MinibatchSchedule | None = None,
                   evaluator: BSplineEvaluator | None = None) -> Solution:
    """SGD registration from the identity grid; the result is evaluated on the full sample set.

    Divergence (non-finite or runaway coefficients) raises ``InnerRunError``.
    """
    w = weights if isinstance(weights, WeightGenotype) else WeightGenotype(*np.asarray(weights, dtype=float))
    wv = w.normalized().as_array()
    if evaluator is None:
        evaluator = BSplineEvaluator(problem, BSplineGrid.for_image(problem.target, control_dims))
    grid = evaluator.grid
    if schedule is None or schedule.samples != config.samples:
        schedule = MinibatchSchedule(problem, config.samples, seed)
    kernel = _GradientKernel(grid, problem)
    coef = np.zeros_like(grid.coefficients)
    limit = 10.0 * float(np.max(grid.domain_max - grid.domain_min))
    if config.iterations:
        pts, values = schedule.batches(config.iterations)
        steps = np.array([config.step(t) for t in range(config.iterations)])
        bad = _kernels.sgd_kernel(
            coef, kernel.ctrl_dims, grid.domain_min, grid.spacing, kernel.cell_dims, pts, values,
            *problem.source.kernel_data(), float(wv[0]), float(wv[1]), kernel.offsets, kernel.orders,
            kernel.mult, steps, limit,
        )
        if bad >= 0:
            raise InnerRunError(f"SGD diverged at iteration {bad} for weights {wv}")
    sol = evaluator.evaluate(coef.ravel())
    return Solution(wv.copy(), sol.objectives, payload=coef.ravel().copy())


class WeightEvaluator:
    """Outer-search evaluator over the two objective weights (one FOS element)."""

    kind = "baseline"
    n_vars = 2

    def __init__(self, problem: RegistrationProblem, config: InnerRunConfig = InnerRunConfig(),
                 control_dims=7, inner_seed: int = 0):
        self.problem = problem
        self.config = config
        self.inner_seed = inner_seed
        self.grid_evaluator = BSplineEvaluator(problem, BSplineGrid.for_image(problem.target, control_dims))
        self.grid = self.grid_evaluator.grid
        self.schedule = MinibatchSchedule(problem, config.samples, inner_seed)
        self._memo: dict = {}
        self.inner_runs = 0
        self.failures = 0

    def fos(self) -> list[FOSElement]:
        return [FOSElement(np.array([0, 1]), None)]

    def random_genotype(self, rng) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=2)

    def decode(self, genotype) -> BSplineGrid:
        raise TypeError("weight genotypes decode through their solution payload; use grid_of(solution)")

    def grid_of(self, sol: Solution) -> BSplineGrid:
        return self.grid.with_coefficients(sol.payload)

    def evaluate(self, genotype) -> Solution:
        g = np.clip(np.asarray(genotype, dtype=float).reshape(2), 0.0, None)
        if g.sum() <= 0 or not np.all(np.isfinite(g)):
            return Solution(np.array([0.5, 0.5]), np.array([np.inf, np.inf]), False, 1.0)
        g = g / g.sum()
        key = tuple(np.round(g, 15))
        hit = self._memo.get(key)
        if hit is None:
            self.inner_runs += 1
            try:
                hit = inner_register(self.problem, WeightGenotype(*g), self.config, self.inner_seed,
                                     schedule=self.schedule, evaluator=self.grid_evaluator)
            except InnerRunError as exc:
                self.failures += 1
                log.info("%s", exc)
                hit = Solution(g, np.array([np.inf, np.inf]), False, 1.0)
            self._memo[key] = hit
        return Solution(g.copy(), hit.objectives.copy(), hit.feasible, hit.violation, None, hit.payload)

    def apply(self, sol: Solution, element: FOSElement, values):
        values = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
        if values.sum() <= 0:
            return None
        undo = (sol.genotype, sol.objectives, sol.feasible, sol.violation, sol.payload)
        new = self.evaluate(values)
        sol.genotype, sol.objectives, sol.feasible, sol.violation, sol.payload = (
            new.genotype, new.objectives, new.feasible, new.violation, new.payload)
        return undo

    def revert(self, sol: Solution, undo) -> None:
        sol.genotype, sol.objectives, sol.feasible, sol.violation, sol.payload = undo


def outer_optimize(problem: RegistrationProblem, population: int = 100, generations: int = 200, seed: int = 0,
                   config: InnerRunConfig = InnerRunConfig(), control_dims=7, clusters: int = 10,
                   capacity: int = 1000, log_stream=None, check_invariants: bool = False, anchors: bool = True):
    """Evolve objective weights; the archive holds the registrations' own objective vectors.

    With ``anchors`` the initial population contains the pure-similarity
    ``(1, 0)`` and pure-smoothness ``(0, 1)`` weightings.
    """
    evaluator = WeightEvaluator(problem, config, control_dims, inner_seed=seed)
    initial = [np.array([1.0, 0.0]), np.array([0.0, 1.0])] if anchors else []
    result = run(evaluator, population, generations, seed, clusters=min(clusters, population),
                 capacity=capacity, log_stream=log_stream, verify_every=0, check_invariants=check_invariants,
                 initial_genotypes=initial)
    result.evaluator = evaluator
    return result
