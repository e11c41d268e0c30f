"""Multi-objective real-valued GOMEA with partial evaluations.

An evaluator object supplies the model-specific parts:

``n_vars``, ``fos()``, ``random_genotype(rng)``, ``evaluate(genotype)``,
``apply(sol, element, values) -> undo | None`` (``None``: infeasible change,
nothing modified) and ``revert(sol, undo)``.  ``apply`` updates the
solution's objectives and cache in place.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..pareto import crowding_distance, dominates, pareto_ranks
from .archive import ElitistArchive, snapshot
from .solution import FOSElement, Solution

log = logging.getLogger(__name__)

SELECTION_FRACTION = 0.35
MULTIPLIER_BOUNDS = (1e-4, 10.0)
CACHE_TOLERANCE = 1e-6


@dataclass
class Cluster:
    members: np.ndarray
    slot: int
    edge_objective: int | None = None
    leader: int = -1

    def __len__(self) -> int:
        return len(self.members)


def _normalized(objs: np.ndarray) -> np.ndarray:
    f = np.where(np.isfinite(objs), objs, np.nan)
    lo, hi = np.nanmin(f, axis=0), np.nanmax(f, axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    out = (f - lo) / span
    return np.nan_to_num(out, nan=10.0)


def cluster_population(objs, k: int = 10, ranks=None, feasible=None, violation=None) -> list[Cluster]:
    """Balanced leader-based clustering in normalized objective space.

    Slots 0 and 1 are edge clusters around the best-similarity and
    best-magnitude solutions; the other leaders are picked greedily by
    maximal distance to the leaders chosen so far among the best-ranked
    solutions.  Every solution joins exactly one cluster, nearest first,
    subject to capacities ``N // k`` (+1 for the first ``N % k`` clusters).
    """
    objs = np.asarray(objs, dtype=float)
    n = len(objs)
    if n < k:
        raise ConfigError(f"population of {n} cannot form {k} clusters")
    if ranks is None:
        ranks = pareto_ranks(objs, feasible, violation)
    feasible = np.ones(n, dtype=bool) if feasible is None else np.asarray(feasible, dtype=bool)
    violation = np.zeros(n) if violation is None else np.asarray(violation, dtype=float)
    z = _normalized(objs)
    leaders = []
    for obj in (0, 1)[: min(k, 2)]:
        key = np.lexsort((np.arange(n), objs[:, 1 - obj], objs[:, obj], violation, ~feasible))
        pick = next(int(i) for i in key if int(i) not in leaders)
        leaders.append(pick)
    pool_rank = 0
    while np.count_nonzero(ranks <= pool_rank) < k and pool_rank < ranks.max():
        pool_rank += 1
    pool = [int(i) for i in np.nonzero(ranks <= pool_rank)[0]]
    while len(leaders) < k:
        cand = [i for i in pool if i not in leaders] or [i for i in range(n) if i not in leaders]
        d = np.min(np.linalg.norm(z[cand][:, None, :] - z[leaders][None, :, :], axis=2), axis=1)
        leaders.append(cand[int(np.argmax(d))])
    caps = np.full(k, n // k)
    caps[: n % k] += 1
    dist = np.linalg.norm(z[:, None, :] - z[leaders][None, :, :], axis=2)
    dist[leaders, np.arange(k)] = -1.0  # leaders stay in their own cluster
    order = np.lexsort((np.tile(np.arange(k), n), np.repeat(np.arange(n), k), dist.ravel()))
    assigned = np.full(n, -1)
    for flat in order:
        i, c = divmod(int(flat), k)
        if assigned[i] < 0 and caps[c] > 0:
            assigned[i] = c
            caps[c] -= 1
    return [
        Cluster(np.nonzero(assigned == c)[0], c, c if c < 2 else None, leaders[c])
        for c in range(k)
    ]


def select_members(objs, members, fraction: float = SELECTION_FRACTION, ranks=None) -> np.ndarray:
    """Top ``ceil(fraction * |members|)`` members by in-cluster rank, then crowding (desc)."""
    members = np.asarray(members)
    f = np.asarray(objs, dtype=float)[members]
    r = pareto_ranks(f) if ranks is None else np.asarray(ranks)
    crowd = np.zeros(len(members))
    for level in np.unique(r):
        at = np.nonzero(r == level)[0]
        crowd[at] = crowding_distance(f[at])
    order = np.lexsort((np.arange(len(members)), -crowd, r))
    count = max(1, math.ceil(fraction * len(members)))
    return members[order[:count]]


@dataclass
class GaussianModel:
    mean: np.ndarray
    covariance: np.ndarray
    factor: np.ndarray = field(repr=False)

    def sample(self, rng, multiplier: float = 1.0) -> np.ndarray:
        z = rng.standard_normal(len(self.mean))
        return self.mean + math.sqrt(multiplier) * (self.factor @ z)


def fit_gaussian(values) -> GaussianModel:
    """Mean and maximum-likelihood covariance with a ``1e-10 * trace`` diagonal ridge."""
    x = np.atleast_2d(np.asarray(values, dtype=float))
    mean = x.mean(axis=0)
    dev = x - mean
    cov = dev.T @ dev / len(x)
    cov[np.diag_indices_from(cov)] += 1e-10 * np.trace(cov)
    w, v = np.linalg.eigh(cov)
    factor = v * np.sqrt(np.clip(w, 0.0, None))
    return GaussianModel(mean, cov, factor)


def fit_cluster_model(population, selected, element: FOSElement) -> GaussianModel:
    return fit_gaussian([population[i].genotype[element.indices] for i in selected])


@dataclass
class StepStats:
    attempts: np.ndarray
    accepted: np.ndarray
    folds: int = 0
    forced: int = 0
    forced_accepted: int = 0


def _try_change(evaluator, sol, element, values, archive, edge):
    old = sol.objectives.copy()
    undo = evaluator.apply(sol, element, values)
    if undo is None:
        return None
    new = sol.objectives
    better = dominates(new, old)
    archived = archive.insert(sol)
    if better or archived or (edge is not None and new[edge] < old[edge]):
        return True
    evaluator.revert(sol, undo)
    return False


def gom_step(sol: Solution, evaluator, fos, models, multipliers, archive: ElitistArchive, rng,
             edge_objective=None, stats: StepStats | None = None) -> bool:
    """One optimal-mixing pass over ``sol``; returns whether any change was accepted."""
    improved = False
    for e in rng.permutation(len(fos)):
        element = fos[e]
        values = models[e].sample(rng, multipliers[e])
        outcome = _try_change(evaluator, sol, element, values, archive, edge_objective)
        if stats is not None:
            stats.attempts[e] += 1
            if outcome is None:
                stats.folds += 1
            elif outcome:
                stats.accepted[e] += 1
        improved |= bool(outcome)
    if not improved and len(archive):
        if stats is not None:
            stats.forced += 1
        elite = archive.members[int(rng.integers(len(archive)))]
        for e in rng.permutation(len(fos)):
            element = fos[e]
            outcome = _try_change(evaluator, sol, element, elite.genotype[element.indices], archive, None)
            if outcome:
                improved = True
                if stats is not None:
                    stats.forced_accepted += 1
                break
    return improved


@dataclass
class RunResult:
    archive: ElitistArchive
    population: list
    history: list
    reference: np.ndarray
    fos_size: int


def _relative_gap(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def verify_caches(evaluator, population, tolerance: float = CACHE_TOLERANCE) -> int:
    """Re-evaluate every solution from scratch; repair and warn on divergence."""
    repaired = 0
    for i, sol in enumerate(population):
        fresh = evaluator.evaluate(sol.genotype)
        gap = _relative_gap(sol.objectives, fresh.objectives)
        if gap > tolerance:
            log.warning("cache divergence %.3g on solution %d; re-evaluated", gap, i)
            repaired += 1
        if gap > tolerance or fresh.feasible != sol.feasible:
            population[i] = fresh
    return repaired


def run(evaluator, population_size: int, generations: int, seed: int = 0, clusters: int = 10,
        capacity: int = 1000, log_stream=None, verify_every: int = 10, check_invariants: bool = False,
        initial_genotypes=None, callback=None) -> RunResult:
    """Optimize ``evaluator`` and return the elitist archive plus per-generation history.

    ``log_stream`` (a text file) receives one JSON record per generation.
    With ``check_invariants`` the archive and all solution caches are
    verified exhaustively after every generation and violations raise.
    """
    if population_size < clusters:
        raise ConfigError(f"population size {population_size} is smaller than the {clusters} clusters")
    if generations < 0:
        raise ConfigError("generations must be >= 0")
    rng = np.random.default_rng(seed)
    fos = evaluator.fos()
    started = time.perf_counter()
    genotypes = list(initial_genotypes or [])[:population_size]
    while len(genotypes) < population_size:
        genotypes.append(evaluator.random_genotype(rng))
    population = [evaluator.evaluate(g) for g in genotypes]
    archive = ElitistArchive(capacity)
    for sol in population:
        archive.insert(sol)
    objs = np.array([s.objectives for s in population])
    feas = np.array([s.feasible for s in population])
    basis = objs[feas & np.all(np.isfinite(objs), axis=1)]
    reference = 1.1 * (basis.max(axis=0) if len(basis) else np.ones(2))
    reference = np.where(reference > 0, reference, 1.0)
    multipliers = np.ones((clusters, len(fos)))
    history = []

    def record(gen, stats=None):
        entry = {
            "generation": gen,
            "hypervolume": archive.hypervolume(reference),
            "archive_size": len(archive),
            "best_similarity": float(archive.objectives[:, 0].min()) if len(archive) else None,
            "best_magnitude": float(archive.objectives[:, 1].min()) if len(archive) else None,
            "elapsed": round(time.perf_counter() - started, 3),
        }
        if stats is not None:
            entry["acceptance"] = [
                round(float(s.accepted.sum() / max(1, s.attempts.sum())), 4) for s in stats
            ]
            entry["folds_rejected"] = int(sum(s.folds for s in stats))
            entry["forced_improvements"] = int(sum(s.forced for s in stats))
        history.append(entry)
        if log_stream is not None:
            log_stream.write(json.dumps(entry) + "\n")
            log_stream.flush()
        if callback is not None:
            callback(entry, archive, population)

    record(0)
    for gen in range(1, generations + 1):
        objs = np.array([s.objectives for s in population])
        feas = np.array([s.feasible for s in population])
        viol = np.array([s.violation for s in population])
        ranks = pareto_ranks(objs, feas, viol)
        groups = cluster_population(objs, clusters, ranks, feas, viol)
        all_stats = []
        for cluster in groups:
            stats = StepStats(np.zeros(len(fos), dtype=int), np.zeros(len(fos), dtype=int))
            selected = select_members(objs, cluster.members, ranks=pareto_ranks(
                objs[cluster.members], feas[cluster.members], viol[cluster.members]))
            models = [fit_cluster_model(population, selected, element) for element in fos]
            for i in cluster.members:
                gom_step(population[i], evaluator, fos, models, multipliers[cluster.slot], archive, rng,
                         cluster.edge_objective, stats)
            rate = stats.accepted / np.maximum(stats.attempts, 1)
            m = multipliers[cluster.slot]
            m[:] = np.clip(np.where(rate > 0.2, m * 1.1, m * 0.9), *MULTIPLIER_BOUNDS)
            all_stats.append(stats)
        if check_invariants or (verify_every and gen % verify_every == 0):
            repaired = verify_caches(evaluator, population)
            if check_invariants and repaired:
                raise AssertionError(f"generation {gen}: {repaired} cached objective vector(s) diverged")
        if check_invariants:
            problems = archive.check_invariants()
            if problems:
                raise AssertionError(f"generation {gen}: " + "; ".join(problems))
        record(gen, all_stats)
    return RunResult(archive, population, history, reference, len(fos))


def snapshot_population(population) -> list:
    return [snapshot(s) for s in population]
