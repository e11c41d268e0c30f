"""Multi-objective real-valued gene-pool optimal mixing."""

from .archive import ElitistArchive, snapshot
from .core import (
    Cluster,
    GaussianModel,
    RunResult,
    cluster_population,
    fit_cluster_model,
    fit_gaussian,
    gom_step,
    run,
    select_members,
    verify_caches,
)
from .solution import FOSElement, Solution

__all__ = [
    "Cluster",
    "ElitistArchive",
    "FOSElement",
    "GaussianModel",
    "RunResult",
    "Solution",
    "cluster_population",
    "fit_cluster_model",
    "fit_gaussian",
    "gom_step",
    "run",
    "select_members",
    "snapshot",
    "verify_caches",
]
