from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(eq=False)
class Solution:
    """A genotype with its objective values and model-specific evaluation cache.

    ``objectives`` is ``[similarity, magnitude]``; both are minimized.
    ``payload`` carries a decoded phenotype when the genotype is not the
    model itself (the weight-tuning baseline stores its registered grid here).
    """

    genotype: np.ndarray
    objectives: np.ndarray
    feasible: bool = True
    violation: float = 0.0
    cache: Any = field(default=None, repr=False)
    payload: Any = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class FOSElement:
    """Variables mutated jointly, plus the model region whose contributions they touch."""

    indices: np.ndarray
    region: Any = None

    def __len__(self) -> int:
        return len(self.indices)
