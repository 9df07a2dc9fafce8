"""Landmarks: the world-frame reference points features are anchored to."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .semantics import SemanticClass


@dataclass(frozen=True, eq=False)
class Landmark:
    """A 3D map point with identity and semantic ground truth.

    ``true_class`` is the simulator's ground-truth label; replayed data
    carries observed semantics separately, so it may be None there.
    """

    id: int
    position: np.ndarray
    true_class: SemanticClass | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
