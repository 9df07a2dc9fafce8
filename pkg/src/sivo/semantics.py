"""Semantic class taxonomy and per-feature classification beliefs.

A feature's semantic belief is a set of Monte-Carlo class-probability
vectors — one per stochastic forward pass of a segmentation network run
with dropout active — plus their mean, the entropy of that mean, and the
per-class sample variance.  The network itself is out of scope: beliefs
are constructed either from ingested probability samples or from the
simulator's generator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .infotheory import discrete_entropy, validate_distribution


class Mobility(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class SemanticClass:
    id: int
    name: str
    mobility: Mobility


# The 15-class road-scene taxonomy, ids dense from 0.  Static classes are
# reliable long-term references; dynamic ones (including sky and void,
# which carry no stable geometry) are never used for localization.
TAXONOMY: tuple[SemanticClass, ...] = tuple(
    SemanticClass(i, name, mobility)
    for i, (name, mobility) in enumerate(
        [
            ("road", Mobility.STATIC),
            ("sidewalk", Mobility.STATIC),
            ("building", Mobility.STATIC),
            ("wall/fence", Mobility.STATIC),
            ("pole", Mobility.STATIC),
            ("traffic light", Mobility.STATIC),
            ("traffic sign", Mobility.STATIC),
            ("vegetation", Mobility.STATIC),
            ("terrain", Mobility.STATIC),
            ("sky", Mobility.DYNAMIC),
            ("person/rider", Mobility.DYNAMIC),
            ("car", Mobility.DYNAMIC),
            ("truck/bus", Mobility.DYNAMIC),
            ("motorcycle/bicycle", Mobility.DYNAMIC),
            ("void", Mobility.DYNAMIC),
        ]
    )
)

CLASS_BY_NAME = {c.name: c for c in TAXONOMY}
STATIC_IDS = tuple(c.id for c in TAXONOMY if c.mobility is Mobility.STATIC)
DYNAMIC_IDS = tuple(c.id for c in TAXONOMY if c.mobility is Mobility.DYNAMIC)


class EmptySampleSet(ValueError):
    """No Monte-Carlo samples to aggregate."""


class LengthMismatch(ValueError):
    """Samples disagree on the number of classes."""


def softmax(logits: np.ndarray) -> np.ndarray:
    """Class probabilities from raw network scores.

    Max-subtracted for stability, so arbitrarily large logits neither
    overflow nor change the result (invariance to a constant shift).
    """
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass(frozen=True, eq=False)
class SemanticBelief:
    """Aggregated Monte-Carlo classification output for one feature.

    Attributes
    ----------
    samples : (N, C) array
        One probability vector per forward pass.
    aggregate : (C,) array
        Elementwise mean of the samples.
    entropy_bits : float
        Entropy of the aggregate — 0 when certain, log2 C when uniform.
    argmax_class : SemanticClass
        Highest-probability class of the aggregate (lowest id on ties).
    variance : (C,) array
        Per-class variance across samples (the "uncertainty image" value).
    """

    samples: np.ndarray
    aggregate: np.ndarray
    entropy_bits: float
    argmax_class: SemanticClass
    variance: np.ndarray


def aggregate_mc(samples, classes: tuple[SemanticClass, ...] = TAXONOMY) -> SemanticBelief:
    """Aggregate one feature's MC-dropout samples into a SemanticBelief.

    Parameters
    ----------
    samples : sequence of (C,) probability vectors
        One per forward pass; each must be a valid distribution over the
        same C = len(classes) classes.

    Raises
    ------
    EmptySampleSet, LengthMismatch
    """
    rows = [np.asarray(s, dtype=float).ravel() for s in samples]
    if not rows:
        raise EmptySampleSet("need at least one MC sample")
    n_classes = len(classes)
    for row in rows:
        if row.size != n_classes:
            raise LengthMismatch(f"sample has {row.size} classes, expected {n_classes}")
    stacked = np.vstack([validate_distribution(r) for r in rows])
    aggregate = stacked.mean(axis=0)
    # np.argmax already breaks exact ties toward the lowest id.
    winner = classes[int(np.argmax(aggregate))]
    return SemanticBelief(
        samples=stacked,
        aggregate=aggregate,
        entropy_bits=discrete_entropy(aggregate),
        argmax_class=winner,
        variance=stacked.var(axis=0),
    )


def classification_entropy(belief: SemanticBelief) -> float:
    """Entropy in bits of the MC-averaged class distribution.

    Maximal (log2 C) when the aggregate is equiprobable, 0 when the
    classifier is certain.
    """
    return discrete_entropy(belief.aggregate)


def is_admissible(belief: SemanticBelief) -> bool:
    """True when the feature's most likely class is a static one."""
    return belief.argmax_class.mobility is Mobility.STATIC
