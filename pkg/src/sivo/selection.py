"""Information-based feature selection.

Each candidate feature is scored by how many bits of pose uncertainty its
measurement would remove, minus how many bits of semantic-classification
uncertainty it carries:

    delta_h = I(pose; measurement) - H(class | image)

A candidate is kept when its most likely class is static and delta_h
clears the configured threshold.  Rejection reasons are assigned with
fixed precedence: a candidate that does not project is BehindCamera, a
dynamic-class candidate is DynamicClass and is never scored against the
threshold, and everything else falls through to the threshold test.

Strategies:

* ``KAESS_BATCH`` — one pass over all candidates against the current pose
  covariance; no state update between decisions.
* ``DAVISON_GREEDY`` — iteratively pick the best candidate, apply the
  estimator update, and re-score the survivors against the shrunken
  covariance until the best score falls below the threshold.
* ``ALL_FEATURES`` — keep every projectable candidate (baseline).
* ``MI_ONLY`` — threshold raw mutual information, no semantic gating.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np

from .infotheory import NotPositiveDefinite, gaussian_mutual_information
from .semantics import SemanticBelief, classification_entropy, is_admissible
from .world import Landmark

if TYPE_CHECKING:  # annotation-only; selection stays estimator-agnostic
    from .estimator import PoseBelief


class Strategy(enum.Enum):
    ALL_FEATURES = "all"
    MI_ONLY = "mi"
    KAESS_BATCH = "sivo-batch"
    DAVISON_GREEDY = "sivo-greedy"


class RejectionReason(enum.Enum):
    BEHIND_CAMERA = "behind-camera"
    DYNAMIC_CLASS = "dynamic-class"
    BELOW_THRESHOLD = "below-threshold"


@dataclass(frozen=True, eq=False)
class CandidateFeature:
    """One feature considered for selection at the current frame.

    ``predicted`` and ``jacobian`` are the measurement prediction and its
    pose derivative at the linearization pose; both are None when the
    landmark does not project there (the candidate is then unscoreable and
    rejected as BehindCamera).  ``observation`` carries the actual noisy
    measurement when one exists, for the estimator update after selection.
    """

    landmark: Landmark
    predicted: Optional[np.ndarray]
    jacobian: Optional[np.ndarray]
    noise: np.ndarray
    belief: SemanticBelief
    observation: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.jacobian is not None and not np.all(np.isfinite(self.jacobian)):
            raise ValueError("measurement Jacobian must be finite")
        object.__setattr__(self, "noise", np.asarray(self.noise, dtype=float).reshape(3, 3))


@dataclass(frozen=True)
class CandidateScore:
    """Scoring outcome for one candidate.

    delta_h_bits is exactly mutual_information_bits minus
    classification_entropy_bits (it may be negative); rejection_reason is
    None iff the candidate was selected.
    """

    candidate_id: int
    mutual_information_bits: float
    classification_entropy_bits: float
    delta_h_bits: float
    selected: bool
    rejection_reason: Optional[RejectionReason]


@dataclass(frozen=True)
class SelectionConfig:
    threshold_bits: float
    strategy: Strategy = Strategy.KAESS_BATCH
    mc_samples: int = 6
    max_selected: Optional[int] = None

    def __post_init__(self):
        if not np.isfinite(self.threshold_bits):
            raise ValueError("threshold must be finite")
        if self.mc_samples < 1:
            raise ValueError("need at least one MC sample")


def lifted_covariance(pose_cov: np.ndarray, candidates: Sequence[CandidateFeature]) -> np.ndarray:
    """Joint covariance of the pose and all predicted candidate measurements.

    Block structure: top-left the 6x6 pose covariance S; row blocks
    S J_i^T; diagonal blocks J_i S J_i^T + Q_i; off-diagonals J_i S J_j^T.
    Kept for analysis and tests — per-candidate decisions only ever need
    the 9x9 marginal below, which is an exact sub-block of this matrix.
    """
    pose_cov = np.asarray(pose_cov, dtype=float)
    try:
        np.linalg.cholesky(pose_cov)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from err
    jacs = []
    for cand in candidates:
        if cand.jacobian is None:
            raise ValueError(f"candidate {cand.landmark.id} does not project")
        jacs.append(np.asarray(cand.jacobian, dtype=float))
    n = len(jacs)
    dim = 6 + 3 * n
    out = np.zeros((dim, dim))
    out[:6, :6] = pose_cov
    cross = [pose_cov @ j.T for j in jacs]  # 6x3 blocks
    for i in range(n):
        r = 6 + 3 * i
        out[:6, r:r + 3] = cross[i]
        out[r:r + 3, :6] = cross[i].T
        for j in range(n):
            c = 6 + 3 * j
            block = jacs[i] @ cross[j]
            if i == j:
                block = block + candidates[i].noise
            out[r:r + 3, c:c + 3] = block
    return 0.5 * (out + out.T)


def marginal_covariance(pose_cov: np.ndarray, candidate: CandidateFeature) -> np.ndarray:
    """9x9 joint covariance of the pose and one predicted measurement."""
    pose_cov = np.asarray(pose_cov, dtype=float)
    if candidate.jacobian is None:
        raise ValueError(f"candidate {candidate.landmark.id} does not project")
    jac = candidate.jacobian
    cross = pose_cov @ jac.T
    out = np.empty((9, 9))
    out[:6, :6] = pose_cov
    out[:6, 6:] = cross
    out[6:, :6] = cross.T
    out[6:, 6:] = jac @ cross + candidate.noise
    return out


def mutual_information_score(pose_cov: np.ndarray, candidate: CandidateFeature) -> float:
    """Bits of pose uncertainty the candidate's measurement would remove.

    The determinant-ratio form over the 9x9 pose/measurement marginal,
    clipped at zero; a measurement whose Jacobian vanishes carries no pose
    information and scores at the round-off floor.
    """
    mi = gaussian_mutual_information(marginal_covariance(pose_cov, candidate), split=6)
    return max(0.0, mi)


def sivo_score(pose_cov: np.ndarray, candidate: CandidateFeature,
               config: SelectionConfig) -> CandidateScore:
    """Score one candidate under the combined information/semantics rule.

    With zero classification entropy this reduces to a pure mutual-
    information threshold.  Dynamic-class candidates are rejected before
    the threshold is ever consulted.
    """
    entropy = classification_entropy(candidate.belief)
    if candidate.jacobian is None:
        mi = 0.0
        return CandidateScore(candidate.landmark.id, mi, entropy, mi - entropy,
                              False, RejectionReason.BEHIND_CAMERA)
    mi = mutual_information_score(pose_cov, candidate)
    delta = mi - entropy
    if not is_admissible(candidate.belief):
        return CandidateScore(candidate.landmark.id, mi, entropy, delta,
                              False, RejectionReason.DYNAMIC_CLASS)
    if delta >= config.threshold_bits:
        return CandidateScore(candidate.landmark.id, mi, entropy, delta, True, None)
    return CandidateScore(candidate.landmark.id, mi, entropy, delta,
                          False, RejectionReason.BELOW_THRESHOLD)


def _score_one(pose_cov: np.ndarray, candidate: CandidateFeature,
               config: SelectionConfig) -> CandidateScore:
    """Single-pass decision for the non-greedy strategies."""
    if config.strategy is Strategy.KAESS_BATCH:
        return sivo_score(pose_cov, candidate, config)
    entropy = classification_entropy(candidate.belief)
    if candidate.jacobian is None:
        return CandidateScore(candidate.landmark.id, 0.0, entropy, 0.0 - entropy,
                              False, RejectionReason.BEHIND_CAMERA)
    mi = mutual_information_score(pose_cov, candidate)
    delta = mi - entropy
    if config.strategy is Strategy.ALL_FEATURES:
        return CandidateScore(candidate.landmark.id, mi, entropy, delta, True, None)
    # MI_ONLY: raw mutual information against the threshold, no gating.
    if mi >= config.threshold_bits:
        return CandidateScore(candidate.landmark.id, mi, entropy, delta, True, None)
    return CandidateScore(candidate.landmark.id, mi, entropy, delta,
                          False, RejectionReason.BELOW_THRESHOLD)


def _apply_cap(scores: list[CandidateScore], cap: Optional[int]) -> list[CandidateScore]:
    if cap is None:
        return scores
    chosen = [i for i, s in enumerate(scores) if s.selected]
    if len(chosen) <= cap:
        return scores
    # Highest delta_h survives; ties resolved by input order.
    chosen.sort(key=lambda i: (-scores[i].delta_h_bits, i))
    for i in chosen[cap:]:
        scores[i] = replace(scores[i], selected=False,
                            rejection_reason=RejectionReason.BELOW_THRESHOLD)
    return scores


def select_batch(pose_belief: "PoseBelief", candidates: Sequence[CandidateFeature],
                 config: SelectionConfig) -> list[CandidateScore]:
    """One-pass selection against the current pose covariance.

    Decisions are independent per candidate (no state update in between);
    output order preserves input order.  An optional cap keeps only the
    highest-scoring survivors.
    """
    cov = pose_belief.covariance
    scores = [_score_one(cov, cand, config) for cand in candidates]
    return _apply_cap(scores, config.max_selected)


def select_greedy(pose_belief: "PoseBelief", candidates: Sequence[CandidateFeature],
                  config: SelectionConfig,
                  updater: Callable[["PoseBelief", CandidateFeature], "PoseBelief"],
                  ) -> list[CandidateScore]:
    """Iterative best-first selection with state updates in the loop.

    Repeatedly scores the remaining admissible candidates against the
    current covariance, picks the argmax of delta_h (ties break toward the
    lowest candidate index), applies ``updater`` — the estimator's
    single-measurement update — and re-scores; stops when the best
    remaining score falls below the threshold or the cap is reached.

    Selected candidates report the score that won them their round;
    rejected ones report their final-round score.
    """
    belief = pose_belief
    scores: dict[int, CandidateScore] = {}
    remaining: list[int] = []
    for i, cand in enumerate(candidates):
        if cand.jacobian is None or not is_admissible(cand.belief):
            scores[i] = sivo_score(belief.covariance, cand, config)
        else:
            remaining.append(i)
    n_selected = 0
    while remaining:
        if config.max_selected is not None and n_selected >= config.max_selected:
            break
        round_scores = {i: sivo_score(belief.covariance, candidates[i], config)
                        for i in remaining}
        for i, s in round_scores.items():
            scores[i] = replace(s, selected=False,
                                rejection_reason=RejectionReason.BELOW_THRESHOLD)
        best = max(remaining, key=lambda i: (round_scores[i].delta_h_bits, -i))
        if round_scores[best].delta_h_bits < config.threshold_bits:
            break
        scores[best] = round_scores[best]
        belief = updater(belief, candidates[best])
        remaining.remove(best)
        n_selected += 1
    for i in remaining:
        if i not in scores:  # cap of zero: nothing was ever scored
            s = sivo_score(belief.covariance, candidates[i], config)
            scores[i] = replace(s, selected=False,
                                rejection_reason=RejectionReason.BELOW_THRESHOLD)
    return [scores[i] for i in range(len(candidates))]
