"""Entropy and mutual information for discrete and Gaussian variables.

Every quantity in the package is measured in bits; this module owns the
single nat-to-bit conversion constant, and no other module converts
logarithm bases on its own.  Determinants are always taken as
log-determinants through a Cholesky factorization — the factorization
doubling as the positive-definiteness test — never as raw determinants.
"""
from __future__ import annotations

import numpy as np

# Sole base-conversion point: multiply a natural-log quantity by this to
# get bits.  Referenced nowhere outside this module.
_NATS_TO_BITS = 1.0 / float(np.log(2.0))

# Distributions must sum to 1 within this tolerance; renormalization is
# refused so upstream bugs surface instead of being papered over.
_SUM_TOL = 1e-9


class InvalidDistribution(ValueError):
    """Probabilities negative or not summing to one."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Covariance failed its SPD factorization (or is not symmetric)."""


def validate_distribution(p) -> np.ndarray:
    """Return ``p`` as a float vector after checking it is a distribution."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise InvalidDistribution("probabilities must be finite and non-negative")
    if abs(float(p.sum()) - 1.0) > _SUM_TOL:
        raise InvalidDistribution(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def _logdet_spd(cov: np.ndarray) -> float:
    """log det of an SPD matrix in nats, via Cholesky."""
    cov = np.asarray(cov, dtype=float)
    scale = max(1.0, float(np.abs(cov).max()))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise NotPositiveDefinite(f"expected a square matrix, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-9 * scale):
        raise NotPositiveDefinite("covariance is not symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from err
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def discrete_entropy(p) -> float:
    """Shannon entropy of a probability vector, in bits.

    Zero-probability entries contribute nothing (0 log 0 := 0); the result
    lies in [0, log2 len(p)].
    """
    p = validate_distribution(p)
    nz = p[p > 0.0]
    return -float(np.sum(nz * np.log(nz))) * _NATS_TO_BITS


def gaussian_entropy(cov: np.ndarray) -> float:
    """Differential entropy of a Gaussian with the given covariance, in bits.

    H = 1/2 log2((2 pi e)^n det Sigma).  The mean is irrelevant.

    Raises
    ------
    NotPositiveDefinite
        If the covariance is not symmetric positive definite.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = cov.shape[0]
    logdet = _logdet_spd(cov)
    return 0.5 * (n * (1.0 + float(np.log(2.0 * np.pi))) + logdet) * _NATS_TO_BITS


def discrete_mutual_information(joint: np.ndarray) -> float:
    """Mutual information of a joint probability table, in bits.

    ``joint[i, j]`` is p(x=i, y=j).  Zero iff the joint factorizes into
    its marginals; never negative beyond roundoff.
    """
    joint = np.asarray(joint, dtype=float)
    validate_distribution(joint.ravel())
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    total = 0.0
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            pij = joint[i, j]
            if pij > 0.0:
                total += pij * float(np.log(pij / (px[i] * py[j])))
    return total * _NATS_TO_BITS


def gaussian_mutual_information(cov: np.ndarray, split: int) -> float:
    """Mutual information between two blocks of a joint Gaussian, in bits.

    Parameters
    ----------
    cov : (n, n) array
        Full SPD joint covariance.
    split : int
        Size of the leading block; the partition is indices [0, split)
        against [split, n).

    Returns
    -------
    float
        ``1/2 log2(det Sigma_aa * det Sigma_bb / det Sigma)``, which is
        non-negative and symmetric in the two blocks.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if not 0 < split < n:
        raise ValueError(f"split {split} must cut {n} dimensions into two blocks")
    logdet_a = _logdet_spd(cov[:split, :split])
    logdet_b = _logdet_spd(cov[split:, split:])
    logdet_full = _logdet_spd(cov)
    return 0.5 * (logdet_a + logdet_b - logdet_full) * _NATS_TO_BITS
