"""Knockoff W statistics, the KO / KO+ thresholds and the selected set.

Feature indices are 0-based throughout.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


class Variant(str, enum.Enum):
    KO = "ko"
    KO_PLUS = "ko+"


@dataclass(frozen=True)
class WStatistics:
    w: np.ndarray
    z: np.ndarray
    z_tilde: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    selected: frozenset
    threshold: float
    q: float
    variant: Variant
    seed: int | None = None
    schedule_index: int | None = None


def w_statistics(z, z_tilde):
    """W_j = max(z_j, z~_j) * sign(z_j - z~_j); ties give 0."""
    z = np.asarray(z, dtype=np.float64)
    z_tilde = np.asarray(z_tilde, dtype=np.float64)
    if z.shape != z_tilde.shape or z.ndim != 1:
        raise InvalidInput(f"z and z_tilde must be matching vectors, got {z.shape}, {z_tilde.shape}")
    if np.any(z < 0) or np.any(z_tilde < 0):
        raise InvalidInput("entry statistics must be non-negative")
    w = np.maximum(z, z_tilde) * np.sign(z - z_tilde)
    return WStatistics(w=w, z=z, z_tilde=z_tilde)


def threshold(w, q, variant=Variant.KO):
    """Smallest nonzero |w_j| whose estimated false discovery proportion is <= q.

    KO uses #{w <= -t} / max(1, #{w >= t}); KO+ adds 1 to the numerator.
    Returns ``inf`` when no candidate qualifies.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise InvalidInput("w must be finite")
    offset = 1 if Variant(variant) is Variant.KO_PLUS else 0
    candidates = np.unique(np.abs(w[w != 0]))
    if candidates.size == 0:
        return np.inf
    pos = np.sort(w[w > 0])
    neg = np.sort(-w[w < 0])
    n_pos = pos.size - np.searchsorted(pos, candidates, side="left")
    n_neg = neg.size - np.searchsorted(neg, candidates, side="left")
    ratio = (offset + n_neg) / np.maximum(1, n_pos)
    ok = np.flatnonzero(ratio <= q)
    if ok.size == 0:
        return np.inf
    return float(candidates[ok[0]])


def select(w, q, variant=Variant.KO, seed=None, schedule_index=None):
    w = np.asarray(w, dtype=np.float64)
    t = threshold(w, q, variant)
    selected = frozenset(np.flatnonzero(w >= t).tolist()) if np.isfinite(t) else frozenset()
    return SelectionResult(
        selected=selected,
        threshold=t,
        q=float(q),
        variant=Variant(variant),
        seed=seed,
        schedule_index=schedule_index,
    )
