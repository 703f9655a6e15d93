"""Mirror contrastive loss, cross-entropy, and the combined objective.

The contrastive term operates on the embedding matrix of a mirror-augmented
batch (originals in rows 0..B-1, mirrors in rows B..2B-1).  Same-label pairs
pull together (+distance), different-label pairs push apart (-distance), with
separate weights for original-original and mirror-original pairs.  Distances
are Euclidean on the flattened log band-power embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .mirror import KIND_MIRROR_ORIG, KIND_ORIG_ORIG, Pair, PairList
from .tensor import Tensor, clamp_max, log, mean_all, pairwise_distance, pick_class

DIST_EPS = 1e-12
LOG_GUARD = 1e-12


@dataclass
class MclWeights:
    """Contrastive term weights; margin caps the push on negative pairs."""

    w_o: float = 0.2
    w_m: float = 0.3
    margin: float | None = None


@dataclass
class LossBreakdown:
    """Scalars of one training step plus the pair census behind l_d."""

    l_c: float
    l_d: float
    l_total: float
    n_pos_pairs: int
    n_neg_pairs: int


def _kind_term(emb: Tensor, pairs: list[Pair], margin: float | None,
               normalize: bool) -> Tensor | None:
    if not pairs:
        return None
    idx_i = np.array([p.i for p in pairs])
    idx_j = np.array([p.j for p in pairs])
    g = np.array([p.g for p in pairs], dtype=float)
    dist = pairwise_distance(emb, idx_i, idx_j, eps=DIST_EPS)
    if margin is not None:
        # negatives contribute -min(D, margin); positives are uncapped
        capped = clamp_max(dist, margin)
        signed = dist * Tensor(np.maximum(g, 0.0)) - capped * Tensor(np.maximum(-g, 0.0))
    else:
        signed = dist * Tensor(g)
    total = signed.sum()
    if normalize:
        total = total * (1.0 / len(pairs))
    return total


def mirror_contrastive_loss(emb: Tensor, pairs: PairList, w: MclWeights,
                            normalize: bool = True) -> Tensor:
    """Weighted signed-distance sums over the two pair populations.

    Each population's sum is divided by its own pair count by default, so the
    magnitude does not scale with batch size; ``normalize=False`` keeps the
    literal sums.  An empty population contributes zero.
    """
    out = Tensor(0.0)
    oo = _kind_term(emb, pairs.by_kind(KIND_ORIG_ORIG), w.margin, normalize)
    if oo is not None:
        out = out + oo * w.w_o
    mo = _kind_term(emb, pairs.by_kind(KIND_MIRROR_ORIG), w.margin, normalize)
    if mo is not None:
        out = out + mo * w.w_m
    return out


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class.

    ``probs`` rows are assumed to sum to 1 (softmax output); a 1e-12 guard
    inside the log keeps exact zeros finite.
    """
    picked = pick_class(probs, np.asarray(labels))
    return -mean_all(log(picked + LOG_GUARD))


def total_loss(l_c: Tensor, l_d: Tensor) -> Tensor:
    """Sum of the classification and contrastive terms."""
    for name, term in (("classification", l_c), ("contrastive", l_d)):
        if np.isnan(term.data).any():
            raise NumericError(f"{name} loss is NaN")
    return l_c + l_d


def breakdown(l_c: Tensor, l_d: Tensor, l_total: Tensor,
              pairs: PairList) -> LossBreakdown:
    n_pos = sum(1 for p in pairs.pairs if p.g > 0)
    return LossBreakdown(
        l_c=float(l_c.data),
        l_d=float(l_d.data),
        l_total=float(l_total.data),
        n_pos_pairs=n_pos,
        n_neg_pairs=len(pairs.pairs) - n_pos,
    )


def pair_distance_stats(emb_data: np.ndarray, pairs: PairList) -> tuple[float, float]:
    """Mean positive-pair and negative-pair Euclidean distance (no gradient)."""
    emb_data = np.asarray(emb_data)
    pos, neg = [], []
    for p in pairs.pairs:
        d = float(np.linalg.norm(emb_data[p.i] - emb_data[p.j]))
        (pos if p.g > 0 else neg).append(d)
    mean = lambda xs: float(np.mean(xs)) if xs else float("nan")
    return mean(pos), mean(neg)
