"""Cross-view Rank-1 protocol, label-based baselines and triplet diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adaptation import AdamState, TripletBatch, adam_step, apply_adapter, loss_gradient, similar_view_counts
from .embedding import GaitRecord, cross_distances, record_identities, record_views, stack_embeddings
from .geometry import AngleMode
from .mining import Triplet


@dataclass
class Rank1Report:
    """Rank-1 accuracy per (probe view, gallery view) pair.

    ``per_pair[i, j]`` is NaN when the pair has no probes or an empty gallery;
    such pairs are left out of both means.
    """

    views: list
    per_pair: np.ndarray
    overall_cross_view: float
    identical_view_mean: float

    def to_dict(self) -> dict:
        return {
            "views": [float(v) for v in self.views],
            "overall_cross_view": _nan_to_none(self.overall_cross_view),
            "identical_view_mean": _nan_to_none(self.identical_view_mean),
            "per_pair": [[_nan_to_none(x) for x in row] for row in self.per_pair],
        }


@dataclass
class CorrectnessReport:
    """Identity-wise correctness of triplets, in percent; ``None`` when no triplets."""

    triplet_rate: Optional[float]
    positive_rate: Optional[float]
    negative_rate: Optional[float]
    count: int
    per_stage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "triplet_rate": self.triplet_rate,
            "positive_rate": self.positive_rate,
            "negative_rate": self.negative_rate,
            "count": self.count,
            "per_stage": {str(k): v.to_dict() for k, v in self.per_stage.items()},
        }


def _nan_to_none(x):
    x = float(x)
    return None if math.isnan(x) else x


def gallery_mask(identities: Sequence, views) -> np.ndarray:
    """True for the first record (in order) of every (identity, view) pair."""
    seen = set()
    mask = np.zeros(len(identities), dtype=bool)
    for i, key in enumerate(zip(identities, np.asarray(views, dtype=float).tolist())):
        if key not in seen:
            seen.add(key)
            mask[i] = True
    return mask


def rank1_cross_view(records: Sequence[GaitRecord], W: Optional[np.ndarray] = None) -> Rank1Report:
    """Rank-1 accuracy for every probe/gallery view pair.

    The gallery holds the first sequence of each (identity, view); all other
    sequences are probes. A probe of view alpha is matched against the
    gallery entries of view beta only.
    """
    identities = np.array(record_identities(records), dtype=object)
    views = record_views(records)
    E = stack_embeddings(records)
    if W is not None:
        E = apply_adapter(W, E)
    unique_views = np.unique(views)
    if unique_views.size < 2:
        raise ValueError("rank-1 cross-view evaluation needs at least 2 views")

    in_gallery = gallery_mask(identities, views)
    per_pair = np.full((unique_views.size, unique_views.size), np.nan)
    for i, alpha in enumerate(unique_views):
        probes = np.flatnonzero(~in_gallery & (views == alpha))
        if probes.size == 0:
            continue
        for j, beta in enumerate(unique_views):
            gallery = np.flatnonzero(in_gallery & (views == beta))
            if gallery.size == 0:
                continue
            nearest = gallery[np.argmin(cross_distances(E[probes], E[gallery]), axis=1)]
            per_pair[i, j] = 100.0 * np.mean(identities[nearest] == identities[probes])

    off_diag = ~np.eye(unique_views.size, dtype=bool)
    cross_vals = per_pair[off_diag]
    diag_vals = np.diag(per_pair)
    return Rank1Report(
        views=list(unique_views),
        per_pair=per_pair,
        overall_cross_view=_nanmean(cross_vals),
        identical_view_mean=_nanmean(diag_vals),
    )


def _nanmean(values) -> float:
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    return float(values.mean()) if values.size else float("nan")


def _rates(triplets: Sequence[Triplet], labels: Sequence) -> tuple:
    if not triplets:
        return None, None, None
    pos = np.array([labels[t.anchor] == labels[t.positive] for t in triplets])
    neg = np.array([labels[t.anchor] != labels[t.negative] for t in triplets])
    return 100.0 * np.mean(pos & neg), 100.0 * np.mean(pos), 100.0 * np.mean(neg)


def triplet_correctness(triplets: Sequence[Triplet], labels: Sequence, stages: Optional[Sequence[int]] = None) -> CorrectnessReport:
    """Identity-wise correctness of mined triplets.

    A positive is correct when it shares the anchor's identity, a negative
    when it does not, and a triplet when both hold. ``stages`` optionally
    tags each triplet with its curriculum stage for a per-stage breakdown.
    """
    for t in triplets:
        for idx in (t.anchor, t.positive, t.negative):
            if idx >= len(labels) or labels[idx] is None or labels[idx] == "":
                raise ValueError(f"missing label for sample {idx}")
    trip, pos, neg = _rates(triplets, labels)
    report = CorrectnessReport(trip, pos, neg, len(triplets))
    if stages is not None:
        if len(stages) != len(triplets):
            raise ValueError("stages must tag every triplet")
        for s in sorted(set(stages)):
            subset = [t for t, st in zip(triplets, stages) if st == s]
            report.per_stage[s] = CorrectnessReport(*_rates(subset, labels), len(subset))
    return report


def oracle_filter(triplets: Sequence[Triplet], labels: Sequence) -> list[Triplet]:
    """Keep only triplets whose anchor and positive share an identity the negative lacks."""
    return [t for t in triplets if labels[t.anchor] == labels[t.positive] != labels[t.negative]]


def supervised_adapt(
    records: Sequence[GaitRecord],
    adam: Optional[AdamState] = None,
    iterations: int = 2000,
    batch_triplets: int = 32,
    margin: float = 0.2,
    seed: int = 0,
) -> np.ndarray:
    """Label-supervised triplet training of the linear adapter (upper-bound baseline).

    Each batch draws anchors uniformly, a positive from another record of the
    same identity and a negative from a different identity.
    """
    labels = record_identities(records)
    uniq = sorted(set(labels))
    if len(uniq) < 2:
        raise ValueError("supervised triplets require >=2 identities")
    X = stack_embeddings(records)
    W = np.eye(X.shape[1])
    if iterations <= 0:
        return W

    by_id = {u: np.flatnonzero(np.array(labels, dtype=object) == u) for u in uniq}
    eligible = np.array([i for i, lab in enumerate(labels) if by_id[lab].size >= 2])
    if eligible.size == 0:
        raise ValueError("supervised triplets require an identity with >=2 records")
    base = adam or AdamState()
    opt = AdamState(lr=base.lr, weight_decay=base.weight_decay, beta1=base.beta1, beta2=base.beta2, eps=base.eps)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    n = len(labels)
    for _ in range(iterations):
        anchors = eligible[rng.integers(0, eligible.size, size=batch_triplets)]
        positives = np.empty_like(anchors)
        negatives = np.empty_like(anchors)
        for k, a in enumerate(anchors):
            others = by_id[labels[a]][by_id[labels[a]] != a]
            positives[k] = others[rng.integers(0, others.size)]
            neg = rng.integers(0, n)
            while labels[neg] == labels[a]:
                neg = rng.integers(0, n)
            negatives[k] = neg
        batch = TripletBatch(X[anchors], X[anchors], X[positives], X[negatives])
        W, opt = adam_step(opt, W, loss_gradient(batch, W, margin, w_gouda=1.0, w_ssl=0.0))
    return W


def positive_view_confusion(triplets: Sequence[Triplet], views, bin_width: float = 45.0):
    """Row-normalised histogram of anchor view bin vs. selected positive view bin.

    Returns ``(bin_edges, matrix)`` where ``bin_edges`` are the lower edges of
    the bins covering [0, 360) and rows without triplets are all-NaN.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    views = np.asarray(views, dtype=float)
    n_bins = int(math.ceil(360.0 / bin_width))
    edges = np.arange(n_bins) * bin_width
    counts = np.zeros((n_bins, n_bins))
    for t in triplets:
        i = min(int(views[t.anchor] // bin_width), n_bins - 1)
        j = min(int(views[t.positive] // bin_width), n_bins - 1)
        counts[i, j] += 1
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(totals > 0, counts / totals, np.nan)
    return edges, matrix


def view_neighborhood_histogram(
    records: Sequence[GaitRecord],
    W: Optional[np.ndarray] = None,
    K: int = 5,
    T_s: float = 10.0,
    angle_mode: AngleMode | str = AngleMode.FULL,
) -> tuple[np.ndarray, float]:
    """Distribution of similar-view neighbour counts (0..K) and its mean."""
    E = stack_embeddings(records)
    if W is not None:
        E = apply_adapter(W, E)
    counts = similar_view_counts(E, record_views(records), K, T_s, angle_mode)
    hist = np.bincount(counts, minlength=K + 1) / counts.size
    return hist, float(counts.mean())
