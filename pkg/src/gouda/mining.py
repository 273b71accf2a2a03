"""View-based triplet selection and the easy-to-hard curriculum around it.

For every anchor the other samples are split by viewing angle into a
similar-view set and a cross-view set. The positive is the cross-view
sample closest to the anchor; the negative is the farthest similar-view
sample that still lies within ``margin`` of the positive's distance. A
triplet is kept only if some other similar-view sample is closer to the
anchor than the chosen negative, since the closest similar-view sample is
the one most likely to share the anchor's identity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .geometry import AngleMode, circular_view_distance, view_distance_matrix


@dataclass(frozen=True)
class MiningConfig:
    T_s: float = 10.0
    T_c: float = 20.0
    margin: float = 0.2
    angle_mode: AngleMode = AngleMode.FULL

    def __post_init__(self):
        object.__setattr__(self, "angle_mode", AngleMode.parse(self.angle_mode))
        if not (0 < self.T_s <= self.T_c):
            raise ValueError(f"view thresholds must satisfy 0 < T_s <= T_c, got T_s={self.T_s}, T_c={self.T_c}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")


class Triplet(NamedTuple):
    anchor: int
    positive: int
    negative: int
    confidence: float


@dataclass(frozen=True)
class CurriculumSchedule:
    stage_q_percent: tuple = (10, 25, 50, 100)
    replay_factor: int = 10
    batch_triplets: int = 32

    def __post_init__(self):
        q = tuple(self.stage_q_percent)
        object.__setattr__(self, "stage_q_percent", q)
        # equal consecutive stages are allowed so a no-curriculum run is 100,100,100,100
        if not q or any(b < a for a, b in zip(q, q[1:])) or q[-1] != 100 or q[0] <= 0:
            raise ValueError(f"stage_q_percent must be non-decreasing in (0, 100] and end at 100, got {q}")
        if self.replay_factor < 1:
            raise ValueError("replay_factor must be >= 1")
        if self.batch_triplets < 1:
            raise ValueError("batch_triplets must be >= 1")


def partition_views(anchor: int, views, cfg: MiningConfig) -> tuple[set, set]:
    """Return ``(similar, cross)`` index sets for one anchor.

    Samples with ``T_s <= distance <= T_c`` belong to neither set.
    """
    views = np.asarray(views, dtype=float)
    dist = circular_view_distance(views[anchor], views, cfg.angle_mode)
    idx = np.arange(len(views))
    similar = set(idx[(dist < cfg.T_s) & (idx != anchor)].tolist())
    cross = set(idx[dist > cfg.T_c].tolist())
    return similar, cross


def select_triplets(D: np.ndarray, views, cfg: MiningConfig) -> list[Triplet]:
    """Mine at most one valid triplet per anchor from a distance matrix.

    Args:
        D: (R, R) cosine distance matrix of the current embeddings.
        views: R viewing angles in degrees.
        cfg: Thresholds, margin and angle mode.

    Returns:
        Valid triplets ordered by anchor index, each carrying the confidence
        ``1 - D[a, p]``. Anchors whose cross-view set or negative candidate
        set is empty, or that fail the validity test, are skipped.
    """
    D = np.asarray(D, dtype=float)
    views = np.asarray(views, dtype=float)
    n = D.shape[0]
    if views.shape[0] != n:
        raise ValueError(f"views length {views.shape[0]} != distance matrix size {n}")

    V = view_distance_matrix(views, cfg.angle_mode)
    similar_mask = V < cfg.T_s
    np.fill_diagonal(similar_mask, False)
    cross_mask = V > cfg.T_c

    out = []
    for a in range(n):
        cross = np.flatnonzero(cross_mask[a])
        if cross.size == 0:
            continue
        row = D[a]
        # argmin/argmax return the first hit, i.e. the lowest index on ties
        p = cross[np.argmin(row[cross])]
        similar = np.flatnonzero(similar_mask[a])
        candidates = similar[row[similar] < row[p] + cfg.margin]
        if candidates.size == 0:
            continue
        neg = candidates[np.argmax(row[candidates])]
        if np.any(row[similar] < row[neg]):
            out.append(Triplet(int(a), int(p), int(neg), float(1.0 - row[p])))
    return out


def top_q(valid: Sequence[Triplet], q: float) -> list[Triplet]:
    """Keep the ``ceil(q% * len(valid))`` most confident triplets.

    Ties on confidence go to the lower anchor index. The result is sorted by
    descending confidence.
    """
    if not (0 < q <= 100):
        raise ValueError(f"q must be in (0, 100], got {q}")
    if not valid:
        return []
    ranked = sorted(valid, key=lambda t: (-t.confidence, t.anchor))
    count = math.ceil(q * len(valid) / 100 - 1e-9)
    return ranked[:count]


def stage_iterations(n_selected: int, sched: CurriculumSchedule) -> int:
    """Iterations needed for each selected triplet to be seen ``replay_factor`` times on average."""
    if n_selected < 0:
        raise ValueError("n_selected must be >= 0")
    return -(-sched.replay_factor * n_selected // sched.batch_triplets)


@dataclass
class TripletLog:
    """Accumulates mined triplets across curriculum stages for later dumping."""

    rows: list = field(default_factory=list)

    def extend(self, triplets: Iterable[Triplet], stage: int) -> None:
        self.rows.extend((t, stage) for t in triplets)

    def write_csv(self, path, record_ids: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["anchor_id", "positive_id", "negative_id", "confidence", "stage"])
            for t, stage in self.rows:
                writer.writerow(
                    [record_ids[t.anchor], record_ids[t.positive], record_ids[t.negative], repr(t.confidence), stage]
                )
