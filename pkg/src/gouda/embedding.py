"""Gait records, cosine distances and brute-force nearest neighbours."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import wrap_degrees


class ZeroNormEmbeddingError(ValueError):
    pass


@dataclass
class GaitRecord:
    """One gait sequence in the target domain.

    ``identity`` is only used for evaluation and oracle baselines; the
    adaptation itself never reads it. ``frames`` holds the per-frame latent
    vectors of shape (T, d) when sub-sequence augmentation is needed.
    """

    record_id: str
    embedding: np.ndarray
    view: float
    identity: Optional[str] = None
    frames: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float)
        if self.embedding.ndim != 1:
            raise ValueError(f"{self.record_id}: embedding must be a vector")
        if not np.any(self.embedding):
            raise ZeroNormEmbeddingError(f"{self.record_id}: zero-norm embedding")
        self.view = wrap_degrees(self.view)
        if self.frames is not None:
            self.frames = np.asarray(self.frames, dtype=float)
            if self.frames.ndim != 2 or self.frames.shape[0] < 2:
                raise ValueError(f"{self.record_id}: frames must be (T, d) with T >= 2")


def stack_embeddings(records: Sequence[GaitRecord]) -> np.ndarray:
    dims = {r.embedding.shape[0] for r in records}
    if len(dims) > 1:
        raise ValueError(f"embedding dimension mismatch: {sorted(dims)}")
    return np.vstack([r.embedding for r in records])


def record_views(records: Sequence[GaitRecord]) -> np.ndarray:
    return np.array([r.view for r in records], dtype=float)


def record_identities(records: Sequence[GaitRecord]) -> list:
    labels = [r.identity for r in records]
    missing = [r.record_id for r in records if r.identity is None or r.identity == ""]
    if missing:
        raise ValueError(f"missing identity labels for {len(missing)} records, e.g. {missing[0]}")
    return labels


def cosine_distance(x, y) -> float:
    """``1 - cos(x, y)``, in [0, 2]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ZeroNormEmbeddingError("zero-norm embedding")
    return float(np.clip(1.0 - np.dot(x, y) / (nx * ny), 0.0, 2.0))


def _unit_rows(E: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms == 0.0):
        raise ZeroNormEmbeddingError("zero-norm embedding")
    return E / norms[:, None]


def cross_distances(A, B) -> np.ndarray:
    """Cosine distances between every row of ``A`` and every row of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"embedding dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.clip(1.0 - _unit_rows(A) @ _unit_rows(B).T, 0.0, 2.0)


def distance_matrix(E) -> np.ndarray:
    """Dense pairwise cosine distance matrix.

    Accepts an (n, d) array or a sequence of :class:`GaitRecord`. The upper
    triangle is computed and mirrored, so the result is exactly symmetric
    with an exact zero diagonal.
    """
    if len(E) and isinstance(E[0], GaitRecord):
        E = stack_embeddings(E)
    E = np.asarray(E, dtype=float)
    if E.ndim != 2:
        raise ValueError("embeddings must be a 2D array")
    U = _unit_rows(E)
    full = np.clip(1.0 - U @ U.T, 0.0, 2.0)
    upper = np.triu(full, k=1)
    return upper + upper.T


def knn(D: np.ndarray, a: int, K: int) -> np.ndarray:
    """Indices of the ``K`` nearest neighbours of ``a``, self excluded.

    Sorted by ascending distance, ties broken by lower index.
    """
    n = D.shape[0]
    if K > n - 1 or K < 0:
        raise ValueError(f"K={K} out of range for {n} samples (need K <= n - 1)")
    row = np.asarray(D[a], dtype=float).copy()
    row[a] = np.inf
    return np.argsort(row, kind="stable")[:K]


def knn_all(D: np.ndarray, K: int) -> np.ndarray:
    """Row-wise :func:`knn` for every sample, shape (n, K)."""
    n = D.shape[0]
    if K > n - 1 or K < 0:
        raise ValueError(f"K={K} out of range for {n} samples (need K <= n - 1)")
    masked = np.array(D, dtype=float, copy=True)
    np.fill_diagonal(masked, np.inf)
    return np.argsort(masked, axis=1, kind="stable")[:, :K]


# -- file formats -----------------------------------------------------------


def write_embeddings_csv(path, records: Sequence[GaitRecord]) -> None:
    d = records[0].embedding.shape[0] if records else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "identity", "view_deg"] + [f"e{i}" for i in range(d)])
        for r in records:
            writer.writerow(
                [r.record_id, "" if r.identity is None else r.identity, repr(float(r.view))]
                + [repr(float(v)) for v in r.embedding]
            )


def write_frames_csv(path, records: Sequence[GaitRecord]) -> None:
    with_frames = [r for r in records if r.frames is not None]
    k = with_frames[0].frames.shape[1] if with_frames else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "frame_idx"] + [f"f{i}" for i in range(k)])
        for r in with_frames:
            for t, frame in enumerate(r.frames):
                writer.writerow([r.record_id, t] + [repr(float(v)) for v in frame])


def read_embeddings_csv(path, frames_path=None) -> list[GaitRecord]:
    """Read the embedding dataset CSV, optionally joining a frames CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["record_id", "identity", "view_deg"]:
            raise ValueError(f"{path}: unexpected header {header[:3]}")
        for row in reader:
            if row:
                rows.append(row)

    frames = _read_frames(frames_path) if frames_path is not None else {}
    return [
        GaitRecord(
            record_id=row[0],
            identity=row[1] or None,
            view=float(row[2]),
            embedding=np.array([float(v) for v in row[3:]]),
            frames=frames.get(row[0]),
        )
        for row in rows
    ]


def _read_frames(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    grouped: dict[str, list[tuple[int, list[float]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                grouped.setdefault(row[0], []).append((int(row[1]), [float(v) for v in row[2:]]))
    return {rid: np.array([f for _, f in sorted(items)]) for rid, items in grouped.items()}


def split_records(records: Sequence[GaitRecord], test_fraction: float = 0.5, val_fraction: float = 0.1):
    """Split into ``(train, validation, test)`` by identity, in order of first appearance.

    The last ``test_fraction`` of identities form the test set and the last
    ``val_fraction`` of the remaining ones the validation set. Without
    identity labels the split falls back to record order.
    """
    if all(r.identity not in (None, "") for r in records):
        keys = [r.identity for r in records]
    else:
        keys = list(range(len(records)))
    groups = list(dict.fromkeys(keys))
    n_test = int(math.floor(test_fraction * len(groups)))
    adapt_groups = groups[: len(groups) - n_test]
    n_val = max(1, int(math.ceil(val_fraction * len(adapt_groups))))
    if len(adapt_groups) <= n_val:
        raise ValueError(f"not enough identities ({len(adapt_groups)}) for a train/validation split")
    val_set = set(adapt_groups[-n_val:])
    train_set = set(adapt_groups[:-n_val])
    train = [r for r, k in zip(records, keys) if k in train_set]
    val = [r for r, k in zip(records, keys) if k in val_set]
    test = [r for r, k in zip(records, keys) if k not in train_set and k not in val_set]
    return train, val, test
