"""Triplet-loss adaptation of a linear embedding transform.

The adapted model is ``e -> W @ e`` with ``W`` initialised to the identity,
trained with two hinge losses over mined triplets: one that pulls the
cross-view positive towards the anchor and one that uses a second
sub-sequence of the anchor as positive. Training follows a curriculum of
growing top-q triplet subsets and keeps the checkpoint whose validation
neighbourhoods are the most view-diverse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .embedding import GaitRecord, distance_matrix, knn_all
from .geometry import AngleMode, view_distance_matrix
from .mining import CurriculumSchedule, MiningConfig, Triplet, select_triplets, stage_iterations, top_q
from .synthetic import augment

logger = logging.getLogger(__name__)


class CollapsedEmbeddingError(ValueError):
    pass


class DivergedError(FloatingPointError):
    pass


class NoValidTripletsError(RuntimeError):
    pass


# -- adapter and losses -----------------------------------------------------


def apply_adapter(W: np.ndarray, E) -> np.ndarray:
    """Map every row ``e`` of ``E`` to ``W @ e``."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    W = np.asarray(W, dtype=float)
    if E.shape[1] != W.shape[1]:
        raise ValueError(f"adapter expects dimension {W.shape[1]}, got {E.shape[1]}")
    out = E @ W.T
    if np.any(np.linalg.norm(out, axis=1) == 0.0):
        raise CollapsedEmbeddingError("adapter collapsed embedding")
    return out


@dataclass
class TripletBatch:
    """Stacked quadruples: anchor, augmented anchor, positive, negative, each (B, d)."""

    anchor: np.ndarray
    anchor_aug: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(x) for x in (self.anchor, self.anchor_aug, self.positive, self.negative)}
        if len(shapes) != 1:
            raise ValueError(f"batch parts have inconsistent shapes: {shapes}")

    def __len__(self):
        return len(self.anchor)


def _cosine_parts(U: np.ndarray, V: np.ndarray):
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    if np.any(nu == 0.0) or np.any(nv == 0.0):
        raise CollapsedEmbeddingError("adapter collapsed embedding")
    cos = np.einsum("ij,ij->i", U, V) / (nu * nv)
    return cos, nu, nv


def _pair_distances(W, X, Y):
    return 1.0 - _cosine_parts(X @ W.T, Y @ W.T)[0]


def _hinge_terms(batch: TripletBatch, W: np.ndarray, margin: float):
    d_an = _pair_distances(W, batch.anchor, batch.negative)
    gouda = _pair_distances(W, batch.anchor, batch.positive) - d_an + margin
    ssl = _pair_distances(W, batch.anchor, batch.anchor_aug) - d_an + margin
    return gouda, ssl


def gouda_loss(batch: TripletBatch, W: np.ndarray, margin: float = 0.2) -> float:
    """Sum of ``[d(Wa, Wp) - d(Wa, Wn) + m]_+`` over the batch."""
    gouda, _ = _hinge_terms(batch, np.asarray(W, dtype=float), margin)
    return float(np.maximum(gouda, 0.0).sum())


def ssl_loss(batch: TripletBatch, W: np.ndarray, margin: float = 0.2) -> float:
    """Same hinge as :func:`gouda_loss` with the positive replaced by the augmented anchor."""
    _, ssl = _hinge_terms(batch, np.asarray(W, dtype=float), margin)
    return float(np.maximum(ssl, 0.0).sum())


def total_loss(batch: TripletBatch, W: np.ndarray, margin: float = 0.2, w_gouda: float = 1.0, w_ssl: float = 1.0) -> float:
    W = np.asarray(W, dtype=float)
    gouda, ssl = _hinge_terms(batch, W, margin)
    return float(w_gouda * np.maximum(gouda, 0.0).sum() + w_ssl * np.maximum(ssl, 0.0).sum())


def _cosine_grad(W, X, Y, weight):
    """d/dW of sum_i weight_i * cos(W x_i, W y_i)."""
    U, V = X @ W.T, Y @ W.T
    cos, nu, nv = _cosine_parts(U, V)
    gu = V / (nu * nv)[:, None] - (cos / nu**2)[:, None] * U
    gv = U / (nu * nv)[:, None] - (cos / nv**2)[:, None] * V
    return (weight[:, None] * gu).T @ X + (weight[:, None] * gv).T @ Y


def loss_gradient(batch: TripletBatch, W: np.ndarray, margin: float = 0.2, w_gouda: float = 1.0, w_ssl: float = 1.0) -> np.ndarray:
    """Analytic gradient of :func:`total_loss` with respect to ``W``.

    A hinge contributes only when its argument is strictly positive, so the
    subgradient at the kink is zero.
    """
    W = np.asarray(W, dtype=float)
    gouda, ssl = _hinge_terms(batch, W, margin)
    act_g = w_gouda * (gouda > 0.0)
    act_s = w_ssl * (ssl > 0.0)
    # hinge = -cos(a, pos) + cos(a, n) + m, since d = 1 - cos
    grad = _cosine_grad(W, batch.anchor, batch.positive, -act_g)
    grad += _cosine_grad(W, batch.anchor, batch.anchor_aug, -act_s)
    grad += _cosine_grad(W, batch.anchor, batch.negative, act_g + act_s)
    return grad


# -- optimiser --------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-5
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step: int = 0


def adam_step(state: AdamState, W: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One Adam update with L2 weight decay folded into the gradient.

    Returns a new parameter array; ``state`` is updated in place and also
    returned.
    """
    W = np.asarray(W, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != W.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {W.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergedError("diverged")
    if state.m is None:
        state.m = np.zeros_like(W)
        state.v = np.zeros_like(W)
    g = grad + state.weight_decay * W
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return W - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), state


# -- stopping criterion -----------------------------------------------------


def similar_view_counts(E, views, K: int, T_s: float, angle_mode: AngleMode | str = AngleMode.FULL) -> np.ndarray:
    """Per-sample count of similar-view samples among its K cosine neighbours."""
    E = np.asarray(E, dtype=float)
    nbrs = knn_all(distance_matrix(E), K)
    V = view_distance_matrix(views, angle_mode)
    return (np.take_along_axis(V, nbrs, axis=1) < T_s).sum(axis=1)


def stopping_criterion(E_val, views_val, K: int = 5, T_s: float = 10.0, angle_mode: AngleMode | str = AngleMode.FULL) -> float:
    """Mean number of similar-view samples among each validation sample's K neighbours.

    Lower means view-diverse neighbourhoods; the training loop keeps the
    checkpoint that minimises it.
    """
    return float(similar_view_counts(E_val, views_val, K, T_s, angle_mode).mean())


# -- training loop ----------------------------------------------------------


@dataclass
class Checkpoint:
    W: np.ndarray = field(repr=False)
    sc: float
    iteration: int
    stage: int


@dataclass
class StageSummary:
    q: float
    n_valid: int
    n_selected: int
    iterations: int
    correct_triplet_rate: Optional[float] = None
    valid_correct_triplet_rate: Optional[float] = None
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"q": self.q, "n_valid": self.n_valid, "n_selected": self.n_selected, "iterations": self.iterations}
        if self.correct_triplet_rate is not None:
            d["correct_triplet_rate"] = self.correct_triplet_rate
        if self.valid_correct_triplet_rate is not None:
            d["valid_correct_triplet_rate"] = self.valid_correct_triplet_rate
        if self.warning:
            d["warning"] = self.warning
        return d


@dataclass
class TrainingTrace:
    stages: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    chosen: Optional[Checkpoint] = None
    triplets: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "loss": list(self.loss),
            "checkpoints": [{"iter": c.iteration, "stage": c.stage, "sc": c.sc} for c in self.checkpoints],
            "chosen": None if self.chosen is None else {"iter": self.chosen.iteration, "sc": self.chosen.sc},
        }


def _correct_rate(triplets: Sequence[Triplet], labels) -> Optional[float]:
    if labels is None or not triplets:
        return None
    ok = sum(labels[t.anchor] == labels[t.positive] != labels[t.negative] for t in triplets)
    return 100.0 * ok / len(triplets)


def adapt(
    train: Sequence[GaitRecord],
    val_embeddings,
    val_views,
    mining: MiningConfig = MiningConfig(),
    schedule: CurriculumSchedule = CurriculumSchedule(),
    adam: Optional[AdamState] = None,
    K: int = 5,
    checkpoint_every: int = 200,
    seed: int = 0,
    w_gouda: float = 1.0,
    w_ssl: float = 1.0,
    triplet_filter: Optional[Callable[[list], list]] = None,
    labels: Optional[Sequence] = None,
    aug_min_fraction: float = 0.5,
    loss_margin: Optional[float] = None,
) -> tuple[np.ndarray, TrainingTrace]:
    """Run curriculum triplet adaptation and return the best adapter.

    Args:
        train: Target-domain training records. Frames are needed whenever
            ``w_ssl`` is non-zero.
        val_embeddings: (N_val, d) raw validation embeddings.
        val_views: Validation viewing angles.
        mining: Triplet selection thresholds and margin.
        schedule: Curriculum q-percentages, replay factor and batch size.
        adam: Optimiser hyperparameters; a fresh state is copied from it.
        K: Neighbourhood size of the stopping criterion.
        checkpoint_every: Iteration interval between checkpoints, in
            addition to one checkpoint at every stage boundary.
        seed: Seed for batch sampling and augmentation.
        w_gouda, w_ssl: Loss weights (0 disables a term).
        triplet_filter: Optional hook applied to the valid triplets before
            top-q selection (e.g. a label oracle).
        labels: Optional identities of ``train``, used only to report
            correct-triplet rates in the trace.
        aug_min_fraction: Minimum sub-sequence length as a fraction of T.
        loss_margin: Hinge margin of the losses; defaults to ``mining.margin``.

    Returns:
        ``(W, trace)`` where ``W`` is the checkpoint with minimal validation
        criterion (earliest on ties).

    Raises:
        NoValidTripletsError: If the first stage mines no valid triplet.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    X = np.vstack([r.embedding for r in train])
    views = np.array([r.view for r in train], dtype=float)
    val_embeddings = np.atleast_2d(np.asarray(val_embeddings, dtype=float))
    if val_embeddings.shape[0] == 0:
        raise ValueError("validation set is empty")
    if K > val_embeddings.shape[0] - 1:
        raise ValueError(f"K={K} too large for {val_embeddings.shape[0]} validation samples")
    if w_ssl and any(r.frames is None for r in train):
        raise ValueError("augmentation requires frame latents (set w_ssl = 0 to train without them)")

    margin = mining.margin if loss_margin is None else loss_margin
    base = adam or AdamState()
    opt = AdamState(lr=base.lr, weight_decay=base.weight_decay, beta1=base.beta1, beta2=base.beta2, eps=base.eps)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    d = X.shape[1]
    W = np.eye(d)
    trace = TrainingTrace()

    def checkpoint(iteration, stage):
        sc = stopping_criterion(apply_adapter(W, val_embeddings), val_views, K, mining.T_s, mining.angle_mode)
        trace.checkpoints.append(Checkpoint(W.copy(), sc, iteration, stage))

    checkpoint(0, 0)
    iteration = 0
    for stage, q in enumerate(schedule.stage_q_percent, start=1):
        D = distance_matrix(apply_adapter(W, X))
        valid = select_triplets(D, views, mining)
        if not valid and stage == 1:
            raise NoValidTripletsError(
                f"no valid triplets; check thresholds (T_s={mining.T_s}, T_c={mining.T_c}, margin={mining.margin})"
            )
        pool = triplet_filter(valid) if triplet_filter is not None else valid
        selected = top_q(pool, q)
        n_iter = stage_iterations(len(selected), schedule)
        summary = StageSummary(
            q=q,
            n_valid=len(valid),
            n_selected=len(selected),
            iterations=n_iter,
            correct_triplet_rate=_correct_rate(selected, labels),
            valid_correct_triplet_rate=_correct_rate(valid, labels),
        )
        trace.stages.append(summary)
        trace.triplets.append(selected)
        if not selected:
            summary.warning = f"stage {stage}: no triplets selected, stage skipped"
            logger.warning(summary.warning)
            continue

        a_idx = np.array([t.anchor for t in selected])
        p_idx = np.array([t.positive for t in selected])
        n_idx = np.array([t.negative for t in selected])
        for _ in range(n_iter):
            pick = rng.integers(0, len(selected), size=schedule.batch_triplets)
            anchors = a_idx[pick]
            if w_ssl:
                views_pair = [augment(train[i], rng, aug_min_fraction) for i in anchors]
                a_emb = np.array([v[0] for v in views_pair])
                a_aug = np.array([v[1] for v in views_pair])
            else:
                a_emb = X[anchors]
                a_aug = a_emb
            batch = TripletBatch(a_emb, a_aug, X[p_idx[pick]], X[n_idx[pick]])
            trace.loss.append(total_loss(batch, W, margin, w_gouda, w_ssl))
            grad = loss_gradient(batch, W, margin, w_gouda, w_ssl)
            W, opt = adam_step(opt, W, grad)
            iteration += 1
            if iteration % checkpoint_every == 0:
                checkpoint(iteration, stage)
        if iteration % checkpoint_every != 0:
            checkpoint(iteration, stage)

    best = min(trace.checkpoints, key=lambda c: (c.sc, c.iteration))
    trace.chosen = best
    return best.W.copy(), trace
