"""scikit-learn compatible wrappers around the adaptation routines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .adaptation import AdamState, adapt, apply_adapter
from .embedding import GaitRecord, split_records
from .evaluation import oracle_filter, supervised_adapt
from .mining import CurriculumSchedule, MiningConfig


def _check_views(views, n_samples):
    views = np.asarray(views, dtype=float).ravel()
    if views.shape[0] != n_samples:
        raise ValueError(f"views has {views.shape[0]} entries, expected {n_samples}")
    if not np.all(np.isfinite(views)):
        raise ValueError("views must be finite")
    return np.mod(views, 360.0)


class GOUDAAdapter(TransformerMixin, BaseEstimator):
    """Unsupervised view-debiasing of gait embeddings.

    ``fit`` learns a linear map ``W`` (identity at start) from unlabeled
    target-domain embeddings and their viewing angles; ``transform`` returns
    ``X @ W.T``. Identity labels passed as ``groups`` only decide the
    validation split; the optional ``oracle_labels`` enable the label-filtered
    triplet baseline and correctness diagnostics.

    Parameters
    ----------
    T_s, T_c : float
        Similar-view and cross-view thresholds in degrees.
    margin : float
        Margin used both when choosing negatives and in the hinge losses.
    angle_mode : {"full", "axial"}
    stage_q : tuple of float
        Percentage of most confident valid triplets kept at each stage.
    replay_factor, batch_triplets : int
        Average times each selected triplet is seen, and triplets per batch.
    lr, weight_decay : float
        Adam hyperparameters.
    K, checkpoint_every : int
        Neighbourhood size of the stopping criterion and checkpoint interval.
    w_gouda, w_ssl : float
        Loss weights.
    val_fraction : float
        Fraction of identities (or records) held out for checkpoint selection.
    aug_min_fraction : float
        Minimum sub-sequence length for augmentation, as a fraction of T.
    random_state : int
    """

    def __init__(
        self,
        T_s=10.0,
        T_c=20.0,
        margin=0.2,
        angle_mode="full",
        stage_q=(10, 25, 50, 100),
        replay_factor=10,
        batch_triplets=32,
        lr=1e-5,
        weight_decay=5e-4,
        K=5,
        checkpoint_every=200,
        w_gouda=1.0,
        w_ssl=1.0,
        val_fraction=0.1,
        aug_min_fraction=0.5,
        random_state=0,
    ):
        self.T_s = T_s
        self.T_c = T_c
        self.margin = margin
        self.angle_mode = angle_mode
        self.stage_q = stage_q
        self.replay_factor = replay_factor
        self.batch_triplets = batch_triplets
        self.lr = lr
        self.weight_decay = weight_decay
        self.K = K
        self.checkpoint_every = checkpoint_every
        self.w_gouda = w_gouda
        self.w_ssl = w_ssl
        self.val_fraction = val_fraction
        self.aug_min_fraction = aug_min_fraction
        self.random_state = random_state

    def fit(self, X, y=None, *, views, frames=None, groups=None, oracle_labels=None):
        """Adapt to the target domain.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Frozen-backbone embeddings.
        y : ignored
        views : array-like of shape (n_samples,)
            Viewing angle of each sequence in degrees.
        frames : sequence of arrays of shape (T_i, n_features), optional
            Frame latents, required unless ``w_ssl == 0``.
        groups : array-like of shape (n_samples,), optional
            Identity labels used only to hold out whole identities for
            validation.
        oracle_labels : array-like of shape (n_samples,), optional
            Ground-truth identities; when given, training keeps only
            label-correct triplets.
        """
        X = check_array(X, dtype=float)
        views = _check_views(views, X.shape[0])
        if frames is not None and len(frames) != X.shape[0]:
            raise ValueError("frames must have one entry per sample")
        records = [
            GaitRecord(
                record_id=str(i),
                embedding=X[i],
                view=views[i],
                identity=None if groups is None else str(groups[i]),
                frames=None if frames is None else frames[i],
            )
            for i in range(X.shape[0])
        ]
        train, val, _ = split_records(records, test_fraction=0.0, val_fraction=self.val_fraction)
        train_idx = [int(r.record_id) for r in train]

        labels = None
        triplet_filter = None
        if oracle_labels is not None:
            labels = [oracle_labels[i] for i in train_idx]
            triplet_filter = lambda trips: oracle_filter(trips, labels)  # noqa: E731

        W, trace = adapt(
            train,
            np.vstack([r.embedding for r in val]),
            [r.view for r in val],
            mining=MiningConfig(self.T_s, self.T_c, self.margin, self.angle_mode),
            schedule=CurriculumSchedule(tuple(self.stage_q), self.replay_factor, self.batch_triplets),
            adam=AdamState(lr=self.lr, weight_decay=self.weight_decay),
            K=self.K,
            checkpoint_every=self.checkpoint_every,
            seed=self.random_state,
            w_gouda=self.w_gouda,
            w_ssl=self.w_ssl,
            triplet_filter=triplet_filter,
            labels=labels,
            aug_min_fraction=self.aug_min_fraction,
        )
        self.adapter_ = W
        self.trace_ = trace
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "adapter_")
        X = check_array(X, dtype=float)
        return apply_adapter(self.adapter_, X)


class SupervisedTripletAdapter(TransformerMixin, BaseEstimator):
    """Linear adapter trained with labelled triplets; an upper-bound baseline."""

    def __init__(self, iterations=2000, batch_triplets=32, margin=0.2, lr=1e-5, weight_decay=5e-4, random_state=0):
        self.iterations = iterations
        self.batch_triplets = batch_triplets
        self.margin = margin
        self.lr = lr
        self.weight_decay = weight_decay
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        if len(y) != X.shape[0]:
            raise ValueError("y must have one label per sample")
        records = [GaitRecord(str(i), X[i], 0.0, identity=str(y[i])) for i in range(X.shape[0])]
        self.adapter_ = supervised_adapt(
            records,
            adam=AdamState(lr=self.lr, weight_decay=self.weight_decay),
            iterations=self.iterations,
            batch_triplets=self.batch_triplets,
            margin=self.margin,
            seed=self.random_state,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "adapter_")
        return apply_adapter(self.adapter_, check_array(X, dtype=float))
