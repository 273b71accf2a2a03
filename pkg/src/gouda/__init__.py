"""View-based unsupervised domain adaptation for gait embeddings."""

from .adaptation import (
    AdamState,
    TripletBatch,
    adam_step,
    adapt,
    apply_adapter,
    gouda_loss,
    loss_gradient,
    ssl_loss,
    stopping_criterion,
    total_loss,
)
from .embedding import GaitRecord, cosine_distance, distance_matrix, knn, split_records
from .estimator import GOUDAAdapter, SupervisedTripletAdapter
from .evaluation import (
    oracle_filter,
    positive_view_confusion,
    rank1_cross_view,
    supervised_adapt,
    triplet_correctness,
    view_neighborhood_histogram,
)
from .geometry import AngleMode, circular_view_distance, estimate_yaw
from .mining import CurriculumSchedule, MiningConfig, Triplet, partition_views, select_triplets, stage_iterations, top_q
from .synthetic import SynthConfig, augment, embed_window, generate_target_domain

__version__ = "0.1.0"
