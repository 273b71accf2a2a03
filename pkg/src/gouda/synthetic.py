"""Seeded generator for a view-biased synthetic target domain.

Each frame latent is a sum of an identity direction, a smooth function of
the viewing angle, a periodic gait oscillation and white noise::

    frame_t = alpha * u_id + beta * w(view) + gamma * sin(2 pi t / 16) * g_id + sigma * eps_t

A record's embedding is the mean of its frames, standing in for a frozen
source-domain backbone. With ``beta`` large relative to ``alpha`` the
embeddings cluster by view rather than by identity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .embedding import GaitRecord

T_CYCLE = 16
N_HARMONICS = 3


@dataclass(frozen=True)
class SynthConfig:
    n_identities: int = 64
    views: tuple = tuple(range(0, 360, 45))
    seqs_per_id_view: int = 2
    frames_per_seq: int = 64
    dim: int = 32
    id_strength: float = 1.0
    view_bias: float = 3.0
    gait_phase_amp: float = 0.5
    noise: float = 0.3
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(float(v) % 360.0 for v in self.views))
        problems = []
        if self.n_identities < 2:
            problems.append(f"n_identities must be >= 2 (got {self.n_identities})")
        if len(self.views) < 2:
            problems.append(f"views needs at least 2 entries (got {len(self.views)})")
        if self.seqs_per_id_view < 1:
            problems.append(f"seqs_per_id_view must be >= 1 (got {self.seqs_per_id_view})")
        if self.frames_per_seq < 4:
            problems.append(f"frames_per_seq must be >= 4 (got {self.frames_per_seq})")
        if self.dim < 8:
            problems.append(f"dim must be >= 8 (got {self.dim})")
        if self.id_strength <= 0:
            problems.append(f"id_strength must be > 0 (got {self.id_strength})")
        for name in ("view_bias", "gait_phase_amp", "noise"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["views"] = list(self.views)
        return d


@dataclass
class SynthDataset:
    records: list
    config: SynthConfig
    view_projection: np.ndarray = field(repr=False, default=None)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def view_features(views, projection: np.ndarray) -> np.ndarray:
    """Unit view embeddings ``w(v)`` from sin/cos of 1x, 2x and 3x the angle."""
    rad = np.radians(np.atleast_1d(np.asarray(views, dtype=float)))
    harmonics = np.arange(1, N_HARMONICS + 1)
    feats = np.concatenate([np.sin(rad[:, None] * harmonics), np.cos(rad[:, None] * harmonics)], axis=1)
    return _unit(feats @ projection.T)


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, index]))


def generate_target_domain(cfg: SynthConfig) -> SynthDataset:
    """Build the synthetic target domain; a pure function of ``cfg``.

    Shared parameters (identity directions, gait directions, the view
    projection) come from one seeded stream; each record's frame noise comes
    from its own stream keyed by ``(seed, record_index)``, so records could
    be generated in any order.
    """
    shared = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    d = cfg.dim
    u = _unit(shared.standard_normal((cfg.n_identities, d)))
    g = _unit(shared.standard_normal((cfg.n_identities, d)))
    projection = shared.standard_normal((d, 2 * N_HARMONICS))
    w = view_features(cfg.views, projection)

    T = cfg.frames_per_seq
    phase = np.sin(2.0 * np.pi * np.arange(T) / T_CYCLE)

    records = []
    index = 0
    for i in range(cfg.n_identities):
        identity = f"id{i:03d}"
        for k, view in enumerate(cfg.views):
            base = cfg.id_strength * u[i] + cfg.view_bias * w[k]
            for s in range(cfg.seqs_per_id_view):
                eps = _record_rng(cfg.seed, index).standard_normal((T, d))
                frames = base[None, :] + cfg.gait_phase_amp * phase[:, None] * g[i][None, :] + cfg.noise * eps
                records.append(
                    GaitRecord(
                        record_id=f"{identity}_v{int(round(view)):03d}_s{s}",
                        embedding=embed_window(frames, 0, T),
                        view=view,
                        identity=identity,
                        frames=frames,
                    )
                )
                index += 1
    return SynthDataset(records=records, config=cfg, view_projection=projection)


def embed_window(frames, t0: int, t1: int) -> np.ndarray:
    """Frozen-backbone stand-in: mean of frames ``t0 .. t1 - 1``."""
    frames = np.asarray(frames, dtype=float)
    if not (0 <= t0 < t1 <= frames.shape[0]):
        raise ValueError(f"empty or out-of-range window [{t0}, {t1}) for {frames.shape[0]} frames")
    return frames[t0:t1].mean(axis=0)


def augment(record: GaitRecord, rng: np.random.Generator, min_fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Embed two independent random contiguous sub-sequences of one record.

    Window lengths are uniform in ``[ceil(min_fraction * T), T]`` and the
    start is uniform over the positions that fit.
    """
    frames = record.frames
    if frames is None:
        raise ValueError("augmentation requires frame latents")
    T = frames.shape[0]
    lo = min(T, max(1, math.ceil(min_fraction * T)))
    out = []
    for _ in range(2):
        length = int(rng.integers(lo, T + 1))
        start = int(rng.integers(0, T - length + 1))
        out.append(embed_window(frames, start, start + length))
    return out[0], out[1]
