"""Independent reference checks run by ``gouda oracle-check``.

The triplet oracle is a literal, loop-based reading of the selection rules
that shares no code with :mod:`gouda.mining`; the gradient oracle compares
the analytic gradient with central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptation import TripletBatch, loss_gradient, total_loss
from .embedding import distance_matrix
from .mining import MiningConfig, select_triplets


def _view_gap(a: float, b: float, axial: bool) -> float:
    period = 180.0 if axial else 360.0
    diff = abs(a - b) % period
    return min(diff, period - diff)


def brute_force_triplets(D, views, T_s, T_c, margin, axial=False) -> list[tuple]:
    """Enumerate sets by definition and return ``(a, p, n, confidence)`` tuples."""
    R = len(views)
    found = []
    for a in range(R):
        similar = [j for j in range(R) if j != a and _view_gap(views[a], views[j], axial) < T_s]
        cross = [j for j in range(R) if _view_gap(views[a], views[j], axial) > T_c]
        if not cross:
            continue
        p = None
        for j in cross:
            if p is None or D[a][j] < D[a][p]:
                p = j
        n = None
        for j in similar:
            if D[a][j] < D[a][p] + margin and (n is None or D[a][j] > D[a][n]):
                n = j
        if n is None:
            continue
        if any(D[a][j] < D[a][n] for j in similar):
            found.append((a, p, n, 1.0 - D[a][p]))
    return found


def finite_difference_gradient(batch, W, margin=0.2, h=1e-6, w_gouda=1.0, w_ssl=1.0) -> np.ndarray:
    W = np.array(W, dtype=float)
    grad = np.zeros_like(W)
    for idx in np.ndindex(*W.shape):
        old = W[idx]
        W[idx] = old + h
        up = total_loss(batch, W, margin, w_gouda, w_ssl)
        W[idx] = old - h
        down = total_loss(batch, W, margin, w_gouda, w_ssl)
        W[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def random_triplet_batch(rng, d=16, size=8, spread=0.3) -> tuple[TripletBatch, np.ndarray]:
    """A random batch plus a near-identity adapter, with hinges mostly active."""
    anchor = rng.standard_normal((size, d))
    batch = TripletBatch(
        anchor=anchor,
        anchor_aug=anchor + spread * rng.standard_normal((size, d)),
        positive=anchor + 3 * spread * rng.standard_normal((size, d)),
        negative=anchor + 2 * spread * rng.standard_normal((size, d)),
    )
    W = np.eye(d) + 0.1 * rng.standard_normal((d, d))
    return batch, W


@dataclass
class OracleReport:
    triplet_matches: int = 0
    triplet_cases: int = 0
    triplets_mined: int = 0
    gradient_max_rel_error: float = 0.0
    gradient_cases: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def run_oracle_checks(
    n_instances=100, R=50, d=16, n_gradient=20, T_s=10.0, T_c=20.0, margin=0.2, seed=0, gradient_tol=1e-4, inject_fault=False
) -> OracleReport:
    rng = np.random.default_rng(seed)
    report = OracleReport()
    cfg = MiningConfig(T_s=T_s, T_c=T_c, margin=margin)
    for case in range(n_instances):
        E = rng.standard_normal((R, d))
        views = rng.uniform(0.0, 360.0, size=R)
        D = distance_matrix(E)
        got = [tuple(t) for t in select_triplets(D, views, cfg)]
        want = brute_force_triplets(D.tolist(), views.tolist(), T_s, T_c, margin)
        if inject_fault and case == 0:
            want = want[1:] if want else [(0, 0, 0, 0.0)]
        report.triplet_cases += 1
        report.triplets_mined += len(got)
        if got == want:
            report.triplet_matches += 1
        else:
            report.failures.append(f"triplet instance {case}: {len(got)} mined vs {len(want)} expected")

    for case in range(n_gradient):
        batch, W = random_triplet_batch(rng, d=d)
        analytic = loss_gradient(batch, W, margin)
        numeric = finite_difference_gradient(batch, W, margin)
        scale = max(np.abs(numeric).max(), 1e-12)
        rel = float(np.abs(analytic - numeric).max() / scale)
        report.gradient_cases += 1
        report.gradient_max_rel_error = max(report.gradient_max_rel_error, rel)
        if not (rel < gradient_tol) or math.isnan(rel):
            report.failures.append(f"gradient batch {case}: relative error {rel:.3e}")
    return report
