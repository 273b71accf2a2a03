import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import WORKED_VIEWS
from gouda.embedding import distance_matrix
from gouda.mining import (
    CurriculumSchedule,
    MiningConfig,
    TripletLog,
    partition_views,
    select_triplets,
    stage_iterations,
    top_q,
)
from gouda.oracles import brute_force_triplets


def as_tuples(triplets):
    return [(t.anchor, t.positive, t.negative, round(t.confidence, 12)) for t in triplets]


def test_worked_instance(worked_D):
    got = select_triplets(worked_D, WORKED_VIEWS, MiningConfig())
    assert as_tuples(got) == [(0, 3, 2, 0.7), (1, 3, 2, 0.6)]
    assert [t[:3] for t in top_q(got, 50)] == [(0, 3, 2)]
    assert [t[:3] for t in top_q(got, 100)] == [(0, 3, 2), (1, 3, 2)]


def test_partition_views_worked_instance():
    similar, cross = partition_views(0, WORKED_VIEWS, MiningConfig())
    assert similar == {1, 2} and cross == {3, 4}


def test_no_cross_view_means_no_triplets():
    D = distance_matrix(np.random.default_rng(0).standard_normal((6, 4)))
    assert select_triplets(D, [0, 2, 4, 6, 8, 9], MiningConfig()) == []


def test_axial_mode_treats_opposite_views_as_similar():
    views = [0.0, 180.0, 5.0, 90.0]
    full = partition_views(0, views, MiningConfig())
    axial = partition_views(0, views, MiningConfig(angle_mode="axial"))
    assert 1 in full[1] and 1 in axial[0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([False, True]), st.floats(0.0, 0.5))
def test_select_matches_brute_force(seed, axial, margin):
    rng = np.random.default_rng(seed)
    R = 30
    D = distance_matrix(rng.standard_normal((R, 8)))
    # coarse views produce many boundary and tie cases
    views = rng.integers(0, 24, size=R) * 15.0
    cfg = MiningConfig(10, 20, margin, "axial" if axial else "full")
    got = [tuple(t) for t in select_triplets(D, views, cfg)]
    assert got == brute_force_triplets(D.tolist(), views.tolist(), 10, 20, margin, axial)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_triplet_invariants(seed):
    rng = np.random.default_rng(seed)
    views = rng.uniform(0, 360, 40)
    D = distance_matrix(rng.standard_normal((40, 6)))
    cfg = MiningConfig()
    trips = select_triplets(D, views, cfg)
    assert len({t.anchor for t in trips}) == len(trips)
    for a, p, n, conf in trips:
        similar, cross = partition_views(a, views, cfg)
        assert p in cross and n in similar
        assert D[a, n] < D[a, p] + cfg.margin
        assert min(D[a, j] for j in similar) < D[a, n]
        assert conf == pytest.approx(1 - D[a, p])


@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_selection_invariant_to_embedding_scale(seed, scale):
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((25, 5))
    views = rng.uniform(0, 360, 25)
    a = select_triplets(distance_matrix(E), views, MiningConfig())
    b = select_triplets(distance_matrix(scale * E), views, MiningConfig())
    assert [t[:3] for t in a] == [t[:3] for t in b]


def test_top_q_counts_and_order():
    from gouda.mining import Triplet

    trips = [Triplet(i, 0, 0, c) for i, c in enumerate([0.2, 0.9, 0.5, 0.9, 0.1, 0.3, 0.3])]
    assert len(top_q(trips, 10)) == 1
    assert len(top_q(trips, 25)) == 2
    assert [t.anchor for t in top_q(trips, 50)] == [1, 3, 2, 5]
    assert top_q([], 50) == []
    with pytest.raises(ValueError):
        top_q(trips, 0)


def test_stage_iterations():
    sched = CurriculumSchedule()
    assert stage_iterations(32, sched) == 10
    assert stage_iterations(100, sched) == 32
    assert stage_iterations(0, sched) == 0
    assert stage_iterations(1, sched) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        MiningConfig(T_s=30, T_c=20)
    with pytest.raises(ValueError):
        MiningConfig(margin=-0.1)
    with pytest.raises(ValueError):
        CurriculumSchedule((50, 25, 100))
    with pytest.raises(ValueError):
        CurriculumSchedule((10, 50))
    assert CurriculumSchedule((100, 100, 100, 100)).stage_q_percent == (100, 100, 100, 100)


def test_triplet_log_csv(tmp_path, worked_D):
    log = TripletLog()
    log.extend(select_triplets(worked_D, WORKED_VIEWS, MiningConfig()), stage=1)
    log.write_csv(tmp_path / "t.csv", ["a", "b", "c", "d", "e"])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "anchor_id,positive_id,negative_id,confidence,stage"
    assert lines[1].startswith("a,d,c,") and lines[1].endswith(",1")
