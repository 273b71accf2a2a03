import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gouda.estimator import GOUDAAdapter, SupervisedTripletAdapter
from gouda.synthetic import SynthConfig, generate_target_domain


@pytest.fixture(scope="module")
def arrays():
    ds = generate_target_domain(SynthConfig(n_identities=12, views=(0, 90, 180, 270), frames_per_seq=16, dim=8, seed=3))
    X = np.vstack([r.embedding for r in ds.records])
    views = np.array([r.view for r in ds.records])
    groups = np.array([r.identity for r in ds.records])
    frames = [r.frames for r in ds.records]
    return X, views, groups, frames


def test_params_roundtrip():
    est = GOUDAAdapter(T_s=5.0, lr=1e-3)
    assert clone(est).get_params() == est.get_params()
    assert est.set_params(K=3).K == 3


def test_fit_transform(arrays):
    X, views, groups, frames = arrays
    est = GOUDAAdapter(lr=1e-3, random_state=1).fit(X, views=views, frames=frames, groups=groups)
    Z = est.transform(X)
    assert Z.shape == X.shape
    np.testing.assert_allclose(Z, X @ est.adapter_.T)
    assert len(est.trace_.stages) == 4


def test_zero_lr_is_identity(arrays):
    X, views, groups, frames = arrays
    est = GOUDAAdapter(lr=0.0, weight_decay=0.0).fit(X, views=views, frames=frames, groups=groups)
    np.testing.assert_array_equal(est.transform(X), X)


def test_oracle_labels_give_correct_triplets(arrays):
    X, views, groups, frames = arrays
    est = GOUDAAdapter(lr=1e-3).fit(X, views=views, frames=frames, groups=groups, oracle_labels=groups)
    rates = [s.correct_triplet_rate for s in est.trace_.stages if s.n_selected]
    assert rates and all(r == 100.0 for r in rates)


def test_input_checks(arrays):
    X, views, _, _ = arrays
    with pytest.raises(NotFittedError):
        GOUDAAdapter().transform(X)
    with pytest.raises(ValueError, match="views"):
        GOUDAAdapter().fit(X, views=views[:-1])
    with pytest.raises(ValueError, match="frame latents"):
        GOUDAAdapter().fit(X, views=views)


def test_supervised_adapter(arrays):
    X, _, groups, _ = arrays
    est = SupervisedTripletAdapter(iterations=20, lr=1e-3).fit(X, groups)
    assert est.transform(X).shape == X.shape
    assert not np.array_equal(est.adapter_, np.eye(X.shape[1]))
