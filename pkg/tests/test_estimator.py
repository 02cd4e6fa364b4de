import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vvo.estimator import ObjectCentricSegmenter, check_images
from vvo.scenegen import generate_scene
from vvo.tensorio import RandomStream, RunConfig


def data(n=8, size=32, seed=0):
    cfg = RunConfig(image_size=size, max_objects=3)
    root = RandomStream(seed)
    s = [generate_scene(root.spawn(i), cfg) for i in range(n)]
    return np.stack([x.image for x in s]), np.stack([x.labels for x in s])


@pytest.fixture(scope="module")
def fitted():
    X, y = data()
    est = ObjectCentricSegmenter(num_slots=4, pretrain_steps=5, train_steps=5, batch_size=4, codebook_size=16)
    return est.fit(X), X, y


def test_params_round_trip():
    est = ObjectCentricSegmenter(num_slots=3, decoder="ar")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin.set_params(lr=1e-3).lr == 1e-3


def test_fit_predict_transform(fitted):
    est, X, y = fitted
    assert est.predict(X).shape == (8, 4, 4)
    assert est.predict(X).max() < 4
    assert est.transform(X).shape == (8, 4 * est.config_["slot_dim"])
    assert np.array_equal(est.predict(X), est.predict(X))
    assert -1.0 <= est.score(X, y) <= 1.0
    assert len(est.loss_curve_) == 5
    assert len(est.pretrain_log_) >= 1


def test_image_resolution_masks():
    X, y = data(4)
    est = ObjectCentricSegmenter(num_slots=3, pretrain_steps=3, train_steps=2, batch_size=4, codebook_size=8,
                                 eval_resolution="image").fit(X)
    assert est.predict(X).shape == (4, 32, 32)


def test_no_quantize_has_no_pretrain_log():
    X, _ = data(4)
    est = ObjectCentricSegmenter(variant="no-quantize", num_slots=3, train_steps=2, batch_size=4).fit(X)
    assert est.pretrain_log_ == []


def test_validation(fitted):
    est, X, y = fitted
    with pytest.raises(NotFittedError):
        ObjectCentricSegmenter().predict(X)
    with pytest.raises(ValueError):
        check_images(X[..., :2])
    with pytest.raises(ValueError):
        check_images(X[:, :, :16])
    with pytest.raises(ValueError):
        check_images(X * 2)
    with pytest.raises(ValueError):
        est.predict(data(2, size=64)[0])
    with pytest.raises(ValueError):
        est.score(X, y[:, :16])
    with pytest.raises(ValueError):
        est.score(X, -np.ones_like(y))
