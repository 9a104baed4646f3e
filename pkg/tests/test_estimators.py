import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fedvision.estimators import (
    FederatedGridDetector,
    GaussianBlurAnonymizer,
    GridDetector,
)
from fedvision.types import Detection

from conftest import make_samples


def tiny_detector(**overrides):
    kwargs = dict(
        image_size=16,
        grid_size=2,
        hidden_units=4,
        epochs=2,
        batch_size=4,
        learning_rate=0.05,
        seed=0,
    )
    kwargs.update(overrides)
    return GridDetector(**kwargs)


class TestGridDetector:
    def test_get_set_params_roundtrip(self):
        det = tiny_detector()
        params = det.get_params()
        assert params["hidden_units"] == 4
        det.set_params(hidden_units=8)
        assert det.hidden_units == 8

    def test_clone_compatible(self):
        det = tiny_detector(epochs=3)
        twin = clone(det)
        assert twin.get_params() == det.get_params()
        assert not hasattr(twin, "params_")

    def test_not_fitted_error(self):
        det = tiny_detector()
        with pytest.raises(NotFittedError):
            det.predict(make_samples(1, size=16)[0].image)

    def test_fit_predict(self):
        samples = make_samples(12, size=16, seed=1)
        det = tiny_detector().fit(samples)
        assert det.params_.shape[0] > 0
        assert len(det.loss_history_) == 2
        detections = det.predict([s.image for s in samples[:3]])
        assert len(detections) == 3
        for dets in detections:
            assert all(isinstance(d, Detection) for d in dets)

    def test_fit_is_deterministic(self):
        samples = make_samples(10, size=16, seed=2)
        a = tiny_detector().fit(samples)
        b = tiny_detector().fit(samples)
        assert np.array_equal(a.params_, b.params_)

    def test_score_returns_map50(self):
        samples = make_samples(10, size=16, seed=3)
        det = tiny_detector().fit(samples)
        score = det.score(samples)
        assert 0.0 <= score <= 1.0


class TestFederatedGridDetector:
    def test_fit_exposes_federated_state(self):
        samples = make_samples(12, size=16, seed=4)
        det = FederatedGridDetector(
            image_size=16, grid_size=2, hidden_units=4, epochs=1,
            batch_size=4, learning_rate=0.05, seed=0, n_clients=3, rounds=2,
        ).fit(samples)
        assert det.server_state_.round == 2
        assert det.comm_ledger_.message_count() == 2 * 2 * 3
        assert len(det.round_reports_) == 2
        assert det.params_.shape == det.server_state_.global_params.shape

    def test_fedopt_method(self):
        samples = make_samples(9, size=16, seed=5)
        det = FederatedGridDetector(
            image_size=16, grid_size=2, hidden_units=4, epochs=1,
            batch_size=4, learning_rate=0.05, seed=0, n_clients=3, rounds=2,
            method="fedopt", server_lr=0.05,
        ).fit(samples)
        assert det.server_state_.opt_state is not None

    def test_clone_compatible(self):
        det = FederatedGridDetector(n_clients=2, rounds=3)
        twin = clone(det)
        assert twin.get_params()["rounds"] == 3


class TestAnonymizerTransformer:
    def test_requires_detector(self):
        with pytest.raises(ValueError):
            GaussianBlurAnonymizer().fit()

    def test_transform_images_and_samples(self):
        samples = make_samples(8, size=16, seed=6)
        det = tiny_detector().fit(samples)
        anon = GaussianBlurAnonymizer(detector_model=det).fit()
        blurred = anon.transform(samples[:2])
        assert len(blurred) == 2
        assert blurred[0].pixels.shape == samples[0].image.pixels.shape
        with_reports = anon.transform_with_reports([samples[0].image])
        assert len(with_reports) == 1
        image, report = with_reports[0]
        assert report.pixels_modified <= 16 * 16

    def test_clone_compatible(self):
        anon = GaussianBlurAnonymizer(pad_frac=0.2)
        twin = clone(anon)
        assert twin.get_params()["pad_frac"] == 0.2
