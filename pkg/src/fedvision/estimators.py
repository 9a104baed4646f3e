"""Scikit-learn style estimators wrapping the functional pipeline.

`GridDetector` and `FederatedGridDetector` follow the fit/predict protocol
(X is a list of annotated Sample objects; predict takes RasterImages), and
`GaussianBlurAnonymizer` is a transformer over images. All three expose
get_params/set_params and survive sklearn.base.clone, so they compose with
the wider ecosystem.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import anonymize, detector, fedcore, metrics, simnet
from .data import partition_iid
from .types import Detection, RasterImage, Sample
from .validation import check_image, check_samples


class GridDetector(BaseEstimator):
    """Centralized trainer/predictor for the grid detector.

    fit(X) trains from scratch on a list of Samples; predict(X) maps images
    to detection lists; score(X) is the test mAP at IoU 0.50.
    """

    def __init__(
        self,
        image_size=64,
        grid_size=4,
        num_classes=2,
        hidden_units=256,
        epochs=60,
        batch_size=10,
        learning_rate=0.01,
        seed=0,
        score_threshold=0.25,
        nms_iou=0.5,
    ):
        self.image_size = image_size
        self.grid_size = grid_size
        self.num_classes = num_classes
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.score_threshold = score_threshold
        self.nms_iou = nms_iou

    def _model_config(self) -> detector.ModelConfig:
        return detector.ModelConfig(
            image_size=self.image_size,
            grid_s=self.grid_size,
            num_classes=self.num_classes,
            hidden_units=self.hidden_units,
            seed=self.seed,
        )

    def _train_config(self) -> detector.TrainConfig:
        return detector.TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def fit(self, X: Sequence[Sample], y=None):
        check_samples(X, "X")
        config = self._model_config()
        params = detector.init_model(config)
        params, history = detector.train_local(params, X, self._train_config(), config)
        self.config_ = config
        self.params_ = params
        self.loss_history_ = history
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, X) -> list[list[Detection]]:
        self._check_fitted()
        images = [X] if isinstance(X, RasterImage) else list(X)
        return [
            detector.predict(
                self.params_, check_image(img), self.config_,
                self.score_threshold, self.nms_iou,
            )
            for img in images
        ]

    def detect(self, image: RasterImage) -> list[Detection]:
        return self.predict([image])[0]

    def evaluate(self, X: Sequence[Sample]) -> metrics.EvalResult:
        self._check_fitted()
        return metrics.evaluate(
            self.params_, X, self.config_, self.score_threshold, self.nms_iou
        )

    def score(self, X: Sequence[Sample], y=None) -> float:
        return self.evaluate(X).map50


class FederatedGridDetector(GridDetector):
    """Federated trainer: shards X across simulated participants, then runs
    synchronous rounds with the chosen aggregation method."""

    def __init__(
        self,
        image_size=64,
        grid_size=4,
        num_classes=2,
        hidden_units=256,
        epochs=20,
        batch_size=10,
        learning_rate=0.01,
        seed=0,
        score_threshold=0.25,
        nms_iou=0.5,
        n_clients=3,
        rounds=5,
        method=fedcore.FEDAVG,
        drop_prob=0.0,
        min_fit_clients=1,
        server_lr=0.5,
        beta1=0.5,
        beta2=0.99,
        tau=0.5,
    ):
        super().__init__(
            image_size=image_size,
            grid_size=grid_size,
            num_classes=num_classes,
            hidden_units=hidden_units,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            seed=seed,
            score_threshold=score_threshold,
            nms_iou=nms_iou,
        )
        self.n_clients = n_clients
        self.rounds = rounds
        self.method = method
        self.drop_prob = drop_prob
        self.min_fit_clients = min_fit_clients
        self.server_lr = server_lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.tau = tau

    def fit(self, X: Sequence[Sample], y=None):
        check_samples(X, "X")
        config = self._model_config()
        partition = partition_iid(X, self.n_clients, seed=self.seed)
        fl = simnet.FLConfig(
            rounds=self.rounds,
            strategy=self.method,
            min_fit_clients=self.min_fit_clients,
            fedopt=fedcore.FedOptConfig(
                server_lr=self.server_lr,
                beta1=self.beta1,
                beta2=self.beta2,
                tau=self.tau,
            ),
        )
        policy = simnet.DropoutPolicy(self.drop_prob, seed=self.seed)
        state, ledger, reports = simnet.simulate_training(
            config, self._train_config(), fl, policy, partition
        )
        self.config_ = config
        self.params_ = state.global_params
        self.server_state_ = state
        self.comm_ledger_ = ledger
        self.round_reports_ = reports
        self.loss_history_ = [
            s.local_loss for r in reports for s in r.client_stats
        ]
        return self


class GaussianBlurAnonymizer(BaseEstimator, TransformerMixin):
    """Transformer that blurs the regions a fitted detector flags.

    `detector_model` is any fitted GridDetector (or subclass); fit() only
    validates it. transform(X) accepts RasterImages or Samples and returns
    blurred RasterImages.
    """

    def __init__(
        self,
        detector_model=None,
        pad_frac=anonymize.DEFAULT_PAD_FRAC,
        sigma_floor=anonymize.SIGMA_FLOOR,
        sigma_divisor=anonymize.SIGMA_DIVISOR,
    ):
        self.detector_model = detector_model
        self.pad_frac = pad_frac
        self.sigma_floor = sigma_floor
        self.sigma_divisor = sigma_divisor

    def fit(self, X=None, y=None):
        if self.detector_model is None:
            raise ValueError("GaussianBlurAnonymizer requires a detector_model")
        self.detector_model._check_fitted()
        self.fitted_ = True
        return self

    def _sigma_rule(self):
        def rule(w_px: float, h_px: float) -> float:
            return max(self.sigma_floor, max(w_px, h_px) / self.sigma_divisor)

        return rule

    def transform(self, X) -> list[RasterImage]:
        return [img for img, _ in self.transform_with_reports(X)]

    def transform_with_reports(
        self, X
    ) -> list[tuple[RasterImage, anonymize.AnonymizationReport]]:
        if not hasattr(self, "fitted_"):
            self.fit()
        items = [X] if isinstance(X, (RasterImage, Sample)) else list(X)
        results = []
        for item in items:
            image = item.image if isinstance(item, Sample) else item
            model = self.detector_model
            results.append(
                anonymize.anonymize_image(
                    model.params_,
                    image,
                    model.config_,
                    model.score_threshold,
                    model.nms_iou,
                    self._sigma_rule(),
                    self.pad_frac,
                )
            )
        return results
