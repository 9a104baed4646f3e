"""fedvision: federated training of a tiny grid object detector, detection
evaluation, and Gaussian-blur anonymization of sensitive image regions."""

from .anonymize import (
    AnonymizationReport,
    GaussianKernel,
    anonymize_image,
    blur_region,
    build_kernel,
)
from .data import generate_dataset, partition_iid, split_dataset
from .detector import (
    ModelConfig,
    TrainConfig,
    forward,
    init_model,
    loss,
    predict,
    train_local,
)
from .estimators import FederatedGridDetector, GaussianBlurAnonymizer, GridDetector
from .fedcore import (
    ClientUpdate,
    FedOptConfig,
    ServerState,
    fedavg_aggregate,
    fedopt_aggregate,
    run_round,
)
from .metrics import EvalResult, average_precision, evaluate, iou, match_detections
from .simnet import CommLedger, DropoutPolicy, participation_mask, simulate_training
from .types import Annotation, BoundingBox, Detection, RasterImage, Sample

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnonymizationReport",
    "BoundingBox",
    "ClientUpdate",
    "CommLedger",
    "Detection",
    "DropoutPolicy",
    "EvalResult",
    "FedOptConfig",
    "FederatedGridDetector",
    "GaussianBlurAnonymizer",
    "GaussianKernel",
    "GridDetector",
    "ModelConfig",
    "RasterImage",
    "Sample",
    "ServerState",
    "TrainConfig",
    "anonymize_image",
    "average_precision",
    "blur_region",
    "build_kernel",
    "evaluate",
    "fedavg_aggregate",
    "fedopt_aggregate",
    "forward",
    "generate_dataset",
    "init_model",
    "iou",
    "loss",
    "match_detections",
    "participation_mask",
    "partition_iid",
    "predict",
    "run_round",
    "simulate_training",
    "split_dataset",
    "train_local",
]
