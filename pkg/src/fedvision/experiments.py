"""Experiment runner: centralized baseline, epoch/round sweeps, method
comparison, and the CSV tables they produce.

Centralized training is structured in seed blocks that reuse the federated
per-round seed derivation with client id 0. A centralized run with B blocks
of E epochs therefore consumes exactly the per-epoch seed sequence of a
single-client federated run with B rounds, which is what makes the two
paths bit-comparable.

Timing columns report process CPU seconds and are excluded from the
determinism guarantees; everything else in a row is a pure function of the
spec and its seed.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import fedcore, metrics, simnet
from .detector import ModelConfig, ParamVector, TrainConfig, init_model, train_local
from .types import DatasetSplit, Sample

CSV_HEADER = [
    "epochs",
    "rounds",
    "method",
    "map50",
    "map50_95",
    "recall",
    "precision",
    "loss",
    "train_seconds",
]

CENTRALIZED = "centralized"
FEDERATED = "federated"

# desk-scale defaults: sweep lists scaled from the full-size protocol so a
# complete table run stays in the minutes range
BASELINE_EPOCHS = (8, 15, 30, 45, 60)
ROUND_SWEEP = (3, 4, 5, 6, 7, 8)
ROUND_SWEEP_EPOCHS = 20
METHOD_EPOCHS = (4, 8, 12, 16, 20)
METHOD_ROUNDS = 8
DEFAULT_CLIENTS = 3

# server-optimizer constants used by the desk-scale presets; the adaptive
# step is rescaled for this model's parameter magnitudes
PRESET_FEDOPT = fedcore.FedOptConfig(server_lr=0.5, beta1=0.5, beta2=0.99, tau=0.5)


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    epochs: tuple[int, ...]
    rounds: tuple[int, ...] = (1,)
    methods: tuple[str, ...] = (fedcore.FEDAVG,)
    n_clients: int = DEFAULT_CLIENTS
    drop_prob: float = 0.0
    model: ModelConfig = ModelConfig()
    batch_size: int = 10
    learning_rate: float = 0.01
    seed: int = 0
    fedopt: fedcore.FedOptConfig = PRESET_FEDOPT

    def __post_init__(self):
        if self.mode not in (CENTRALIZED, FEDERATED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.epochs:
            raise ValueError("epochs sweep list must be nonempty")
        if self.mode == FEDERATED:
            if not self.rounds or not self.methods:
                raise ValueError("federated mode requires rounds and methods")
            for m in self.methods:
                if m not in (fedcore.FEDAVG, fedcore.FEDOPT):
                    raise ValueError(f"unknown aggregation method {m!r}")

    def train_config(self, epochs: int) -> TrainConfig:
        return TrainConfig(
            epochs=epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )


@dataclass(frozen=True)
class MetricsReport:
    epochs: int
    rounds: int
    method: str
    result: metrics.EvalResult
    train_seconds: float

    def csv_row(self) -> list[str]:
        r = self.result
        return [
            str(self.epochs),
            str(self.rounds),
            self.method,
            f"{r.map50:.6f}",
            f"{r.map50_95:.6f}",
            f"{r.recall:.6f}",
            f"{r.precision:.6f}",
            f"{r.mean_loss:.6f}",
            f"{self.train_seconds:.3f}",
        ]


def write_reports_csv(reports: Sequence[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for report in reports:
            writer.writerow(report.csv_row())


def centralized_train(
    train_samples: Sequence[Sample],
    tc: TrainConfig,
    mc: ModelConfig,
    blocks: int = 1,
    epoch_callback: Callable[[int, ParamVector], None] | None = None,
) -> ParamVector:
    """Train on the full set for blocks * tc.epochs epochs.

    Block b (1-based) uses the client-0 federated seed for round b, so the
    per-epoch shuffles line up with a single-client federated run. The
    optional callback sees the parameters after every epoch; running
    epoch-by-epoch reproduces the blocked trajectory bit-for-bit because the
    epoch seeds are identical either way.
    """
    params = init_model(mc)
    done = 0
    for block in range(1, blocks + 1):
        block_tc = fedcore.client_train_config(tc, block, 0)
        if epoch_callback is None:
            params, _ = train_local(params, train_samples, block_tc, mc)
            done += tc.epochs
        else:
            for epoch in range(tc.epochs):
                one = TrainConfig(
                    epochs=1,
                    batch_size=block_tc.batch_size,
                    learning_rate=block_tc.learning_rate,
                    seed=block_tc.seed + epoch,
                )
                params, _ = train_local(params, train_samples, one, mc)
                done += 1
                epoch_callback(done, params)
    return params


def run_baseline(
    spec: ExperimentSpec,
    split: DatasetSplit,
    loss_series_dir: str | Path | None = None,
) -> list[MetricsReport]:
    """One row per epoch setting; optionally writes per-epoch train/val loss
    curves (columns: epoch, train_loss, val_loss)."""
    if spec.mode != CENTRALIZED:
        raise ValueError("run_baseline requires a centralized-mode spec")
    reports = []
    for epochs in spec.epochs:
        tc = spec.train_config(epochs)
        started = time.process_time()
        if loss_series_dir is not None:
            series: list[tuple[int, float, float]] = []

            def track(epoch_done: int, params: ParamVector) -> None:
                from .detector import loss as loss_fn

                train_loss, _ = loss_fn(params, split.train, spec.model)
                val_loss, _ = loss_fn(params, split.val, spec.model)
                series.append((epoch_done, train_loss, val_loss))

            params = centralized_train(split.train, tc, spec.model, epoch_callback=track)
            out = Path(loss_series_dir)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / f"loss_centralized_e{epochs}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "train_loss", "val_loss"])
                for row in series:
                    writer.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}"])
        else:
            params = centralized_train(split.train, tc, spec.model)
        elapsed = time.process_time() - started
        result = metrics.evaluate(params, split.test, spec.model)
        reports.append(MetricsReport(epochs, 1, CENTRALIZED, result, elapsed))
    return reports


def _federated_cell(
    spec: ExperimentSpec,
    split: DatasetSplit,
    epochs: int,
    rounds: int,
    method: str,
) -> MetricsReport:
    from .data import partition_iid

    partition = partition_iid(split.train, spec.n_clients, seed=spec.seed)
    fl = simnet.FLConfig(rounds=rounds, strategy=method, fedopt=spec.fedopt)
    policy = simnet.DropoutPolicy(spec.drop_prob, seed=spec.seed)
    started = time.process_time()
    state, _, _ = simnet.simulate_training(
        spec.model, spec.train_config(epochs), fl, policy, partition
    )
    elapsed = time.process_time() - started
    result = metrics.evaluate(state.global_params, split.test, spec.model)
    return MetricsReport(epochs, rounds, method, result, elapsed)


def run_federated(spec: ExperimentSpec, split: DatasetSplit) -> list[MetricsReport]:
    """Cartesian sweep over (epochs, rounds, methods)."""
    if spec.mode != FEDERATED:
        raise ValueError("run_federated requires a federated-mode spec")
    reports = []
    for method in spec.methods:
        for rounds in spec.rounds:
            for epochs in spec.epochs:
                reports.append(_federated_cell(spec, split, epochs, rounds, method))
    return reports


def compare_methods(
    spec: ExperimentSpec, split: DatasetSplit
) -> tuple[list[MetricsReport], dict[str, str]]:
    """Side-by-side method table plus per-metric winner flags.

    Winners compare each method's best-mAP50 row; for loss and train time
    lower wins, for everything else higher wins.
    """
    if spec.mode != FEDERATED:
        raise ValueError("compare_methods requires a federated-mode spec")
    if len(set(spec.methods)) < 2:
        raise ValueError("compare_methods requires at least two distinct methods")
    rows = run_federated(spec, split)
    best = {
        method: max(
            (r for r in rows if r.method == method), key=lambda r: r.result.map50
        )
        for method in spec.methods
    }
    winners: dict[str, str] = {}
    for key, higher_is_better in (
        ("map50", True),
        ("map50_95", True),
        ("recall", True),
        ("precision", True),
        ("loss", False),
        ("train_seconds", False),
    ):
        def value(report: MetricsReport) -> float:
            if key == "train_seconds":
                return report.train_seconds
            if key == "loss":
                return report.result.mean_loss
            return getattr(report.result, key)

        pick = max if higher_is_better else min
        winners[key] = pick(best, key=lambda m: value(best[m]))
    return rows, winners


@dataclass
class SweepResult:
    baseline: list[MetricsReport] = field(default_factory=list)
    round_sweep: list[MetricsReport] = field(default_factory=list)
    method_rows: list[MetricsReport] = field(default_factory=list)
    method_winners: dict[str, str] = field(default_factory=dict)

    @property
    def all_rows(self) -> list[MetricsReport]:
        return [*self.baseline, *self.round_sweep, *self.method_rows]


def run_paper_shape_sweep(
    split: DatasetSplit,
    model: ModelConfig = ModelConfig(),
    seed: int = 0,
    learning_rate: float = 0.01,
    batch_size: int = 10,
    baseline_epochs: Sequence[int] = BASELINE_EPOCHS,
    round_sweep: Sequence[int] = ROUND_SWEEP,
    round_sweep_epochs: int = ROUND_SWEEP_EPOCHS,
    method_epochs: Sequence[int] = METHOD_EPOCHS,
    method_rounds: int = METHOD_ROUNDS,
    n_clients: int = DEFAULT_CLIENTS,
    loss_series_dir: str | Path | None = None,
) -> SweepResult:
    """The full table set: baseline epochs, FedAvg round sweep, and the
    two-method comparison at the best round count."""
    common = dict(
        n_clients=n_clients,
        model=model,
        seed=seed,
        learning_rate=learning_rate,
        batch_size=batch_size,
    )
    result = SweepResult()
    result.baseline = run_baseline(
        ExperimentSpec(mode=CENTRALIZED, epochs=tuple(baseline_epochs), **common),
        split,
        loss_series_dir=loss_series_dir,
    )
    result.round_sweep = run_federated(
        ExperimentSpec(
            mode=FEDERATED,
            epochs=(round_sweep_epochs,),
            rounds=tuple(round_sweep),
            methods=(fedcore.FEDAVG,),
            **common,
        ),
        split,
    )
    result.method_rows, result.method_winners = compare_methods(
        ExperimentSpec(
            mode=FEDERATED,
            epochs=tuple(method_epochs),
            rounds=(method_rounds,),
            methods=(fedcore.FEDOPT, fedcore.FEDAVG),
            **common,
        ),
        split,
    )
    return result
