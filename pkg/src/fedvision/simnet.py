"""In-process simulated network: message envelopes, byte accounting, dropout.

The harness owns transport concerns only; all protocol math lives in
fedcore, so delivery order and the envelope layer cannot change results.
Parameter-bearing messages cost 24 + 8 * param_count bytes (the checkpoint
wire format: 8-byte count, 16-byte config fingerprint, float64 payload).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fedcore
from .detector import ModelConfig, TrainConfig, init_model
from .types import Partition
from .validation import check_probability

HEADER_BYTES = 24

BROADCAST = "broadcast"
UPDATE = "update"
SKIP = "skip"

DOWNLINK = "down"
UPLINK = "up"


def message_size(param_count: int) -> int:
    return HEADER_BYTES + 8 * param_count


@dataclass(frozen=True)
class Message:
    """Envelope for one transfer; a socket transport could serialize this
    as-is without touching the protocol logic."""

    kind: str  # BROADCAST | UPDATE | SKIP
    round: int
    client_id: int | None
    size_bytes: int
    seconds: float = 0.0
    loss: float = float("nan")

    @property
    def direction(self) -> str | None:
        if self.kind == BROADCAST:
            return DOWNLINK
        if self.kind == UPDATE:
            return UPLINK
        return None  # skip markers carry no payload


@dataclass(frozen=True)
class DropoutPolicy:
    per_round_drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_probability(self.per_round_drop_prob, "per_round_drop_prob")


def participation_mask(
    policy: DropoutPolicy, round_index: int, num_clients: int
) -> list[bool]:
    """Independent per-(seed, round, client) Bernoulli presence draws."""
    if round_index < 1:
        raise ValueError(f"round_index must be >= 1, got {round_index}")
    mask = []
    for client in range(num_clients):
        seq = np.random.SeedSequence(
            [policy.seed & 0xFFFFFFFFFFFFFFFF, round_index, client]
        )
        draw = np.random.default_rng(seq).uniform()
        mask.append(bool(draw >= policy.per_round_drop_prob))
    return mask


@dataclass
class CommLedger:
    """Per-message byte log; totals are exact integer sums of the entries."""

    messages: list[Message] = field(default_factory=list)

    def record(self, message: Message) -> None:
        if message.size_bytes < 0:
            raise ValueError("message byte counts cannot be negative")
        self.messages.append(message)

    def total_bytes(self, direction: str | None = None) -> int:
        return sum(
            m.size_bytes
            for m in self.messages
            if direction is None or m.direction == direction
        )

    def round_bytes(self, round_index: int, direction: str | None = None) -> int:
        return sum(
            m.size_bytes
            for m in self.messages
            if m.round == round_index and (direction is None or m.direction == direction)
        )

    def message_count(self, direction: str | None = None) -> int:
        return sum(
            1 for m in self.messages if direction is None or m.direction == direction
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "client_id", "direction", "bytes", "seconds", "loss"])
            for m in self.messages:
                if m.direction is None:
                    continue
                writer.writerow(
                    [
                        m.round,
                        m.client_id,
                        m.direction,
                        m.size_bytes,
                        f"{m.seconds:.6f}",
                        repr(m.loss),
                    ]
                )

    def to_json(self, path: str | Path | None = None) -> dict:
        tree = {
            "totals": {
                "bytes": self.total_bytes(),
                "uplink_bytes": self.total_bytes(UPLINK),
                "downlink_bytes": self.total_bytes(DOWNLINK),
            },
            "messages": [
                {
                    "kind": m.kind,
                    "round": m.round,
                    "client_id": m.client_id,
                    "direction": m.direction,
                    "bytes": m.size_bytes,
                    "seconds": m.seconds,
                    "loss": m.loss,
                }
                for m in self.messages
            ],
        }
        if path is not None:
            Path(path).write_text(json.dumps(tree, indent=2, sort_keys=True) + "\n")
        return tree


@dataclass(frozen=True)
class FLConfig:
    rounds: int
    strategy: str = fedcore.FEDAVG
    min_fit_clients: int = 1
    fedopt: fedcore.FedOptConfig = fedcore.FedOptConfig()

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")


def simulate_training(
    mc: ModelConfig,
    tc: TrainConfig,
    fl: FLConfig,
    policy: DropoutPolicy,
    partition: Partition,
) -> tuple[fedcore.ServerState, CommLedger, list[fedcore.RoundReport]]:
    """Run the full federated loop and account for every message.

    Broadcasts go to the round's participants only; each participant sends
    one update back. A round with no eligible participants is logged as a
    zero-payload skip marker and training continues.
    """
    state = fedcore.init_server(init_model(mc), fl.strategy)
    n_params = state.global_params.shape[0]
    ledger = CommLedger()
    reports: list[fedcore.RoundReport] = []

    for round_index in range(1, fl.rounds + 1):
        mask = participation_mask(policy, round_index, partition.num_participants)
        state, report = fedcore.run_round(
            state, partition, tc, mc, mask, fl.min_fit_clients, fl.fedopt
        )
        reports.append(report)
        if report.skipped:
            ledger.record(Message(SKIP, round_index, None, 0))
            continue
        for stats in report.client_stats:
            ledger.record(
                Message(BROADCAST, round_index, stats.client_id, message_size(n_params))
            )
            ledger.record(
                Message(
                    UPDATE,
                    round_index,
                    stats.client_id,
                    message_size(n_params),
                    seconds=stats.train_seconds,
                    loss=stats.local_loss,
                )
            )
    return state, ledger, reports
