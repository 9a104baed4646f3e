"""Federated protocol logic: client updates, aggregation, round stepping.

Clients transmit full post-training weights; the server computes the
pseudo-gradient itself. FedAvg is the example-count-weighted coordinate-wise
mean, summed in client-id order so the float accumulation is bitwise
deterministic regardless of arrival order. The adaptive strategy keeps
first/second-moment accumulators on the server and steps

    delta = global - weighted_mean(clients)
    m <- beta1 * m + (1 - beta1) * delta
    v <- beta2 * v + (1 - beta2) * delta^2
    global <- global - server_lr * m / (sqrt(v) + tau)
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .detector import ModelConfig, ParamVector, TrainConfig, timed_train_local
from .types import Partition

FEDAVG = "fedavg"
FEDOPT = "fedopt"

# stride decorrelating per-round, per-client training seeds
ROUND_SEED_STRIDE = 1_000_003

THREADS_ENV_VAR = "FEDVISION_THREADS"


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    round: int
    params: ParamVector
    num_examples: int
    train_seconds: float = 0.0
    local_loss: float = 0.0


@dataclass(frozen=True)
class FedOptConfig:
    server_lr: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3

    def __post_init__(self):
        if self.server_lr <= 0.0:
            raise ValueError(f"server_lr must be positive, got {self.server_lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass
class ServerState:
    global_params: ParamVector
    round: int = 0
    strategy: str = FEDAVG
    opt_state: tuple[ParamVector, ParamVector] | None = None

    def __post_init__(self):
        if self.strategy not in (FEDAVG, FEDOPT):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy == FEDOPT and self.opt_state is None:
            n = self.global_params.shape[0]
            self.opt_state = (np.zeros(n), np.zeros(n))


def init_server(params: ParamVector, strategy: str = FEDAVG) -> ServerState:
    return ServerState(global_params=params.copy(), strategy=strategy)


def _check_updates(updates: list[ClientUpdate]) -> list[ClientUpdate]:
    if not updates:
        raise ValueError("cannot aggregate an empty update list")
    rounds = {u.round for u in updates}
    if len(rounds) != 1:
        raise ValueError(f"updates span multiple rounds: {sorted(rounds)}")
    lengths = {u.params.shape[0] for u in updates}
    if len(lengths) != 1:
        raise ValueError(f"updates carry mismatched parameter lengths: {sorted(lengths)}")
    for u in updates:
        if u.num_examples < 1:
            raise ValueError(f"client {u.client_id} reports num_examples < 1")
    return sorted(updates, key=lambda u: u.client_id)


def fedavg_aggregate(updates: list[ClientUpdate]) -> ParamVector:
    ordered = _check_updates(updates)
    total = sum(u.num_examples for u in ordered)
    acc = (ordered[0].num_examples / total) * ordered[0].params
    for u in ordered[1:]:
        acc += (u.num_examples / total) * u.params
    return acc


def fedopt_aggregate(
    state: ServerState, updates: list[ClientUpdate], cfg: FedOptConfig
) -> ServerState:
    if state.opt_state is None:
        raise ValueError("fedopt aggregation requires server opt_state")
    ordered = _check_updates(updates)
    if ordered[0].round != state.round + 1:
        raise ValueError(
            f"updates are for round {ordered[0].round}, server expects {state.round + 1}"
        )
    delta = state.global_params - fedavg_aggregate(ordered)
    m, v = state.opt_state
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * delta
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * delta * delta
    new_params = state.global_params - cfg.server_lr * m / (np.sqrt(v) + cfg.tau)
    return ServerState(
        global_params=new_params,
        round=state.round + 1,
        strategy=state.strategy,
        opt_state=(m, v),
    )


@dataclass(frozen=True)
class ClientRoundStats:
    client_id: int
    num_examples: int
    local_loss: float
    train_seconds: float


@dataclass
class RoundReport:
    round: int
    participants: list[int]
    skipped: bool = False
    skip_reason: str = ""
    client_stats: list[ClientRoundStats] = field(default_factory=list)


def client_train_config(tc: TrainConfig, round_index: int, client_id: int) -> TrainConfig:
    """Per-round, per-client seed so shuffles are decorrelated yet reproducible."""
    return replace(tc, seed=tc.seed + ROUND_SEED_STRIDE * round_index + client_id)


def _max_workers(num_clients: int) -> int:
    configured = int(os.environ.get(THREADS_ENV_VAR, "1") or "1")
    return max(1, min(configured, num_clients))


def run_round(
    state: ServerState,
    shards: Partition,
    tc: TrainConfig,
    mc: ModelConfig,
    participation: list[bool],
    min_fit_clients: int = 1,
    fedopt_cfg: FedOptConfig | None = None,
) -> tuple[ServerState, RoundReport]:
    """Run one synchronous round over the participating clients.

    Every call consumes a round index (state.round + 1). A round with fewer
    than min_fit_clients participants is skipped explicitly: parameters and
    optimizer state pass through untouched and the report says why.
    """
    if len(participation) != shards.num_participants:
        raise ValueError("participation mask length must match the shard count")
    round_index = state.round + 1
    participants = [i for i, present in enumerate(participation) if present]
    if len(participants) < max(1, min_fit_clients):
        report = RoundReport(
            round=round_index,
            participants=participants,
            skipped=True,
            skip_reason=(
                f"{len(participants)} participants < min_fit_clients "
                f"{max(1, min_fit_clients)}"
            ),
        )
        skipped_state = ServerState(
            global_params=state.global_params,
            round=round_index,
            strategy=state.strategy,
            opt_state=state.opt_state,
        )
        return skipped_state, report

    def fit(client_id: int) -> ClientUpdate:
        shard = shards.shards[client_id]
        local_tc = client_train_config(tc, round_index, client_id)
        trained, history, seconds = timed_train_local(
            state.global_params, shard, local_tc, mc
        )
        return ClientUpdate(
            client_id=client_id,
            round=round_index,
            params=trained,
            num_examples=len(shard),
            train_seconds=seconds,
            local_loss=history[-1],
        )

    workers = _max_workers(len(participants))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            updates = list(pool.map(fit, participants))
    else:
        updates = [fit(cid) for cid in participants]

    if state.strategy == FEDOPT:
        new_state = fedopt_aggregate(state, updates, fedopt_cfg or FedOptConfig())
    else:
        new_state = ServerState(
            global_params=fedavg_aggregate(updates),
            round=round_index,
            strategy=state.strategy,
            opt_state=state.opt_state,
        )
    report = RoundReport(
        round=round_index,
        participants=participants,
        client_stats=[
            ClientRoundStats(u.client_id, u.num_examples, u.local_loss, u.train_seconds)
            for u in updates
        ],
    )
    return new_state, report
