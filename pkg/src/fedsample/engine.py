"""Round-based federated averaging with communication-aware participation.

One round runs: select m = max(floor(C*K), 1) clients -> broadcast the
global model -> each selected client trains locally -> (adaptive policies
only) clients report one scalar each, the server broadcasts the resulting
threshold -> each client decides send or suppress -> senders upload their
full model (ACK), the rest a stub (NACK) -> the server fills NACK slots
with an estimate -> sample-size-weighted aggregation -> evaluation.

Byte accounting is exact and single-precision-based regardless of the
double-precision arithmetic: 4 bytes per parameter, 8 bytes per sample
count, 4 bytes per reported scalar or broadcast threshold.

Determinism contract: every random draw comes from a stream derived from
(seed, purpose, round, client), so concurrent client execution, rerun
order, and platform cannot change results. Selected clients are processed
in ascending client-id order, and aggregation follows the anchored form

    theta_next = x_0 + sum_i w_i * (x_i - x_0),    w_i = n_i / sum_j n_j

accumulated in that same order (x_0 is the first estimate). The anchored
form is the plain weighted mean rearranged, with one extra property worth
pinning: a round where every estimate equals theta_t reproduces theta_t
bitwise, so zero-sender rounds cannot drift the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import FederatedDataset
from .errors import NumericError
from .models import (
    LocalTrainReport,
    ModelSpec,
    ParamVector,
    evaluate,
    init_params,
    local_train,
)
from .ou import OUParams, band_fraction, decode, fit_ou_ls_columns
from .policies import ClientStats, PolicyConfig, compute_adaptive_threshold, local_decide
from .seeding import derive_rng, seed_sequence

PARAM_BYTES = 4      # single-precision payload accounting
COUNT_BYTES = 8      # n_i attached to every message
SCALAR_BYTES = 4     # adaptive pre-phase report and threshold broadcast

NACK_MODES = ("carry_forward", "ou_decode")

METRICS_HEADER = (
    "round,policy,selected,senders,threshold,uplink_bytes,"
    "cum_uplink_bytes,downlink_bytes,test_acc,test_loss,seed"
)


@dataclass(frozen=True)
class RoundConfig:
    """Protocol knobs shared by every round of an experiment."""

    n_clients: int
    client_fraction: float
    epochs: int
    batch_size: int
    eta: float
    policy: PolicyConfig
    nack_estimate_mode: str = "carry_forward"
    seed: int = 0
    track: None | str | int = "auto"
    history_len: int = 20

    def __post_init__(self) -> None:
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if not 0.0 < self.client_fraction <= 1.0:
            raise ValueError("client_fraction must lie in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eta < 0.0 or not math.isfinite(self.eta):
            raise ValueError("eta must be finite and >= 0")
        if self.nack_estimate_mode not in NACK_MODES:
            raise ValueError(f"nack_estimate_mode must be one of {NACK_MODES}")
        if self.history_len < 3:
            raise ValueError("history_len must be >= 3")

    @property
    def clients_per_round(self) -> int:
        return max(int(math.floor(self.client_fraction * self.n_clients)), 1)


@dataclass
class ServerState:
    """Global model, round counter, and the recent-model history used by
    the decoding estimator. history[-1] is always the current model."""

    global_params: ParamVector
    round: int = 0
    history: list[np.ndarray] = field(default_factory=list)
    history_len: int = 20
    ou_fits: list[OUParams] | None = None

    def __post_init__(self) -> None:
        if not self.history:
            self.history = [self.global_params.data.copy()]

    def advance(self, new_params: ParamVector) -> None:
        self.global_params = new_params
        self.round += 1
        self.history.append(new_params.data.copy())
        if len(self.history) > self.history_len:
            del self.history[: len(self.history) - self.history_len]
        self.ou_fits = None


@dataclass(frozen=True)
class UpdateMessage:
    """Client upload: full parameters (ACK) or sample count only (NACK)."""

    client_id: int
    n_samples: int
    params: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    @property
    def ack(self) -> bool:
        return self.params is not None


@dataclass(frozen=True)
class RoundReport:
    round_idx: int
    selected: tuple[int, ...]
    senders: tuple[int, ...]
    threshold: float | None
    uplink_bytes: int
    cum_uplink_bytes: int
    downlink_bytes: int
    test_acc: float
    test_loss: float
    ou_fallback: bool = False


@dataclass
class CommLedger:
    """Per-round communication records with non-decreasing cumulative sums."""

    selected: list[int] = field(default_factory=list)
    senders: list[int] = field(default_factory=list)
    uplink_bytes: list[int] = field(default_factory=list)
    downlink_bytes: list[int] = field(default_factory=list)

    def append(self, selected: int, senders: int, uplink: int, downlink: int) -> None:
        if not 0 <= senders <= selected:
            raise ValueError("senders must lie in [0, selected]")
        self.selected.append(selected)
        self.senders.append(senders)
        self.uplink_bytes.append(uplink)
        self.downlink_bytes.append(downlink)

    @property
    def rounds(self) -> int:
        return len(self.uplink_bytes)

    @property
    def total_uplink(self) -> int:
        return sum(self.uplink_bytes)

    @property
    def total_downlink(self) -> int:
        return sum(self.downlink_bytes)

    def cum_uplink(self) -> list[int]:
        out, acc = [], 0
        for u in self.uplink_bytes:
            acc += u
            out.append(acc)
        return out


def select_clients(
    n_clients: int, fraction: float, round_idx: int, seed: int
) -> np.ndarray:
    """The round's participant set: uniform without replacement, ascending
    ids, deterministic per (seed, round)."""
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    m = max(int(math.floor(fraction * n_clients)), 1)
    rng = derive_rng(seed, "select", round_idx)
    return np.sort(rng.choice(n_clients, size=m, replace=False)).astype(np.int64)


def client_train_seed(seed: int, round_idx: int, client_id: int) -> int:
    """Stable integer seed for one client's local work in one round."""
    return int(seed_sequence(seed, "train", round_idx, client_id).generate_state(1, np.uint64)[0])


def message_bytes(msg: UpdateMessage, n_params: int) -> int:
    """Uplink cost of one client message."""
    if n_params < 1:
        raise ValueError("n_params must be >= 1")
    if msg.ack:
        return PARAM_BYTES * n_params + COUNT_BYTES
    return COUNT_BYTES


def broadcast_bytes(n_params: int, n_receivers: int) -> int:
    """Downlink cost of sending the model to the selected clients."""
    return PARAM_BYTES * n_params * n_receivers


def _history_fits(state: ServerState) -> list[OUParams] | None:
    """Per-coordinate OU fits over the model history, cached for the round;
    None while the history is too short to regress."""
    if len(state.history) < 3:
        return None
    if state.ou_fits is None:
        matrix = np.stack(state.history, axis=0)
        state.ou_fits = [params for params, _ in fit_ou_ls_columns(matrix, dt=1.0)]
    return state.ou_fits


def server_estimate(
    msg: UpdateMessage, state: ServerState, mode: str
) -> tuple[np.ndarray, bool]:
    """The server's stand-in for one client's round-end model.

    ACK payloads pass through verbatim. NACKs are filled with the current
    global model (carry_forward) or, in ou_decode mode, with the
    one-round-ahead conditional mean of each coordinate's fitted process;
    coordinates whose fits are flagged fall back to the global value. A
    history shorter than 3 rounds forces carry_forward; the returned flag
    reports that fallback.
    """
    if mode not in NACK_MODES:
        raise ValueError(f"mode must be one of {NACK_MODES}")
    if msg.ack:
        if msg.params.shape != state.global_params.data.shape:
            raise ValueError("payload dimension does not match the global model")
        return msg.params, False

    theta = state.global_params.data
    if mode == "carry_forward":
        return theta, False

    fits = _history_fits(state)
    if fits is None:
        return theta, True

    est = theta.copy()
    for j, p in enumerate(fits):
        if not p.flagged:
            est[j] = decode(theta[j], p, 1.0)
    return est, False


def aggregate(estimates: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """Sample-size-weighted mean over the round's estimates, in the
    anchored accumulation order fixed by the module docstring."""
    if not estimates:
        raise RuntimeError("aggregate called with no estimates")
    total = sum(n for _, n in estimates)
    if total <= 0:
        raise RuntimeError("aggregate needs positive sample counts")
    anchor = estimates[0][0]
    acc = np.zeros_like(anchor)
    for params, n in estimates:
        if params.shape != anchor.shape:
            raise ValueError("estimate dimensions differ")
        acc += (n / total) * (params - anchor)
    return anchor + acc


def _band_stats(report: LocalTrainReport) -> float:
    traj = report.trajectory
    if traj is None or traj.values.shape[0] < 3:
        raise ValueError(
            "band policies need at least 2 local steps per round "
            "(epochs * ceil(n_i / batch_size) >= 2)"
        )
    fits = [p for p, _ in fit_ou_ls_columns(traj.values, dt=traj.dt)]
    return band_fraction(traj.final_values, fits)


def run_round(
    state: ServerState,
    model: ModelSpec,
    config: RoundConfig,
    dataset: FederatedDataset,
    ledger: CommLedger,
) -> RoundReport:
    """Execute one protocol round, mutating state and appending to ledger."""
    policy = config.policy
    t = state.round
    n_params = state.global_params.size
    selected = select_clients(config.n_clients, config.client_fraction, t, config.seed)
    downlink = broadcast_bytes(n_params, selected.size)
    uplink = 0

    track = config.track if policy.needs_band_fraction else None
    reports: dict[int, LocalTrainReport] = {}
    stats: dict[int, ClientStats] = {}
    for k in selected:
        k = int(k)
        rep = local_train(
            model,
            state.global_params,
            dataset.clients[k],
            epochs=config.epochs,
            batch_size=config.batch_size,
            eta=config.eta,
            seed=client_train_seed(config.seed, t, k),
            track=track,
        )
        reports[k] = rep
        if policy.needs_band_fraction:
            stats[k] = ClientStats(band_fraction=_band_stats(rep))
        else:
            stats[k] = ClientStats(update_norm=rep.update_norm)

    threshold: float | None = None
    if policy.adaptive:
        key = "band_fraction" if policy.needs_band_fraction else "update_norm"
        scalars = np.array([getattr(stats[int(k)], key) for k in selected])
        uplink += SCALAR_BYTES * selected.size
        threshold = compute_adaptive_threshold(scalars)
        downlink += SCALAR_BYTES * selected.size
    elif policy.kind == "ft":
        threshold = policy.gamma
    elif policy.kind == "ou":
        threshold = policy.r

    messages: list[UpdateMessage] = []
    for k in selected:
        k = int(k)
        rng = None
        if policy.kind == "random":
            rng = derive_rng(config.seed, "decide", t, k)
        send = local_decide(policy, stats[k], threshold, rng)
        rep = reports[k]
        payload = rep.params_after.data if send else None
        msg = UpdateMessage(client_id=k, n_samples=rep.n_samples, params=payload)
        uplink += message_bytes(msg, n_params)
        messages.append(msg)

    # Fixed aggregation order regardless of arrival order.
    messages.sort(key=lambda m: m.client_id)
    estimates: list[tuple[np.ndarray, int]] = []
    ou_fallback = False
    for msg in messages:
        est, fell_back = server_estimate(msg, state, config.nack_estimate_mode)
        ou_fallback = ou_fallback or fell_back
        estimates.append((est, msg.n_samples))

    new_data = aggregate(estimates)
    if not np.isfinite(new_data).all():
        raise NumericError(
            f"aggregated model non-finite at round {t} (policy {policy.label})"
        )
    new_params = state.global_params.with_data(new_data)
    state.advance(new_params)

    test_acc, test_loss = evaluate(model, new_params, *dataset.test_set)
    senders = tuple(m.client_id for m in messages if m.ack)
    ledger.append(selected.size, len(senders), uplink, downlink)
    return RoundReport(
        round_idx=t,
        selected=tuple(int(k) for k in selected),
        senders=senders,
        threshold=threshold,
        uplink_bytes=uplink,
        cum_uplink_bytes=sum(ledger.uplink_bytes),
        downlink_bytes=downlink,
        test_acc=test_acc,
        test_loss=test_loss,
        ou_fallback=ou_fallback,
    )


def _validate_experiment(
    model: ModelSpec, config: RoundConfig, dataset: FederatedDataset, rounds: int
) -> None:
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if dataset.n_clients != config.n_clients:
        raise ValueError(
            f"config expects {config.n_clients} clients, dataset has {dataset.n_clients}"
        )
    if model.input_dim != dataset.dim:
        raise ValueError("model input_dim does not match dataset dim")
    if config.policy.needs_band_fraction:
        min_n = int(dataset.client_sizes().min())
        steps = config.epochs * math.ceil(min_n / config.batch_size)
        if steps < 2:
            raise ValueError(
                "band policies need at least 2 local steps per round; "
                f"epochs={config.epochs}, batch_size={config.batch_size} "
                f"gives {steps} for the smallest client"
            )


def iter_rounds(
    model: ModelSpec,
    config: RoundConfig,
    dataset: FederatedDataset,
    rounds: int,
    ledger: CommLedger,
    state: ServerState | None = None,
):
    """Yield one RoundReport per round; state/ledger mutate as it goes."""
    _validate_experiment(model, config, dataset, rounds)
    if state is None:
        state = ServerState(
            global_params=init_params(model, config.seed),
            history_len=config.history_len,
        )
    for _ in range(rounds):
        yield run_round(state, model, config, dataset, ledger)


def run_experiment(
    model: ModelSpec,
    config: RoundConfig,
    dataset: FederatedDataset,
    rounds: int,
) -> tuple[list[RoundReport], CommLedger]:
    """Run the full horizon and collect every round's report."""
    ledger = CommLedger()
    reports = list(iter_rounds(model, config, dataset, rounds, ledger))
    return reports, ledger


def format_metrics_row(report: RoundReport, policy_label: str, seed: int) -> str:
    """One CSV row matching METRICS_HEADER; floats at 6 significant digits.
    The threshold field is empty for policies that have none."""
    thr = "" if report.threshold is None else format(report.threshold, ".6g")
    return ",".join(
        [
            str(report.round_idx),
            policy_label,
            str(len(report.selected)),
            str(len(report.senders)),
            thr,
            str(report.uplink_bytes),
            str(report.cum_uplink_bytes),
            str(report.downlink_bytes),
            format(report.test_acc, ".6g"),
            format(report.test_loss, ".6g"),
            str(seed),
        ]
    )
