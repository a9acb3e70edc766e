"""JSON run configuration: parsing, strict validation, and materialization.

A run config is one JSON object:

    {
      "dataset": {"kind": "synth_blobs", "n_classes": 10, "dim": 20,
                  "samples_per_client": 50, "shards_per_client": 2},
      "model":   {"kind": "mlp1", "hidden_dim": 32},
      "K": 100, "C": 0.2, "E": 2, "B": 10, "eta": 0.1,
      "rounds": 100,
      "policy": {"kind": "ft", "gamma": 0.5},
      "nack_estimate_mode": "carry_forward",
      "seed": 0,
      "track_coordinates": "auto"
    }

``K`` doubles as the dataset's client count. A dataset may instead be
``{"kind": "csv", "path": ..., "n_classes": ...}``; the file's client
count must then equal K. The model's input dimension and class count come
from the dataset. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .data import CSVSchema, FederatedDataset, load_csv, synth_blobs
from .engine import RoundConfig
from .errors import ConfigError
from .models import ModelSpec
from .policies import POLICY_KINDS, PolicyConfig

_TOP_KEYS = {
    "dataset", "model", "K", "C", "E", "B", "eta", "rounds", "policy",
    "nack_estimate_mode", "seed", "track_coordinates",
}
_DATASET_KEYS = {
    "synth_blobs": {"kind", "n_classes", "dim", "samples_per_client",
                    "shards_per_client", "seed"},
    "csv": {"kind", "path", "n_classes", "dim"},
}
_MODEL_KEYS = {"kind", "hidden_dim"}
_POLICY_KEYS = {"kind", "gamma", "q", "r"}


@dataclass(frozen=True)
class RunSettings:
    """A validated config, not yet materialized into arrays."""

    dataset: dict
    model: dict
    n_clients: int
    client_fraction: float
    epochs: int
    batch_size: int
    eta: float
    rounds: int
    policy: PolicyConfig
    nack_estimate_mode: str
    seed: int
    track: None | str | int


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return obj[key]


def _as_int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(float(value)):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _parse_policy(obj: dict) -> PolicyConfig:
    _check_keys(obj, _POLICY_KEYS, "policy")
    kind = _require(obj, "kind", "policy")
    if kind not in POLICY_KINDS:
        raise ConfigError(
            f"policy.kind: {kind!r} is not one of {', '.join(POLICY_KINDS)}"
        )
    kwargs = {}
    for name in ("gamma", "q", "r"):
        if name in obj:
            kwargs[name] = _as_number(obj[name], f"policy.{name}")
    try:
        return PolicyConfig(kind, **kwargs)
    except ValueError as err:
        raise ConfigError(f"policy: {err}") from None


def parse_config(doc: dict) -> RunSettings:
    """Validate a decoded JSON document into RunSettings."""
    _check_keys(doc, _TOP_KEYS, "config")

    dataset = _require(doc, "dataset", "config")
    if not isinstance(dataset, dict):
        raise ConfigError("dataset: expected an object")
    ds_kind = _require(dataset, "kind", "dataset")
    if ds_kind not in _DATASET_KEYS:
        raise ConfigError(f"dataset.kind: unknown kind {ds_kind!r}")
    _check_keys(dataset, _DATASET_KEYS[ds_kind], "dataset")
    if ds_kind == "synth_blobs":
        _as_int(_require(dataset, "n_classes", "dataset"), "dataset.n_classes", 1)
        _as_int(_require(dataset, "dim", "dataset"), "dataset.dim", 1)
        _as_int(_require(dataset, "samples_per_client", "dataset"),
                "dataset.samples_per_client", 1)
        _as_int(_require(dataset, "shards_per_client", "dataset"),
                "dataset.shards_per_client", 1)
        if "seed" in dataset:
            _as_int(dataset["seed"], "dataset.seed")
    else:
        path = _require(dataset, "path", "dataset")
        if not isinstance(path, str) or not path:
            raise ConfigError("dataset.path: expected a non-empty string")
        _as_int(_require(dataset, "n_classes", "dataset"), "dataset.n_classes", 1)
        if "dim" in dataset:
            _as_int(dataset["dim"], "dataset.dim", 1)

    model = _require(doc, "model", "config")
    _check_keys(model, _MODEL_KEYS, "model")
    m_kind = _require(model, "kind", "model")
    if m_kind not in ("logistic", "mlp1", "quadratic-diagnostic"):
        raise ConfigError(f"model.kind: unknown kind {m_kind!r}")
    if m_kind == "mlp1":
        _as_int(_require(model, "hidden_dim", "model"), "model.hidden_dim", 1)
    elif "hidden_dim" in model:
        raise ConfigError(f"model.hidden_dim: not a {m_kind} parameter")

    n_clients = _as_int(_require(doc, "K", "config"), "K", 1)
    fraction = _as_number(_require(doc, "C", "config"), "C")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("C: must lie in (0, 1]")
    epochs = _as_int(_require(doc, "E", "config"), "E", 0)
    batch = _as_int(_require(doc, "B", "config"), "B", 1)
    eta = _as_number(_require(doc, "eta", "config"), "eta")
    if eta < 0:
        raise ConfigError("eta: must be >= 0")
    rounds = _as_int(_require(doc, "rounds", "config"), "rounds", 1)
    policy = _parse_policy(_require(doc, "policy", "config"))

    mode = doc.get("nack_estimate_mode", "carry_forward")
    if mode not in ("carry_forward", "ou_decode"):
        raise ConfigError(
            "nack_estimate_mode: must be carry_forward or ou_decode"
        )
    seed = _as_int(doc.get("seed", 0), "seed")

    track = doc.get("track_coordinates", "auto")
    if track is not None and track not in ("auto", "all"):
        track = _as_int(track, "track_coordinates", 1)

    return RunSettings(
        dataset=dataset,
        model=model,
        n_clients=n_clients,
        client_fraction=fraction,
        epochs=epochs,
        batch_size=batch,
        eta=eta,
        rounds=rounds,
        policy=policy,
        nack_estimate_mode=mode,
        seed=seed,
        track=track,
    )


def load_config(path: str) -> RunSettings:
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror or err}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(doc)


def build_dataset(settings: RunSettings) -> FederatedDataset:
    ds = settings.dataset
    if ds["kind"] == "synth_blobs":
        return synth_blobs(
            n_classes=ds["n_classes"],
            dim=ds["dim"],
            n_clients=settings.n_clients,
            samples_per_client=ds["samples_per_client"],
            shards_per_client=ds["shards_per_client"],
            seed=ds.get("seed", settings.seed),
        )
    schema = CSVSchema(n_classes=ds["n_classes"], dim=ds.get("dim"))
    try:
        data = load_csv(ds["path"], schema)
    except OSError as err:
        raise ConfigError(f"dataset: cannot read {ds['path']}: {err}") from None
    if data.n_clients != settings.n_clients:
        raise ConfigError(
            f"dataset: file has {data.n_clients} clients but K = {settings.n_clients}"
        )
    return data


def build_model(settings: RunSettings, dataset: FederatedDataset) -> ModelSpec:
    m = settings.model
    if m["kind"] == "quadratic-diagnostic":
        return ModelSpec("quadratic-diagnostic", input_dim=dataset.dim)
    kwargs = {"input_dim": dataset.dim, "n_classes": dataset.n_classes}
    if m["kind"] == "mlp1":
        kwargs["hidden_dim"] = m["hidden_dim"]
    try:
        return ModelSpec(m["kind"], **kwargs)
    except ValueError as err:
        raise ConfigError(f"model: {err}") from None


def build_round_config(settings: RunSettings, seed: int | None = None) -> RoundConfig:
    try:
        return RoundConfig(
            n_clients=settings.n_clients,
            client_fraction=settings.client_fraction,
            epochs=settings.epochs,
            batch_size=settings.batch_size,
            eta=settings.eta,
            policy=settings.policy,
            nack_estimate_mode=settings.nack_estimate_mode,
            seed=settings.seed if seed is None else seed,
            track=settings.track,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
