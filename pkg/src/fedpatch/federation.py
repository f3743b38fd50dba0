"""Synchronous federated averaging: protocol types, aggregator state
machine, in-process transport, and the three training drivers
(federated, centralized, site-specific).

The aggregator never advances a round until every collaborator's update is
in hand, and updates are averaged in a fixed site order, so the consensus
weights are a pure function of (config, spec, shards) regardless of
scheduling.
"""

import csv
import queue
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .nn import (ModelWeights, NetworkSpec, decode_weights, encode_weights,
                 init_weights, train_epochs)
from .nn.io import WeightFormatError
from .seeding import derive_seed

MESSAGE_MAGIC = b"FSHM"
MESSAGE_VERSION = 1

BY_SAMPLE_COUNT = "by_sample_count"
UNIFORM = "uniform"


class ProtocolError(RuntimeError):
    """A message arrived that the aggregator state machine cannot accept."""


class CollaboratorError(RuntimeError):
    """Local training failed at one site; carries the site id."""

    def __init__(self, site_id, cause):
        super().__init__(f"site {site_id}: {cause}")
        self.site_id = site_id


@dataclass(frozen=True)
class FederationConfig:
    rounds: int
    epochs_per_round: int = 1
    weighting: str = BY_SAMPLE_COUNT
    master_seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 32

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.epochs_per_round < 1:
            raise ValueError("epochs_per_round must be >= 1")
        if self.weighting not in (BY_SAMPLE_COUNT, UNIFORM):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class RoundUpdate:
    site_id: int
    round_index: int
    weights: ModelWeights
    n_train_samples: int
    local_train_loss: float

    def __post_init__(self):
        if self.n_train_samples < 1:
            raise ValueError("n_train_samples must be >= 1")


# --- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class TaskAssignment:
    round_index: int
    global_weights: ModelWeights
    epochs: int


@dataclass(frozen=True)
class ModelUpdate:
    update: RoundUpdate


@dataclass(frozen=True)
class TrainingComplete:
    final_weights: ModelWeights


_MSG_TASK, _MSG_UPDATE, _MSG_COMPLETE = 1, 2, 3


def encode_message(msg) -> bytes:
    """Wire format: FSHM, version u16, msg_type u8, round u32, site_id u16,
    then a type-specific payload ending in an FSHD weight blob."""
    if isinstance(msg, TaskAssignment):
        mtype, rnd, site = _MSG_TASK, msg.round_index, 0
        payload = struct.pack("<H", msg.epochs) + encode_weights(msg.global_weights)
    elif isinstance(msg, ModelUpdate):
        u = msg.update
        mtype, rnd, site = _MSG_UPDATE, u.round_index, u.site_id
        payload = (struct.pack("<Qd", u.n_train_samples, u.local_train_loss)
                   + encode_weights(u.weights))
    elif isinstance(msg, TrainingComplete):
        mtype, rnd, site = _MSG_COMPLETE, 0, 0
        payload = encode_weights(msg.final_weights)
    else:
        raise TypeError(f"not a protocol message: {type(msg)}")
    header = MESSAGE_MAGIC + struct.pack("<HBIH", MESSAGE_VERSION, mtype, rnd, site)
    return header + payload


def decode_message(blob: bytes, spec: NetworkSpec):
    if len(blob) < 13:
        raise WeightFormatError("message shorter than header", offset=0)
    if blob[:4] != MESSAGE_MAGIC:
        raise WeightFormatError(f"bad message magic {blob[:4]!r}", offset=0)
    version, mtype, rnd, site = struct.unpack_from("<HBIH", blob, 4)
    if version != MESSAGE_VERSION:
        raise WeightFormatError(f"unsupported message version {version}", offset=4)
    body = blob[13:]
    if mtype == _MSG_TASK:
        if len(body) < 2:
            raise WeightFormatError("truncated task payload", offset=13)
        (epochs,) = struct.unpack_from("<H", body, 0)
        return TaskAssignment(rnd, decode_weights(body[2:], spec), epochs)
    if mtype == _MSG_UPDATE:
        if len(body) < 16:
            raise WeightFormatError("truncated update payload", offset=13)
        n_samples, loss = struct.unpack_from("<Qd", body, 0)
        w = decode_weights(body[16:], spec)
        return ModelUpdate(RoundUpdate(site, rnd, w, n_samples, loss))
    if mtype == _MSG_COMPLETE:
        return TrainingComplete(decode_weights(body, spec))
    raise WeightFormatError(f"unknown message type {mtype}", offset=6)


# --- aggregation ------------------------------------------------------------

def aggregate(updates, weighting=BY_SAMPLE_COUNT) -> ModelWeights:
    """Elementwise weighted mean of collaborator weights (FedAvg).

    Accumulates in float64 and casts back to float32. Updates are summed
    in site-id order regardless of the order they arrive in, so the result
    is bitwise independent of scheduling.
    """
    if not updates:
        raise ValueError("cannot aggregate zero updates")
    rounds = {u.round_index for u in updates}
    if len(rounds) > 1:
        raise ProtocolError(f"updates from mixed rounds {sorted(rounds)}")
    updates = sorted(updates, key=lambda u: u.site_id)
    first = updates[0].weights
    for u in updates:
        if u.weights.spec.layer_shapes() != first.spec.layer_shapes():
            raise ValueError("shape-incompatible updates")

    if weighting == UNIFORM:
        coeffs = [1.0 / len(updates)] * len(updates)
    elif weighting == BY_SAMPLE_COUNT:
        total = float(sum(u.n_train_samples for u in updates))
        coeffs = [u.n_train_samples / total for u in updates]
    else:
        raise ValueError(f"unknown weighting {weighting!r}")

    layers = {}
    for name in first.layers:
        acc = np.zeros(first.layers[name].shape, dtype=np.float64)
        for c, u in zip(coeffs, updates):
            acc += c * u.weights.layers[name].astype(np.float64)
        layers[name] = acc.astype(np.float32)
    out = ModelWeights(first.spec, layers)
    out.assert_finite()
    return out


# --- aggregator state machine ----------------------------------------------

IDLE, WAITING, FINISHED = "Idle", "WaitingForUpdates", "Finished"


class Aggregator:
    """Single-threaded synchronous round barrier.

    Transitions: Idle -> WaitingForUpdates(r) -> (all sites in) -> Idle,
    repeated `rounds` times, then Finished. Aggregation happens only when
    every expected site's update for the current round is present.
    """

    def __init__(self, config: FederationConfig, spec: NetworkSpec, site_ids):
        self.config = config
        self.spec = spec
        self.site_ids = sorted(site_ids)
        self.global_weights = init_weights(spec)
        self.phase = IDLE
        self.current_round = 0
        self._pending = {}
        self.history = []  # one dict per completed round
        self.trace = [IDLE]

    def _set_phase(self, phase):
        self.phase = phase
        self.trace.append(phase)

    def start_round(self) -> TaskAssignment:
        if self.phase != IDLE:
            raise ProtocolError(f"cannot start a round from phase {self.phase}")
        if self.current_round >= self.config.rounds:
            raise ProtocolError("all rounds already completed")
        self._pending = {}
        self._set_phase(WAITING)
        return TaskAssignment(self.current_round, self.global_weights,
                              self.config.epochs_per_round)

    def submit(self, update: RoundUpdate):
        if self.phase != WAITING:
            raise ProtocolError(f"update received in phase {self.phase}")
        if update.round_index != self.current_round:
            raise ProtocolError(
                f"update for round {update.round_index} during round "
                f"{self.current_round}")
        if update.site_id not in self.site_ids:
            raise ProtocolError(f"unknown site {update.site_id}")
        if update.site_id in self._pending:
            raise ProtocolError(f"duplicate update from site {update.site_id}")
        self._pending[update.site_id] = update

    @property
    def round_complete(self) -> bool:
        return set(self._pending) == set(self.site_ids)

    def finish_round(self):
        if self.phase != WAITING:
            raise ProtocolError(f"cannot finish round from phase {self.phase}")
        missing = set(self.site_ids) - set(self._pending)
        if missing:
            raise ProtocolError(f"missing updates from sites {sorted(missing)}")
        ordered = [self._pending[s] for s in self.site_ids]
        self.global_weights = aggregate(ordered, self.config.weighting)
        losses = {u.site_id: u.local_train_loss for u in ordered}
        self.history.append({
            "round": self.current_round,
            "mean_local_loss": float(np.mean(list(losses.values()))),
            "site_losses": losses,
        })
        self.current_round += 1
        if self.current_round >= self.config.rounds:
            self._set_phase(FINISHED)
        else:
            self._set_phase(IDLE)


# --- transport --------------------------------------------------------------

class Mailbox:
    """Blocking FIFO of immutable protocol messages."""

    def __init__(self):
        self._q = queue.Queue()

    def send(self, msg):
        self._q.put(msg)

    def recv(self, timeout=None):
        return self._q.get(timeout=timeout)


class InProcessTransport:
    """One mailbox per collaborator plus one for the aggregator."""

    def __init__(self, site_ids):
        self.to_site = {s: Mailbox() for s in site_ids}
        self.to_aggregator = Mailbox()

    def broadcast(self, msg):
        for mb in self.to_site.values():
            mb.send(msg)


# --- drivers ----------------------------------------------------------------

def _local_round(site_id, shard, task: TaskAssignment, config: FederationConfig):
    try:
        seed = derive_seed(config.master_seed, "round", task.round_index,
                           "site", site_id)
        result = train_epochs(task.global_weights, shard.train.pixels,
                              shard.train.labels, task.epochs, seed,
                              learning_rate=config.learning_rate,
                              batch_size=config.batch_size)
    except Exception as exc:
        raise CollaboratorError(site_id, exc) from exc
    return RoundUpdate(site_id, task.round_index, result.weights,
                       len(shard.train), result.epoch_losses[-1])


def run_federated(config: FederationConfig, spec: NetworkSpec, shards,
                  parallel: bool = False):
    """Full synchronous FedAvg run; returns (consensus_weights, history).

    `parallel` trains collaborators on threads; the result is bitwise
    identical either way.
    """
    if not shards:
        raise ValueError("need at least one shard")
    shards_by_id = {s.site_id: s for s in shards}
    transport = InProcessTransport(shards_by_id)
    agg = Aggregator(config, spec, shards_by_id)

    def collaborator(site_id):
        while True:
            msg = transport.to_site[site_id].recv()
            if isinstance(msg, TrainingComplete):
                return
            try:
                update = _local_round(site_id, shards_by_id[site_id], msg, config)
                transport.to_aggregator.send(ModelUpdate(update))
            except CollaboratorError as exc:
                transport.to_aggregator.send(exc)
                return

    threads = []
    if parallel:
        for site_id in shards_by_id:
            t = threading.Thread(target=collaborator, args=(site_id,), daemon=True)
            t.start()
            threads.append(t)

    failure = None
    for _ in range(config.rounds):
        task = agg.start_round()
        transport.broadcast(task)
        if not parallel:
            for site_id in sorted(shards_by_id):
                transport.to_site[site_id].recv()  # consume the assignment
                try:
                    update = _local_round(site_id, shards_by_id[site_id],
                                          task, config)
                except CollaboratorError as exc:
                    failure = exc
                    break
                transport.to_aggregator.send(ModelUpdate(update))
        if failure is not None:
            break
        while not agg.round_complete:
            msg = transport.to_aggregator.recv()
            if isinstance(msg, CollaboratorError):
                failure = msg
                break
            agg.submit(msg.update)
        if failure is not None:
            break
        agg.finish_round()

    transport.broadcast(TrainingComplete(agg.global_weights))
    for t in threads:
        t.join()
    if failure is not None:
        raise failure
    return agg.global_weights, agg.history


def run_centralized(spec: NetworkSpec, pooled_pixels, pooled_labels,
                    total_epochs: int, master_seed: int = 0,
                    learning_rate: float = 1e-3, batch_size: int = 32):
    """Pooled-data baseline; returns (weights, epoch_losses)."""
    if pooled_pixels.shape[0] == 0:
        raise ValueError("empty pooled training set")
    result = train_epochs(init_weights(spec), pooled_pixels, pooled_labels,
                          total_epochs, derive_seed(master_seed, "centralized"),
                          learning_rate=learning_rate, batch_size=batch_size)
    return result.weights, result.epoch_losses


def run_site_specific(spec: NetworkSpec, shards, total_epochs: int,
                      master_seed: int = 0, learning_rate: float = 1e-3,
                      batch_size: int = 32):
    """Independent per-site baselines; returns {site_id: weights}."""
    models = {}
    for shard in sorted(shards, key=lambda s: s.site_id):
        try:
            result = train_epochs(init_weights(spec), shard.train.pixels,
                                  shard.train.labels, total_epochs,
                                  derive_seed(master_seed, "site-model",
                                              shard.site_id),
                                  learning_rate=learning_rate,
                                  batch_size=batch_size)
        except Exception as exc:
            raise CollaboratorError(shard.site_id, exc) from exc
        models[shard.site_id] = result.weights
    return models


def write_history_csv(history, site_ids, path):
    """Round history: round, mean_local_loss, then one loss column per site."""
    site_ids = sorted(site_ids)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "mean_local_loss"]
                        + [f"site{s}_loss" for s in site_ids])
        for row in history:
            writer.writerow([row["round"], f"{row['mean_local_loss']:.8f}"]
                            + [f"{row['site_losses'][s]:.8f}" for s in site_ids])
