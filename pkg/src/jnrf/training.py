"""Adam training loop over unit-batch instances, with gradient accumulation,
dev-set model selection and binary checkpoints.

Documents are processed one at a time at their native length; there is no
padding anywhere. Sentence-granularity batches are realized as gradient
accumulation over single-sentence forwards (64 by default, trailing partial
batch flushed), which is exactly the padding-free batch semantics. Mixed
granularity runs a full document pass then a full sentence pass per epoch.
"""

from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .corpus import Document
from .embedding import EmbeddingTable
from .evaluation import MatchCounts, match_relations
from .model import (
    JNRF,
    EncodedInstance,
    encode_document,
    encode_sentences,
    predictions_to_brat,
)
from .params import Params
from .tensor import Tape


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Params, lr: float = 1e-3, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, p in params.items():
            state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        return state


def adam_step(params: Params, state: AdamState):
    """One bias-corrected update; grads are left as-is (caller zeroes)."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros(p.shape)
        if np.isnan(g).any():
            raise TrainingError(f"NaN gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def select_best(dev_scores) -> int:
    """Index of the checkpoint with the best dev score; ties go earliest."""
    if not len(dev_scores):
        raise TrainingError("no epochs to select from")
    return int(np.argmax(dev_scores))


def dev_e2e_f1(model: JNRF, table: EmbeddingTable, docs: list[Document]) -> float:
    counts = MatchCounts()
    for doc in docs:
        spans, relations = model.predict_instance(encode_document(doc), table)
        _, pred_rels = predictions_to_brat(doc, spans, relations)
        counts.add(match_relations(pred_rels, doc.gold_relations))
    return counts.f1


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_f1: float
    seconds: float


@dataclass
class TrainResult:
    best_epoch: int          # 1-based
    best_dev_f1: float
    history: list[EpochStats]


def _accumulate_pass(model, table, instances, order, state, batch) -> tuple[float, int]:
    """Run backward over instances in the given order, stepping every
    `batch` instances and flushing the remainder. Returns (loss sum, count)."""
    total, pending = 0.0, 0
    for idx in order:
        inst = instances[idx]
        with Tape() as tape:
            loss, _, _ = model.instance_losses(inst, table)
            tape.backward(loss)
        total += loss.item()
        pending += 1
        if pending == batch:
            adam_step(model.params, state)
            model.params.zero_grad()
            pending = 0
    if pending:
        adam_step(model.params, state)
        model.params.zero_grad()
    return total, len(order)


def train(
    model: JNRF,
    table: EmbeddingTable,
    train_docs: list[Document],
    dev_docs: list[Document],
    cfg: RunConfig,
    log_path: str | None = None,
) -> TrainResult:
    if not train_docs:
        raise TrainingError("empty training corpus")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(model.params, lr=cfg.lr)

    doc_instances = [encode_document(d) for d in train_docs]
    sent_instances: list[EncodedInstance] = []
    if cfg.granularity in ("sentence", "mixed"):
        for d in train_docs:
            sent_instances.extend(encode_sentences(d))

    history: list[EpochStats] = []
    best_f1, best_snapshot, best_epoch = -1.0, None, 0
    log = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            loss_sum, n_inst = 0.0, 0
            if cfg.granularity in ("document", "mixed"):
                order = rng.permutation(len(doc_instances))
                s, n = _accumulate_pass(
                    model, table, doc_instances, order, state,
                    cfg.effective_accumulate("document"),
                )
                loss_sum += s
                n_inst += n
            if cfg.granularity in ("sentence", "mixed"):
                order = rng.permutation(len(sent_instances))
                s, n = _accumulate_pass(
                    model, table, sent_instances, order, state,
                    cfg.effective_accumulate("sentence"),
                )
                loss_sum += s
                n_inst += n
            dev_f1 = dev_e2e_f1(model, table, dev_docs) if dev_docs else 0.0
            seconds = time.perf_counter() - t0
            stats = EpochStats(epoch, loss_sum / max(n_inst, 1), dev_f1, seconds)
            history.append(stats)
            if log:
                log.write(f"{epoch}\t{stats.train_loss:.6f}\t{dev_f1:.4f}\t{seconds:.3f}\n")
                log.flush()
            if dev_f1 > best_f1:
                best_f1, best_epoch = dev_f1, epoch
                best_snapshot = {n: p.data.copy() for n, p in model.params.items()}
    finally:
        if log:
            log.close()

    if best_snapshot is not None:
        for name, arr in best_snapshot.items():
            model.params[name].data[...] = arr
    return TrainResult(best_epoch or 1, max(best_f1, 0.0), history)


# --- checkpoint container -------------------------------------------------

_MAGIC = b"JNRFCKPT"
_VERSION = 1


def _write_record(f, name: str, arr: np.ndarray):
    blob = name.encode("utf-8")
    f.write(struct.pack("<I", len(blob)))
    f.write(blob)
    f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_record(f):
    (name_len,) = struct.unpack("<I", _read_exact(f, 4))
    name = _read_exact(f, name_len).decode("utf-8")
    rows, cols = struct.unpack("<II", _read_exact(f, 8))
    data = np.frombuffer(_read_exact(f, 8 * rows * cols), dtype="<f8")
    return name, data.reshape(rows, cols).astype(np.float64)


def save_checkpoint(path: str, model: JNRF, state: AdamState | None = None,
                    config_text: str = ""):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        blob = config_text.encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(model.params)))
        for name, p in model.params.items():
            _write_record(f, name, p.data)
        if state is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            f.write(struct.pack("<Q", state.step_count))
            f.write(struct.pack("<dddd", state.lr, state.beta1, state.beta2, state.eps))
            for name in model.params:
                _write_record(f, name, state.m[name])
            for name in model.params:
                _write_record(f, name, state.v[name])
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    config_text: str
    params: dict
    optimizer: AdamState | None


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        if _read_exact(f, len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != _VERSION:
            raise CheckpointError(f"checkpoint version {version} != supported {_VERSION}")
        (blob_len,) = struct.unpack("<I", _read_exact(f, 4))
        config_text = _read_exact(f, blob_len).decode("utf-8")
        (n_params,) = struct.unpack("<I", _read_exact(f, 4))
        params = dict(_read_record(f) for _ in range(n_params))
        (has_optim,) = struct.unpack("<B", _read_exact(f, 1))
        optimizer = None
        if has_optim:
            (step_count,) = struct.unpack("<Q", _read_exact(f, 8))
            lr, b1, b2, eps = struct.unpack("<dddd", _read_exact(f, 32))
            optimizer = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, step_count=step_count)
            optimizer.m = dict(_read_record(f) for _ in range(n_params))
            optimizer.v = dict(_read_record(f) for _ in range(n_params))
    return Checkpoint(config_text, params, optimizer)


def apply_checkpoint(model: JNRF, ckpt: Checkpoint):
    """Copy checkpoint weights into the model, validating names and shapes."""
    for name, p in model.params.items():
        if name not in ckpt.params:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        arr = ckpt.params[name]
        if arr.shape != p.shape:
            raise CheckpointError(
                f"parameter {name!r}: checkpoint shape {arr.shape} != model {p.shape}"
            )
        p.data[...] = arr
    extra = set(ckpt.params) - set(n for n, _ in model.params.items())
    if extra:
        raise CheckpointError(f"checkpoint has unknown parameters {sorted(extra)[:3]}")
