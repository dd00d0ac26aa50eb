"""Adam with step decay, the epoch loop, evaluation helpers and checkpoints."""
from __future__ import annotations

import io
import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .autograd import Tensor
from .config import RunConfig
from .data import Dialog, Example, SlotCatalog, Vocab, build_vocab, make_examples
from .features import ContextualProvider, HashContextualProvider, load_static_vectors
from .metrics import EvalReport, TurnResult, evaluate_results
from .model import MADST, Prediction

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "madst-checkpoint/1"
_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------- optimiser

def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray, step: int, lr: float,
              betas: tuple = (0.9, 0.999), eps: float = 1e-8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam update; ``step`` counts from 1."""
    b1, b2 = betas
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** step)
    v_hat = v / (1 - b2 ** step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, named_params: Mapping[str, Tensor], betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = {n: p for n, p in named_params.items() if p.requires_grad}
        self.betas = tuple(betas)
        self.eps = eps
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.steps = 0

    def step(self, lr: float) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise FloatingPointError(f"non-finite gradient for parameter {name}")
        self.steps += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            p.data, self.m[name], self.v[name] = adam_step(p.data, p.grad, self.m[name], self.v[name],
                                                           self.steps, lr, self.betas, self.eps)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    grads = [p.grad for p in params if p.requires_grad and p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


# ---------------------------------------------------------------- evaluation

def chunks(items: Sequence, size: int) -> list:
    return [items[i:i + size] for i in range(0, len(items), size)]


def predict_examples(model: MADST, examples: Sequence[Example], batch_turns: int = 16,
                     slots: Optional[Sequence[str]] = None) -> list[Prediction]:
    model.eval()
    out: list[Prediction] = []
    for chunk in chunks(list(examples), batch_turns):
        out += model.predict(model.make_batch(chunk, slots))
    return out


def turn_results(examples: Sequence[Example], preds: Sequence[Prediction],
                 slots: Optional[Sequence[str]] = None) -> list[TurnResult]:
    by_turn: dict[tuple, dict] = {}
    for p in preds:
        by_turn.setdefault((p.dialogue_id, p.turn), {})[p.slot] = p.value
    results = []
    for ex in examples:
        pred = by_turn[(ex.dialogue_id, ex.turn)]
        keys = list(pred) if slots is None else list(slots)
        results.append(TurnResult(ex.dialogue_id, ex.turn, {s: ex.state[s] for s in keys},
                                  {s: pred[s] for s in keys}))
    return results


def evaluate(model: MADST, examples: Sequence[Example], batch_turns: int = 16,
             slots: Optional[Sequence[str]] = None) -> tuple[EvalReport, list[Prediction]]:
    preds = predict_examples(model, examples, batch_turns, slots)
    return evaluate_results(turn_results(examples, preds, slots)), preds


def dataset_loss(model: MADST, examples: Sequence[Example], gamma: float = 1.0, batch_turns: int = 16) -> float:
    """Eval-mode combined loss averaged over every (turn, slot) pair."""
    from .autograd import no_grad

    model.eval()
    total = pairs = 0.0
    with no_grad():
        for chunk in chunks(list(examples), batch_turns):
            batch = model.make_batch(chunk)
            loss, _ = model.loss(batch, gamma)
            total += loss.item() * len(batch)
            pairs += len(batch)
    return total / pairs


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: MADST
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_dev: float = -1.0
    run: Optional[RunConfig] = None


def build_model(run: RunConfig, train_dialogs: Sequence[Dialog], catalog: SlotCatalog,
                vocab: Optional[Vocab] = None, provider: Optional[ContextualProvider] = None,
                static_vectors_path: Optional[str] = None) -> MADST:
    vocab = vocab or build_vocab(train_dialogs, run.train.min_freq, catalog)
    static = None
    if static_vectors_path:
        static = load_static_vectors(static_vectors_path, vocab, run.model.static_dim,
                                     np.random.default_rng(run.train.seed))
    return MADST(run.model, vocab, catalog, seed=run.train.seed, provider=provider, static_vectors=static)


def train(run: RunConfig, train_dialogs: Sequence[Dialog], dev_dialogs: Sequence[Dialog], catalog: SlotCatalog,
          *, model: Optional[MADST] = None, log_path: Optional[str | Path] = None,
          callback: Optional[Callable[[int, MADST, dict], bool]] = None,
          eval_slots: Optional[Sequence[str]] = None, **model_kwargs) -> TrainResult:
    """Train with Adam; keep the parameters with the best dev joint goal accuracy.

    ``callback(epoch, model, record)`` runs after each epoch and may return True
    to stop early.
    """
    if not train_dialogs or not dev_dialogs:
        raise ValueError("training needs non-empty train and dev sets")
    cfg = run.train
    model = model or build_model(run, train_dialogs, catalog, **model_kwargs)
    train_ex = make_examples(train_dialogs, catalog)
    dev_ex = make_examples(dev_dialogs, catalog)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    named = dict(model.named_parameters())
    opt = Adam(named, cfg.betas, cfg.epsilon)
    result = TrainResult(model, run=run)
    best_state, stale = None, 0
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.max_epochs):
            lr = cfg.lr_at(epoch)
            order = shuffle_rng.permutation(len(train_ex))
            losses = []
            for chunk in chunks([train_ex[i] for i in order], cfg.batch_turns):
                model.train()
                model.zero_grad()
                batch = model.make_batch(chunk)
                loss, parts = model.loss(batch, cfg.gamma, dropout_rng)
                if not np.isfinite(loss.item()):
                    ids = sorted({(ex.dialogue_id, ex.turn) for ex in chunk})
                    raise FloatingPointError(f"loss diverged at epoch {epoch} on turns {ids}: {parts}")
                loss.backward()
                clip_grad_norm(list(named.values()), cfg.clip_norm)
                opt.step(lr)
                losses.append(loss.item())
            report, _ = evaluate(model, dev_ex, cfg.eval_batch_turns, eval_slots)
            record = {"epoch": epoch, "loss": float(np.mean(losses)), "dev_joint": report.joint_goal,
                      "dev_slot": report.avg_slot, "lr": lr}
            result.history.append(record)
            log.info("epoch %d loss %.4f dev joint %.4f slot %.4f", epoch, record["loss"],
                     report.joint_goal, report.avg_slot)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if report.joint_goal > result.best_dev:
                result.best_dev, result.best_epoch = report.joint_goal, epoch
                best_state, stale = model.state_dict(), 0
            else:
                stale += 1
            if callback is not None and callback(epoch, model, record):
                break
            if stale >= cfg.patience:
                log.info("early stop after %d epochs without dev improvement", stale)
                break
    finally:
        if log_fh:
            log_fh.close()
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


# ---------------------------------------------------------------- checkpoints

def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path: str | Path, model: MADST, run: RunConfig, epoch: int = -1,
                    dev_metric: Optional[float] = None) -> None:
    """Zip of ``meta.json`` plus one ``.npy`` per named parameter; fixed timestamps keep it byte-stable."""
    provider = model.provider
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": __version__,
        "config": run.to_json(),
        "vocab": model.vocab.to_json(),
        "slot_catalog": model.catalog.to_json(),
        "epoch": epoch,
        "dev_metric": dev_metric,
        "provider": ({"kind": "hash", "seed": provider.seed} if isinstance(provider, HashContextualProvider)
                     else {"kind": "external"}),
        "parameters": [name for name, _ in model.named_parameters()],
        "trainable": {name: p.requires_grad for name, p in model.named_parameters()},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_TIME), json.dumps(meta, sort_keys=True, indent=1))
        for name, p in model.named_parameters():
            zf.writestr(zipfile.ZipInfo(f"params/{name}.npy", _ZIP_TIME), _npy_bytes(p.data))


def _read_meta(zf: zipfile.ZipFile, path) -> dict:
    meta = json.loads(zf.read("meta.json"))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
    return meta


def read_checkpoint_meta(path: str | Path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            return _read_meta(zf, path)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, OSError) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc


def load_checkpoint(path: str | Path, provider: Optional[ContextualProvider] = None) -> tuple[MADST, dict]:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = _read_meta(zf, path)
            arrays = {name: np.load(io.BytesIO(zf.read(f"params/{name}.npy")), allow_pickle=False)
                      for name in meta["parameters"]}
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError, OSError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    run = RunConfig.from_json(meta["config"])
    catalog = SlotCatalog(tuple(meta["slot_catalog"]["slots"]), meta["slot_catalog"]["version"])
    if provider is None:
        if meta["provider"]["kind"] != "hash":
            raise CheckpointError(f"{path}: checkpoint was trained with an external contextual provider; pass it in")
        provider = HashContextualProvider(run.model.ctx_layers, run.model.ctx_dim, seed=meta["provider"]["seed"])
    model = MADST(run.model, Vocab(meta["vocab"]), catalog, seed=run.train.seed, provider=provider,
                  static_vectors=arrays["tables.static"])
    model.load_state_dict(arrays)
    for name, p in model.named_parameters():
        p.requires_grad = meta["trainable"][name]
    model.eval()
    return model, meta
