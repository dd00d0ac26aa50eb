"""Slot gate and pointer-generator value decoder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autograd as ag
from .attention import SymAttention, attention_weights
from .autograd import Tensor
from .config import ModelConfig
from .data import END_ID, START_ID, UNK_ID
from .encoder import EncoderOutput
from .nn import GRU, Module, embedding_lookup, linear, uniform_init, zeros_param

GATE_NONE, GATE_DONTCARE, GATE_GEN = 0, 1, 2
GATE_CLASSES = ("none", "dontcare", "gen")


def gate_label(value: str) -> int:
    if value == "none":
        return GATE_NONE
    if value == "dontcare":
        return GATE_DONTCARE
    return GATE_GEN


class Decoder(Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int, rng: np.random.Generator):
        h, sd = cfg.hidden, cfg.static_dim
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.init_proj = uniform_init(rng, (h, 2 * h), 2 * h)
        self.gru = GRU(sd, h, rng)
        self.vocab_proj = uniform_init(rng, (vocab_size, h), h)
        self.pointer = SymAttention(h, cfg.attention_dim, rng)
        self.gen_w = uniform_init(rng, (1, 2 * h + sd), 2 * h + sd)
        self.gen_b = zeros_param((1,))
        self.gate_w = uniform_init(rng, (3, 2 * h), 2 * h)
        self.gate_b = zeros_param((3,))
        self.start = uniform_init(rng, (sd,), sd)


@dataclass
class StepDistribution:
    p_vocab: Tensor    # [..., V_ext], zero beyond the fixed vocabulary
    p_history: Tensor  # [..., V_ext]
    p_gen: Tensor      # [..., 1]
    p_final: Tensor    # [..., V_ext]
    pointer: Tensor    # [..., J] position weights behind p_history

    def step(self, t: int) -> "StepDistribution":
        idx = (slice(None), t)
        return StepDistribution(*(ag.getitem(x, idx) for x in
                                  (self.p_vocab, self.p_history, self.p_gen, self.p_final, self.pointer)))


@dataclass
class DecoderState:
    hidden: Tensor  # [N, h]
    step: int = 0
    emitted: list = field(default_factory=list)


def _summary_input(enc: EncoderOutput) -> Tensor:
    return ag.concat([enc.history_final, enc.slot_summary], axis=-1)


def gate_logits(enc: EncoderOutput, dec: Decoder) -> Tensor:
    return linear(_summary_input(enc), dec.gate_w, dec.gate_b)


def gate_classify(enc: EncoderOutput, dec: Decoder) -> Tensor:
    """Probabilities over (none, dontcare, gen)."""
    return ag.softmax(gate_logits(enc, dec), axis=-1)


def initial_state(enc: EncoderOutput, dec: Decoder) -> DecoderState:
    return DecoderState(linear(_summary_input(enc), dec.init_proj))


def token_inputs(ids: np.ndarray, static: Tensor, dec: Decoder) -> Tensor:
    """Decoder input embeddings; START uses the learned start vector, copied-only ids use UNK."""
    ids = np.asarray(ids)
    lookup = np.where(ids >= dec.vocab_size, UNK_ID, ids)
    emb = embedding_lookup(static, lookup)
    is_start = (ids == START_ID)[..., None]
    if not is_start.any():
        return emb
    return ag.where(is_start, ag.reshape(dec.start, (1,) * ids.ndim + (-1,)), emb)


def step_distributions(hidden: Tensor, inputs: Tensor, enc: EncoderOutput, hist_ids: np.ndarray,
                       ext_size: int, dec: Decoder) -> StepDistribution:
    """Distributions for decoder states ``hidden [N, T, h]`` given their inputs ``[N, T, sd]``.

    ``hist_ids [N, J]`` maps history positions into the extended id space
    (fixed vocabulary followed by the batch's out-of-vocabulary history words).
    """
    pointer = attention_weights(hidden, enc.history_repr, dec.pointer, enc.history_mask)
    context = ag.matmul(pointer, enc.history_repr)
    p_vocab = ag.softmax(linear(hidden, dec.vocab_proj), axis=-1)
    if ext_size > dec.vocab_size:
        pad = Tensor(np.zeros(p_vocab.shape[:-1] + (ext_size - dec.vocab_size,)))
        p_vocab = ag.concat([p_vocab, pad], axis=-1)
    p_history = ag.scatter_sum(pointer, hist_ids, ext_size)
    p_gen = ag.sigmoid(linear(ag.concat([hidden, context, inputs], axis=-1), dec.gen_w, dec.gen_b))
    p_final = p_gen * p_vocab + (1.0 - p_gen) * p_history
    return StepDistribution(p_vocab, p_history, p_gen, p_final, pointer)


def decode_step(state: DecoderState, prev_emb: Tensor, enc: EncoderOutput, hist_ids: np.ndarray,
                ext_size: int, dec: Decoder, max_len: Optional[int] = None) -> tuple[StepDistribution, DecoderState]:
    """Advance one step from ``state`` with previous-token embeddings ``[N, sd]``.

    Once ``max_len`` value tokens have been produced the step's ``p_final`` is
    forced to END.
    """
    max_len = dec.cfg.max_decode_len if max_len is None else max_len
    x = ag.reshape(prev_emb, (prev_emb.shape[0], 1, prev_emb.shape[1]))
    hidden = dec.gru(x, h0=state.hidden)
    dist = step_distributions(hidden, x, enc, hist_ids, ext_size, dec).step(0)
    if state.step >= max_len:
        forced = np.zeros(dist.p_final.shape)
        forced[:, END_ID] = 1.0
        dist.p_final = Tensor(forced)
    return dist, DecoderState(ag.getitem(hidden, (slice(None), 0)), state.step + 1, list(state.emitted))


def teacher_forced(enc: EncoderOutput, gold: np.ndarray, static: Tensor, hist_ids: np.ndarray,
                   ext_size: int, dec: Decoder) -> StepDistribution:
    """Distributions at every step when the gold tokens ``[N, T]`` (ending in END) are fed back."""
    gold = np.asarray(gold)
    prev = np.concatenate([np.full((gold.shape[0], 1), START_ID), gold[:, :-1]], axis=1)
    inputs = token_inputs(prev, static, dec)
    hidden = dec.gru(inputs, h0=initial_state(enc, dec).hidden)
    return step_distributions(hidden, inputs, enc, hist_ids, ext_size, dec)


def greedy_decode(enc: EncoderOutput, static: Tensor, hist_ids: np.ndarray, ext_size: int,
                  dec: Decoder, max_len: Optional[int] = None) -> list[list[int]]:
    """Argmax of ``p_final`` per step until END (forced after ``max_len`` tokens)."""
    max_len = dec.cfg.max_decode_len if max_len is None else max_len
    n = enc.history_final.shape[0]
    with ag.no_grad():
        state = initial_state(enc, dec)
        prev = np.full(n, START_ID)
        out: list[list[int]] = [[] for _ in range(n)]
        done = np.zeros(n, dtype=bool)
        for _ in range(max_len + 1):
            dist, state = decode_step(state, token_inputs(prev, static, dec), enc, hist_ids, ext_size, dec, max_len)
            prev = dist.p_final.data.argmax(axis=-1)
            for i in np.flatnonzero(~done):
                if prev[i] == END_ID:
                    done[i] = True
                else:
                    out[i].append(int(prev[i]))
            if done.all():
                break
    return out


def combined_loss(gate_probs: Tensor, gate_gold: np.ndarray, p_final: Optional[Tensor], gold: Optional[np.ndarray],
                  gold_mask: Optional[np.ndarray], gen_rows: Optional[np.ndarray], gamma: float = 1.0,
                  eps: float = 1e-12) -> tuple[Tensor, Tensor, Tensor]:
    """Generator NLL (gen pairs only, mean over their steps) + gamma * gate cross-entropy, averaged over pairs.

    ``p_final [M, T, V_ext]`` holds teacher-forced distributions for the
    ``M`` pairs listed in ``gen_rows``.  Returns ``(total, generator, classifier)``
    where the two parts are already divided by the number of pairs.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    n = gate_probs.shape[0]
    classifier = ag.sum_(ag.nll_from_probs(gate_probs, gate_gold, reduction="none", eps=eps)) * (1.0 / n)
    if p_final is None or gen_rows is None or len(gen_rows) == 0:
        generator = Tensor(0.0)
    else:
        m = np.asarray(gold_mask, dtype=float)
        nll = ag.nll_from_probs(p_final, gold, reduction="none", eps=eps)  # [M, T]
        per_pair = ag.sum_(nll * Tensor(m / m.sum(axis=1, keepdims=True)), axis=1)
        generator = ag.sum_(per_pair) * (1.0 / n)
    return generator + classifier * gamma, generator, classifier
