"""Conversation and slot encoder stack.

word-level cross-attention -> bi-GRU 1 -> two-way cross-attention with fusion
-> bi-GRU 2 -> history self-attention with fusion -> bi-GRU 3 (history only),
and a learned weighted pooling of the layer-2 slot states.

Work is batched over (turn, slot) pairs.  Embeddings and everything that
depends on only one side are computed once per unique turn or slot and then
gathered to pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autograd as ag
from .attention import SymAttention, attention_weights, cross_fuse, fuse, self_attend_fuse
from .autograd import Tensor
from .config import ModelConfig
from .data import Token
from .features import ContextualProvider, EmbeddingTables, embed_batch
from .nn import BiGRU, Module, linear, uniform_init


@dataclass
class EncoderOutput:
    history_repr: Tensor      # [N, J, h]
    slot_summary: Tensor      # [N, h]
    history_final: Tensor     # [N, h]
    history_mask: np.ndarray  # [N, J]
    attention: dict = field(default_factory=dict)

    def __getitem__(self, i: int) -> "EncoderOutput":
        """Unbatched view of pair ``i`` with padding stripped."""
        length = int(self.history_mask[i].sum())
        return EncoderOutput(ag.getitem(self.history_repr, (i, slice(0, length))),
                             ag.getitem(self.slot_summary, i),
                             ag.getitem(self.history_final, i),
                             self.history_mask[i, :length])


def summarize_slot(h_slot: Tensor, w: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax-normalised ``w^T h_k`` weights pooled over slot words: ``[.., K, h] -> [.., h]``."""
    scores = ag.sum_(h_slot * w, axis=-1)
    alpha = ag.softmax(scores, axis=-1, mask=mask)
    return ag.sum_(h_slot * ag.reshape(alpha, alpha.shape + (1,)), axis=-2)


def mean_pool(h: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    if mask is None:
        return ag.mean(h, axis=-2)
    m = np.asarray(mask, dtype=float)
    weights = m / m.sum(axis=-1, keepdims=True)
    return ag.sum_(h * Tensor(weights[..., None]), axis=-2)


def _zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros(t.shape))


class Encoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        d, h, a = cfg.embed_dim, cfg.hidden, cfg.attention_dim
        self.word_attn = SymAttention(d, a, rng)
        self.gru1_conv = BiGRU(2 * d, h, rng)
        self.gru1_slot = BiGRU(d, h, rng)
        self.slot_to_hist = SymAttention(h, a, rng)
        self.hist_to_slot = SymAttention(h, a, rng)
        self.gru2_conv = BiGRU(4 * h, h, rng)
        self.gru2_slot = BiGRU(4 * h, h, rng)
        self.self_attn = SymAttention(h, a, rng)
        self.gru3_conv = BiGRU(4 * h, h, rng)
        self.summary_w = uniform_init(rng, (h,), h)

    def _drop(self, x: Tensor, rng) -> Tensor:
        return ag.dropout(x, self.cfg.dropout, self.training, rng)

    def __call__(self, conv_e: Tensor, conv_mask: np.ndarray, slot_e: Tensor, slot_mask: np.ndarray,
                 pair_turn: np.ndarray, pair_slot: np.ndarray, rng=None) -> EncoderOutput:
        """conv_e ``[T, J, d_e]`` and slot_e ``[S, K, d_e]`` -> per-pair outputs for ``N`` pairs."""
        cfg = self.cfg
        d = cfg.embed_dim
        attn = {}
        conv_e = self._drop(conv_e, rng)
        slot_e = self._drop(slot_e, rng)
        hmask = conv_mask[pair_turn]
        smask = slot_mask[pair_slot]

        # bi-GRU 1 input projection, split by the [e | attended] halves of its input
        w1, b1 = self.gru1_conv.input_weight()
        w_e = ag.getitem(w1, (slice(None), slice(0, d)))
        xproj = ag.getitem(linear(conv_e, w_e), pair_turn) + b1
        if cfg.word_xattn:
            w_a = ag.getitem(w1, (slice(None), slice(d, 2 * d)))
            pc = self.word_attn.features(conv_e)
            ps = self.word_attn.features(slot_e)
            scores = ag.matmul(ag.getitem(pc, pair_turn) * self.word_attn.diag, ag.getitem(ps, pair_slot).T)
            alpha = ag.softmax(scores, axis=-1, mask=smask[:, None, :])
            attn["word"] = alpha
            # alpha @ (e_s W_a^T) == (alpha @ e_s) W_a^T
            xproj = xproj + ag.matmul(alpha, ag.getitem(linear(slot_e, w_a), pair_slot))
        h1c = self.gru1_conv.scan(xproj, hmask)
        h1s = ag.getitem(self.gru1_slot(slot_e, slot_mask), pair_slot)

        if cfg.high_xattn:
            attn["slot_to_hist"] = attention_weights(h1s, h1c, self.slot_to_hist, hmask)
            attn["hist_to_slot"] = attention_weights(h1c, h1s, self.hist_to_slot, smask)
            r1s = fuse(h1s, ag.matmul(attn["slot_to_hist"], h1c))
            r1c = fuse(h1c, ag.matmul(attn["hist_to_slot"], h1s))
        else:
            r1s = fuse(h1s, _zeros_like(h1s))
            r1c = fuse(h1c, _zeros_like(h1c))
        h2c = self.gru2_conv(self._drop(r1c, rng), hmask)
        h2s = self.gru2_slot(self._drop(r1s, rng), smask)

        if cfg.self_attn:
            attn["self"] = attention_weights(h2c, h2c, self.self_attn, hmask)
            r2c = fuse(h2c, ag.matmul(attn["self"], h2c))
        else:
            r2c = fuse(h2c, _zeros_like(h2c))
        h3c = self.gru3_conv(self._drop(r2c, rng), hmask)

        if cfg.slot_summarizer:
            summary = summarize_slot(h2s, self.summary_w, smask)
        else:
            summary = mean_pool(h2s, smask)
        last = hmask.sum(axis=1) - 1
        final = ag.getitem(h3c, (np.arange(len(last)), last))
        return EncoderOutput(h3c, summary, final, hmask, attn)


def encode(conv_tokens: Sequence[Token], slot_tokens: Sequence[Token], encoder: Encoder,
           tables: EmbeddingTables, provider: ContextualProvider, training: bool = False, rng=None) -> EncoderOutput:
    """Encode one (history, slot) pair; returns unbatched outputs."""
    if not conv_tokens or not slot_tokens:
        raise ValueError("encode needs a non-empty history and slot name")
    conv_e, cmask = embed_batch([conv_tokens], tables, provider, training, rng)
    slot_e, smask = embed_batch([[Token(t.surface) for t in slot_tokens]], tables, provider, training, rng,
                                isolated=True)
    zero = np.zeros(1, dtype=int)
    return encoder(conv_e, cmask, slot_e, smask, zero, zero, rng)[0]


def reference_encode(conv_e: Tensor, slot_e: Tensor, encoder: Encoder) -> EncoderOutput:
    """Unbatched, unfactored eval-mode encoder built directly from the layer functions.

    Used to cross-check the batched fast path.
    """
    from .attention import word_level_cross
    from .nn import gru_bidirectional

    cfg = encoder.cfg
    if cfg.word_xattn:
        r_c = word_level_cross(conv_e, slot_e, encoder.word_attn)
    else:
        r_c = ag.concat([conv_e, _zeros_like(conv_e)], axis=-1)
    h1c = gru_bidirectional(r_c, encoder.gru1_conv)
    h1s = gru_bidirectional(slot_e, encoder.gru1_slot)
    if cfg.high_xattn:
        r1s = cross_fuse(h1s, h1c, encoder.slot_to_hist)
        r1c = cross_fuse(h1c, h1s, encoder.hist_to_slot)
    else:
        r1s, r1c = fuse(h1s, _zeros_like(h1s)), fuse(h1c, _zeros_like(h1c))
    h2c = gru_bidirectional(r1c, encoder.gru2_conv)
    h2s = gru_bidirectional(r1s, encoder.gru2_slot)
    r2c = self_attend_fuse(h2c, encoder.self_attn) if cfg.self_attn else fuse(h2c, _zeros_like(h2c))
    h3c = gru_bidirectional(r2c, encoder.gru3_conv)
    summary = summarize_slot(h2s, encoder.summary_w) if cfg.slot_summarizer else mean_pool(h2s)
    return EncoderOutput(h3c, summary, ag.getitem(h3c, -1), np.ones(h3c.shape[0], dtype=bool))
