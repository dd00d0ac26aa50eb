"""Enriched word embeddings: static | char | contextual (scalar mix) | POS | NER | turn."""
from __future__ import annotations

import hashlib
import string
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import ModelConfig
from .data import PAD_ID, Token, Vocab, slot_tokens
from .nn import GRU, Module, embedding_lookup, uniform_init

CHAR_ALPHABET = string.ascii_lowercase + string.digits + "':<>/"
CHAR_PAD, CHAR_UNK = 0, 1
_CHAR_IDS = {c: i + 2 for i, c in enumerate(CHAR_ALPHABET)}


class ContextualProvider(Protocol):
    """Frozen contextual embedder: ``surfaces -> [n_layers, len(surfaces), dim]``."""

    n_layers: int
    dim: int

    def __call__(self, surfaces: Sequence[str]) -> np.ndarray: ...


class HashContextualProvider:
    """Deterministic stand-in for a pretrained contextual model.

    Layer 0 depends on the word alone; higher layers also see the immediate
    neighbours, so the same word gets different vectors in different contexts.
    """

    def __init__(self, n_layers: int = 3, dim: int = 32, seed: int = 0):
        self.n_layers = n_layers
        self.dim = dim
        self.seed = seed
        self._cache: dict = {}

    def _vec(self, key: str) -> np.ndarray:
        v = self._cache.get(key)
        if v is None:
            digest = hashlib.blake2b(f"{self.seed}|{key}".encode(), digest_size=8).digest()
            v = np.random.default_rng(int.from_bytes(digest, "little")).normal(size=self.dim)
            self._cache[key] = v
        return v

    def __call__(self, surfaces: Sequence[str]) -> np.ndarray:
        out = np.empty((self.n_layers, len(surfaces), self.dim))
        padded = ["<bos>"] + list(surfaces) + ["<eos>"]
        for j, word in enumerate(surfaces):
            out[0, j] = self._vec(f"0|{word}")
            ctx = f"{padded[j]}|{word}|{padded[j + 2]}"
            for layer in range(1, self.n_layers):
                out[layer, j] = (self._vec(f"{layer}|{word}") + self._vec(f"{layer}|{ctx}")) / np.sqrt(2.0)
        return out


class ZeroProvider:
    def __init__(self, n_layers: int = 3, dim: int = 32):
        self.n_layers = n_layers
        self.dim = dim

    def __call__(self, surfaces: Sequence[str]) -> np.ndarray:
        return np.zeros((self.n_layers, len(surfaces), self.dim))


def load_static_vectors(path: str | Path, vocab: Vocab, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Rows for vocabulary words from a ``word v1 ... v_dim`` text file; random for the rest."""
    table = rng.uniform(-1.0 / np.sqrt(dim), 1.0 / np.sqrt(dim), size=(len(vocab), dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is not None:
                table[idx] = np.asarray(parts[1:], dtype=float)
    table[PAD_ID] = 0.0
    return table


class EmbeddingTables(Module):
    """All learnable lookup tables plus the char composer and the scalar mix."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab, rng: np.random.Generator,
                 static_vectors: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.vocab = vocab
        if static_vectors is None:
            static_vectors = rng.uniform(-1, 1, size=(len(vocab), cfg.static_dim)) / np.sqrt(cfg.static_dim)
            static_vectors[PAD_ID] = 0.0
        if static_vectors.shape != (len(vocab), cfg.static_dim):
            raise ag.ShapeError(f"static vectors {static_vectors.shape} != ({len(vocab)}, {cfg.static_dim})")
        self.static = Tensor(static_vectors, requires_grad=cfg.finetune_static)
        self.chars = uniform_init(rng, (len(CHAR_ALPHABET) + 2, cfg.char_dim), cfg.char_dim)
        self.char_gru = GRU(cfg.char_dim, cfg.char_out, rng)
        # row 0 of each tag table is the learned "absent" row
        self.pos = uniform_init(rng, (cfg.n_pos + 1, cfg.tag_dim), cfg.tag_dim)
        self.ner = uniform_init(rng, (cfg.n_ner + 1, cfg.tag_dim), cfg.tag_dim)
        self.turn = uniform_init(rng, (cfg.max_turns + 1, cfg.tag_dim), cfg.tag_dim)
        self.mix_logits = ag.Tensor(np.zeros(cfg.ctx_layers), requires_grad=True)
        self.mix_scale = ag.Tensor(np.ones(1), requires_grad=True)

    @property
    def dim(self) -> int:
        return self.cfg.embed_dim


def char_ids(surface: str) -> list[int]:
    if not surface:
        raise ValueError("cannot compose characters of an empty string")
    return [_CHAR_IDS.get(c, CHAR_UNK) for c in surface]


def char_compose_batch(surfaces: Sequence[str], tables: EmbeddingTables) -> Tensor:
    """Final hidden state of a GRU over character embeddings, ``[U, char_out]``."""
    ids = [char_ids(s) for s in surfaces]
    width = max(len(i) for i in ids)
    arr = np.full((len(ids), width), CHAR_PAD)
    mask = np.zeros((len(ids), width), dtype=bool)
    for row, i in enumerate(ids):
        arr[row, :len(i)] = i
        mask[row, :len(i)] = True
    states = tables.char_gru(embedding_lookup(tables.chars, arr), mask)
    # masked steps carry the state, so the last column is each word's final state
    return ag.getitem(states, (slice(None), -1))


def char_compose(surface: str, tables: EmbeddingTables) -> Tensor:
    return ag.getitem(char_compose_batch([surface], tables), 0)


def scalar_mix(layers: np.ndarray, tables: EmbeddingTables) -> Tensor:
    """``scale * sum_l softmax(logits)_l * layer_l`` over a frozen ``[L, ...]`` stack."""
    if layers.shape[0] != tables.mix_logits.shape[0]:
        raise ag.ShapeError(f"provider gave {layers.shape[0]} layers, scalar mix expects {tables.mix_logits.shape[0]}")
    w = ag.softmax(tables.mix_logits)
    w = ag.reshape(w, (layers.shape[0],) + (1,) * (layers.ndim - 1))
    return ag.sum_(w * Tensor(layers), axis=0) * tables.mix_scale


def _tag_row(tag: Optional[int], size: int) -> int:
    if tag is None:
        return 0
    if not 0 <= tag < size:
        raise ValueError(f"tag id {tag} outside vocabulary of size {size}")
    return tag + 1


def embed_batch(seqs: Sequence[Sequence[Token]], tables: EmbeddingTables, provider: ContextualProvider,
                training: bool = False, rng: Optional[np.random.Generator] = None,
                isolated: bool = False) -> tuple[Tensor, np.ndarray]:
    """Embed padded token sequences: ``([B, J, d_e], mask [B, J])``.

    ``isolated`` asks the contextual provider for each word on its own (used
    for slot names, so a word shared by two slots embeds identically).
    """
    cfg = tables.cfg
    if any(len(s) == 0 for s in seqs):
        raise ValueError("cannot embed an empty token sequence")
    b, j = len(seqs), max(len(s) for s in seqs)
    mask = np.zeros((b, j), dtype=bool)
    word = np.full((b, j), PAD_ID)
    pos = np.zeros((b, j), dtype=int)
    ner = np.zeros((b, j), dtype=int)
    turn = np.zeros((b, j), dtype=int)
    char_row = np.zeros((b, j), dtype=int)
    ctx = np.zeros((provider.n_layers, b, j, provider.dim))
    uniq: dict[str, int] = {}
    for r, seq in enumerate(seqs):
        mask[r, :len(seq)] = True
        if isolated:
            for c, tok in enumerate(seq):
                ctx[:, r, c] = provider([tok.surface])[:, 0]
        else:
            ctx[:, r, :len(seq)] = provider([t.surface for t in seq])
        for c, tok in enumerate(seq):
            word[r, c] = tables.vocab.id(tok.surface)
            pos[r, c] = _tag_row(tok.pos_tag, cfg.n_pos)
            ner[r, c] = _tag_row(tok.ner_tag, cfg.n_ner)
            turn[r, c] = 0 if tok.turn_index is None else min(tok.turn_index, cfg.max_turns - 1) + 1
            char_row[r, c] = uniq.setdefault(tok.surface, len(uniq))
    if provider.dim != cfg.ctx_dim:
        raise ag.ShapeError(f"provider dim {provider.dim} != configured ctx_dim {cfg.ctx_dim}")

    chars = ag.getitem(char_compose_batch(list(uniq), tables), char_row)
    mixed = ag.dropout(scalar_mix(ctx, tables), cfg.ctx_dropout, training, rng)
    e = ag.concat([
        embedding_lookup(tables.static, word),
        chars,
        mixed,
        embedding_lookup(tables.pos, pos),
        embedding_lookup(tables.ner, ner),
        embedding_lookup(tables.turn, turn),
    ], axis=-1)
    return e, mask


def embed_conversation(tokens: Sequence[Token], tables: EmbeddingTables, provider: ContextualProvider,
                       training: bool = False, rng=None) -> Tensor:
    """``[J, d_e]`` embeddings of a conversation history."""
    e, _ = embed_batch([tokens], tables, provider, training, rng)
    return ag.getitem(e, 0)


def slot_name_tokens(slot: str) -> list[Token]:
    return [Token(w) for w in slot_tokens(slot)]


def embed_slot(slot_name: str | Sequence[Token], tables: EmbeddingTables, provider: ContextualProvider,
               training: bool = False, rng=None) -> Tensor:
    """``[K, d_e]`` embeddings of a ``domain-slot`` name; tag features use the absent rows."""
    tokens = slot_name_tokens(slot_name) if isinstance(slot_name, str) else list(slot_name)
    if not tokens:
        raise ValueError("empty slot name")
    e, _ = embed_batch([[Token(t.surface) for t in tokens]], tables, provider, training, rng, isolated=True)
    return ag.getitem(e, 0)
