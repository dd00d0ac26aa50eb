"""The full tracker: embeddings, encoder, gate and decoder behind one parameter tree."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autograd as ag
from .config import ModelConfig
from .data import (DONTCARE, END_ID, NONE, PAD_ID, Example, SlotCatalog, Token, Vocab,
                   slot_tokens, tokenize)
from .decoder import (GATE_CLASSES, GATE_GEN, GATE_NONE, Decoder, combined_loss,
                      gate_classify, gate_label, greedy_decode, teacher_forced)
from .encoder import Encoder, EncoderOutput
from .features import ContextualProvider, EmbeddingTables, HashContextualProvider, embed_batch
from .nn import Module


@dataclass
class Batch:
    examples: list[Example]
    slots: list[str]
    pair_turn: np.ndarray   # [N] index into examples
    pair_slot: np.ndarray   # [N] index into slots
    hist_ids: np.ndarray    # [T, J] extended ids of history words
    oov_words: list[str]    # extended ids vocab_size + i
    gate_gold: np.ndarray   # [N]
    gen_rows: np.ndarray    # [M] pairs whose gold gate is gen
    target: np.ndarray      # [M, L] extended ids ending with END, PAD after
    target_mask: np.ndarray  # [M, L]
    vocab_size: int

    @property
    def ext_size(self) -> int:
        return self.vocab_size + len(self.oov_words)

    def __len__(self) -> int:
        return len(self.pair_turn)


@dataclass
class Prediction:
    dialogue_id: str
    turn: int
    slot: str
    gate: str
    value: str

    def to_json(self) -> dict:
        return {"dialog_id": self.dialogue_id, "turn": self.turn, "slot": self.slot,
                "gate": self.gate, "value": self.value}


class MADST(Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocab, catalog: SlotCatalog, seed: int = 0,
                 provider: Optional[ContextualProvider] = None, static_vectors: Optional[np.ndarray] = None):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.vocab = vocab
        self.catalog = catalog
        self.provider = provider or HashContextualProvider(cfg.ctx_layers, cfg.ctx_dim, seed=seed)
        self.tables = EmbeddingTables(cfg, vocab, rng, static_vectors)
        self.encoder = Encoder(cfg, rng)
        self.decoder = Decoder(cfg, len(vocab), rng)

    # ------------------------------------------------------------ batching

    def make_batch(self, examples: Sequence[Example], slots: Optional[Sequence[str]] = None) -> Batch:
        slots = list(self.catalog) if slots is None else list(slots)
        vocab = self.vocab
        n_t, n_s = len(examples), len(slots)
        pair_turn = np.repeat(np.arange(n_t), n_s)
        pair_slot = np.tile(np.arange(n_s), n_t)

        width = max(len(ex.history) for ex in examples)
        hist_ids = np.full((n_t, width), PAD_ID)
        oov: dict[str, int] = {}
        for r, ex in enumerate(examples):
            for c, tok in enumerate(ex.history):
                if tok.surface in vocab:
                    hist_ids[r, c] = vocab.stoi[tok.surface]
                else:
                    hist_ids[r, c] = len(vocab) + oov.setdefault(tok.surface, len(oov))

        gate_gold = np.array([gate_label(examples[t].state.get(slots[s], NONE))
                              for t, s in zip(pair_turn, pair_slot)], dtype=int)
        gen_rows = np.flatnonzero(gate_gold == GATE_GEN)
        seqs = []
        for row in gen_rows:
            words = tokenize(examples[pair_turn[row]].state[slots[pair_slot[row]]])[:self.cfg.max_decode_len]
            ids = [vocab.stoi[w] if w in vocab else len(vocab) + oov[w] if w in oov else vocab.id(w) for w in words]
            seqs.append(ids + [END_ID])
        length = max((len(s) for s in seqs), default=1)
        target = np.full((len(seqs), length), PAD_ID)
        target_mask = np.zeros((len(seqs), length), dtype=bool)
        for r, s in enumerate(seqs):
            target[r, :len(s)] = s
            target_mask[r, :len(s)] = True
        return Batch(list(examples), slots, pair_turn, pair_slot, hist_ids, list(oov), gate_gold,
                     gen_rows, target, target_mask, len(vocab))

    # ------------------------------------------------------------ forward

    def encode(self, batch: Batch, rng=None) -> EncoderOutput:
        training = self.training
        conv_e, conv_mask = embed_batch([ex.history for ex in batch.examples], self.tables, self.provider,
                                        training, rng)
        slot_e, slot_mask = embed_batch([[Token(w) for w in slot_tokens(s)] for s in batch.slots],
                                        self.tables, self.provider, training, rng, isolated=True)
        return self.encoder(conv_e, conv_mask, slot_e, slot_mask, batch.pair_turn, batch.pair_slot, rng)

    def loss(self, batch: Batch, gamma: float = 1.0, rng=None) -> tuple[ag.Tensor, dict]:
        enc = self.encode(batch, rng)
        gate_probs = gate_classify(enc, self.decoder)
        p_final = None
        if len(batch.gen_rows):
            sub = select_pairs(enc, batch.gen_rows)
            dist = teacher_forced(sub, batch.target, self.tables.static, batch.hist_ids[batch.pair_turn[batch.gen_rows]],
                                  batch.ext_size, self.decoder)
            p_final = dist.p_final
        total, gen, cls = combined_loss(gate_probs, batch.gate_gold, p_final, batch.target, batch.target_mask,
                                        batch.gen_rows, gamma)
        if self.cfg.ctx_l2 > 0:
            total = total + ag.sum_(self.tables.mix_logits * self.tables.mix_logits) * self.cfg.ctx_l2
        return total, {"generator": gen.item(), "classifier": cls.item()}

    def predict(self, batch: Batch) -> list[Prediction]:
        with ag.no_grad():
            enc = self.encode(batch)
            gates = gate_classify(enc, self.decoder).data.argmax(axis=-1)
            values = [NONE if g == GATE_NONE else DONTCARE for g in gates]
            gen = np.flatnonzero(gates == GATE_GEN)
            if len(gen):
                decoded = greedy_decode(select_pairs(enc, gen), self.tables.static,
                                        batch.hist_ids[batch.pair_turn[gen]], batch.ext_size, self.decoder)
                for row, ids in zip(gen, decoded):
                    values[row] = " ".join(self.id_to_word(i, batch) for i in ids)
        out = []
        for row, (t, s) in enumerate(zip(batch.pair_turn, batch.pair_slot)):
            ex = batch.examples[t]
            out.append(Prediction(ex.dialogue_id, ex.turn, batch.slots[s], GATE_CLASSES[gates[row]], values[row]))
        return out

    def id_to_word(self, idx: int, batch: Batch) -> str:
        if idx < len(self.vocab):
            return self.vocab.itos[idx]
        return batch.oov_words[idx - len(self.vocab)]


def select_pairs(enc: EncoderOutput, rows: np.ndarray) -> EncoderOutput:
    rows = np.asarray(rows)
    return EncoderOutput(ag.getitem(enc.history_repr, rows), ag.getitem(enc.slot_summary, rows),
                         ag.getitem(enc.history_final, rows), enc.history_mask[rows])

