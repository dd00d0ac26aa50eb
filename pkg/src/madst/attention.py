"""Symmetric scaled multiplicative attention and the fusion layers built on it.

score(a, b) = relu(P q_a)^T diag(D) relu(P k_b), with one projection P shared
by both sides.  All functions accept optional leading batch axes.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import Module, linear, uniform_init


class SymAttention(Module):
    def __init__(self, in_dim: int, att_dim: int, rng: np.random.Generator):
        self.proj = uniform_init(rng, (att_dim, in_dim), in_dim)
        self.diag = Tensor(np.ones(att_dim), requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.proj.shape[1]

    def features(self, x: Tensor) -> Tensor:
        return ag.relu(linear(x, self.proj))


def sym_scores(q_feat: Tensor, k_feat: Tensor, params: SymAttention) -> Tensor:
    """Scores from already-projected features: ``[..., A, att] x [..., B, att] -> [..., A, B]``."""
    return ag.matmul(q_feat * params.diag, k_feat.T)


def _key_mask(mask: Optional[np.ndarray], b: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-1] != b:
        raise ag.ShapeError(f"mask length {mask.shape[-1]} != number of keys {b}")
    if not mask.any(axis=-1).all():
        raise ValueError("attention mask leaves no attendable position")
    return mask[..., None, :]


def attention_weights(queries: Tensor, keys: Tensor, params: SymAttention,
                      mask: Optional[np.ndarray] = None) -> Tensor:
    if queries.shape[-1] != params.in_dim or keys.shape[-1] != params.in_dim:
        raise ag.ShapeError(f"attention expects width {params.in_dim}, got {queries.shape} and {keys.shape}")
    if keys.shape[-2] < 1:
        raise ValueError("attention needs at least one key")
    scores = sym_scores(params.features(queries), params.features(keys), params)
    return ag.softmax(scores, axis=-1, mask=_key_mask(mask, keys.shape[-2]))


def sym_attend(queries: Tensor, keys: Tensor, values: Tensor, params: SymAttention,
               mask: Optional[np.ndarray] = None) -> tuple[Tensor, Tensor]:
    """Attend every query row over the key rows; returns ``(attended [.., A, v], weights [.., A, B])``."""
    weights = attention_weights(queries, keys, params, mask)
    return ag.matmul(weights, values), weights


def fuse(h: Tensor, h_hat: Tensor) -> Tensor:
    """``[h, h_hat, h_hat + h, h_hat * h]`` along the last axis."""
    return ag.concat([h, h_hat, h_hat + h, h_hat * h], axis=-1)


def word_level_cross(conv_emb: Tensor, slot_emb: Tensor, params: SymAttention,
                     slot_mask: Optional[np.ndarray] = None) -> Tensor:
    """Each conversation word attends over slot words; returns ``[.., J, 2 d_e]``."""
    attended, _ = sym_attend(conv_emb, slot_emb, slot_emb, params, slot_mask)
    return ag.concat([conv_emb, attended], axis=-1)


def cross_fuse(h_from: Tensor, h_to: Tensor, params: SymAttention,
               mask_to: Optional[np.ndarray] = None) -> Tensor:
    """Rows of ``h_from`` attend over ``h_to`` and are fused with the result: ``[.., A, 4h]``."""
    if h_from.shape[-1] != h_to.shape[-1]:
        raise ag.ShapeError(f"cross_fuse width mismatch: {h_from.shape} vs {h_to.shape}")
    attended, _ = sym_attend(h_from, h_to, h_to, params, mask_to)
    return fuse(h_from, attended)


def self_attend_fuse(h: Tensor, params: SymAttention, mask: Optional[np.ndarray] = None) -> Tensor:
    """Self-attention over a sequence (position included) fused as in :func:`cross_fuse`."""
    return cross_fuse(h, h, params, mask)
