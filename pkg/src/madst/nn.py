"""Layer primitives built on :mod:`madst.autograd`."""
from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape: tuple) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Module:
    """Container that discovers parameters from its attributes, in definition order."""

    training = False

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=ag.DTYPE)
            if arr.shape != p.shape:
                raise ag.ShapeError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for value in vars(self).values():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` shaped ``[out, in]``."""
    y = ag.matmul(x, weight.T)
    return y if bias is None else y + bias


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    return ag.getitem(table, np.asarray(ids))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = uniform_init(rng, (out_features, in_features), in_features)
        if bias:
            self.bias = zeros_param((out_features,))

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, getattr(self, "bias", None))


class GRU(Module):
    """One direction of a GRU; gate order everywhere is (update, reset, candidate)."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        for gate in "zrn":
            setattr(self, f"w_{gate}", uniform_init(rng, (hidden_size, input_size), input_size))
        for gate in "zrn":
            setattr(self, f"u_{gate}", uniform_init(rng, (hidden_size, hidden_size), hidden_size))
        for gate in "zrn":
            setattr(self, f"b_{gate}", zeros_param((hidden_size,)))

    def input_weight(self) -> tuple[Tensor, Tensor]:
        return (ag.concat([self.w_z, self.w_r, self.w_n], axis=0),
                ag.concat([self.b_z, self.b_r, self.b_n], axis=0))

    def recurrent_weight(self) -> Tensor:
        return ag.concat([self.u_z, self.u_r, self.u_n], axis=0)

    def scan(self, xproj: Tensor, mask: Optional[np.ndarray] = None, h0: Optional[Tensor] = None) -> Tensor:
        """xproj ``[N, T, 3H]`` -> hidden states ``[N, T, H]``."""
        u = ag.reshape(self.recurrent_weight(), (1, 3 * self.hidden_size, self.hidden_size))
        xp = ag.reshape(xproj, (1,) + xproj.shape)
        m = None if mask is None else np.asarray(mask)[None]
        h = None if h0 is None else ag.reshape(h0, (1,) + h0.shape)
        return ag.getitem(ag.gru_scan(xp, u, m, h), 0)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None, h0: Optional[Tensor] = None) -> Tensor:
        w, b = self.input_weight()
        return self.scan(linear(x, w, b), mask, h0)


class BiGRU(Module):
    """Bidirectional GRU whose output averages the two directions per time step."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.fwd = GRU(input_size, hidden_size, rng)
        self.bwd = GRU(input_size, hidden_size, rng)

    def input_weight(self) -> tuple[Tensor, Tensor]:
        """Both directions' input weights stacked: ``[6H, in]`` and ``[6H]``."""
        wf, bf = self.fwd.input_weight()
        wb, bb = self.bwd.input_weight()
        return ag.concat([wf, wb], axis=0), ag.concat([bf, bb], axis=0)

    def project(self, x: Tensor) -> Tensor:
        w, b = self.input_weight()
        return linear(x, w, b)

    def scan(self, xproj: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        """xproj ``[N, T, 6H]`` (forward gates then backward gates) -> ``[N, T, H]``."""
        if xproj.ndim != 3:
            raise ag.ShapeError(f"BiGRU.scan expects [N, T, 6H], got {xproj.shape}")
        n, steps, _ = xproj.shape
        if steps < 1:
            raise ValueError("bidirectional GRU needs a non-empty sequence")
        hid = self.hidden_size
        xf = ag.getitem(xproj, (slice(None), slice(None), slice(0, 3 * hid)))
        xb = ag.getitem(xproj, (slice(None), slice(None, None, -1), slice(3 * hid, 6 * hid)))
        m = np.ones((n, steps), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        masks = np.stack([m, m[:, ::-1]])
        u = ag.stack([self.fwd.recurrent_weight(), self.bwd.recurrent_weight()])
        hs = ag.gru_scan(ag.stack([xf, xb]), u, masks)
        h_fwd = ag.getitem(hs, 0)
        h_bwd = ag.getitem(hs, (1, slice(None), slice(None, None, -1)))
        return (h_fwd + h_bwd) * 0.5

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        return self.scan(self.project(x), mask)


def gru_bidirectional(inputs: Tensor, params: BiGRU, mask: Optional[np.ndarray] = None) -> Tensor:
    """Bi-GRU over ``[T, d_in]`` (or batched ``[N, T, d_in]``), directions averaged."""
    if inputs.shape[-2] < 1:
        raise ValueError("bidirectional GRU needs a non-empty sequence")
    if inputs.ndim == 2:
        out = params(ag.reshape(inputs, (1,) + inputs.shape), None if mask is None else np.asarray(mask)[None])
        return ag.getitem(out, 0)
    return params(inputs, mask)
