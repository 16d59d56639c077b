"""
Parameters and layers built on lib.autograd.

ParamStore owns every trainable tensor under a unique slash-separated name
(feature/, aux_feature/, session/, head/). Layers are thin callables that
hold references to their parameters in the store.
"""
from __future__ import annotations

import hashlib
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autograd import Tensor, gelu, layer_norm, masked_softmax, relu, take_rows
from .errors import CheckpointError, ShapeError

logger = logging.getLogger(__name__)

EMBEDDING_STD = 0.02


class Parameter(Tensor):
    """A named leaf tensor that receives gradients unless frozen."""

    __slots__ = ("name",)

    def __init__(self, name: str, data: np.ndarray):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def frozen(self) -> bool:
        return not self.requires_grad

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape}, frozen={self.frozen})"


class ParamStore:
    """
    Ordered name -> Parameter mapping with seeded initialisation.

    Dense weights use U(-1/sqrt(fan_in), 1/sqrt(fan_in)); embedding tables
    and learned positions use N(0, 0.02).
    """

    def __init__(self, seed: int = 0):
        self._params: Dict[str, Parameter] = {}
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def names(self, prefix: str = "") -> List[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def parameters(self, prefix: str = "", trainable_only: bool = False) -> List[Parameter]:
        return [p for n, p in self._params.items()
                if n.startswith(prefix) and (p.requires_grad or not trainable_only)]

    def add(self, name: str, data: np.ndarray) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        param = Parameter(name, data)
        self._params[name] = param
        return param

    def dense(self, name: str, out_features: int, in_features: int) -> Tuple[Parameter, Parameter]:
        bound = 1.0 / np.sqrt(in_features)
        weight = self.add(f"{name}/W", self.rng.uniform(-bound, bound, size=(out_features, in_features)))
        bias = self.add(f"{name}/b", self.rng.uniform(-bound, bound, size=(out_features,)))
        return weight, bias

    def normal(self, name: str, shape: Tuple[int, ...], std: float = EMBEDDING_STD) -> Parameter:
        return self.add(name, self.rng.normal(0.0, std, size=shape))

    def constant(self, name: str, shape: Tuple[int, ...], value: float) -> Parameter:
        return self.add(name, np.full(shape, value, dtype=np.float64))

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad = np.zeros_like(param.data)

    def freeze(self, prefix: str) -> int:
        """Stop gradient flow into every parameter under prefix; returns how many."""
        params = self.parameters(prefix)
        for param in params:
            param.requires_grad = False
        logger.info(f"Froze {len(params)} parameters under '{prefix}'")
        return len(params)

    def fill(self, value: float, prefix: str = "") -> None:
        for param in self.parameters(prefix):
            param.data[...] = value

    def checksum(self, prefix: str = "") -> str:
        """sha256 over names, shapes and raw bytes of the parameters under prefix."""
        digest = hashlib.sha256()
        for name in self.names(prefix):
            data = np.ascontiguousarray(self._params[name].data)
            digest.update(name.encode("utf-8"))
            digest.update(str(data.shape).encode("utf-8"))
            digest.update(data.tobytes())
        return digest.hexdigest()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy values in place; names and shapes must match exactly."""
        missing = sorted(set(self._params) - set(state))
        unexpected = sorted(set(state) - set(self._params))
        if missing or unexpected:
            raise CheckpointError(f"parameter schema mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, param in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise CheckpointError(f"shape mismatch for {name}: checkpoint {value.shape}, model {param.shape}")
            param.data = value.copy()


# ----------------------------------------------------------------------
# functional forms
# ----------------------------------------------------------------------

def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """y = x W^T + b over the last axis of x."""
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} does not match weight {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ShapeError(f"linear: bias shape {b.shape} does not match weight {W.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(1, x.shape[0])
    y = x @ W.T
    if b is not None:
        y = y + b
    return y.reshape(y.shape[-1]) if squeeze else y


_ACTIVATIONS = {"relu": relu, "gelu": gelu}


def mlp(x: Tensor, layers: Sequence[Tuple[Tensor, Tensor]], activation: str = "relu") -> Tensor:
    """Stacked linear layers with an activation between layers and none after the last."""
    act = _ACTIVATIONS[activation]
    for i, (W, b) in enumerate(layers):
        x = linear(x, W, b)
        if i < len(layers) - 1:
            x = act(x)
    return x


# ----------------------------------------------------------------------
# layers
# ----------------------------------------------------------------------

class Linear:
    def __init__(self, store: ParamStore, name: str, in_features: int, out_features: int):
        self.W, self.b = store.dense(name, out_features, in_features)

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.W, self.b)


class MLP:
    def __init__(self, store: ParamStore, name: str, sizes: Sequence[int], activation: str = "relu"):
        self.layers = [store.dense(f"{name}/{i}", sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return mlp(x, self.layers, self.activation)


class Embedding:
    def __init__(self, store: ParamStore, name: str, rows: int, dim: int):
        self.table = store.normal(f"{name}/table", (rows, dim))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return take_rows(self.table, ids)


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.gamma = store.constant(f"{name}/gamma", (dim,), 1.0)
        self.beta = store.constant(f"{name}/beta", (dim,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


def causal_mask(seq_len: int) -> np.ndarray:
    """mask[q, k] is True iff position q may attend to position k (k <= q)."""
    return np.tril(np.ones((seq_len, seq_len), dtype=bool))


class CausalSelfAttention:
    """Multi-head self-attention with a strict causal mask over [B, T, dim] inputs."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int):
        if dim % heads:
            raise ShapeError(f"dim {dim} is not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(store, f"{name}/query", dim, dim)
        self.key = Linear(store, f"{name}/key", dim, dim)
        self.value = Linear(store, f"{name}/value", dim, dim)
        self.proj = Linear(store, f"{name}/proj", dim, dim)

    def _split(self, x: Tensor) -> Tensor:
        batch, seq, _ = x.shape
        return x.reshape(batch, seq, self.heads, self.head_dim).swapaxes(1, 2)

    def __call__(self, x: Tensor) -> Tensor:
        batch, seq, _ = x.shape
        q = self._split(self.query(x))
        k = self._split(self.key(x))
        v = self._split(self.value(x))
        scores = (q @ k.T) * (1.0 / np.sqrt(self.head_dim))
        weights = masked_softmax(scores, causal_mask(seq))
        out = (weights @ v).swapaxes(1, 2).reshape(batch, seq, self.dim)
        return self.proj(out)


class TransformerBlock:
    """Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)) with a 4x GELU MLP."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int):
        self.ln1 = LayerNorm(store, f"{name}/ln1", dim)
        self.attn = CausalSelfAttention(store, f"{name}/attn", dim, heads)
        self.ln2 = LayerNorm(store, f"{name}/ln2", dim)
        self.mlp = MLP(store, f"{name}/mlp", [dim, 4 * dim, dim], activation="gelu")

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


def causal_attention_stack(tokens: Tensor, blocks: Sequence[TransformerBlock], final_norm: LayerNorm) -> Tensor:
    """Run [seq, dim] or [batch, seq, dim] tokens through the blocks and the final LayerNorm."""
    single = tokens.ndim == 2
    if single:
        tokens = tokens.reshape(1, *tokens.shape)
    if tokens.ndim != 3:
        raise ShapeError(f"expected [seq, dim] or [batch, seq, dim] tokens, got {tokens.shape}")
    x = tokens
    for block in blocks:
        x = block(x)
    x = final_norm(x)
    return x.reshape(*x.shape[1:]) if single else x


class CausalTransformer:
    """GPT-2 style stack of pre-norm causal blocks with a final LayerNorm."""

    def __init__(self, store: ParamStore, name: str, dim: int, layers: int, heads: int, max_seq_len: int):
        if dim % heads:
            raise ShapeError(f"dim {dim} is not divisible by heads {heads}")
        self.dim = dim
        self.max_seq_len = max_seq_len
        self.blocks = [TransformerBlock(store, f"{name}/block{i}", dim, heads) for i in range(layers)]
        self.final_norm = LayerNorm(store, f"{name}/ln_f", dim)

    def __call__(self, tokens: Tensor) -> Tensor:
        if tokens.shape[-1] != self.dim:
            raise ShapeError(f"token dim {tokens.shape[-1]} != model dim {self.dim}")
        if tokens.shape[-2] > self.max_seq_len:
            raise ShapeError(f"sequence length {tokens.shape[-2]} exceeds {self.max_seq_len}")
        return causal_attention_stack(tokens, self.blocks, self.final_norm)
