"""
Neck transformer: embedding lineal, codificación posicional aprendible y
una pila de capas pre-norm (atención multi-cabeza + MLP, ambas residuales).
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import truncnorm

from services.autodiff import engine as E
from services.autodiff.engine import Tensor
from services.errors import ConfigError, DimensionError, NumericError

logger = logging.getLogger(__name__)


class NeckConfig(BaseModel):
    layers: int = Field(2, ge=1)
    heads: Optional[int] = Field(None, ge=1)  # por defecto igual a `layers`
    d_model: int = Field(64, ge=2)
    d_in: int = Field(..., ge=1)
    d_out: int = Field(..., ge=1)
    tokens: int = Field(1, ge=1)
    mlp_expansion: int = Field(4, ge=1)
    init_std: float = Field(0.02, gt=0)
    seed: int = 0

    @property
    def resolved_heads(self) -> int:
        return self.heads if self.heads is not None else self.layers

    @property
    def head_dim(self) -> int:
        return self.d_model // self.resolved_heads

    def variant_name(self) -> str:
        return f"neck_{self.layers}L"


def parameter_count(cfg: NeckConfig) -> int:
    """
    Conteo cerrado de parámetros:
    D_in·d + d + T·d + L·(4d² + 9d + 2e·d² + e·d) + d·D_out + D_out
    """
    d, e = cfg.d_model, cfg.mlp_expansion
    per_layer = 4 * d * d + 9 * d + 2 * e * d * d + e * d
    return cfg.d_in * d + d + cfg.tokens * d + cfg.layers * per_layer + d * cfg.d_out + cfg.d_out


def _parameter_shapes(cfg: NeckConfig) -> Iterator[Tuple[str, Tuple[int, ...], str]]:
    d, hidden = cfg.d_model, cfg.d_model * cfg.mlp_expansion
    yield "embed.weight", (cfg.d_in, d), "weight"
    yield "embed.bias", (d,), "zeros"
    yield "pos", (cfg.tokens, d), "zeros"
    for i in range(cfg.layers):
        p = f"layers.{i}"
        yield f"{p}.ln1.gain", (d,), "ones"
        yield f"{p}.ln1.bias", (d,), "zeros"
        for proj in ("q", "k", "v", "o"):
            yield f"{p}.attn.{proj}.weight", (d, d), "weight"
            yield f"{p}.attn.{proj}.bias", (d,), "zeros"
        yield f"{p}.ln2.gain", (d,), "ones"
        yield f"{p}.ln2.bias", (d,), "zeros"
        yield f"{p}.mlp.fc1.weight", (d, hidden), "weight"
        yield f"{p}.mlp.fc1.bias", (hidden,), "zeros"
        yield f"{p}.mlp.fc2.weight", (hidden, d), "weight"
        yield f"{p}.mlp.fc2.bias", (d,), "zeros"
    yield "out.weight", (d, cfg.d_out), "weight"
    yield "out.bias", (cfg.d_out,), "zeros"


@dataclass
class NeckParams:
    config: NeckConfig
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def with_tensors(self, replacement: Mapping[str, Tensor]) -> "NeckParams":
        merged = dict(self.tensors)
        merged.update(replacement)
        return NeckParams(config=self.config, tensors=merged)

    def copy(self, requires_grad: bool = True) -> "NeckParams":
        return NeckParams(
            config=self.config,
            tensors={n: Tensor(t.data, requires_grad=requires_grad, name=n) for n, t in self.tensors.items()},
        )

    def frozen(self) -> "NeckParams":
        return self.copy(requires_grad=False)

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, t in self.tensors.items():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()


def _trunc_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    return truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)


def neck_init(cfg: NeckConfig) -> NeckParams:
    """Pesos ~ normal truncada (std 0.02), sesgos 0, tabla posicional 0, ganancias 1"""
    heads = cfg.resolved_heads
    if cfg.d_model % heads != 0:
        raise ConfigError(f"d_model={cfg.d_model} no es divisible por heads={heads}")
    rng = np.random.default_rng(cfg.seed)
    tensors: Dict[str, Tensor] = {}
    for name, shape, kind in _parameter_shapes(cfg):
        if kind == "weight":
            data = _trunc_normal(rng, shape, cfg.init_std)
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    params = NeckParams(config=cfg, tensors=tensors)
    logger.debug(f"neck {cfg.variant_name()} inicializado: {params.count()} parámetros")
    return params


def _split_heads(t: Tensor, n: int, tokens: int, heads: int, head_dim: int) -> Tensor:
    t = E.reshape(t, (n, tokens, heads, head_dim))
    t = E.transpose(t, (0, 2, 1, 3))
    return E.reshape(t, (n * heads, tokens, head_dim))


def _merge_heads(t: Tensor, n: int, tokens: int, heads: int, head_dim: int) -> Tensor:
    t = E.reshape(t, (n, heads, tokens, head_dim))
    t = E.transpose(t, (0, 2, 1, 3))
    return E.reshape(t, (n * tokens, heads * head_dim))


def _self_attention(params: NeckParams, prefix: str, h: Tensor, n: int, tokens: int) -> Tensor:
    cfg = params.config
    heads, head_dim = cfg.resolved_heads, cfg.head_dim
    q = E.linear(h, params[f"{prefix}.q.weight"], params[f"{prefix}.q.bias"])
    k = E.linear(h, params[f"{prefix}.k.weight"], params[f"{prefix}.k.bias"])
    v = E.linear(h, params[f"{prefix}.v.weight"], params[f"{prefix}.v.bias"])
    ctx = E.attention(
        _split_heads(q, n, tokens, heads, head_dim),
        _split_heads(k, n, tokens, heads, head_dim),
        _split_heads(v, n, tokens, heads, head_dim),
    )
    ctx = _merge_heads(ctx, n, tokens, heads, head_dim)
    return E.linear(ctx, params[f"{prefix}.o.weight"], params[f"{prefix}.o.bias"])


def neck_forward(params: NeckParams, x: Tensor, use_positions: bool = True) -> Tensor:
    """(N, T, D_in) -> (N, T, D_out)"""
    cfg = params.config
    if x.ndim != 3 or x.shape[1] != cfg.tokens or x.shape[2] != cfg.d_in:
        raise DimensionError("neck_forward", x.shape, ("N", cfg.tokens, cfg.d_in))
    n, tokens = x.shape[0], cfg.tokens

    h = E.reshape(x, (n * tokens, cfg.d_in))
    h = E.linear(h, params["embed.weight"], params["embed.bias"])
    if use_positions:
        h = E.add(h, E.tile_rows(params["pos"], n))

    for i in range(cfg.layers):
        p = f"layers.{i}"
        a = E.layer_norm(h, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
        h = E.add(h, _self_attention(params, f"{p}.attn", a, n, tokens))
        m = E.layer_norm(h, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
        m = E.gelu(E.linear(m, params[f"{p}.mlp.fc1.weight"], params[f"{p}.mlp.fc1.bias"]))
        m = E.linear(m, params[f"{p}.mlp.fc2.weight"], params[f"{p}.mlp.fc2.bias"])
        h = E.add(h, m)
        if not np.all(np.isfinite(h.data)):
            raise NumericError(f"valores no finitos a la salida de la capa {i}", {"layer": i})

    out = E.linear(h, params["out.weight"], params["out.bias"])
    return E.reshape(out, (n, tokens, cfg.d_out))


def neck_apply(params: NeckParams, features: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Forward sin gradiente sobre un arreglo completo, por lotes"""
    frozen = params.frozen()
    chunks = []
    for start in range(0, features.shape[0], batch_size):
        chunk = Tensor(features[start:start + batch_size])
        chunks.append(neck_forward(frozen, chunk).data)
    return np.concatenate(chunks, axis=0)
