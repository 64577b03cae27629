"""
Motor de tensores densos con diferenciación en modo reverso.
Cada forward construye su propia cinta (grafo dinámico); `backward` la recorre
en orden topológico inverso visitando cada nodo una sola vez.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from services.errors import DimensionError, NumericError, UsageError

logger = logging.getLogger(__name__)

COMPUTE_DTYPE = np.float64
LAYER_NORM_EPS = 1e-5

Scalar = Union[int, float]


class Tensor:
    """Tensor denso en doble precisión con gradiente opcional"""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=COMPUTE_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @classmethod
    def _node(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        # Resultado intermedio: no copia los datos
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.name = None
        out.grad = None
        out.op = op
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() requiere un tensor escalar, forma {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self, params: Optional[Mapping[str, "Tensor"]] = None) -> Dict[str, np.ndarray]:
        return backward(self, params=params)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # Operadores
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("división solo por escalares de Python")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        if self.ndim == 3:
            return bmm(self, other)
        return matmul(self, other)


@dataclass
class Graph:
    """Cinta de un forward: nodos en orden topológico y hojas entrenables"""

    nodes: List[Tensor] = field(default_factory=list)
    leaves: List[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        leaves = [n for n in order if n.requires_grad and not n._parents]
        return cls(nodes=order, leaves=leaves)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=COMPUTE_DTYPE)
    else:
        t.grad = t.grad + g


def backward(loss: Tensor, params: Optional[Mapping[str, Tensor]] = None,
             graph: Optional[Graph] = None) -> Dict[str, np.ndarray]:
    """
    Gradientes exactos en modo reverso de una pérdida escalar.
    Los parámetros no alcanzados reciben gradiente cero.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward requiere una pérdida escalar, forma {loss.shape}")
    graph = graph or Graph.trace(loss)
    for node in graph.nodes:
        node.grad = None
    if params is not None:
        for p in params.values():
            p.grad = None

    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
        for node in reversed(graph.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    if params is None:
        params = {(leaf.name or f"leaf{i}"): leaf for i, leaf in enumerate(graph.leaves)}
    grads: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        grads[name] = p.grad
    return grads


# ---- Elementales ----

def _broadcast_pair(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(op, a.shape, b.shape)


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    if t.ndim == 0 and g.ndim > 0:
        return np.asarray(g.sum())
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_pair("add", a, b)
    out = Tensor._node(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _backward(g):
            _accumulate(a, _reduce_to(g, a))
            _accumulate(b, _reduce_to(g, b))
        out._backward = _backward
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor._node(-a.data, (a,), "neg")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, -g)
    return out


def sub(a, b) -> Tensor:
    return add(a, neg(_as_tensor(b)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_pair("mul", a, b)
    out = Tensor._node(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _backward(g):
            _accumulate(a, _reduce_to(g * b.data, a))
            _accumulate(b, _reduce_to(g * a.data, b))
        out._backward = _backward
    return out


def scale(a: Tensor, c: Scalar) -> Tensor:
    c = float(c)
    out = Tensor._node(a.data * c, (a,), "scale")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * c)
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor._node(np.where(mask, a.data, 0.0), (a,), "relu")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * mask)
    return out


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    # Formulación exacta con erf
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = Tensor._node(a.data * cdf, (a,), "gelu")
    if out.requires_grad:
        def _backward(g):
            pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
            _accumulate(a, g * (cdf + a.data * pdf))
        out._backward = _backward
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor._node(y, (a,), "tanh")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * (1.0 - y * y))
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor._node(y, (a,), "exp")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g * y)
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log de un valor no positivo")
    out = Tensor._node(np.log(a.data), (a,), "log")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g / a.data)
    return out


def square(a: Tensor) -> Tensor:
    out = Tensor._node(a.data * a.data, (a,), "square")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, 2.0 * g * a.data)
    return out


_ELEMENTWISE = {"add": add, "mul": mul, "relu": relu, "gelu": gelu, "tanh": tanh,
                "exp": exp, "log": log, "square": square}


def elementwise(op: str, *inputs) -> Tensor:
    """Despacho por nombre de las operaciones elemento a elemento"""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise UsageError(f"operación elemental desconocida '{op}'; válidas: {sorted(_ELEMENTWISE)}")
    return fn(*inputs)


# ---- Reducciones y forma ----

def sum_all(a: Tensor) -> Tensor:
    out = Tensor._node(np.asarray(a.data.sum()), (a,), "sum")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, np.broadcast_to(g, a.shape))
    return out


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor._node(np.asarray(a.data.sum() / n), (a,), "mean")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, np.broadcast_to(g / n, a.shape))
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    out = Tensor._node(a.data.reshape(tuple(shape)), (a,), "reshape")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g.reshape(original))
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor._node(np.ascontiguousarray(a.data.transpose(axes)), (a,), "transpose")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(a, g.transpose(inverse))
    return out


def repeat_rows(v: Tensor, n: int) -> Tensor:
    """Expande un vector (D,) a una matriz (n, D); sustituto explícito del broadcasting"""
    if v.ndim != 1:
        raise DimensionError("repeat_rows", v.shape)
    out = Tensor._node(np.tile(v.data, (n, 1)), (v,), "repeat_rows")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(v, g.sum(axis=0))
    return out


def tile_rows(m: Tensor, n: int) -> Tensor:
    """Repite una matriz (T, D) n veces apilada en filas: (n·T, D)"""
    if m.ndim != 2:
        raise DimensionError("tile_rows", m.shape)
    rows = m.shape[0]
    out = Tensor._node(np.tile(m.data, (n, 1)), (m,), "tile_rows")
    if out.requires_grad:
        out._backward = lambda g: _accumulate(m, g.reshape(n, rows, -1).sum(axis=0))
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError("concat_cols", a.shape, b.shape)
    split = a.shape[1]
    out = Tensor._node(np.concatenate([a.data, b.data], axis=1), (a, b), "concat_cols")
    if out.requires_grad:
        def _backward(g):
            _accumulate(a, g[:, :split])
            _accumulate(b, g[:, split:])
        out._backward = _backward
    return out


# ---- Álgebra lineal ----

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    out = Tensor._node(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _backward(g):
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        out._backward = _backward
    return out


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Producto matricial por lotes con la misma dimensión de lote (sin broadcasting)"""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError("bmm", a.shape, b.shape)
    out = Tensor._node(np.matmul(a.data, b.data), (a, b), "bmm")
    if out.requires_grad:
        def _backward(g):
            _accumulate(a, np.matmul(g, b.data.transpose(0, 2, 1)))
            _accumulate(b, np.matmul(a.data.transpose(0, 2, 1), g))
        out._backward = _backward
    return out


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    y = matmul(x, weight)
    if bias is not None:
        y = add(y, repeat_rows(bias, x.shape[0]))
    return y


# ---- Normalizaciones ----

def _softmax_last(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError("softmax_rows", x.shape)
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows: entrada con NaN")
    y = _softmax_last(x.data)
    out = Tensor._node(y, (x,), "softmax_rows")
    if out.requires_grad:
        def _backward(g):
            _accumulate(x, y * (g - (g * y).sum(axis=1, keepdims=True)))
        out._backward = _backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    d = x.shape[-1] if x.ndim else 0
    if d < 2:
        raise DimensionError("layer_norm", x.shape)
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm", x.shape, gain.shape, bias.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor._node(xhat * gain.data + bias.data, (x, gain, bias), "layer_norm")
    if out.requires_grad:
        def _backward(g):
            lead = tuple(range(g.ndim - 1))
            _accumulate(gain, (g * xhat).sum(axis=lead))
            _accumulate(bias, g.sum(axis=lead))
            dxhat = g * gain.data
            dx = inv_std / d * (
                d * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            _accumulate(x, dx)
        out._backward = _backward
    return out


# ---- Atención ----

def _attention_grads(q: np.ndarray, k: np.ndarray, v: np.ndarray, p: np.ndarray,
                     g: np.ndarray, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    dv = np.matmul(p.transpose(0, 2, 1), g)
    dp = np.matmul(g, v.transpose(0, 2, 1))
    ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
    dq = np.matmul(ds, k) * s
    dk = np.matmul(ds.transpose(0, 2, 1), q) * s
    return dq, dk, dv


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q·kᵀ/√d)·v por lote; q, k, v de forma (B, T, d)"""
    if q.ndim != 3 or q.shape != k.shape or q.shape[:2] != v.shape[:2]:
        raise DimensionError("attention", q.shape, k.shape, v.shape)
    s = 1.0 / math.sqrt(q.shape[-1])
    scores = np.matmul(q.data, k.data.transpose(0, 2, 1)) * s
    if np.isnan(scores).any():
        raise NumericError("attention: puntuaciones con NaN")
    p = _softmax_last(scores)
    out = Tensor._node(np.matmul(p, v.data), (q, k, v), "attention")
    if out.requires_grad:
        def _backward(g):
            dq, dk, dv = _attention_grads(q.data, k.data, v.data, p, g, s)
            _accumulate(q, dq)
            _accumulate(k, dk)
            _accumulate(v, dv)
        out._backward = _backward
    return out


# ---- Pérdidas ----

def mse(pred: Tensor, target) -> Tensor:
    """Media de las diferencias al cuadrado sobre todos los elementos"""
    target = _as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError("mse", pred.shape, target.shape)
    diff = pred.data - target.data
    n = diff.size
    out = Tensor._node(np.asarray((diff * diff).sum() / n), (pred, target), "mse")
    if out.requires_grad:
        def _backward(g):
            _accumulate(pred, g * 2.0 * diff / n)
            _accumulate(target, -g * 2.0 * diff / n)
        out._backward = _backward
    return out
