"""
Verificación de gradientes por diferencias finitas centrales.
Cada operación diferenciable tiene un chequeo registrado con nombre.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from services.autodiff import engine as E
from services.autodiff.engine import Tensor

logger = logging.getLogger(__name__)

# Construye (función escalar, entradas) a partir de un generador sembrado
CheckBuilder = Callable[[np.random.Generator], Tuple[Callable[[List[Tensor]], Tensor], List[np.ndarray]]]


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    seeds: int
    passed: bool


@dataclass
class GradcheckReport:
    results: List[CheckResult] = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failed(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "failed": self.failed,
            "checks": [
                {"name": r.name, "max_rel_err": r.max_rel_err, "seeds": r.seeds, "passed": r.passed}
                for r in self.results
            ],
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_gradients(fn: Callable[[List[Tensor]], Tensor], arrays: List[np.ndarray],
                      h: float) -> List[np.ndarray]:
    grads = []
    for i, base in enumerate(arrays):
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[i][idx] += h
            minus[i][idx] -= h
            f_plus = fn([Tensor(a) for a in plus]).item()
            f_minus = fn([Tensor(a) for a in minus]).item()
            g[idx] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(fn: Callable[[List[Tensor]], Tensor], arrays: List[np.ndarray],
                    h: float = 1e-6) -> float:
    """
    Máximo error relativo entre el gradiente analítico y el numérico.
    La escala es la del vector concatenado de todas las entradas: una entrada con
    gradiente exactamente nulo solo aporta el ruido de redondeo de la diferencia finita.
    """
    inputs = [Tensor(a, requires_grad=True, name=f"in{i}") for i, a in enumerate(arrays)]
    loss = fn(inputs)
    grads = E.backward(loss, params={t.name: t for t in inputs})
    numeric = numeric_gradients(fn, arrays, h)
    analytic = np.concatenate([grads[t.name].ravel() for t in inputs])
    return relative_error(analytic, np.concatenate([n.ravel() for n in numeric]))


def _away_from_zero(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * (np.abs(x) + 0.1)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return E.sum_all(E.mul(out, Tensor(w)))


def _unary(op: Callable[[Tensor], Tensor], positive: bool = False, kink: bool = False) -> CheckBuilder:
    def build(rng):
        x = rng.normal(size=(3, 4))
        if positive:
            x = np.abs(x) + 0.5
        if kink:
            x = _away_from_zero(x)
        w = rng.normal(size=(3, 4))
        return (lambda t: _weighted(op(t[0]), w)), [x]
    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor]) -> CheckBuilder:
    def build(rng):
        a, b, w = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        return (lambda t: _weighted(op(t[0], t[1]), w)), [a, b]
    return build


def _build_matmul(rng):
    a, b, w = rng.normal(size=(5, 7)), rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
    return (lambda t: _weighted(E.matmul(t[0], t[1]), w)), [a, b]


def _build_bmm(rng):
    a, b, w = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 3)), rng.normal(size=(2, 3, 3))
    return (lambda t: _weighted(E.bmm(t[0], t[1]), w)), [a, b]


def _build_softmax(rng):
    x, w = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    return (lambda t: _weighted(E.softmax_rows(t[0]), w)), [x]


def _build_layer_norm(rng):
    x, w = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    gain, bias = 1.0 + 0.3 * rng.normal(size=6), 0.3 * rng.normal(size=6)
    return (lambda t: _weighted(E.layer_norm(t[0], t[1], t[2]), w)), [x, gain, bias]


def _build_attention(rng):
    q, k, v = (rng.normal(size=(2, 4, 3)) for _ in range(3))
    w = rng.normal(size=(2, 4, 3))
    return (lambda t: _weighted(E.attention(t[0], t[1], t[2]), w)), [q, k, v]


def _build_concat(rng):
    a, b, w = rng.normal(size=(3, 2)), rng.normal(size=(3, 4)), rng.normal(size=(3, 6))
    return (lambda t: _weighted(E.concat_cols(t[0], t[1]), w)), [a, b]


def _build_repeat(rng):
    v, w = rng.normal(size=4), rng.normal(size=(3, 4))
    return (lambda t: _weighted(E.repeat_rows(t[0], 3), w)), [v]


def _build_transpose(rng):
    x, w = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 2, 3))
    return (lambda t: _weighted(E.transpose(t[0], (2, 0, 1)), w)), [x]


def _build_mse(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    return (lambda t: E.mse(t[0], t[1])), [a, b]


def _build_neck(rng):
    from services.neck.model import NeckConfig, neck_forward, neck_init

    cfg = NeckConfig(layers=2, heads=2, d_model=4, d_in=3, d_out=2, tokens=3, mlp_expansion=2,
                     seed=int(rng.integers(0, 2**31 - 1)))
    params = neck_init(cfg)
    names = list(params.tensors)
    # perturbación grande para salir del régimen casi lineal de la inicialización
    arrays = [p.data + 0.5 * rng.normal(size=p.shape) for p in params.tensors.values()]
    x = rng.normal(size=(2, cfg.tokens, cfg.d_in))
    target = rng.normal(size=(2, cfg.tokens, cfg.d_out))

    def fn(tensors: List[Tensor]) -> Tensor:
        local = params.with_tensors(dict(zip(names, tensors)))
        return E.mse(neck_forward(local, Tensor(x)), Tensor(target))

    return fn, arrays


CHECKS: Dict[str, Tuple[CheckBuilder, float]] = {
    "add": (_binary(E.add), 1e-6),
    "mul": (_binary(E.mul), 1e-6),
    "relu": (_unary(E.relu, kink=True), 1e-6),
    "gelu": (_unary(E.gelu), 1e-6),
    "tanh": (_unary(E.tanh), 1e-6),
    "exp": (_unary(E.exp), 1e-6),
    "log": (_unary(E.log, positive=True), 1e-6),
    "square": (_unary(E.square), 1e-6),
    "matmul": (_build_matmul, 1e-6),
    "bmm": (_build_bmm, 1e-6),
    "transpose": (_build_transpose, 1e-6),
    "concat_cols": (_build_concat, 1e-6),
    "repeat_rows": (_build_repeat, 1e-6),
    "softmax_rows": (_build_softmax, 1e-6),
    "layer_norm": (_build_layer_norm, 1e-6),
    "attention": (_build_attention, 1e-6),
    "mse": (_build_mse, 1e-6),
    "neck": (_build_neck, 1e-4),
}


def run_gradcheck(seeds: int = 20, tolerance: float = 1e-4, only: Optional[List[str]] = None,
                  base_seed: int = 0) -> GradcheckReport:
    """Ejecuta la batería completa de diferencias finitas"""
    report = GradcheckReport(tolerance=tolerance)
    for name, (builder, h) in CHECKS.items():
        if only and name not in only:
            continue
        worst = 0.0
        for s in range(seeds):
            rng = np.random.default_rng(base_seed + s)
            fn, arrays = builder(rng)
            worst = max(worst, check_gradients(fn, arrays, h=h))
        passed = worst < tolerance
        if not passed:
            logger.warning(f"gradcheck '{name}' falló: error relativo {worst:.3e}")
        else:
            logger.debug(f"gradcheck '{name}': error relativo {worst:.3e}")
        report.results.append(CheckResult(name=name, max_rel_err=worst, seeds=seeds, passed=passed))
    return report
