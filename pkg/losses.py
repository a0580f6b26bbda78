"""
Funções de Perda
Versão 1.0 - Heatmaps, raio, olhar e gazemap com os pesos de referência

Entradas com dimensão de batch na frente têm a perda de cada amostra
somada e depois promediada no batch; entradas sem batch seguem as
fórmulas literalmente.
"""
import dataclasses
from dataclasses import dataclass, field

import numpy as np

import tensor_core as tc
from utils import ShapeError, ConfigError

GAZEMAP_EPS = 1e-12


@dataclass
class LossWeights:
    """Coeficientes das perdas (α do heatmap, β do raio, α do gazemap)"""
    alpha_hm: float = 1.0
    beta_rad: float = 1e-7
    alpha_gm: float = 1e-5

    def validate(self):
        for name, value in dataclasses.asdict(self).items():
            if value < 0:
                raise ConfigError(f"Peso {name} deve ser não negativo, recebido {value}")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Chaves desconhecidas para LossWeights: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class ObjectiveTerms:
    """Valores (float) de cada termo, para logs"""
    hm: float = 0.0
    rad: float = 0.0
    gaze: float = 0.0
    gm: float = 0.0
    total: float = 0.0
    parts: list = field(default_factory=list)

    def as_row(self):
        return {'loss_total': self.total, 'loss_hm': self.hm, 'loss_rad': self.rad,
                'loss_gaze': self.gaze, 'loss_gm': self.gm}


@dataclass
class LandmarkTargets:
    """Alvos da rede de landmarks: heatmaps (B,18,H,W) e raio (B,1)"""
    heatmaps: np.ndarray
    radius: np.ndarray


@dataclass
class GazemapTargets:
    """Alvos da rede de gazemap: gazemap one-hot (B,3,H,W) e olhar (B,2)"""
    gazemap: np.ndarray
    gaze: np.ndarray


def _check_shapes(op, pred, truth):
    if tuple(pred.shape) != tuple(truth.shape):
        raise ShapeError(f"{op}: predição {tuple(pred.shape)} e alvo {tuple(truth.shape)} incompatíveis")


def _reduce(total, factor, batch):
    return tc.scale(total, factor / batch)


def loss_heatmaps(pred, truth, alpha_hm=1.0):
    """
    α_hm · Σ_i Σ_p (h̃_i(p) − h_i(p))²

    Args:
        pred: Tensor (18,H,W) ou (B,18,H,W)
        truth: Tensor/ndarray com a mesma forma
        alpha_hm: Peso
    """
    truth = tc.as_tensor(truth, pred)
    _check_shapes('loss_heatmaps', pred, truth)
    batch = pred.shape[0] if pred.ndim == 4 else 1
    return _reduce(tc.tensor_sum(tc.square(tc.sub(pred, truth))), alpha_hm, batch)


def loss_radius(pred_r, truth_r, beta_rad=1e-7):
    """
    β · (r̃ − r)²

    Args:
        pred_r: Tensor escalar, (1,) ou (B,1)
        truth_r: Alvo com a mesma forma
    """
    truth = tc.as_tensor(truth_r, pred_r)
    _check_shapes('loss_radius', pred_r, truth)
    batch = pred_r.shape[0] if pred_r.ndim == 2 else 1
    return _reduce(tc.tensor_sum(tc.square(tc.sub(pred_r, truth))), beta_rad, batch)


def loss_gaze(pred_g, truth_g):
    """
    ‖ĝ − g‖² sobre (θ, φ) em radianos²

    Args:
        pred_g: Tensor (2,) ou (B,2)
        truth_g: Alvo com a mesma forma
    """
    truth = tc.as_tensor(truth_g, pred_g)
    _check_shapes('loss_gaze', pred_g, truth)
    batch = pred_g.shape[0] if pred_g.ndim == 2 else 1
    return _reduce(tc.tensor_sum(tc.square(tc.sub(pred_g, truth))), 1.0, batch)


def loss_gazemap(pred_logits, truth, alpha_gm=1e-5, eps=GAZEMAP_EPS):
    """
    Entropia cruzada por pixel entre m̂ = softmax(logits) e o gazemap m

        −α_gm · Σ_p Σ_classe m(p)·log(m̂(p) + ε)

    Args:
        pred_logits: Tensor (3,H,W) ou (B,3,H,W)
        truth: One-hot com a mesma forma
    """
    truth = tc.as_tensor(truth, pred_logits)
    _check_shapes('loss_gazemap', pred_logits, truth)
    batched = pred_logits.ndim == 4
    logits = pred_logits if batched else tc.reshape(pred_logits, (1,) + tuple(pred_logits.shape))
    target = truth if batched else tc.reshape(truth, (1,) + tuple(truth.shape))
    probs = tc.softmax_channels(logits)
    log_probs = tc.log(tc.shift(probs, eps))
    total = tc.tensor_sum(tc.mul(target, log_probs))
    batch = pred_logits.shape[0] if batched else 1
    return _reduce(total, -alpha_gm, batch)


def total_landmark_objective(outputs, targets, weights=None):
    """
    Soma das perdas de heatmap de todos os stacks mais a perda do raio

    Args:
        outputs: Saída da rede de landmarks (per_stack_heatmaps, radius)
        targets: LandmarkTargets
        weights: LossWeights

    Returns:
        tuple: (Tensor escalar, ObjectiveTerms)
    """
    weights = weights or LossWeights()
    if not outputs.per_stack_heatmaps:
        raise ShapeError("total_landmark_objective: nenhuma saída de stack")
    terms = ObjectiveTerms()
    total = None
    for heatmaps in outputs.per_stack_heatmaps:
        term = loss_heatmaps(heatmaps, targets.heatmaps, weights.alpha_hm)
        terms.parts.append(float(term.data))
        total = term if total is None else tc.add(total, term)
    terms.hm = float(sum(terms.parts))

    rad = loss_radius(outputs.radius, targets.radius, weights.beta_rad)
    terms.rad = float(rad.data)
    terms.parts.append(terms.rad)
    total = tc.add(total, rad)
    terms.total = float(total.data)
    return total, terms


def total_gazemap_objective(outputs, targets, weights=None):
    """
    loss_gaze(ĝ, g) + loss_gazemap(gazemap do último módulo, m)

    Returns:
        tuple: (Tensor escalar, ObjectiveTerms)
    """
    weights = weights or LossWeights()
    gaze = loss_gaze(outputs.gaze, targets.gaze)
    gm = loss_gazemap(outputs.gazemaps_per_module[-1], targets.gazemap, weights.alpha_gm)
    total = tc.add(gaze, gm)
    terms = ObjectiveTerms(gaze=float(gaze.data), gm=float(gm.data), total=float(total.data),
                           parts=[float(gaze.data), float(gm.data)])
    return total, terms
