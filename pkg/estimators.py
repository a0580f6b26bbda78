"""
Estimadores de Olhar a partir de Landmarks
Versão 1.1 - Ajuste iterativo do modelo do globo ocular, regressor leve e
calibração pessoal

Três caminhos de landmarks → (θ, φ):
    - EyeballModelFitter: Levenberg-Marquardt sobre (θ, φ, c_u, c_v, r)
    - LightweightModel: regressão ridge linear sobre 40 features
    - PersonalCalibration: correção por sujeito com poucas amostras
"""
import json
import math
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from eye_geometry import (GazeAngles, EyeballParams, synth_landmarks, N_EYELID, N_IRIS,
                          N_LANDMARKS, IRIS_CENTER_INDEX, EYEBALL_CENTER_INDEX,
                          IRIS_PLANE_FACTOR, DEFAULT_IMAGE_SHAPE)
from utils import ConfigError, print_warning

FIT_LANDMARK_SETS = {
    # Borda da íris + centro da íris + centro do globo (o 17 fixa o centro e o sinal)
    'iris': np.arange(N_EYELID, N_LANDMARKS),
    # Opcional: soma as pálpebras, que dependem do modelo de pálpebra
    'full': np.arange(N_LANDMARKS),
}


@dataclass
class FitSettings:
    """Parâmetros do Levenberg-Marquardt"""
    landmark_set: str = 'iris'
    max_iter: int = 100
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    step_tol: float = 1e-8
    cost_tol: float = 1e-10
    jacobian_step: float = 1e-6

    def validate(self):
        if self.landmark_set not in FIT_LANDMARK_SETS:
            raise ConfigError(f"landmark_set deve ser um de {sorted(FIT_LANDMARK_SETS)}, recebido '{self.landmark_set}'")
        if self.max_iter < 1 or self.initial_damping <= 0 or self.jacobian_step <= 0:
            raise ConfigError(f"FitSettings inválido: {self}")
        return self


@dataclass
class FitResult:
    """Resultado do ajuste do modelo do globo ocular"""
    gaze: GazeAngles
    eyeball: EyeballParams
    residual_rms: float
    iterations: int
    converged: bool
    params: np.ndarray = None
    cost_history: list = field(default_factory=list)
    message: str = ''


class EyeballModelFitter:
    """
    Ajuste de mínimos quadrados do modelo do olho aos landmarks

    Minimiza a soma dos erros quadráticos de reprojeção entre os
    landmarks observados e synth_landmarks(θ, φ, c_u, c_v, r), com
    Jacobiano por diferenças centrais e amortecimento de Marquardt
    (escala pela diagonal de JᵀJ).

    Args:
        image_shape: (H, W) usado pelo modelo direto
        settings: FitSettings
    """

    N_PARAMS = 5

    def __init__(self, image_shape=DEFAULT_IMAGE_SHAPE, settings=None):
        self.image_shape = tuple(image_shape)
        self.settings = (settings or FitSettings()).validate()
        self.indices = FIT_LANDMARK_SETS[self.settings.landmark_set]

    def model(self, params):
        theta, phi, cu, cv, r = params
        if not r > 0:
            return None
        lm = synth_landmarks(GazeAngles(theta, phi), EyeballParams(r, cu, cv), self.image_shape)
        return lm[self.indices]

    def residuals(self, params, observed):
        predicted = self.model(params)
        if predicted is None:
            return None
        return (predicted - observed).reshape(-1)

    def jacobian(self, params, observed):
        h = self.settings.jacobian_step
        columns = []
        for k in range(self.N_PARAMS):
            step = np.zeros(self.N_PARAMS)
            step[k] = h
            plus = self.residuals(params + step, observed)
            minus = self.residuals(params - step, observed)
            if plus is None or minus is None:
                return None
            columns.append((plus - minus) / (2 * h))
        return np.stack(columns, axis=1)

    def _failure(self, params, iterations, history, message):
        theta, phi, cu, cv, r = params
        return FitResult(gaze=GazeAngles(float(theta), float(phi)),
                         eyeball=EyeballParams(float(r) if r > 0 else 1e-9, float(cu), float(cv)),
                         residual_rms=float('nan') if not history else math.sqrt(history[-1] / len(self.indices)),
                         iterations=iterations, converged=False, params=np.array(params, dtype=np.float64),
                         cost_history=history, message=message)

    def fit(self, landmarks, radius_hint):
        """
        Ajusta o modelo

        Args:
            landmarks: (18, 2)
            radius_hint: Raio inicial em pixels (> 0)

        Returns:
            FitResult (não convergido em entradas degeneradas, nunca exceção)
        """
        s = self.settings
        h, w = self.image_shape
        params = np.array([0.0, 0.0, w / 2.0, h / 2.0, float(radius_hint)], dtype=np.float64)
        observed = np.asarray(landmarks, dtype=np.float64)

        if observed.shape != (N_LANDMARKS, 2) or not np.all(np.isfinite(observed)):
            return self._failure(params, 0, [], f"landmarks inválidos: forma {observed.shape}")
        if not radius_hint > 0:
            return self._failure(params, 0, [], f"radius_hint deve ser positivo: {radius_hint}")
        used = observed[self.indices]
        centered = used - used.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            return self._failure(params, 0, [], "landmarks degenerados (colineares ou sem dispersão)")

        res = self.residuals(params, used)
        cost = float(res @ res)
        history = [cost]
        damping = s.initial_damping
        converged = cost == 0.0
        message = 'residual nulo' if converged else ''
        iterations = 0

        while not converged and iterations < s.max_iter:
            iterations += 1
            jac = self.jacobian(params, used)
            if jac is None:
                return self._failure(params, iterations, history, "raio não positivo no Jacobiano")
            jtj = jac.T @ jac
            grad = jac.T @ res
            scale = np.maximum(np.diag(jtj), 1e-12)
            try:
                step = np.linalg.solve(jtj + damping * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                damping *= s.damping_up
                continue

            step_norm = float(np.linalg.norm(step))
            candidate = params + step
            new_res = self.residuals(candidate, used)
            new_cost = float(new_res @ new_res) if new_res is not None else float('inf')

            if new_cost < cost:
                decrease = cost - new_cost
                params, res, cost = candidate, new_res, new_cost
                history.append(cost)
                damping *= s.damping_down
                if step_norm < s.step_tol:
                    converged, message = True, 'passo abaixo da tolerância'
                elif decrease < s.cost_tol:
                    converged, message = True, 'variação do custo abaixo da tolerância'
            else:
                damping *= s.damping_up
                if step_norm < s.step_tol:
                    converged, message = True, 'passo abaixo da tolerância'

        if not converged:
            message = f"limite de {s.max_iter} iterações atingido"
        theta, phi, cu, cv, r = params
        return FitResult(gaze=GazeAngles(float(theta), float(phi)),
                         eyeball=EyeballParams(float(r), float(cu), float(cv)),
                         residual_rms=math.sqrt(cost / len(self.indices)),
                         iterations=iterations, converged=converged, params=params.copy(),
                         cost_history=history, message=message)


def fit_eyeball_model(landmarks, radius_hint, image_shape=DEFAULT_IMAGE_SHAPE, settings=None):
    """Atalho funcional para EyeballModelFitter(...).fit(...)"""
    return EyeballModelFitter(image_shape, settings).fit(landmarks, radius_hint)


# ---------------------------------------------------------------------
# Regressor leve
# ---------------------------------------------------------------------

N_FEATURES = 40


def lightweight_features(landmarks, radius):
    """
    Vetor de 40 features invariante a translação

    36 coordenadas (landmark − centro do globo)/r, o raio e 3 termos:
    estimativa de sinθ, estimativa de sinφ e razão de aspecto da elipse
    da íris (autovalores da covariância da borda).
    """
    lm = np.asarray(landmarks, dtype=np.float64)
    r = float(radius)
    rel = (lm - lm[EYEBALL_CENTER_INDEX]) / r
    r_prime = r * IRIS_PLANE_FACTOR

    iris_offset = lm[IRIS_CENTER_INDEX] - lm[EYEBALL_CENTER_INDEX]
    sin_theta = float(np.clip(-iris_offset[1] / r_prime, -1.0, 1.0))
    cos_theta = max(math.sqrt(1.0 - sin_theta * sin_theta), 1e-6)
    sin_phi = float(np.clip(-iris_offset[0] / (r_prime * cos_theta), -1.0, 1.0))

    boundary = lm[N_EYELID:N_EYELID + N_IRIS]
    eig = np.linalg.eigvalsh(np.cov(boundary.T, bias=True))
    aspect = math.sqrt(max(eig[0], 0.0) / eig[1]) if eig[1] > 1e-12 else 1.0

    return np.concatenate([rel.reshape(-1), [r, sin_theta, sin_phi, aspect]])


@dataclass
class LightweightModel:
    """Regressão ridge de features normalizadas para (θ, φ)"""
    weights: np.ndarray
    intercept: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    ridge_lambda: float = 1e-3
    n_train: int = 0
    warnings: list = field(default_factory=list)

    def to_json(self):
        """JSON com coeficientes como strings decimais de precisão completa"""
        def encode(a):
            return [repr(float(x)) for x in np.asarray(a).reshape(-1)]
        return {
            'type': 'lightweight',
            'n_features': N_FEATURES,
            'weights': encode(self.weights),
            'intercept': encode(self.intercept),
            'feature_mean': encode(self.feature_mean),
            'feature_scale': encode(self.feature_scale),
            'ridge_lambda': repr(float(self.ridge_lambda)),
            'n_train': self.n_train,
            'warnings': list(self.warnings),
        }

    @classmethod
    def from_json(cls, data):
        if data.get('type') != 'lightweight':
            raise ConfigError(f"JSON não é de um LightweightModel: tipo '{data.get('type')}'")

        def decode(values, shape):
            return np.array([float(v) for v in values], dtype=np.float64).reshape(shape)
        return cls(weights=decode(data['weights'], (N_FEATURES, 2)),
                   intercept=decode(data['intercept'], (2,)),
                   feature_mean=decode(data['feature_mean'], (N_FEATURES,)),
                   feature_scale=decode(data['feature_scale'], (N_FEATURES,)),
                   ridge_lambda=float(data['ridge_lambda']),
                   n_train=int(data.get('n_train', 0)),
                   warnings=list(data.get('warnings', [])))


def train_lightweight(samples, ridge_lambda=1e-3):
    """
    Treina o regressor leve por mínimos quadrados regularizados

    Args:
        samples: Lista de (landmarks (18,2), raio, GazeAngles ou (θ, φ))
        ridge_lambda: λ do ridge (0 = mínimos quadrados puros)

    Returns:
        LightweightModel
    """
    if len(samples) < N_FEATURES:
        raise ConfigError(f"train_lightweight exige >= {N_FEATURES} amostras, recebido {len(samples)}")
    if ridge_lambda < 0:
        raise ConfigError(f"ridge_lambda deve ser não negativo, recebido {ridge_lambda}")

    features = np.stack([lightweight_features(lm, r) for lm, r, _ in samples])
    targets = np.stack([g.as_array() if isinstance(g, GazeAngles) else np.asarray(g, dtype=np.float64)
                        for _, _, g in samples])

    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    varying = scale >= 1e-12
    scale = np.where(varying, scale, 1.0)
    z = (features - mean) / scale
    target_mean = targets.mean(axis=0)

    warnings = []
    rank = np.linalg.matrix_rank(z[:, varying]) if varying.any() else 0
    if rank < int(varying.sum()):
        msg = f"deficiência de posto nas features ({rank}/{int(varying.sum())}); solução pela regularização"
        warnings.append(msg)
        print_warning(msg)

    if ridge_lambda > 0:
        a = np.vstack([z, math.sqrt(ridge_lambda) * np.eye(N_FEATURES)])
        b = np.vstack([targets - target_mean, np.zeros((N_FEATURES, 2))])
    else:
        a, b = z, targets - target_mean
    weights, *_ = np.linalg.lstsq(a, b, rcond=None)

    return LightweightModel(weights=weights, intercept=target_mean, feature_mean=mean,
                            feature_scale=scale, ridge_lambda=float(ridge_lambda),
                            n_train=len(samples), warnings=warnings)


def predict_lightweight(model, landmarks, radius):
    """Aplica o modelo: (θ, φ) = ((f − μ)/σ)·W + b"""
    z = (lightweight_features(landmarks, radius) - model.feature_mean) / model.feature_scale
    return GazeAngles.from_array(z @ model.weights + model.intercept)


# ---------------------------------------------------------------------
# Calibração pessoal
# ---------------------------------------------------------------------

AFFINE_MIN_SAMPLES = 10


@dataclass
class PersonalCalibration:
    """
    Correção pós-hoc por sujeito: g_corrigido = A·g + b

    Com n_samples_used = 0 a correção é a identidade.
    """
    subject_id: int = None
    bias_correction: np.ndarray = field(default_factory=lambda: np.zeros(2))
    affine: np.ndarray = None
    n_samples_used: int = 0

    def apply(self, gaze):
        """
        Args:
            gaze: GazeAngles ou array (..., 2)
        """
        values = gaze.as_array() if isinstance(gaze, GazeAngles) else np.asarray(gaze, dtype=np.float64)
        corrected = values @ self.affine.T if self.affine is not None else values.copy()
        corrected = corrected + self.bias_correction
        return GazeAngles.from_array(corrected) if isinstance(gaze, GazeAngles) else corrected

    def to_json(self):
        return {
            'type': 'personal_calibration',
            'subject_id': self.subject_id,
            'bias_correction': [repr(float(x)) for x in self.bias_correction],
            'affine': None if self.affine is None else [repr(float(x)) for x in self.affine.reshape(-1)],
            'n_samples_used': self.n_samples_used,
        }

    @classmethod
    def from_json(cls, data):
        if data.get('type') != 'personal_calibration':
            raise ConfigError(f"JSON não é de uma PersonalCalibration: tipo '{data.get('type')}'")
        affine = data.get('affine')
        return cls(subject_id=data.get('subject_id'),
                   bias_correction=np.array([float(x) for x in data['bias_correction']]),
                   affine=None if affine is None else np.array([float(x) for x in affine]).reshape(2, 2),
                   n_samples_used=int(data['n_samples_used']))


def calibrate_personal(predictions, truths, subject_id=None, n=None):
    """
    Ajusta a correção de um sujeito por mínimos quadrados

    Com menos de 10 amostras ajusta só o bias (média dos resíduos); com
    10 ou mais ajusta afim + bias, voltando ao bias se o sistema for
    degenerado.

    Args:
        predictions: (N, 2) predições do estimador base
        truths: (N, 2) valores reais
        subject_id: Identificador do sujeito
        n: Usa as primeiras n amostras (padrão: todas)

    Returns:
        PersonalCalibration
    """
    pred = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    true = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    if pred.shape != true.shape:
        raise ConfigError(f"calibrate_personal: {pred.shape} predições vs {true.shape} valores reais")
    if n is not None:
        pred, true = pred[:n], true[:n]
    count = len(pred)
    if count == 0:
        return PersonalCalibration(subject_id=subject_id)

    if count >= AFFINE_MIN_SAMPLES:
        design = np.hstack([pred, np.ones((count, 1))])
        if np.linalg.matrix_rank(design) == 3:
            coef, *_ = np.linalg.lstsq(design, true, rcond=None)
            return PersonalCalibration(subject_id=subject_id, bias_correction=coef[2].copy(),
                                       affine=coef[:2].T.copy(), n_samples_used=count)

    return PersonalCalibration(subject_id=subject_id, bias_correction=(true - pred).mean(axis=0),
                               n_samples_used=count)


def calibrate_subjects(predictions, truths, subject_ids, n):
    """
    Uma calibração por sujeito usando as primeiras n amostras de cada um

    Returns:
        tuple: (dict sujeito → PersonalCalibration, máscara booleana das
            amostras usadas na calibração)
    """
    pred = np.asarray(predictions, dtype=np.float64)
    true = np.asarray(truths, dtype=np.float64)
    ids = np.asarray(subject_ids)
    used = np.zeros(len(ids), dtype=bool)
    calibrations = {}
    for subject in np.unique(ids):
        idx = np.flatnonzero(ids == subject)[:n]
        used[idx] = True
        calibrations[int(subject)] = calibrate_personal(pred[idx], true[idx], subject_id=int(subject))
    return calibrations, used
