"""
Avaliação de Estimadores de Olhar
Versão 1.1 - Cadeias de estimação, relatório de MAE, tabela CSV e gráfico SVG (matplotlib)

Cadeias suportadas:
    oracle            - lê o valor real (sanidade, MAE = 0)
    constant          - prediz sempre o mesmo (θ, φ)
    network           - rede de gazemap: ĝ direto
    fit               - landmarks → ajuste do modelo do globo ocular
    lightweight       - landmarks → regressor leve
    with-calibration  - fit/lightweight/network + calibração por sujeito

Sem checkpoint, fit e lightweight usam os landmarks reais do dataset.
"""
import os
import csv
import math
from dataclasses import dataclass, field

import numpy as np
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

import tensor_core as tc
from tensor_core import Tensor
from eye_geometry import angular_error
from networks import load_network
from estimators import fit_eyeball_model, predict_lightweight, calibrate_subjects
from utils import (ConfigError, DatasetError, ShapeError, print_info, print_success, save_json,
                   load_json, run_metadata)

CHAINS = ('oracle', 'constant', 'network', 'fit', 'lightweight', 'with-calibration')
BASE_CHAINS = ('network', 'fit', 'lightweight')

TABLE_HEADER = ['model_id', 'model', 'parameters', 'source', 'n_samples',
                'mae_pitch_deg', 'mae_yaw_deg', 'mae_angular_deg']

# MAE (graus) publicados para o treino com 150k amostras, por estudo
REFERENCE_RESULTS = {
    'dense_blocks': ('gazemap', [
        ('n_blocks=5 layers_per_block=5', 5.88),
        ('n_blocks=5 layers_per_block=3', 9.09),
        ('n_blocks=5 layers_per_block=6', 4.6),
        ('n_blocks=6 layers_per_block=5', 4.5),
        ('n_blocks=4 layers_per_block=5', 7.6),
    ]),
    'gazemap_lr': ('gazemap', [
        ('base_lr=0.001', 6.78),
        ('base_lr=0.0001', 4.65),
        ('base_lr=1e-05', 4.6),
    ]),
    'stacks': ('landmark', [
        ('n_stacks=3', 5.3),
        ('n_stacks=8', 4.09),
        ('n_stacks=2', 7.3),
    ]),
    'landmark_lr': ('landmark', [
        ('base_lr=0.001', 8.5),
        ('base_lr=0.0001', 4.9),
        ('base_lr=1e-05', 4.6),
    ]),
}

PLOT_INCHES = 6.0
PLOT_RANGE_MARGIN = 0.05


# ---------------------------------------------------------------------
# Relatório
# ---------------------------------------------------------------------

def compute_mae(truths, predictions):
    """
    MAE em graus: |Δθ|, |Δφ| e erro angular entre direções

    Args:
        truths: (N, 2) em radianos
        predictions: (N, 2) em radianos

    Returns:
        tuple: (mae_pitch, mae_yaw, mae_angular)
    """
    t = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
    p = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    if len(t) == 0:
        raise DatasetError("MAE de um conjunto vazio")
    diff = np.abs(p - t) * 180.0 / math.pi
    angular = np.atleast_1d(angular_error(p, t))
    return float(diff[:, 0].mean()), float(diff[:, 1].mean()), float(angular.mean())


@dataclass
class EvalReport:
    """Resultado de uma avaliação (ângulos por amostra em radianos, MAE em graus)"""
    model_id: str
    chain: str
    n_samples: int
    mae_pitch_deg: float
    mae_yaw_deg: float
    mae_angular_deg: float
    per_sample: list = field(default_factory=list)
    landmark_error_px: float = None
    parameters: str = ''
    model: str = ''
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, model_id, chain, truths, predictions, subject_ids=None, **kwargs):
        truths = np.asarray(truths, dtype=np.float64).reshape(-1, 2)
        predictions = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
        pitch, yaw, ang = compute_mae(truths, predictions)
        ids = [None] * len(truths) if subject_ids is None else [int(s) for s in subject_ids]
        per_sample = [{'truth': [float(t[0]), float(t[1])],
                       'prediction': [float(p[0]), float(p[1])],
                       'subject_id': sid}
                      for t, p, sid in zip(truths, predictions, ids)]
        return cls(model_id=model_id, chain=chain, n_samples=len(truths), mae_pitch_deg=pitch,
                   mae_yaw_deg=yaw, mae_angular_deg=ang, per_sample=per_sample, **kwargs)

    def truths(self):
        return np.array([s['truth'] for s in self.per_sample], dtype=np.float64).reshape(-1, 2)

    def predictions(self):
        return np.array([s['prediction'] for s in self.per_sample], dtype=np.float64).reshape(-1, 2)

    def recompute_mae(self):
        """Recalcula (pitch, yaw, angular) a partir de per_sample"""
        return compute_mae(self.truths(), self.predictions())

    def to_json(self):
        return {
            'model_id': self.model_id,
            'chain': self.chain,
            'model': self.model,
            'parameters': self.parameters,
            'n_samples': self.n_samples,
            'mae_pitch_deg': self.mae_pitch_deg,
            'mae_yaw_deg': self.mae_yaw_deg,
            'mae_angular_deg': self.mae_angular_deg,
            'landmark_error_px': self.landmark_error_px,
            'per_sample': self.per_sample,
            'metadata': self.metadata,
        }

    @classmethod
    def from_json(cls, data):
        try:
            report = cls(model_id=data['model_id'], chain=data['chain'], n_samples=int(data['n_samples']),
                         mae_pitch_deg=float(data['mae_pitch_deg']), mae_yaw_deg=float(data['mae_yaw_deg']),
                         mae_angular_deg=float(data['mae_angular_deg']), per_sample=list(data['per_sample']),
                         landmark_error_px=data.get('landmark_error_px'),
                         parameters=data.get('parameters', ''), model=data.get('model', ''),
                         metadata=data.get('metadata', {}))
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"Relatório de avaliação inválido: {e}") from e
        if len(report.per_sample) != report.n_samples:
            raise DatasetError(f"Relatório com {len(report.per_sample)} amostras, n_samples={report.n_samples}")
        return report

    def save(self, path, with_run_info=True):
        data = self.to_json()
        if with_run_info:
            data['metadata'] = dict(data['metadata'], run=run_metadata())
        return save_json(path, data)

    @classmethod
    def load(cls, path):
        if not os.path.isfile(path):
            raise DatasetError(f"Relatório não encontrado: '{path}'")
        return cls.from_json(load_json(path))


# ---------------------------------------------------------------------
# Execução das cadeias
# ---------------------------------------------------------------------

def run_network(network, view, batch_size=32):
    """
    Forward em modo de avaliação, sem grafo

    Returns:
        dict: 'landmarks' (N,18,2) e 'radius' (N,) para a rede de
            landmarks; 'gaze' (N,2) para a rede de gazemap
    """
    expected = tuple(network.cfg.input_shape)
    if tuple(view.image_shape) != expected:
        raise ShapeError(f"Dataset com imagens {tuple(view.image_shape)}, rede espera {expected}")
    network.eval()
    images = view.images.astype(tc.get_default_dtype())
    landmarks, radius, gaze = [], [], []
    with tc.no_grad():
        for start in range(0, len(images), batch_size):
            out = network(Tensor(images[start:start + batch_size, None]))
            if out.landmarks_soft is not None:
                landmarks.append(out.landmarks_soft.numpy().astype(np.float64))
                radius.append(out.radius.numpy().reshape(-1).astype(np.float64))
            if out.gaze is not None:
                gaze.append(out.gaze.numpy().astype(np.float64))
    result = {}
    if landmarks:
        result['landmarks'] = np.concatenate(landmarks)
        result['radius'] = np.concatenate(radius)
    if gaze:
        result['gaze'] = np.concatenate(gaze)
    return result


def _base_predictions(chain, view, network_out, lightweight_model, fit_settings, constant):
    truths = view.gaze
    if chain == 'oracle':
        return truths.copy()
    if chain == 'constant':
        return np.tile(np.asarray(constant, dtype=np.float64), (len(view), 1))
    if chain == 'network':
        if network_out is None or 'gaze' not in network_out:
            raise ConfigError("Cadeia 'network' exige um checkpoint da rede de gazemap")
        return network_out['gaze']

    if network_out is not None and 'landmarks' in network_out:
        landmarks, radii = network_out['landmarks'], network_out['radius']
    elif network_out is not None:
        raise ConfigError(f"Cadeia '{chain}' exige landmarks; o checkpoint é de uma rede de gazemap")
    else:
        landmarks, radii = view.landmarks, view.eyeball[:, 2]

    if chain == 'fit':
        return np.stack([fit_eyeball_model(lm, r, view.image_shape, fit_settings).gaze.as_array()
                         for lm, r in zip(landmarks, radii)])
    if chain == 'lightweight':
        if lightweight_model is None:
            raise ConfigError("Cadeia 'lightweight' exige um modelo leve (--lightweight)")
        return np.stack([predict_lightweight(lightweight_model, lm, r).as_array()
                         for lm, r in zip(landmarks, radii)])
    raise ConfigError(f"Cadeia base desconhecida: '{chain}'")


def evaluate(view, chain='fit', checkpoint=None, lightweight_model=None, base_chain='fit',
             calibration_samples=10, fit_settings=None, model_id=None, constant=(0.0, 0.0),
             parameters='', batch_size=32):
    """
    Avalia uma cadeia de estimação em um DatasetView

    Args:
        view: DatasetView (tipicamente o split de teste)
        chain: Uma de CHAINS
        checkpoint: Checkpoint .gzk (landmark ou gazemap) ou None
        lightweight_model: LightweightModel para a cadeia lightweight
        base_chain: Estimador base de with-calibration
        calibration_samples: Amostras por sujeito usadas na calibração
            (excluídas do conjunto pontuado)
        fit_settings: FitSettings do ajuste
        model_id: Identificador do relatório
        constant: (θ, φ) da cadeia constant

    Returns:
        EvalReport
    """
    if chain not in CHAINS:
        raise ConfigError(f"Cadeia desconhecida '{chain}'; use uma de {CHAINS}")
    if chain == 'with-calibration' and base_chain not in BASE_CHAINS:
        raise ConfigError(f"base_chain deve ser uma de {BASE_CHAINS}, recebido '{base_chain}'")
    if len(view) == 0:
        raise DatasetError("Nada a avaliar: conjunto vazio")

    network_out = None
    model = chain
    landmark_error = None
    if checkpoint:
        network, _, metadata = load_network(checkpoint)
        model = metadata['kind']
        network_out = run_network(network, view, batch_size)
        if 'landmarks' in network_out:
            errors = np.linalg.norm(network_out['landmarks'] - view.landmarks, axis=-1)
            landmark_error = float(np.median(errors))

    effective = base_chain if chain == 'with-calibration' else chain
    predictions = _base_predictions(effective, view, network_out, lightweight_model, fit_settings, constant)
    truths = view.gaze
    subject_ids = view.subject_ids

    metadata = {}
    if chain == 'with-calibration':
        calibrations, used = calibrate_subjects(predictions, truths, subject_ids, calibration_samples)
        scored = ~used
        if not scored.any():
            raise DatasetError(f"Nenhuma amostra restante após reservar {calibration_samples} por sujeito")
        corrected = predictions.copy()
        for i in np.flatnonzero(scored):
            corrected[i] = calibrations[int(subject_ids[i])].apply(predictions[i])
        predictions, truths, subject_ids = corrected[scored], truths[scored], subject_ids[scored]
        metadata['calibration_samples'] = int(calibration_samples)
        metadata['base_chain'] = base_chain

    report = EvalReport.from_predictions(
        model_id or f"{model}-{chain}", chain, truths, predictions, subject_ids,
        landmark_error_px=landmark_error, parameters=parameters, model=model, metadata=metadata)
    print_info(f"{report.model_id}: MAE pitch={report.mae_pitch_deg:.3f}° yaw={report.mae_yaw_deg:.3f}° "
               f"angular={report.mae_angular_deg:.3f}° ({report.n_samples} amostras)")
    return report


# ---------------------------------------------------------------------
# Tabelas
# ---------------------------------------------------------------------

def table_row(report, source='desk-scale'):
    return {
        'model_id': report.model_id,
        'model': report.model,
        'parameters': report.parameters,
        'source': source,
        'n_samples': report.n_samples,
        'mae_pitch_deg': repr(report.mae_pitch_deg),
        'mae_yaw_deg': repr(report.mae_yaw_deg),
        'mae_angular_deg': repr(report.mae_angular_deg),
    }


def reference_rows(study):
    """
    Linhas de referência (150k amostras) para anotar uma tabela

    Args:
        study: Chave de REFERENCE_RESULTS

    Returns:
        list: Linhas da tabela com source='reference'
    """
    if study not in REFERENCE_RESULTS:
        raise ConfigError(f"Estudo desconhecido '{study}'; use um de {sorted(REFERENCE_RESULTS)}")
    model, entries = REFERENCE_RESULTS[study]
    return [{'model_id': f"reference-{study}-{i}", 'model': model, 'parameters': params,
             'source': 'reference', 'n_samples': '', 'mae_pitch_deg': '', 'mae_yaw_deg': '',
             'mae_angular_deg': repr(mae)}
            for i, (params, mae) in enumerate(entries)]


def write_table_csv(path, rows):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=TABLE_HEADER, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_table_csv(path):
    with open(path, 'r', newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------
# Gráfico predito vs real
# ---------------------------------------------------------------------

def axis_range(values):
    """Faixa comum dos eixos: mín/máx das séries com 5% de margem"""
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    if span <= 0:
        span = max(abs(lo), 1.0)
        lo, hi = lo - span / 2, hi + span / 2
        span = hi - lo
    return lo - PLOT_RANGE_MARGIN * span, hi + PLOT_RANGE_MARGIN * span


def pred_vs_actual_figure(report, angle):
    """
    Monta a figura de dispersão real (x) contra predito (y), em graus

    Os dois eixos usam a mesma faixa e aspecto 1:1, de modo que a
    identidade é a diagonal do quadro.

    Args:
        report: EvalReport não vazio
        angle: 'pitch' ou 'yaw'

    Returns:
        tuple: (fig, ax) do matplotlib
    """
    if angle not in ('pitch', 'yaw'):
        raise ConfigError(f"angle deve ser 'pitch' ou 'yaw', recebido '{angle}'")
    if report.n_samples == 0 or not report.per_sample:
        raise DatasetError("Relatório vazio: nada a plotar")

    col = 0 if angle == 'pitch' else 1
    actual = np.degrees(report.truths()[:, col])
    predicted = np.degrees(report.predictions()[:, col])
    lo, hi = axis_range(np.concatenate([actual, predicted]))
    mae = report.mae_pitch_deg if angle == 'pitch' else report.mae_yaw_deg

    fig, ax = plt.subplots(figsize=(PLOT_INCHES, PLOT_INCHES))
    ax.plot([lo, hi], [lo, hi], color='grey', ls='--', lw=1.0, label='identidade', gid='identidade')
    ax.scatter(actual, predicted, s=14, alpha=0.7, c='steelblue', edgecolors='navy', lw=0.3,
               label='amostras', gid='amostras')
    ax.set_xlim(lo, hi)
    ax.set_ylim(lo, hi)
    ax.set_aspect('equal')
    ax.set_xlabel(f'{angle} real (graus)', fontsize=11)
    ax.set_ylabel(f'{angle} predito (graus)', fontsize=11)
    ax.set_title(f'Predito vs real ({angle}): {report.model_id}', fontsize=12)
    ax.text(0.03, 0.97, f'MAE {angle} = {mae:.2f}° (n={report.n_samples})', transform=ax.transAxes,
            va='top', fontsize=10, gid='mae')
    ax.legend(fontsize=8, loc='lower right', framealpha=0.9)
    return fig, ax


def plot_pred_vs_actual(report, angle, out_path):
    """
    Salva o gráfico predito vs real como SVG

    Args:
        report: EvalReport não vazio
        angle: 'pitch' ou 'yaw'
        out_path: Arquivo .svg

    Returns:
        str: Caminho do SVG
    """
    fig, _ = pred_vs_actual_figure(report, angle)
    folder = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(folder, exist_ok=True)
    try:
        fig.savefig(out_path, format='svg', bbox_inches='tight')
    finally:
        plt.close(fig)
    print_success(f"Gráfico salvo: {out_path}")
    return out_path
