"""
Testes da avaliação
Cadeias de estimação, relatório, tabela CSV e gráfico predito vs real
"""
import math
import xml.etree.ElementTree as ET

import numpy as np
import matplotlib.pyplot as plt
import pytest

from eye_geometry import SamplingRanges, read_dataset
from networks import LandmarkNetwork, HourglassConfig, save_network
from estimators import train_lightweight
from evaluator import (EvalReport, compute_mae, evaluate, table_row, reference_rows, write_table_csv,
                       read_table_csv, plot_pred_vs_actual, pred_vs_actual_figure, axis_range, TABLE_HEADER,
                       PLOT_RANGE_MARGIN)
from trainer import generate_dataset
from utils import ConfigError, DatasetError, ShapeError, save_json, print_header, print_success

SVG = '{http://www.w3.org/2000/svg}'
SMALL_SHAPE = (16, 24)


@pytest.fixture(scope='module')
def view(tmp_path_factory):
    out = tmp_path_factory.mktemp('eval') / 'data'
    folder = generate_dataset(50, seed=11, out_path=str(out), image_shape=SMALL_SHAPE,
                              ranges=SamplingRanges(radius=(4.0, 5.5), n_subjects=5), n_workers=1)
    return read_dataset(folder)


def constant_report():
    truths = np.array([[0.1, 0.0], [-0.1, 0.0]])
    return EvalReport.from_predictions('constant', 'constant', truths, np.zeros((2, 2)), subject_ids=[0, 1])


# =============================================================================
# MAE e relatório
# =============================================================================

def test_constant_predictor_mae():
    report = constant_report()
    assert report.mae_pitch_deg == pytest.approx(math.degrees(0.1), abs=1e-9)
    assert report.mae_pitch_deg == pytest.approx(5.7296, abs=1e-4)
    assert report.mae_yaw_deg == 0.0
    assert report.mae_angular_deg == pytest.approx(5.7296, abs=1e-4)


def test_mae_of_empty_set_is_rejected():
    with pytest.raises(DatasetError):
        compute_mae(np.zeros((0, 2)), np.zeros((0, 2)))


def test_mae_recomputable_from_per_sample():
    rng = np.random.default_rng(0)
    truths = rng.uniform(-0.6, 0.6, (25, 2))
    report = EvalReport.from_predictions('m', 'fit', truths, truths + rng.normal(0, 0.05, (25, 2)))
    assert len(report.per_sample) == report.n_samples == 25
    pitch, yaw, ang = report.recompute_mae()
    assert abs(pitch - report.mae_pitch_deg) < 1e-9
    assert abs(yaw - report.mae_yaw_deg) < 1e-9
    assert abs(ang - report.mae_angular_deg) < 1e-9


def test_report_json_round_trip(tmp_path):
    report = constant_report()
    path = str(tmp_path / 'report.json')
    report.save(path)
    loaded = EvalReport.load(path)
    assert loaded.mae_angular_deg == report.mae_angular_deg
    assert loaded.per_sample == report.per_sample
    assert 'run' in loaded.metadata

    data = report.to_json()
    data['n_samples'] = 3
    save_json(path, data)
    with pytest.raises(DatasetError):
        EvalReport.load(path)
    with pytest.raises(DatasetError):
        EvalReport.load(str(tmp_path / 'missing.json'))


# =============================================================================
# Cadeias
# =============================================================================

def test_oracle_chain_is_exact(view):
    report = evaluate(view, 'oracle')
    assert report.n_samples == len(view)
    assert report.mae_pitch_deg == report.mae_yaw_deg == report.mae_angular_deg == 0.0


def test_constant_chain(view):
    report = evaluate(view, 'constant', constant=(0.0, 0.0))
    expected = compute_mae(view.gaze, np.zeros((len(view), 2)))
    assert (report.mae_pitch_deg, report.mae_yaw_deg, report.mae_angular_deg) == pytest.approx(expected)


def test_fit_chain_on_true_landmarks(view):
    report = evaluate(view, 'fit')
    assert report.model == 'fit'
    assert report.mae_angular_deg < 0.1
    assert report.landmark_error_px is None


def test_lightweight_chain(view, tmp_path):
    samples = [(lm, eb[2], g) for lm, eb, g in zip(view.landmarks, view.eyeball, view.gaze)]
    model = train_lightweight(samples)
    report = evaluate(view, 'lightweight', lightweight_model=model)
    assert report.n_samples == 50
    with pytest.raises(ConfigError):
        evaluate(view, 'lightweight')


def test_with_calibration_excludes_calibration_samples(view):
    report = evaluate(view, 'with-calibration', base_chain='fit', calibration_samples=2)
    assert report.n_samples == 50 - 5 * 2
    assert report.metadata == {'calibration_samples': 2, 'base_chain': 'fit'}
    with pytest.raises(DatasetError):
        evaluate(view, 'with-calibration', base_chain='fit', calibration_samples=10)
    with pytest.raises(ConfigError):
        evaluate(view, 'with-calibration', base_chain='oracle')


def test_chain_errors(view):
    with pytest.raises(ConfigError):
        evaluate(view, 'svr')
    with pytest.raises(ConfigError):
        evaluate(view, 'network')
    with pytest.raises(DatasetError):
        evaluate(view.subset([]), 'oracle')


def test_landmark_checkpoint_chain(view, tmp_path):
    cfg = HourglassConfig(n_stacks=1, n_features=8, n_scales=3, input_shape=SMALL_SHAPE)
    path = str(tmp_path / 'landmark.gzk')
    save_network(path, LandmarkNetwork(cfg, seed=0))
    report = evaluate(view, 'fit', checkpoint=path, model_id='untrained')
    assert report.model == 'landmark' and report.model_id == 'untrained'
    assert report.landmark_error_px >= 0
    with pytest.raises(ConfigError):
        evaluate(view, 'network', checkpoint=path)

    other = str(tmp_path / 'other.gzk')
    save_network(other, LandmarkNetwork(HourglassConfig(n_stacks=1, n_features=8, n_scales=3,
                                                        input_shape=(32, 48)), seed=0))
    with pytest.raises(ShapeError):
        evaluate(view, 'fit', checkpoint=other)


# =============================================================================
# Tabela
# =============================================================================

def test_table_rows_and_csv(tmp_path):
    report = constant_report()
    report.parameters = 'n_stacks=2'
    rows = [table_row(report)] + reference_rows('stacks')
    assert rows[0]['source'] == 'desk-scale'
    assert float(rows[0]['mae_angular_deg']) == report.mae_angular_deg
    assert [r['parameters'] for r in rows[1:]] == ['n_stacks=3', 'n_stacks=8', 'n_stacks=2']
    assert all(r['source'] == 'reference' and r['model'] == 'landmark' for r in rows[1:])

    path = str(tmp_path / 'nested' / 'table.csv')
    write_table_csv(path, rows)
    with open(path, encoding='utf-8') as f:
        assert f.readline() == ','.join(TABLE_HEADER) + '\n'
    back = read_table_csv(path)
    assert len(back) == 4 and back[2]['mae_angular_deg'] == '4.09'
    with pytest.raises(ConfigError):
        reference_rows('optimizers')


# =============================================================================
# Gráfico
# =============================================================================

def svg_points(path):
    """Raiz do SVG e número de marcadores do grupo 'amostras'"""
    root = ET.parse(path).getroot()
    group = root.find(f".//{SVG}g[@id='amostras']")
    assert group is not None
    uses = group.findall(f'.//{SVG}use')
    return root, len(uses) if uses else len(group.findall(f'.//{SVG}path'))


def test_plot_writes_svg_with_one_marker_per_sample(tmp_path):
    rng = np.random.default_rng(1)
    truths = rng.uniform(-0.5, 0.5, (12, 2))
    report = EvalReport.from_predictions('m', 'fit', truths, truths + rng.normal(0, 0.05, (12, 2)))
    path = plot_pred_vs_actual(report, 'yaw', str(tmp_path / 'plots' / 'yaw.svg'))
    root, n_points = svg_points(path)
    assert root.tag == f'{SVG}svg'
    assert n_points == 12
    assert root.find(f".//{SVG}g[@id='identidade']") is not None
    assert root.find(f".//{SVG}g[@id='mae']") is not None


def test_plot_axes_share_range_with_margin():
    rng = np.random.default_rng(3)
    truths = rng.uniform(-0.5, 0.5, (12, 2))
    report = EvalReport.from_predictions('m', 'fit', truths, truths + rng.normal(0, 0.05, (12, 2)))
    fig, ax = pred_vs_actual_figure(report, 'yaw')
    try:
        actual, predicted = np.asarray(ax.collections[0].get_offsets()).T
        np.testing.assert_allclose(actual, np.degrees(truths[:, 1]))
        both = np.concatenate([actual, predicted])
        span = both.max() - both.min()
        lo, hi = ax.get_xlim()
        assert lo == pytest.approx(both.min() - PLOT_RANGE_MARGIN * span)
        assert hi == pytest.approx(both.max() + PLOT_RANGE_MARGIN * span)
        assert ax.get_ylim() == pytest.approx((lo, hi))
        assert 'graus' in ax.get_xlabel() and 'predito' in ax.get_ylabel()
        assert any(t.get_text().startswith('MAE yaw') for t in ax.texts)
    finally:
        plt.close(fig)


def test_constant_values_still_get_a_range():
    lo, hi = axis_range(np.array([2.0, 2.0]))
    assert lo < 2.0 < hi


def test_oracle_points_lie_on_identity():
    truths = np.random.default_rng(2).uniform(-0.5, 0.5, (10, 2))
    report = EvalReport.from_predictions('oracle', 'oracle', truths, truths)
    fig, ax = pred_vs_actual_figure(report, 'pitch')
    try:
        actual, predicted = np.asarray(ax.collections[0].get_offsets()).T
        assert np.max(np.abs(predicted - actual)) < 1e-9
    finally:
        plt.close(fig)


def test_plot_errors(tmp_path):
    with pytest.raises(ConfigError):
        plot_pred_vs_actual(constant_report(), 'roll', str(tmp_path / 'x.svg'))
    empty = EvalReport('e', 'oracle', 0, 0.0, 0.0, 0.0)
    with pytest.raises(DatasetError):
        plot_pred_vs_actual(empty, 'pitch', str(tmp_path / 'y.svg'))


if __name__ == "__main__":
    print_header("TESTES DA AVALIAÇÃO")
    code = pytest.main([__file__, "-q"])
    if code == 0:
        print_success("Todos os testes de avaliação passaram")
    raise SystemExit(code)
