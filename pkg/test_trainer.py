"""
Testes do treinamento
Configuração, agenda de learning rate, augmentation, Adam, geração de
dataset, loop de treino, retomada e sweep
"""
import os
import json
import math
import statistics

import numpy as np
import pytest

from tensor_core import Tensor
from eye_geometry import (EyeSampleGenerator, SamplingRanges, DatasetView, read_dataset, landmarks_in_bounds)
from networks import HourglassConfig, DenseNetConfig
from estimators import fit_eyeball_model, LightweightModel
from evaluator import evaluate, read_table_csv, compute_mae
from trainer import (TrainConfig, Trainer, Adam, generate_dataset, lr_schedule, transform_points,
                     apply_transform, augment, read_train_log, format_overrides, run_sweep, LOG_HEADER)
from utils import (ConfigError, DatasetError, CheckpointError, TrainingError, load_json,
                   print_header, print_success)

SMALL_SHAPE = (16, 24)
SMALL_RANGES = SamplingRanges(radius=(4.0, 5.5), n_subjects=10)
CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs')


@pytest.fixture(scope='module')
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp('data') / 'small'
    return generate_dataset(60, seed=3, out_path=str(out), ranges=SMALL_RANGES, image_shape=SMALL_SHAPE,
                            n_workers=2)


def small_cfg(dataset, output_dir, **overrides):
    cfg = TrainConfig(model='landmark',
                      hourglass=HourglassConfig(n_stacks=1, n_features=8, n_scales=3, input_shape=SMALL_SHAPE),
                      densenet=DenseNetConfig(n_blocks=2, layers_per_block=2, growth_rate=4),
                      base_lr=1e-3, batch_size=4, max_steps=3, dataset=dataset, output_dir=str(output_dir),
                      n_workers=1, log_every=1)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


# =============================================================================
# Configuração
# =============================================================================

def test_config_overrides():
    base = TrainConfig()
    cfg = base.with_overrides({'base_lr': '1e-3', 'hourglass.n_stacks': '3', 'batch-size': '8',
                               'scale_range': '[0.95, 1.05]', 'densenet.layers_per_block': 3})
    assert cfg.base_lr == 1e-3 and cfg.batch_size == 8
    assert cfg.hourglass.n_stacks == 3 and cfg.densenet.layers_per_block == 3
    assert cfg.scale_range == (0.95, 1.05)
    assert base.base_lr == 1e-4 and base.hourglass.n_stacks == 2
    with pytest.raises(ConfigError):
        base.with_overrides({'learning_rate': '1e-3'})
    with pytest.raises(ConfigError):
        base.with_overrides({'hourglass.depth': '3'})


def test_config_validation():
    TrainConfig().validate()
    for bad in ({'lr_decay_factor': 1.0}, {'max_epochs': 100}, {'model': 'svm'}, {'base_lr': 0.0},
                {'scale_range': (1.1, 0.9)}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad).validate()
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({'model': 'landmark', 'epochs': 3})


def test_config_file_round_trip(tmp_path):
    cfg = TrainConfig.load(os.path.join(CONFIG_DIR, 'landmark_desk.json'))
    assert cfg.hourglass.n_stacks == 2 and cfg.weights.beta_rad == 1e-7
    path = tmp_path / 'cfg.json'
    path.write_text(json.dumps(cfg.to_dict()), encoding='utf-8')
    assert TrainConfig.load(str(path)) == cfg
    path.write_text('{not json', encoding='utf-8')
    with pytest.raises(ConfigError):
        TrainConfig.load(str(path))


def test_lr_schedule_spot_values():
    cfg = TrainConfig()
    assert lr_schedule(0, cfg) == 1e-4
    assert lr_schedule(4999, cfg) == 1e-4
    assert lr_schedule(5000, cfg) == pytest.approx(1e-5, rel=1e-12)
    assert lr_schedule(12000, cfg) == pytest.approx(1e-6, rel=1e-12)
    with pytest.raises(ConfigError):
        lr_schedule(-1, cfg)


def test_format_overrides_uses_last_key_segment():
    assert format_overrides({'base_lr': '1e-3'}) == 'base_lr=0.001'
    assert format_overrides({'base_lr': 1e-05}) == 'base_lr=1e-05'
    assert format_overrides({'densenet.n_blocks': 5, 'densenet.layers_per_block': 3}) == \
        'n_blocks=5 layers_per_block=3'


# =============================================================================
# Augmentation
# =============================================================================

@pytest.fixture(scope='module')
def eye_sample():
    return EyeSampleGenerator(seed=1).sample(0)[0]


def test_identity_transform_keeps_sample(eye_sample):
    out = apply_transform(eye_sample, 0, 0, 1.0)
    assert out.image is eye_sample.image
    np.testing.assert_allclose(out.landmarks, eye_sample.landmarks, atol=1e-12)
    assert out.gaze == eye_sample.gaze
    assert out.eyeball.radius == eye_sample.eyeball.radius


def test_translation_moves_landmarks_and_pixels(eye_sample):
    out = apply_transform(eye_sample, 3, 0, 1.0)
    np.testing.assert_allclose(out.landmarks[:, 0] - eye_sample.landmarks[:, 0], 3.0, atol=1e-9)
    np.testing.assert_allclose(out.landmarks[:, 1], eye_sample.landmarks[:, 1], atol=1e-9)
    np.testing.assert_allclose(out.image[:, 3:], eye_sample.image[:, :-3], atol=1e-5)
    np.testing.assert_allclose(out.image[:, :3], np.repeat(eye_sample.image[:, :1], 3, axis=1), atol=1e-5)


def test_scaling_scales_fitted_radius(eye_sample):
    before = fit_eyeball_model(eye_sample.landmarks, radius_hint=23.0)
    out = apply_transform(eye_sample, 0, 0, 1.1)
    after = fit_eyeball_model(out.landmarks, radius_hint=23.0)
    assert out.eyeball.radius == pytest.approx(1.1 * eye_sample.eyeball.radius)
    assert after.eyeball.radius == pytest.approx(1.1 * before.eyeball.radius, rel=1e-6)


def test_augment_is_seeded_and_bounded(eye_sample):
    a, params_a = augment(eye_sample, [0, 5, 1])
    b, params_b = augment(eye_sample, [0, 5, 1])
    assert params_a == params_b
    np.testing.assert_array_equal(a.image, b.image)
    dx, dy, s = params_a
    assert -4 <= dx <= 4 and -4 <= dy <= 4 and 0.9 <= s <= 1.1
    assert a.gaze == eye_sample.gaze
    assert landmarks_in_bounds(a.landmarks, a.image.shape)
    np.testing.assert_allclose(a.landmarks, transform_points(eye_sample.landmarks, dx, dy, s, (64, 96)))


def test_augment_passes_through_when_no_transform_fits(eye_sample):
    out, params = augment(eye_sample, 0, scale_range=(3.0, 3.0))
    assert out is eye_sample and params == (0, 0, 1.0)


# =============================================================================
# Adam
# =============================================================================

def test_adam_first_step_and_state():
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    frozen = Tensor(np.array([3.0]), requires_grad=True)
    opt = Adam([('p', p), ('frozen', frozen)])
    p.grad = np.array([0.5, -3.0, 2.0])
    opt.step(0.01)
    np.testing.assert_allclose(p.data, [0.99, -1.99, 0.49], atol=1e-9)
    np.testing.assert_array_equal(frozen.data, [3.0])

    state = opt.state_arrays()
    assert sorted(state) == ['adam.m.frozen', 'adam.m.p', 'adam.v.frozen', 'adam.v.p']
    other = Adam([('p', Tensor(np.zeros(3), requires_grad=True)), ('frozen', Tensor(np.zeros(1), requires_grad=True))])
    other.load_state(state, opt.t)
    assert other.t == 1
    np.testing.assert_array_equal(other.m[0], opt.m[0])
    with pytest.raises(CheckpointError):
        other.load_state({'adam.m.p': state['adam.m.p']}, 1)


def test_adam_weight_decay_pulls_towards_zero():
    p = Tensor(np.array([2.0]), requires_grad=True)
    opt = Adam([('p', p)], weight_decay=0.1)
    p.grad = np.array([0.0])
    opt.step(0.1)
    assert p.data[0] < 2.0


# =============================================================================
# Geração do dataset
# =============================================================================

def test_generate_dataset_is_byte_identical(tmp_path):
    first = generate_dataset(10, seed=7, out_path=str(tmp_path / 'a'), n_workers=1)
    second = generate_dataset(10, seed=7, out_path=str(tmp_path / 'b'), n_workers=3)
    with open(os.path.join(first, 'samples.bin'), 'rb') as f1, open(os.path.join(second, 'samples.bin'), 'rb') as f2:
        assert f1.read() == f2.read()
    assert load_json(os.path.join(first, 'meta.json')) == load_json(os.path.join(second, 'meta.json'))
    view = read_dataset(first)
    assert len(view) == 10
    assert all(landmarks_in_bounds(lm, view.image_shape) for lm in view.landmarks)
    meta = view.meta
    assert meta['seed'] == 7 and meta['dims'] == [64, 96] and 'ranges' in meta and 'render' in meta


def test_generate_dataset_rejects_bad_input(tmp_path):
    with pytest.raises(DatasetError):
        generate_dataset(0, seed=1, out_path=str(tmp_path / 'none'))
    with pytest.raises(DatasetError):
        generate_dataset(5, seed=1, out_path=str(tmp_path / 'bad'), ranges=SamplingRanges(pitch=(0.5, -0.5)))


# =============================================================================
# Loop de treino
# =============================================================================

def test_training_log_matches_schedule(small_dataset, tmp_path):
    cfg = small_cfg(small_dataset, tmp_path / 'run', max_steps=6, lr_decay_every=2, checkpoint_every=4)
    trainer = Trainer(cfg)
    assert len(trainer.train_view) == 48
    result = trainer.train()
    rows = read_train_log(result['log'])
    assert [r['step'] for r in rows] == list(range(6))
    assert all(r['lr'] == lr_schedule(r['step'], cfg) for r in rows)
    assert all(np.isfinite(r['loss_total']) and r['loss_hm'] > 0 for r in rows)
    with open(result['log'], encoding='utf-8') as f:
        assert f.readline().strip().split(',') == LOG_HEADER
    assert os.path.isfile(os.path.join(cfg.output_dir, 'checkpoint_000004.gzk'))
    assert os.path.isfile(result['checkpoint'])
    assert load_json(os.path.join(cfg.output_dir, 'run_info.json'))['steps'] == 6


def test_total_steps_respects_epoch_cap(small_dataset, tmp_path):
    trainer = Trainer(small_cfg(small_dataset, tmp_path / 'cap', max_steps=100, max_epochs=1))
    assert trainer.total_steps == 12


def test_batches_are_deterministic(small_dataset, tmp_path):
    a = Trainer(small_cfg(small_dataset, tmp_path / 'a'))
    b = Trainer(small_cfg(small_dataset, tmp_path / 'b', n_workers=3))
    images_a, targets_a = a.prepare_batch(5)
    images_b, targets_b = b.prepare_batch(5)
    np.testing.assert_array_equal(images_a.data, images_b.data)
    np.testing.assert_array_equal(targets_a.heatmaps, targets_b.heatmaps)
    assert images_a.shape == (4, 1) + SMALL_SHAPE
    assert not np.array_equal(a.prepare_batch(6)[0].data, images_a.data)


def test_resume_matches_uninterrupted_run(small_dataset, tmp_path):
    full = Trainer(small_cfg(small_dataset, tmp_path / 'full', max_steps=3))
    full.train()

    first = Trainer(small_cfg(small_dataset, tmp_path / 'part', max_steps=2))
    part = first.train()
    resumed = Trainer(small_cfg(small_dataset, tmp_path / 'resumed', max_steps=3, resume_from=part['checkpoint']))
    assert resumed.step == 2
    resumed.train()

    expected, actual = full.network.state_dict(), resumed.network.state_dict()
    assert all(np.array_equal(expected[k], actual[k]) for k in expected)
    for m_full, m_resumed in zip(full.optimizer.m, resumed.optimizer.m):
        np.testing.assert_array_equal(m_full, m_resumed)
    assert full.optimizer.t == resumed.optimizer.t == 3
    full_rows = read_train_log(os.path.join(full.output_dir, 'train_log.csv'))
    resumed_rows = read_train_log(os.path.join(resumed.output_dir, 'train_log.csv'))
    assert resumed_rows[-1]['loss_total'] == full_rows[2]['loss_total']


def test_resume_rejects_other_model_kind(small_dataset, tmp_path):
    landmark = Trainer(small_cfg(small_dataset, tmp_path / 'lm', max_steps=1)).train()
    with pytest.raises(CheckpointError):
        Trainer(small_cfg(small_dataset, tmp_path / 'gm', model='gazemap', resume_from=landmark['checkpoint']))


def test_non_finite_loss_aborts_with_step(small_dataset, tmp_path):
    trainer = Trainer(small_cfg(small_dataset, tmp_path / 'nan'))
    weight = trainer.network.stem_conv.weight
    weight.assign(np.full(weight.shape, np.nan))
    with pytest.raises(TrainingError) as info:
        trainer.train_step(0)
    assert info.value.step == 0


def test_divergence_step_is_written_to_log(small_dataset, tmp_path):
    trainer = Trainer(small_cfg(small_dataset, tmp_path / 'nan_log'))
    weight = trainer.network.stem_conv.weight
    weight.assign(np.full(weight.shape, np.nan))
    with pytest.raises(TrainingError) as info:
        trainer.train()
    assert info.value.step == 0 and info.value.terms is not None
    rows = read_train_log(trainer.log_path)
    assert [r['step'] for r in rows] == [0]
    assert math.isnan(rows[0]['loss_total'])
    assert rows[0]['lr'] == lr_schedule(0, trainer.cfg)


def test_gazemap_training_runs(small_dataset, tmp_path):
    cfg = small_cfg(small_dataset, tmp_path / 'gazemap', model='gazemap', max_steps=2)
    trainer = Trainer(cfg)
    result = trainer.train()
    rows = read_train_log(result['log'])
    assert len(rows) == 2
    assert all(r['loss_gm'] > 0 and r['loss_gaze'] >= 0 and r['loss_hm'] == 0 for r in rows)
    report = evaluate(trainer.test_view, 'network', checkpoint=result['checkpoint'])
    assert report.model == 'gazemap' and report.n_samples == 6


def test_lightweight_training(small_dataset, tmp_path):
    trainer = Trainer(small_cfg(small_dataset, tmp_path / 'light', model='lightweight'))
    result = trainer.train()
    model = LightweightModel.from_json(load_json(result['checkpoint']))
    assert model.n_train == 48
    report = evaluate(trainer.test_view, 'lightweight', lightweight_model=model)
    assert report.mae_angular_deg >= 0


def test_dataset_shape_must_match_network(small_dataset, tmp_path):
    cfg = small_cfg(small_dataset, tmp_path / 'shape')
    cfg.hourglass = HourglassConfig(n_stacks=1, n_features=8, n_scales=3, input_shape=(16, 16))
    with pytest.raises(ConfigError):
        Trainer(cfg)


# =============================================================================
# Sweep
# =============================================================================

def test_sweep_writes_one_row_per_run(small_dataset, tmp_path):
    base = small_cfg(small_dataset, tmp_path / 'sweep', max_steps=2)
    grid = [{'base_lr': '1e-3'}, {'base_lr': '1e-4'}, {'base_lr': '1e-5'}]
    out_csv = str(tmp_path / 'table.csv')
    run_sweep(base, grid, out_csv, study='landmark_lr')
    rows = read_table_csv(out_csv)
    measured = [r for r in rows if r['source'] == 'desk-scale']
    assert [r['parameters'] for r in measured] == ['base_lr=0.001', 'base_lr=0.0001', 'base_lr=1e-05']
    assert len([r for r in rows if r['source'] == 'reference']) == 3
    assert all(os.path.isfile(tmp_path / 'sweep' / f"run_{i:02d}" / 'report.json') for i in range(3))

    again = str(tmp_path / 'table_again.csv')
    run_sweep(small_cfg(small_dataset, tmp_path / 'sweep_again', max_steps=2), grid, again, study='landmark_lr')
    with open(out_csv, 'rb') as f1, open(again, 'rb') as f2:
        assert f1.read() == f2.read()
    with pytest.raises(ConfigError):
        run_sweep(base, [], out_csv)


# =============================================================================
# Treinos de fumaça (GZK_RUN_SLOW=1)
# =============================================================================

@pytest.fixture(scope='module')
def desk_dataset(tmp_path_factory):
    return generate_dataset(1000, seed=0, out_path=str(tmp_path_factory.mktemp('desk') / 'data'))


def held_out(trainer):
    indices = np.concatenate([trainer.val_view.indices, trainer.test_view.indices])
    return DatasetView(trainer.dataset.records, trainer.dataset.meta, indices)


@pytest.mark.slow
def test_smoke_landmark_training(desk_dataset, tmp_path):
    cfg = TrainConfig.load(os.path.join(CONFIG_DIR, 'landmark_desk.json')).with_overrides(
        {'dataset': desk_dataset, 'output_dir': str(tmp_path / 'landmark'), 'base_lr': 1e-3})
    trainer = Trainer(cfg)
    result = trainer.train()
    rows = read_train_log(result['log'])
    assert rows[-1]['loss_total'] < 0.2 * rows[50]['loss_total']
    report = evaluate(held_out(trainer), 'fit', checkpoint=result['checkpoint'])
    assert report.n_samples == 200
    assert report.landmark_error_px <= 3.0


@pytest.mark.slow
def test_smoke_two_stacks_beat_one(desk_dataset, tmp_path):
    errors = {1: [], 2: []}
    for seed in range(3):
        for stacks, features in ((2, 32), (1, 46)):
            cfg = TrainConfig.load(os.path.join(CONFIG_DIR, 'landmark_desk.json')).with_overrides(
                {'dataset': desk_dataset, 'output_dir': str(tmp_path / f"s{stacks}_{seed}"), 'seed': seed,
                 'base_lr': 1e-3, 'hourglass.n_stacks': stacks, 'hourglass.n_features': features})
            trainer = Trainer(cfg)
            result = trainer.train()
            errors[stacks].append(evaluate(held_out(trainer), 'fit', checkpoint=result['checkpoint']).landmark_error_px)
    assert statistics.median(errors[2]) < statistics.median(errors[1])


@pytest.mark.slow
def test_smoke_gazemap_training(desk_dataset, tmp_path):
    cfg = TrainConfig.load(os.path.join(CONFIG_DIR, 'gazemap_desk.json')).with_overrides(
        {'dataset': desk_dataset, 'output_dir': str(tmp_path / 'gazemap'), 'base_lr': 1e-3})
    trainer = Trainer(cfg)
    result = trainer.train()
    losses = [r['loss_total'] for r in read_train_log(result['log'])]
    windows = [statistics.median(losses[i:i + 500]) for i in range(0, len(losses), 500)]
    assert all(b < a for a, b in zip(windows, windows[1:]))
    view = held_out(trainer)
    network = evaluate(view, 'network', checkpoint=result['checkpoint'])
    constant = compute_mae(view.gaze, np.zeros_like(view.gaze))[2]
    assert network.mae_angular_deg <= 0.7 * constant


if __name__ == "__main__":
    print_header("TESTES DO TREINAMENTO")
    code = pytest.main([__file__, "-q"])
    if code == 0:
        print_success("Todos os testes de treinamento passaram")
    raise SystemExit(code)
