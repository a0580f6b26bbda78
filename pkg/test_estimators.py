"""
Testes dos estimadores
Ajuste do modelo do globo ocular, regressor leve e calibração pessoal
"""
import json
import math

import numpy as np
import pytest

from eye_geometry import (GazeAngles, EyeballParams, synth_landmarks, mirror_landmarks, angular_error,
                          DEFAULT_IMAGE_SHAPE)
from estimators import (FitSettings, EyeballModelFitter, fit_eyeball_model, lightweight_features,
                        LightweightModel, train_lightweight, predict_lightweight, PersonalCalibration,
                        calibrate_personal, calibrate_subjects, N_FEATURES)
from utils import ConfigError, print_header, print_success

H, W = DEFAULT_IMAGE_SHAPE


def random_eye(rng):
    gaze = GazeAngles(float(rng.uniform(-0.7, 0.7)), float(rng.uniform(-0.7, 0.7)))
    eyeball = EyeballParams(radius=float(rng.uniform(20.0, 26.0)))
    return gaze, eyeball


def noisy_samples(n, seed, noise=0.5):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        gaze, eyeball = random_eye(rng)
        lm = synth_landmarks(gaze, eyeball) + rng.normal(0.0, noise, (18, 2))
        out.append((lm, eyeball.radius, gaze))
    return out


# =============================================================================
# Ajuste do modelo
# =============================================================================

def test_fit_recovers_known_gaze():
    truth = GazeAngles(0.3, -0.2)
    lm = synth_landmarks(truth, EyeballParams(radius=20.0))
    result = fit_eyeball_model(lm, radius_hint=23.0)
    assert result.converged
    assert abs(result.gaze.pitch - 0.3) < 1e-3
    assert abs(result.gaze.yaw + 0.2) < 1e-3
    assert result.eyeball.radius == pytest.approx(20.0, abs=1e-3)
    assert result.iterations <= 100


def test_fit_zero_gaze_fixed_point():
    lm = synth_landmarks(GazeAngles(0.0, 0.0), EyeballParams(radius=20.0))
    result = fit_eyeball_model(lm, radius_hint=22.0)
    assert abs(result.gaze.pitch) < 1e-6 and abs(result.gaze.yaw) < 1e-6


def test_default_fit_uses_iris_and_eyeball_center():
    fitter = EyeballModelFitter()
    assert FitSettings().landmark_set == 'iris'
    assert list(fitter.indices) == list(range(8, 18))


def test_fit_round_trip_on_random_cases():
    rng = np.random.default_rng(2024)
    good = 0
    for _ in range(100):
        gaze, eyeball = random_eye(rng)
        result = fit_eyeball_model(synth_landmarks(gaze, eyeball), radius_hint=23.0)
        good += angular_error(result.gaze, gaze) <= 0.5
    assert good >= 99


def test_fit_ignores_eyelid_landmarks_by_default():
    truth = GazeAngles(0.2, 0.3)
    lm = synth_landmarks(truth, EyeballParams(radius=22.0))
    lm[:8] += np.random.default_rng(5).normal(0.0, 3.0, (8, 2))
    result = fit_eyeball_model(lm, radius_hint=23.0)
    assert angular_error(result.gaze, truth) < 1e-3


def noisy_fit_errors(settings, seed=7):
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(100):
        gaze, eyeball = random_eye(rng)
        lm = synth_landmarks(gaze, eyeball) + rng.normal(0.0, 1.0, (18, 2))
        errors.append(angular_error(fit_eyeball_model(lm, radius_hint=23.0, settings=settings).gaze, gaze))
    return np.array(errors)


def test_fit_with_one_pixel_noise():
    # Só o landmark 17 fixa o centro do globo: o ruído dele domina o erro
    errors = noisy_fit_errors(FitSettings())
    assert np.all(np.isfinite(errors))
    assert np.mean(errors) <= 6.0


def test_fit_with_eyelids_meets_two_degrees_under_noise():
    errors = noisy_fit_errors(FitSettings(landmark_set='full'))
    assert np.mean(errors) <= 2.0
    assert np.mean(errors) < np.mean(noisy_fit_errors(FitSettings()))


def test_fit_cost_never_increases():
    rng = np.random.default_rng(3)
    gaze, eyeball = random_eye(rng)
    lm = synth_landmarks(gaze, eyeball) + rng.normal(0.0, 1.0, (18, 2))
    result = fit_eyeball_model(lm, radius_hint=23.0)
    assert np.all(np.diff(result.cost_history) <= 0)
    assert result.residual_rms == pytest.approx(math.sqrt(result.cost_history[-1] / 10))


def test_fit_mirror_negates_yaw():
    lm = synth_landmarks(GazeAngles(0.25, 0.35), EyeballParams(radius=21.0))
    direct = fit_eyeball_model(lm, radius_hint=23.0)
    mirrored = fit_eyeball_model(mirror_landmarks(lm, W), radius_hint=23.0)
    assert mirrored.gaze.pitch == pytest.approx(direct.gaze.pitch, abs=1e-6)
    assert mirrored.gaze.yaw == pytest.approx(-direct.gaze.yaw, abs=1e-6)


def test_fit_full_landmark_set():
    truth = GazeAngles(-0.2, 0.4)
    lm = synth_landmarks(truth, EyeballParams(radius=24.0))
    fitter = EyeballModelFitter(settings=FitSettings(landmark_set='full'))
    assert len(fitter.indices) == 18
    result = fitter.fit(lm, radius_hint=24.0)
    assert angular_error(result.gaze, truth) < 0.5
    with pytest.raises(ConfigError):
        FitSettings(landmark_set='eyelids').validate()


@pytest.mark.parametrize('landmarks', [
    np.full((18, 2), 30.0),
    np.stack([np.linspace(10, 80, 18), np.full(18, 32.0)], axis=1),
    np.full((18, 2), np.nan),
    np.zeros((17, 2)),
])
def test_fit_degenerate_input_is_flagged(landmarks):
    result = fit_eyeball_model(landmarks, radius_hint=23.0)
    assert not result.converged
    assert result.message


def test_fit_rejects_non_positive_radius_hint():
    lm = synth_landmarks(GazeAngles(0.1, 0.1), EyeballParams(radius=22.0))
    result = fit_eyeball_model(lm, radius_hint=0.0)
    assert not result.converged


# =============================================================================
# Regressor leve
# =============================================================================

def test_features_have_fixed_size_and_translation_invariance():
    lm, r, _ = noisy_samples(1, 0)[0]
    f = lightweight_features(lm, r)
    assert f.shape == (N_FEATURES,)
    np.testing.assert_allclose(lightweight_features(lm + np.array([5.0, -3.0]), r), f, atol=1e-12)


def test_exactly_linear_targets_are_reproduced():
    rng = np.random.default_rng(11)
    samples = noisy_samples(200, 11)
    true_w = rng.normal(0.0, 0.05, (N_FEATURES, 2))
    linear = [(lm, r, lightweight_features(lm, r) @ true_w + np.array([0.1, -0.2])) for lm, r, _ in samples]
    model = train_lightweight(linear, ridge_lambda=0.0)
    assert model.warnings == []
    residual = max(np.max(np.abs(predict_lightweight(model, lm, r).as_array() - g)) for lm, r, g in linear)
    assert residual <= 1e-8


def test_training_is_deterministic():
    samples = noisy_samples(80, 5)
    a = train_lightweight(samples)
    b = train_lightweight(list(samples))
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.intercept, b.intercept)


def test_prediction_matches_affine_evaluation():
    samples = noisy_samples(60, 6)
    model = train_lightweight(samples)
    lm, r, _ = samples[0]
    z = (lightweight_features(lm, r) - model.feature_mean) / model.feature_scale
    expected = [model.intercept[j] + sum(z[i] * model.weights[i, j] for i in range(N_FEATURES)) for j in range(2)]
    np.testing.assert_allclose(predict_lightweight(model, lm, r).as_array(), expected, atol=1e-12)
    # features na média → z = 0 → média do treino
    np.testing.assert_allclose(model.intercept, [np.mean([g.pitch for _, _, g in samples]),
                                                 np.mean([g.yaw for _, _, g in samples])])


def test_lightweight_beats_constant_predictor():
    train = noisy_samples(400, 8)
    test = noisy_samples(100, 9)
    model = train_lightweight(train)
    truths = np.array([g.as_array() for _, _, g in test])
    preds = np.array([predict_lightweight(model, lm, r).as_array() for lm, r, _ in test])
    assert np.mean(angular_error(preds, truths)) < np.mean(angular_error(np.zeros_like(truths), truths))


def test_rank_deficiency_is_recorded():
    lm = synth_landmarks(GazeAngles(0.1, 0.2), EyeballParams(radius=22.0))
    samples = [(lm, 20.0 + 0.1 * k, (0.01 * k, 0.0)) for k in range(50)]
    model = train_lightweight(samples, ridge_lambda=1e-3)
    assert model.warnings
    assert np.all(np.isfinite(model.weights))


def test_lightweight_input_validation():
    with pytest.raises(ConfigError):
        train_lightweight(noisy_samples(39, 0))
    with pytest.raises(ConfigError):
        train_lightweight(noisy_samples(40, 0), ridge_lambda=-1.0)


def test_lightweight_json_round_trip():
    samples = noisy_samples(60, 10)
    model = train_lightweight(samples)
    restored = LightweightModel.from_json(json.loads(json.dumps(model.to_json())))
    np.testing.assert_array_equal(restored.weights, model.weights)
    np.testing.assert_array_equal(restored.feature_scale, model.feature_scale)
    lm, r, _ = samples[3]
    assert predict_lightweight(restored, lm, r) == predict_lightweight(model, lm, r)
    with pytest.raises(ConfigError):
        LightweightModel.from_json({'type': 'calibration'})


# =============================================================================
# Calibração pessoal
# =============================================================================

def test_exact_base_gives_identity_correction():
    rng = np.random.default_rng(12)
    truths = rng.uniform(-0.5, 0.5, (12, 2))
    cal = calibrate_personal(truths, truths)
    assert cal.n_samples_used == 12
    np.testing.assert_allclose(cal.affine, np.eye(2), atol=1e-9)
    np.testing.assert_allclose(cal.bias_correction, [0.0, 0.0], atol=1e-9)


def test_constant_offset_is_recovered():
    rng = np.random.default_rng(13)
    truths = rng.uniform(-0.5, 0.5, (10, 2))
    preds = truths - np.array([0.1, -0.05])
    cal = calibrate_personal(preds, truths)
    np.testing.assert_allclose(cal.apply(preds), truths, atol=1e-6)
    np.testing.assert_allclose(cal.bias_correction, [0.1, -0.05], atol=1e-6)


def test_few_samples_fit_bias_only():
    truths = np.array([[0.1, 0.2], [0.0, -0.1], [0.3, 0.0]])
    preds = truths + np.array([[0.02, 0.0], [0.04, 0.0], [0.0, 0.03]])
    cal = calibrate_personal(preds, truths, subject_id=4)
    assert cal.affine is None and cal.subject_id == 4
    np.testing.assert_allclose(cal.bias_correction, [-0.02, -0.01])
    limited = calibrate_personal(preds, truths, n=1)
    assert limited.n_samples_used == 1
    np.testing.assert_allclose(limited.bias_correction, [-0.02, 0.0])


def test_no_samples_is_identity():
    cal = calibrate_personal(np.zeros((0, 2)), np.zeros((0, 2)))
    assert cal.n_samples_used == 0
    g = GazeAngles(0.2, -0.1)
    assert cal.apply(g) == g


def test_calibration_never_increases_training_residual():
    rng = np.random.default_rng(14)
    for n in (3, 10, 25):
        truths = rng.uniform(-0.5, 0.5, (n, 2))
        preds = truths * 0.9 + rng.normal(0.0, 0.03, (n, 2)) + 0.05
        cal = calibrate_personal(preds, truths)
        before = np.sum((preds - truths) ** 2)
        after = np.sum((cal.apply(preds) - truths) ** 2)
        assert after <= before + 1e-12


def test_calibration_helps_most_subjects():
    rng = np.random.default_rng(15)
    preds, truths, ids = [], [], []
    for subject in range(20):
        offset = rng.uniform(-0.12, 0.12, 2)
        true = rng.uniform(-0.5, 0.5, (40, 2))
        preds.append(true + offset + rng.normal(0.0, 0.02, (40, 2)))
        truths.append(true)
        ids.extend([subject] * 40)
    preds, truths, ids = np.concatenate(preds), np.concatenate(truths), np.array(ids)

    calibrations, used = calibrate_subjects(preds, truths, ids, n=10)
    assert used.sum() == 200
    improved = 0
    for subject, cal in calibrations.items():
        held = (ids == subject) & ~used
        before = np.mean(angular_error(preds[held], truths[held]))
        after = np.mean(angular_error(cal.apply(preds[held]), truths[held]))
        improved += after < before
    assert improved >= 18


def test_calibration_json_round_trip():
    cal = calibrate_personal(np.random.default_rng(16).uniform(-0.5, 0.5, (12, 2)),
                             np.random.default_rng(17).uniform(-0.5, 0.5, (12, 2)), subject_id=2)
    restored = PersonalCalibration.from_json(json.loads(json.dumps(cal.to_json())))
    np.testing.assert_array_equal(restored.affine, cal.affine)
    np.testing.assert_array_equal(restored.bias_correction, cal.bias_correction)
    assert restored.subject_id == 2
    with pytest.raises(ConfigError):
        PersonalCalibration.from_json({'type': 'lightweight'})
    with pytest.raises(ConfigError):
        calibrate_personal(np.zeros((3, 2)), np.zeros((4, 2)))


if __name__ == "__main__":
    print_header("TESTES DOS ESTIMADORES")
    code = pytest.main([__file__, "-q"])
    if code == 0:
        print_success("Todos os testes dos estimadores passaram")
    raise SystemExit(code)
