import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.linalg import toeplitz
from scipy.signal import lfilter

from oracles import dense_lpc, pulse_vowel, resonator_signal
from rhotica.corpus_io import Pcm
from rhotica.errors import ConvergenceError, DegenerateInputError, InsufficientDataError, RhoticaError
from rhotica.formants import (
    Formant, FormantTrack, LpcModel, TrackConfig, TrackFrame, autocorrelation, f3_slope, formants_from_lpc,
    levinson_durbin, lpc_fit, preprocess, track_formants,
)
from rhotica.roots import polynomial_roots
from rhotica.synth import predictor_from_poles, resonator_poles, synthesize, tilted_noise

FS = 16000


# front end -------------------------------------------------------------------

def test_preprocess_constant_signal():
    frames = preprocess(Pcm(np.ones(400), FS), 25, 10, 0.97)
    assert frames.shape == (1, 400)
    w = np.hamming(400)
    assert frames[0, 0] == w[0]
    np.testing.assert_allclose(frames[0, 1:], 0.03 * w[1:], rtol=1e-12)


def test_preprocess_identity_and_empty():
    x = np.random.default_rng(0).standard_normal(1000)
    frames = preprocess(Pcm(x, FS), 25, 10, 0.0)
    assert frames.shape == (1 + (1000 - 400) // 160, 400)
    np.testing.assert_array_equal(frames[2], x[320:720] * np.hamming(400))
    assert preprocess(Pcm(np.zeros(0), FS)).shape[0] == 0
    with pytest.raises(RhoticaError):
        preprocess(Pcm(x, FS), preemphasis=1.0)


# LPC -------------------------------------------------------------------------

def test_ar2_recovery():
    rng = np.random.default_rng(7)
    x = lfilter([1.0], [1.0, -1.5, 0.7], rng.standard_normal(40000))
    model = lpc_fit(x[1000:], 2)
    np.testing.assert_allclose(model.coefficients, [1.5, -0.7], atol=0.05)


def test_all_zero_frame():
    with pytest.raises(DegenerateInputError):
        lpc_fit(np.zeros(400), 18)


def test_levinson_rejects_non_positive_definite():
    from rhotica.errors import NumericalInstabilityError

    with pytest.raises(NumericalInstabilityError):
        levinson_durbin(np.array([1.0, 2.0, 0.5]), 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1), st.integers(60, 600))
def test_levinson_matches_dense_solve(order, seed, n):
    rng = np.random.default_rng(seed)
    x = lfilter([1.0], [1.0, -0.9], rng.standard_normal(n)) * np.hamming(n)
    r = autocorrelation(x, order)
    a, k, err = levinson_durbin(r, order)
    np.testing.assert_allclose(a, dense_lpc(r, order), rtol=0, atol=1e-8)
    R = toeplitz(r[:order])
    assert np.max(np.abs(R @ a - r[1:])) < 1e-8 * r[0]
    assert np.all(np.abs(k) < 1)
    assert np.all(np.diff(err) <= 0)
    # minimum phase
    assert np.all(np.abs(np.roots(np.concatenate([[1.0], -a]))) < 1)


def test_step_down_recovers_reflection():
    rng = np.random.default_rng(3)
    frame = rng.standard_normal(400) * np.hamming(400)
    model = lpc_fit(frame, 10)
    np.testing.assert_allclose(LpcModel.from_coefficients(model.coefficients).reflection, model.reflection,
                               atol=1e-10)


# roots -----------------------------------------------------------------------

polar_poles = st.lists(st.tuples(st.floats(0.1, 0.99), st.floats(0.01, math.pi - 0.01)), min_size=1, max_size=9)


def _with_conjugates(polar):
    poles = np.array([r * np.exp(1j * t) for r, t in polar])
    return np.concatenate([poles, np.conj(poles)])


@settings(max_examples=50, deadline=None)
@given(polar_poles)
def test_roots_residual(polar):
    coeffs = np.real(np.poly(_with_conjugates(polar)))
    assert np.all(np.abs(np.polyval(coeffs, polynomial_roots(coeffs))) < 1e-8)


@settings(max_examples=50, deadline=None)
@given(polar_poles)
def test_separated_roots_match_true_poles(polar):
    poles = _with_conjugates(polar)
    gaps = np.abs(poles[:, None] - poles[None, :]) + np.eye(len(poles))
    assume(gaps.min() >= 0.05)
    ours = polynomial_roots(np.real(np.poly(poles)))
    for p in poles:
        assert np.min(np.abs(ours - p)) < 1e-8
    # and the same answer as an eigenvalue solver
    for z in np.roots(np.real(np.poly(poles))):
        assert np.min(np.abs(ours - z)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.floats(0.3, 0.95), st.floats(0.2, math.pi - 0.2))
def test_repeated_roots_within_conditioning(k, r, t):
    # a k-fold root moves by ~eps**(1/k) under coefficient rounding, for any solver
    p = r * np.exp(1j * t)
    coeffs = np.real(np.poly([p] * k + [np.conj(p)] * k))
    ours = polynomial_roots(coeffs)
    assert np.all(np.abs(np.polyval(coeffs, ours)) < 1e-8)
    assert np.max(np.minimum(np.abs(ours - p), np.abs(ours - np.conj(p)))) < 100 * np.finfo(float).eps ** (1 / k)


def test_roots_edge_cases():
    np.testing.assert_allclose(sorted(polynomial_roots([1, -3, 2]).real), [1, 2])
    assert sorted(polynomial_roots([0, 1, -1, 0]).real) == pytest.approx([0, 1])
    with pytest.raises(ConvergenceError):
        polynomial_roots([1, 0, 0, 0, 0, 0, -1], max_iter=1)


# formants from a model -------------------------------------------------------

def test_known_model_formants():
    poles = resonator_poles([500, 1500, 2500], [80, 80, 80], FS)
    model = LpcModel.from_coefficients(predictor_from_poles(poles))
    got = formants_from_lpc(model, FS)
    assert [f.frequency for f in got] == pytest.approx([500, 1500, 2500], abs=1e-6)
    assert [f.bandwidth for f in got] == pytest.approx([80, 80, 80], abs=1e-6)


def test_real_roots_give_no_formants():
    model = LpcModel.from_coefficients(-np.poly([0.5, -0.3, 0.8])[1:])
    assert formants_from_lpc(model, FS) == []


def test_near_unit_circle_bandwidth():
    z = (1 - 1e-9) * np.exp(2j * math.pi * 1000 / FS)
    model = LpcModel.from_coefficients(predictor_from_poles([z]))
    (f,) = formants_from_lpc(model, FS)
    assert f.frequency == pytest.approx(1000, abs=1e-3)
    assert f.bandwidth == pytest.approx(-FS * math.log(1 - 1e-9) / math.pi, rel=1e-3)
    assert f.bandwidth < 1e-4


def test_filters_by_frequency_and_bandwidth():
    poles = resonator_poles([60, 1000, 3000, 7980], [50, 500, 100, 50], FS)
    got = formants_from_lpc(LpcModel.from_coefficients(predictor_from_poles(poles)), FS)
    assert [round(f.frequency) for f in got] == [3000]


def test_resonator_recovery_from_signal():
    rng = np.random.default_rng(11)
    x = resonator_signal([500, 1500, 2500], [80, 80, 80], FS // 2, FS, rng)
    track = track_formants(Pcm(x, FS), (0.0, 0.5))
    for name, target in (("f1", 500), ("f2", 1500), ("f3", 2500)):
        values = [getattr(fr, name).frequency for fr in track.frames if getattr(fr, name)]
        assert abs(np.median(values) - target) < 50


# tracking --------------------------------------------------------------------

def test_constant_vowel_track():
    rng = np.random.default_rng(5)
    x = pulse_vowel([700, 1200, 2600], [90, 110, 130], FS, FS, 100, rng)
    track = track_formants(Pcm(x, FS), (0.1, 0.9))
    assert all(fr.f3 is not None for fr in track.frames)
    f3 = [fr.f3.frequency for fr in track.frames]
    assert np.std(f3) < 30
    times = [fr.time for fr in track.frames]
    assert all(0.1 <= t <= 0.9 for t in times) and np.all(np.diff(times) > 0)


@pytest.mark.parametrize("f0", [110, 130, 150, 175, 200])
def test_constant_vowel_other_pitches(f0):
    # a pulse at a frame edge can push the F3 bandwidth estimate past the 400 Hz cap
    x = pulse_vowel([700, 1200, 2600], [90, 110, 130], FS, FS, f0, np.random.default_rng(f0))
    track = track_formants(Pcm(x, FS), (0.1, 0.9))
    t, f3 = track.f3_series()
    assert len(t) >= 0.85 * len(track.frames)
    assert np.std(f3) < 30 and abs(np.median(f3) - 2600) < 50


def test_silence_track():
    track = track_formants(Pcm(np.zeros(FS // 2), FS), (0.0, 0.5))
    assert track.frames and all(fr.f3 is None for fr in track.frames)
    with pytest.raises(InsufficientDataError):
        f3_slope(track)


def test_step_synthesis():
    rng = np.random.default_rng(9)
    first = resonator_signal([700, 1200, 2500], [90, 110, 130], FS // 2, FS, rng)
    second = resonator_signal([700, 1200, 1800], [90, 110, 130], FS // 2, FS, rng)
    track = track_formants(Pcm(np.concatenate([first, second]), FS), (0.05, 0.95))
    t, f = track.f3_series()
    assert f[t < 0.5].mean() > f[t >= 0.5].mean() + 400


def test_time_varying_synthesis_slope_is_negative():
    # F3 falls 900 Hz over 0.25 s: -3600 Hz/s
    n = 4000
    freqs = np.column_stack([np.full(n, 700.0), np.full(n, 1200.0), np.linspace(2600, 1700, n)])
    slopes = []
    for seed in range(5):
        x = synthesize(freqs, np.tile([90.0, 110.0, 130.0], (n, 1)), tilted_noise(n, np.random.default_rng(seed)), FS)
        slopes.append(f3_slope(track_formants(Pcm(x, FS), (0.02, 0.23))).ols_slope)
    assert max(slopes) < -1500
    assert np.mean(slopes) < -3000


def test_span_outside_audio():
    with pytest.raises(RhoticaError):
        track_formants(Pcm(np.zeros(1600), FS), (0.0, 0.2))


def test_resampled_input():
    rng = np.random.default_rng(4)
    x = resonator_signal([700, 1200, 2600], [90, 110, 130], 22050, 22050, rng)
    track = track_formants(Pcm(x, 22050), (0.1, 0.9))
    assert abs(np.median(track.f3_series()[1]) - 2600) < 50


def test_config_defaults():
    cfg = TrackConfig()
    assert cfg.lpc_order == 18 and TrackConfig(sample_rate=8000).lpc_order == 10
    with pytest.raises(RhoticaError):
        TrackConfig(order=1)


# slopes ----------------------------------------------------------------------

def _track(times, f3s):
    frames = tuple(TrackFrame(t, None, None, None if f is None else Formant(f, 100.0)) for t, f in zip(times, f3s))
    return FormantTrack(frames, (times[0], times[-1]), "u")


def test_linear_track_slope():
    times = np.linspace(0.0, 0.1, 11)
    s = f3_slope(_track(times, 2500 - 7000 * times))
    assert s.ols_slope == pytest.approx(-7000, rel=1e-6)
    assert s.net_change == pytest.approx(-700)
    assert s.n_frames == 11


def test_constant_and_single_frame_tracks():
    s = f3_slope(_track([0.0, 0.01, 0.02], [2000.0] * 3))
    assert s.ols_slope == 0 and s.net_change == 0
    with pytest.raises(InsufficientDataError):
        f3_slope(_track([0.0, 0.01], [2000.0, None]))


def test_net_change_skips_gaps():
    s = f3_slope(_track([0, 0.01, 0.02, 0.03, 0.04], [2500, 2400, None, 2000, 1900]))
    # contiguous runs 2500->2400 and 2000->1900
    assert s.net_change == pytest.approx(-200)
    assert s.n_frames == 4


@given(st.floats(-20000, 20000), st.floats(-3000, 3000), st.integers(2, 30))
def test_slope_exact_on_lines_and_shift_invariant(slope, shift, n):
    times = np.arange(n) * 0.01
    base = 2000 + slope * times
    s = f3_slope(_track(times, base))
    assert s.ols_slope == pytest.approx(slope, rel=1e-6, abs=1e-6)
    assert s.net_change == pytest.approx(slope * times[-1], rel=1e-6, abs=1e-6)
    shifted = f3_slope(_track(times, base + shift))
    assert np.sign(round(shifted.ols_slope, 6)) == np.sign(round(s.ols_slope, 6))
