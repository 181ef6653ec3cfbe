import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshdetect import detectors as D
from meshdetect.signal import Frame, NodeSignal, SignalParams, frame_statistic


def frames_of(x, node=0):
    return [Frame(node, m, row) for m, row in enumerate(x)]


def stream(det, x):
    return np.array([det.process(f).strength for f in frames_of(x)])


# ------------------------------------------------------------------ FFT oracle

def test_fft_matches_direct_dft(rng):
    for _ in range(20):
        x = rng.normal(size=128) * rng.uniform(0.01, 100)
        ref = D.dft_magnitudes(x)
        got = D.fft128(x)
        assert np.max(np.abs(got - ref)) <= 1e-9 * np.max(ref)


def test_fft_constant_and_exact_bin():
    mag = D.fft128(np.full(128, 2.0))
    assert mag[0] == pytest.approx(256.0)
    assert np.all(mag[1:] < 1e-10)
    x = np.cos(2 * np.pi * 5 * np.arange(128) / 128)
    mag = D.fft128(x)
    assert mag[5] == pytest.approx(64.0)
    assert np.all(np.delete(mag, 5) < 1e-10)
    with pytest.raises(ValueError):
        D.fft128(np.zeros(100))


def test_hann_is_periodic():
    w = D.hann128()
    assert w[0] == 0.0 and w[64] == pytest.approx(1.0)
    np.testing.assert_allclose(w[1:], w[:0:-1], atol=1e-15)


# --------------------------------------------------------- streaming == batch

@pytest.mark.parametrize("det_id", D.DETECTOR_IDS)
def test_stream_and_batch_agree(det_id, node_series):
    _, frames = node_series
    x = frames[:1500]
    batch = D.make_detector(det_id).run(x)
    live = stream(D.make_detector(det_id), x)
    np.testing.assert_allclose(live, batch, rtol=1e-9, atol=1e-12)


def test_run_all_matches_individual_runs(node_series):
    _, frames = node_series
    x = frames[:1200]
    dets = {d: D.make_detector(d) for d in D.DETECTOR_IDS}
    dets["LIPSKI_k5"] = D.Lipski(k=5)
    res = D.run_all(x, dets)
    for name, det in dets.items():
        fresh = D.Lipski(k=5) if name == "LIPSKI_k5" else D.make_detector(name)
        np.testing.assert_array_equal(res[name], fresh.run(x))


@pytest.mark.parametrize("det_id", D.DETECTOR_IDS)
def test_outputs_are_nonnegative_and_consistent(det_id, node_series):
    _, frames = node_series
    det = D.make_detector(det_id)
    for f in frames_of(frames[:700]):
        out = det.process(f)
        assert out.strength >= 0
        assert out.trigger == (out.strength >= 1.0)
        assert out.detector_id == det_id and out.frame_index == f.index
    assert isinstance(det.get_state(), dict)


# ----------------------------------------------------------------------- TSNFA

def _tsnfa_with_floor(level=1.0):
    det = D.Tsnfa()
    quiet = np.zeros((70, 128))
    # bin-1 sinusoid of magnitude 64*level, identical in every bin-1..6 slot
    n = np.arange(128)
    base = sum(np.cos(2 * np.pi * k * n / 128) for k in range(1, 7)) * level
    quiet[:] = base
    for f in frames_of(quiet):
        det.process(f)
    return det, base


def test_tsnfa_threshold_boundaries():
    n = np.arange(128)
    for gain, expect in ((5.9, False), (6.1, True)):
        det, base = _tsnfa_with_floor()
        x = base + (gain - 1) * np.cos(2 * np.pi * 3 * n / 128)
        out = det.process(Frame(0, 70, x))
        assert out.trigger is expect
        assert out.strength == pytest.approx(gain / 6.0)


def test_tsnfa_first_valid_frame():
    det = D.Tsnfa()
    assert det.warmup_frames == 66
    x = np.random.default_rng(1).normal(size=(100, 128))
    s = det.run(x)
    assert np.all(s[:65] == 0) and s[65] > 0


def test_tsnfa_ignores_single_frame_spike_in_floor():
    det, base = _tsnfa_with_floor()
    det.process(Frame(0, 70, base * 1000))
    for m in range(71, 75):
        det.process(Frame(0, m, base))
    np.testing.assert_allclose(det.noise_floor, 64.0)


@pytest.mark.parametrize("n_bad, moves", [(31, False), (32, True)])
def test_stage2_breakdown(n_bad, moves):
    det = D.Tsnfa()
    det.push_stage2 = det.push_stage2
    for _ in range(64 - n_bad):
        det.push_stage2(np.ones(6))
    for _ in range(n_bad):
        det.push_stage2(np.full(6, 1e6))
    floor = det.noise_floor
    assert (not np.allclose(floor, 1.0)) is moves


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False))
def test_tsnfa_scale_invariance(gain):
    x = np.random.default_rng(3).normal(size=(150, 128))
    x[100:104] += 4 * np.sin(2 * np.pi * 2.0 * np.arange(4 * 128).reshape(4, 128) / 100)
    a = D.Tsnfa().run(x)
    b = D.Tsnfa().run(gain * x)
    np.testing.assert_array_equal(a >= 1, b >= 1)
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_tsnfa_median_oracle(rng):
    """Noise floor equals the sort-based median of the last 64 stage-1 values."""
    det = D.Tsnfa()
    hist = []
    for _ in range(200):
        v = rng.exponential(size=6)
        det.push_stage2(v)
        hist.append(v)
        window = np.array(hist[-64:])
        srt = np.sort(window, axis=0)
        n = len(window)
        med = srt[n // 2] if n % 2 else 0.5 * (srt[n // 2 - 1] + srt[n // 2])
        np.testing.assert_array_equal(det.noise_floor, med)


# ---------------------------------------------------------------------- Lipski

def _calibrated_lipski(rng, k=3.0):
    det = D.Lipski(k=k, m_cal=100)
    x = rng.normal(size=(100, 128))
    for f in frames_of(x):
        det.process(f)
    return det


def test_lipski_calibration_uses_sample_moments(rng):
    det = D.Lipski()
    x = rng.normal(size=(100, 128))
    for f in frames_of(x):
        det.process(f)
    stat = det.bin_statistic(x)
    np.testing.assert_allclose(det.state.mu, stat.mean(axis=0))
    np.testing.assert_allclose(det.state.var, stat.var(axis=0, ddof=1))


def test_lipski_needs_three_adjacent_bins(rng):
    det = _calibrated_lipski(rng)
    mu, sd = det.state.mu, det.sigma
    two = mu.copy()
    two[2:4] = mu[2:4] + 3.5 * sd[2:4]
    assert det.strength_of(two) < 1.0
    three = mu.copy()
    three[2:5] = mu[2:5] + 3.5 * sd[2:5]
    assert det.strength_of(three) == pytest.approx(3.5 / 3.0)
    gap = mu.copy()
    gap[[1, 2, 4]] = mu[[1, 2, 4]] + 5 * sd[[1, 2, 4]]
    assert det.strength_of(gap) < 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 20.0), st.integers(0, 5))
def test_lipski_offset_property(c, b0):
    """Shifting three adjacent bins by c*sigma gives strength c/k there."""
    det = _calibrated_lipski(np.random.default_rng(8))
    stat = det.state.mu.copy()
    stat[b0:b0 + 3] += c * det.sigma[b0:b0 + 3]
    assert det.strength_of(stat) == pytest.approx(c / 3.0, abs=1e-9)


def test_lipski_freezes_statistics_on_trigger(rng):
    det = _calibrated_lipski(rng)
    mu = det.state.mu.copy()
    x = 50 * np.sin(2 * np.pi * 3.0 * np.arange(128) / 100)
    out = det.process(Frame(0, 100, x))
    assert out.trigger
    np.testing.assert_array_equal(det.state.mu, mu)
    det.process(Frame(0, 101, rng.normal(size=128)))
    assert not np.array_equal(det.state.mu, mu)


def test_lipski_rejects_narrow_band():
    with pytest.raises(ValueError):
        D.Lipski(bins=(1, 2))


# ------------------------------------------------------------------------ CFAR

def test_cfar_alpha_value():
    # oracle evaluated independently with 40-digit decimal arithmetic
    assert D.cfar_alpha_ca(32, 1e-3) == pytest.approx(7.710008344055026, rel=1e-13)
    assert round(D.cfar_alpha_ca(32, 1e-3), 2) == 7.71
    with pytest.raises(ValueError):
        D.cfar_alpha_ca(32, 0.0)


@pytest.mark.parametrize("cut, expect", [(7.70, False), (7.72, True)])
def test_ca_boundary(cut, expect):
    c = 2.5
    det = D.CaCfar()
    for m in range(34):
        det.process_statistic(c, Frame(0, m, np.zeros(128)))
    out = det.process_statistic(cut * c, Frame(0, 34, np.zeros(128)))
    assert out.trigger is expect


def test_ca_guard_frame_excluded():
    det = D.CaCfar()
    x = np.ones(40)
    x[37] = 1e9        # guard cell for frame 38
    s = det.run_statistic(x)
    assert s[38] == pytest.approx(1 / det.state.alpha)
    # one frame later the outlier has entered the reference window
    assert s[39] < 1e-8


def test_os_rank_and_threshold():
    det = D.OsCfar()
    assert det.state.rank == 24
    assert det.reference_level(np.arange(1.0, 33.0)[::-1].copy()) == 24.0
    for m in range(34):
        det.process_statistic(3.0, Frame(0, m, np.zeros(128)))
    assert det.process_statistic(6.09 * 3.0, Frame(0, 34, np.zeros(128))).trigger
    assert not det.process_statistic(6.08 * 3.0, Frame(0, 35, np.zeros(128))).trigger


def test_order_statistic_oracle(rng):
    det = D.OsCfar()
    cells = rng.exponential(size=(10_000, 32))
    np.testing.assert_array_equal(det._levels(cells), np.sort(cells, axis=1)[:, 23])
    for row in cells[:200]:
        assert det.reference_level(row) == sorted(row)[23]


def test_os_to_ca_threshold_ratio(rng):
    cells = rng.exponential(size=(200_000, 32))
    ca = D.CaCfar()
    os_ = D.OsCfar()
    ratio = np.mean(os_.state.alpha * os_._levels(cells)) / np.mean(ca.state.alpha * ca._levels(cells))
    assert 1.05 <= ratio <= 1.15


def test_cfar_drift_invariance():
    x = np.random.default_rng(4).exponential(size=500)
    a = D.CaCfar().run_statistic(x)
    b = D.CaCfar().run_statistic(17.0 * x)
    np.testing.assert_allclose(a, b, rtol=1e-12)


# ----------------------------------------------------------------------- CUSUM

def test_cusum_threshold_value():
    det = D.Cusum()
    assert det.state.h == pytest.approx(11.513, abs=1e-3)
    assert det.state.h == pytest.approx(math.log(1e5))


def test_cusum_decays_at_null_mean(rng):
    x = rng.normal(1000.0, 10.0, size=600)
    det = D.Cusum()
    for m, v in enumerate(x[:512]):
        det.process_statistic(v, Frame(0, m, np.zeros(128)))
    det.state.score = 5.0
    det.process_statistic(det.state.mu0, Frame(0, 512, np.zeros(128)))
    drift = (det.state.mu1 - det.state.mu0) ** 2 / (4 * det.state.var)
    assert det.state.score == pytest.approx(5.0 - drift)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=0, max_size=200))
def test_cusum_score_bounded(tail):
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(500, 20, 512), np.asarray(tail, dtype=float)])
    det = D.Cusum()
    for m, v in enumerate(x):
        det.process_statistic(float(v), Frame(0, m, np.zeros(128)))
        assert 0.0 <= det.state.score <= det.state.k_end


def test_cusum_resets_and_holds_off(rng):
    x = np.concatenate([rng.normal(500, 20, 512), np.full(4, 5000.0)])
    s = D.Cusum().run_statistic(x)
    assert s[512] >= 1.0
    assert s[513] == 0.0
    assert s[514] >= 1.0


def test_frame_statistic_matches_sum_of_squares(rng):
    x = rng.normal(size=(5, 128))
    np.testing.assert_allclose(frame_statistic(x), (x ** 2).sum(axis=1))
