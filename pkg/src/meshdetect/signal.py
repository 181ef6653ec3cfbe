"""Synthetic single-channel sensor signal.

Each node produces a 100 Hz stream that is the sum of

* damped-sinusoid events in the 1-5 Hz band,
* white thermal noise whose power drifts over an hourly cycle,
* a 50 Hz mains component (exactly at Nyquist),
* short digital bursts in the 800-2000 Hz range that reach the band
  only by aliasing.

Every random quantity is drawn from a stream derived from
``(seed, node_id)`` so any frame can be regenerated on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

FS_HZ = 100.0
FRAME_LEN = 128
FRAME_PERIOD_S = FRAME_LEN / FS_HZ
OVERSAMPLE = 64
# Noise for a node is drawn in independent blocks so a single frame can be
# regenerated without producing the whole series.
NOISE_BLOCK_FRAMES = 256


@dataclass(frozen=True)
class SignalParams:
    """Parameters of the signal model. Units are SI unless noted."""

    sample_rate_hz: float = FS_HZ
    frame_len: int = FRAME_LEN
    base_noise_power: float = 1.0
    drift_excursion_db: float = 6.0
    drift_period_s: float = 3600.0
    mains_freq_hz: float = 50.0
    mains_amp_factor: float = 0.3
    burst_freq_range_hz: Tuple[float, float] = (800.0, 2000.0)
    # switching bursts: frequent, weak, carrier uniform over the range
    burst_amp_range: Tuple[float, float] = (0.5, 2.0)
    burst_rate_per_hr: float = 60.0
    burst_duration_s: Tuple[float, float] = (0.02, 0.2)
    burst_alias_guard_hz: float = 0.0
    # strong bursts: rare, log-uniform amplitude, and redrawn when their folded
    # frequency lies within the guard of a multiple of the sample rate
    strong_burst_amp_range: Tuple[float, float] = (1.0, 12.0)
    strong_burst_rate_per_hr: float = 60.0
    strong_burst_duration_s: Tuple[float, float] = (0.2, 1.0)
    strong_burst_alias_guard_hz: float = 20.0
    event_rate_per_hr: float = 1.0
    event_band_hz: Tuple[float, float] = (1.0, 5.0)
    event_duration_s: float = 5.0
    event_decay_tau_s: float = 2.5
    snr_jitter_db: float = 1.5
    # "onset": event RMS is referenced to the noise std at event onset,
    # "nominal": to the std at the base noise power.
    snr_reference: str = "onset"
    warmup_frames: int = 512
    events_enabled: bool = True
    drift_enabled: bool = True
    mains_enabled: bool = True
    bursts_enabled: bool = True

    def __post_init__(self):
        if self.frame_len != FRAME_LEN:
            raise ValueError("frame_len is fixed at 128")
        nyq = self.sample_rate_hz / 2
        lo, hi = self.event_band_hz
        if not 0 < lo < hi < nyq:
            raise ValueError("event band must lie strictly below Nyquist")
        if self.burst_freq_range_hz[0] <= nyq:
            raise ValueError("burst carriers must lie above Nyquist")
        if self.snr_reference not in ("onset", "nominal"):
            raise ValueError("snr_reference must be 'onset' or 'nominal'")
        if max(self.burst_alias_guard_hz, self.strong_burst_alias_guard_hz) >= nyq:
            raise ValueError("alias guard must be below Nyquist")

    @property
    def frame_period_s(self) -> float:
        return self.frame_len / self.sample_rate_hz

    @property
    def warmup_s(self) -> float:
        return self.warmup_frames * self.frame_period_s

    def with_overrides(self, **kw) -> "SignalParams":
        return replace(self, **kw)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class GroundTruthEvent:
    node_id: int
    onset_s: float
    duration_s: float
    carrier_hz: float
    snr_db: float
    event_index: int
    amplitude: float = 0.0

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s


@dataclass(frozen=True)
class Burst:
    onset_s: float
    duration_s: float
    freq_hz: float
    amp_factor: float
    phase: float


@dataclass
class Frame:
    node_id: int
    index: int
    samples: np.ndarray
    start_time_s: float = field(init=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (FRAME_LEN,):
            raise ValueError("a frame holds exactly 128 samples")
        self.start_time_s = self.index * FRAME_PERIOD_S


def drift_power(t_s, params: SignalParams = SignalParams()):
    """Instantaneous thermal noise power P(t). Accepts scalars or arrays."""
    t = np.asarray(t_s, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    if not params.drift_enabled:
        p = np.full_like(t, params.base_noise_power)
    else:
        db = params.drift_excursion_db * np.sin(2 * np.pi * t / params.drift_period_s)
        p = params.base_noise_power * 10.0 ** (db / 10.0)
    return float(p) if p.ndim == 0 else p


def _folded_hz(f, fs):
    return np.abs(f - fs * np.round(f / fs))


def event_rms_factor(duration_s: float, tau_s: float) -> float:
    """RMS over the event window of exp(-t/tau)*sin(2 pi f t) for unit A.

    Uses the slowly-varying-envelope approximation (the sine averages to 1/2).
    """
    mean_sq = 0.5 * (tau_s / 2.0) * (1.0 - np.exp(-2.0 * duration_s / tau_s)) / duration_s
    return float(np.sqrt(mean_sq))


def event_amplitude(snr_db: float, noise_std: float, params: SignalParams) -> float:
    """Peak amplitude A giving an event RMS of 10^(snr/20) * noise_std."""
    rms = 10.0 ** (snr_db / 20.0) * noise_std
    return rms / event_rms_factor(params.event_duration_s, params.event_decay_tau_s)


def event_waveform(t_rel_s, event: GroundTruthEvent, inband_noise_std: float,
                   params: SignalParams = SignalParams()):
    """Event sample(s) at time(s) t_rel after onset; zero outside the window."""
    t = np.asarray(t_rel_s, dtype=float)
    a = event_amplitude(event.snr_db, inband_noise_std, params)
    y = a * np.exp(-t / params.event_decay_tau_s) * np.sin(2 * np.pi * event.carrier_hz * t)
    y = np.where((t >= 0) & (t <= event.duration_s), y, 0.0)
    return float(y) if y.ndim == 0 else y


def schedule_events(node_id: int, run_duration_s: float, params: SignalParams,
                    rng: np.random.Generator, snr_db: float = 18.0) -> List[GroundTruthEvent]:
    """Poisson event schedule for one node.

    Arrivals start at the end of warmup. After an event the process restarts
    at the event's end, so events on a node never overlap; an event that
    would run past the end of the run is dropped.
    """
    warm = params.warmup_s
    if run_duration_s <= warm:
        raise ValueError("run must be longer than warmup")
    events: List[GroundTruthEvent] = []
    rate = params.event_rate_per_hr if params.events_enabled else 0.0
    if rate <= 0:
        return events
    mean_gap = 3600.0 / rate
    lo, hi = params.event_band_hz
    t = warm
    while True:
        t += rng.exponential(mean_gap)
        if t + params.event_duration_s > run_duration_s:
            break
        carrier = rng.uniform(lo, hi)
        jit = rng.uniform(-params.snr_jitter_db, params.snr_jitter_db) if params.snr_jitter_db > 0 else 0.0
        snr = snr_db + jit
        if params.snr_reference == "onset":
            std = np.sqrt(drift_power(t, params))
        else:
            std = np.sqrt(params.base_noise_power)
        amp = event_amplitude(snr, std, params)
        events.append(GroundTruthEvent(node_id, t, params.event_duration_s, carrier,
                                       snr, len(events), amp))
        t += params.event_duration_s
    return events


def _draw_bursts(rng, n, t_end, amp, dur, freq, fs, guard, log_amp):
    onsets = rng.uniform(0.0, t_end, n)
    f = rng.uniform(freq[0], freq[1], n)
    bad = _folded_hz(f, fs) < guard
    while np.any(bad):
        f[bad] = rng.uniform(freq[0], freq[1], int(bad.sum()))
        bad = _folded_hz(f, fs) < guard
    u = rng.uniform(size=n)
    a = amp[0] * (amp[1] / amp[0]) ** u if log_amp else amp[0] + (amp[1] - amp[0]) * u
    d = rng.uniform(dur[0], dur[1], n)
    ph = rng.uniform(0, 2 * np.pi, n)
    return np.stack([onsets, d, f, a, ph], axis=1)


def schedule_bursts(run_duration_s: float, params: SignalParams,
                    rng: np.random.Generator) -> np.ndarray:
    """Poisson digital bursts over the whole run (warmup included).

    Returns an array with columns onset_s, duration_s, freq_hz, amp_factor,
    phase, sorted by onset. Switching bursts and strong bursts are drawn from
    separate Poisson processes.
    """
    p = params
    if not p.bursts_enabled:
        return np.zeros((0, 5))
    hr = run_duration_s / 3600.0
    weak = _draw_bursts(rng, rng.poisson(max(p.burst_rate_per_hr, 0) * hr), run_duration_s,
                        p.burst_amp_range, p.burst_duration_s, p.burst_freq_range_hz,
                        p.sample_rate_hz, p.burst_alias_guard_hz, False)
    strong = _draw_bursts(rng, rng.poisson(max(p.strong_burst_rate_per_hr, 0) * hr),
                          run_duration_s, p.strong_burst_amp_range, p.strong_burst_duration_s,
                          p.burst_freq_range_hz, p.sample_rate_hz,
                          p.strong_burst_alias_guard_hz, True)
    b = np.concatenate([weak, strong])
    return b[np.argsort(b[:, 0], kind="stable")]


def burst_samples_oversampled(burst, fs: float = FS_HZ, factor: int = OVERSAMPLE):
    """Reference synthesis on a ``factor``-times finer grid, then plain decimation.

    Returns (sample indices at fs, unit-amplitude values). Used to check the
    direct synthesis in :class:`NodeSignal`.
    """
    fine = fs * factor
    k0 = int(np.ceil(burst.onset_s * fine))
    k1 = int(np.ceil((burst.onset_s + burst.duration_s) * fine))
    k = np.arange(k0, k1)
    k = k[k % factor == 0]
    t = k / fine
    return k // factor, np.sin(2 * np.pi * burst.freq_hz * (t - burst.onset_s) + burst.phase)


class NodeSignal:
    """Deterministic signal realisation for one node.

    Parameters
    ----------
    node_id : int
    n_frames : int
        Run length in frames.
    snr_db : float
        Nominal event SNR.
    params : SignalParams
    seed : int, sequence of int or SeedSequence
        Entropy for the node stream; different nodes must use different seeds.
    """

    def __init__(self, node_id: int, n_frames: int, snr_db: float,
                 params: SignalParams = SignalParams(), seed=0):
        self.node_id = node_id
        self.n_frames = int(n_frames)
        self.snr_db = snr_db
        self.params = params
        self._ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        ev_ss, burst_ss, mains_ss, self._noise_ss = self._ss.spawn(4)
        dur = self.duration_s
        self.events = schedule_events(node_id, dur, params, np.random.default_rng(ev_ss), snr_db)
        self.bursts = schedule_bursts(dur, params, np.random.default_rng(burst_ss))
        self.mains_phase = float(np.random.default_rng(mains_ss).uniform(0, 2 * np.pi))
        self._n_blocks = -(-self.n_frames // NOISE_BLOCK_FRAMES)

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.params.frame_period_s

    def _noise_block(self, b: int) -> np.ndarray:
        ss = np.random.SeedSequence(self._ss.entropy,
                                    spawn_key=self._ss.spawn_key + (4, b))
        return np.random.default_rng(ss).standard_normal(NOISE_BLOCK_FRAMES * FRAME_LEN)

    def samples(self, m0: int = 0, m1: Optional[int] = None) -> np.ndarray:
        """Flat sample array for frames m0..m1-1."""
        if m1 is None:
            m1 = self.n_frames
        if not 0 <= m0 <= m1 <= self.n_frames:
            raise IndexError("frame range outside the run")
        p = self.params
        L = FRAME_LEN
        n0, n1 = m0 * L, m1 * L
        n = np.arange(n0, n1)
        t = n / p.sample_rate_hz
        P = drift_power(t, p)
        sq = np.sqrt(P)

        # thermal noise, assembled from whole blocks
        b0, b1 = n0 // (NOISE_BLOCK_FRAMES * L), -(-n1 // (NOISE_BLOCK_FRAMES * L))
        noise = np.concatenate([self._noise_block(b) for b in range(b0, b1)]) if n1 > n0 else np.zeros(0)
        off = n0 - b0 * NOISE_BLOCK_FRAMES * L
        x = noise[off:off + (n1 - n0)] * sq

        if p.mains_enabled and p.mains_amp_factor > 0:
            x += p.mains_amp_factor * sq * np.cos(2 * np.pi * p.mains_freq_hz * t + self.mains_phase)

        fs = p.sample_rate_hz
        b = self.bursts
        if len(b):
            i0 = np.maximum(np.ceil(b[:, 0] * fs).astype(np.int64), n0)
            i1 = np.minimum(np.ceil((b[:, 0] + b[:, 1]) * fs).astype(np.int64), n1)
            keep = i1 > i0
            if np.any(keep):
                i0, i1, bk = i0[keep], i1[keep], b[keep]
                lens = i1 - i0
                owner = np.repeat(np.arange(len(bk)), lens)
                idx = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens) + np.repeat(i0, lens)
                tt = idx / fs - bk[owner, 0]
                val = bk[owner, 3] * np.sin(2 * np.pi * bk[owner, 2] * tt + bk[owner, 4])
                x += np.bincount(idx - n0, weights=val, minlength=n1 - n0) * sq

        for ev in self.events:
            i0 = max(int(np.ceil(ev.onset_s * fs)), n0)
            i1 = min(int(np.floor(ev.end_s * fs)) + 1, n1)
            if i1 <= i0:
                continue
            tr = np.arange(i0, i1) / fs - ev.onset_s
            x[i0 - n0:i1 - n0] += (ev.amplitude * np.exp(-tr / p.event_decay_tau_s)
                                   * np.sin(2 * np.pi * ev.carrier_hz * tr))
        return x

    def frames(self, m0: int = 0, m1: Optional[int] = None) -> np.ndarray:
        """Samples for frames m0..m1-1 shaped (n, 128)."""
        return self.samples(m0, m1).reshape(-1, FRAME_LEN)

    def frame(self, m: int) -> Frame:
        return Frame(self.node_id, m, self.samples(m, m + 1))


def synth_frame(node_id: int, m: int, signal: NodeSignal) -> Frame:
    """Frame ``m`` of a node realisation."""
    if signal.node_id != node_id:
        raise ValueError("signal belongs to another node")
    return signal.frame(m)


def frame_statistic(frames: np.ndarray) -> np.ndarray:
    """Broadband cell statistic X(m) = sum of squared samples."""
    f = np.asarray(frames, dtype=float)
    return np.einsum("...i,...i->...", f, f)


def event_windows(events: Sequence[GroundTruthEvent]) -> np.ndarray:
    """(n, 2) array of [onset, end] times."""
    if not events:
        return np.zeros((0, 2))
    return np.array([[e.onset_s, e.end_s] for e in events])
