"""Five frame-based detectors behind one streaming interface.

Every detector consumes a :class:`~meshdetect.signal.Frame` and returns a
:class:`DetectorOutput`. The strength is scaled so the canonical threshold
sits at 1.0, i.e. ``trigger == (strength >= 1)``.

Each class also offers ``run(frames)``, a batch path over a whole node
series starting from a fresh state. It returns the same strengths as
feeding the frames one at a time through ``process``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signal import FRAME_LEN, Frame, frame_statistic

N_BINS = FRAME_LEN // 2

TSNFA = "TSNFA"
LIPSKI = "LIPSKI"
CA_CFAR = "CA_CFAR"
OS_CFAR = "OS_CFAR"
CUSUM = "CUSUM"
DETECTOR_IDS = (TSNFA, LIPSKI, CA_CFAR, OS_CFAR, CUSUM)


@dataclass(frozen=True)
class DetectorOutput:
    trigger: bool
    strength: float
    detector_id: str
    frame_index: int
    node_id: int


def hann128() -> np.ndarray:
    """Periodic Hann window of length 128."""
    n = np.arange(FRAME_LEN)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / FRAME_LEN)


def fft128(samples, window: Optional[np.ndarray] = None) -> np.ndarray:
    """Magnitudes |X_k| for k = 0..63 of a 128-sample frame (or a stack of frames)."""
    x = np.asarray(samples, dtype=float)
    if x.shape[-1] != FRAME_LEN:
        raise ValueError("fft128 needs 128 samples per frame")
    if window is not None:
        x = x * window
    return np.abs(np.fft.rfft(x, axis=-1)[..., :N_BINS])


def dft_magnitudes(samples) -> np.ndarray:
    """Direct O(N^2) DFT magnitudes for bins 0..63. Slow; a test oracle."""
    x = np.asarray(samples, dtype=float)
    n = np.arange(FRAME_LEN)
    out = np.empty(N_BINS)
    for k in range(N_BINS):
        re = im = 0.0
        for i in range(FRAME_LEN):
            ang = -2.0 * math.pi * k * n[i] / FRAME_LEN
            re += x[i] * math.cos(ang)
            im += x[i] * math.sin(ang)
        out[k] = math.hypot(re, im)
    return out


def _out(trigger, strength, det, frame):
    return DetectorOutput(bool(trigger), float(strength), det, frame.index, frame.node_id)


class Detector:
    """Common interface; subclasses define ``detector_id``."""

    detector_id = ""

    def process(self, frame: Frame) -> DetectorOutput:
        raise NotImplementedError

    def run(self, frames: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def get_state(self) -> dict:
        return _to_plain(asdict(self.state))


def _to_plain(d):
    if isinstance(d, dict):
        return {k: _to_plain(v) for k, v in d.items()}
    if isinstance(d, np.ndarray):
        return d.tolist()
    return d


# --------------------------------------------------------------------- TSNFA

@dataclass
class TsnfaState:
    bins: List[int]
    depth_d: int
    depth_a: int
    zeta: float
    buf_d: np.ndarray
    buf_a: np.ndarray
    fill_d: int = 0
    fill_a: int = 0
    pos_d: int = 0
    pos_a: int = 0
    frames_seen: int = 0


class Tsnfa(Detector):
    """Two-stage median noise floor per bin with a multiplicative threshold."""

    detector_id = TSNFA

    def __init__(self, zeta=6.0, depth_d=3, depth_a=64, bins=(1, 6)):
        b = list(range(bins[0], bins[1] + 1))
        self.state = TsnfaState(b, depth_d, depth_a, float(zeta),
                                np.zeros((len(b), depth_d)), np.zeros((len(b), depth_a)))

    @property
    def warmup_frames(self) -> int:
        return self.state.depth_d + self.state.depth_a - 1

    @property
    def noise_floor(self) -> np.ndarray:
        st = self.state
        return np.median(st.buf_a[:, :st.fill_a], axis=1)

    def push_stage2(self, values):
        """Push one stage-1 output per bin into the stage-2 ring."""
        st = self.state
        st.buf_a[:, st.pos_a] = values
        st.pos_a = (st.pos_a + 1) % st.depth_a
        st.fill_a = min(st.fill_a + 1, st.depth_a)

    def process(self, frame: Frame) -> DetectorOutput:
        st = self.state
        mag = fft128(frame.samples)[st.bins]
        st.buf_d[:, st.pos_d] = mag
        st.pos_d = (st.pos_d + 1) % st.depth_d
        st.fill_d = min(st.fill_d + 1, st.depth_d)
        st.frames_seen += 1
        if st.fill_d < st.depth_d:
            return _out(False, 0.0, self.detector_id, frame)
        self.push_stage2(np.median(st.buf_d, axis=1))
        if st.fill_a < st.depth_a:
            return _out(False, 0.0, self.detector_id, frame)
        s = float(np.max(mag / (st.zeta * np.median(st.buf_a, axis=1))))
        return _out(s >= 1.0, s, self.detector_id, frame)

    def run(self, frames: np.ndarray, chunk: int = 4096) -> np.ndarray:
        st = self.state
        mag = fft128(frames)[:, st.bins]
        return tsnfa_strength(mag, st.zeta, st.depth_d, st.depth_a, chunk)


def tsnfa_strength(mag: np.ndarray, zeta=6.0, depth_d=3, depth_a=64, chunk=4096) -> np.ndarray:
    """Batch TSNFA strength from per-bin magnitudes shaped (n_frames, n_bins)."""
    n = len(mag)
    out = np.zeros(n)
    first = depth_d + depth_a - 2
    if n <= first:
        return out
    s1 = np.median(sliding_window_view(mag, depth_d, axis=0), axis=-1)
    # s1[j] covers frames j..j+depth_d-1; s2 for frame m uses s1[m-depth_d-depth_a+2 .. m-depth_d+1]
    for a in range(0, len(s1) - depth_a + 1, chunk):
        b = min(a + chunk, len(s1) - depth_a + 1)
        win = sliding_window_view(s1[a:b + depth_a - 1], depth_a, axis=0)
        s2 = np.median(win, axis=-1)
        m = np.arange(a, b) + first
        out[m] = np.max(mag[m] / (zeta * s2), axis=1)
    return out


# -------------------------------------------------------------------- Lipski

@dataclass
class LipskiState:
    bins: List[int]
    k: float
    n_bins_min: int
    m_cal: int
    alpha: float
    mu: np.ndarray
    var: np.ndarray
    cal_buf: np.ndarray
    cal_count: int = 0


class Lipski(Detector):
    """Per-bin mean + k*std threshold on Hann-windowed bin energy.

    Fires when at least ``n_bins_min`` adjacent bins of the event band
    exceed their thresholds. Bin statistics are calibrated over the first
    ``m_cal`` frames, then tracked by an EMA that is frozen on frames that
    trigger.
    """

    detector_id = LIPSKI

    def __init__(self, k=3.0, n_bins_min=3, m_cal=100, alpha=0.01, bins=(1, 8)):
        b = list(range(bins[0], bins[1] + 1))
        if len(b) < n_bins_min:
            raise ValueError("band narrower than n_bins_min")
        self.window = hann128()
        self.state = LipskiState(b, float(k), int(n_bins_min), int(m_cal), float(alpha),
                                 np.zeros(len(b)), np.zeros(len(b)), np.zeros((m_cal, len(b))))

    def bin_statistic(self, samples) -> np.ndarray:
        """Windowed bin energy |X_b|^2 for the band bins."""
        return fft128(samples, self.window)[..., self.state.bins] ** 2

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.state.var)

    def exceedance(self, stat) -> np.ndarray:
        """Normalised per-bin exceedance (s_b - mu_b) / (k sigma_b)."""
        st = self.state
        return (np.asarray(stat) - st.mu) / (st.k * np.sqrt(st.var))

    def strength_of(self, stat) -> float:
        e = self.exceedance(stat)
        w = sliding_window_view(e, self.state.n_bins_min)
        return max(float(np.max(np.min(w, axis=1))), 0.0)

    def _finish_calibration(self):
        st = self.state
        st.mu, st.var = _calibrate(st.cal_buf)

    def process(self, frame: Frame) -> DetectorOutput:
        st = self.state
        stat = self.bin_statistic(frame.samples)
        if st.cal_count < st.m_cal:
            st.cal_buf[st.cal_count] = stat
            st.cal_count += 1
            if st.cal_count == st.m_cal:
                self._finish_calibration()
            return _out(False, 0.0, self.detector_id, frame)
        s = self.strength_of(stat)
        if s < 1.0:
            d = stat - st.mu
            st.mu = st.mu + st.alpha * d
            st.var = (1.0 - st.alpha) * (st.var + st.alpha * d * d)
        return _out(s >= 1.0, s, self.detector_id, frame)

    def run(self, frames: np.ndarray) -> np.ndarray:
        st = self.state
        stat = np.ascontiguousarray(self.bin_statistic(frames))
        out = np.zeros(len(stat))
        if len(stat) < st.m_cal:
            return out
        mu, var = _calibrate(stat[:st.m_cal])
        _lipski_loop(stat, mu.copy(), var.copy(), st.k, st.alpha, st.n_bins_min, st.m_cal, out)
        return out


def _calibrate(buf):
    mu = np.mean(buf, axis=0)
    var = np.var(buf, axis=0, ddof=1)
    # keep sigma strictly positive even for degenerate input
    var = np.maximum(var, np.finfo(float).tiny)
    return mu, var


@numba.njit(cache=True)
def _lipski_loop(stat, mu, var, k, alpha, nmin, m_cal, out):
    n, nb = stat.shape
    e = np.empty(nb)
    for m in range(m_cal, n):
        for b in range(nb):
            e[b] = (stat[m, b] - mu[b]) / (k * np.sqrt(var[b]))
        best = -np.inf
        for b0 in range(nb - nmin + 1):
            lo = e[b0]
            for b in range(b0 + 1, b0 + nmin):
                if e[b] < lo:
                    lo = e[b]
            if lo > best:
                best = lo
        s = max(best, 0.0)
        out[m] = s
        if s < 1.0:
            for b in range(nb):
                d = stat[m, b] - mu[b]
                mu[b] = mu[b] + alpha * d
                var[b] = (1.0 - alpha) * (var[b] + alpha * d * d)


# ---------------------------------------------------------------------- CFAR

def cfar_alpha_ca(n_ref: int, p_fa: float) -> float:
    """CA-CFAR multiplier for exponential cells: N (P_fa^(-1/N) - 1)."""
    if n_ref < 1 or not 0.0 < p_fa < 1.0:
        raise ValueError("need n_ref >= 1 and 0 < p_fa < 1")
    return n_ref * (p_fa ** (-1.0 / n_ref) - 1.0)


@dataclass
class CfarState:
    n_ref: int
    guard: int
    variant: str
    rank: int
    alpha: float
    history: np.ndarray
    fill: int = 0


class CaCfar(Detector):
    """Cell-averaging CFAR on the frame energy; reference cells are frames m-33..m-2."""

    detector_id = CA_CFAR

    def __init__(self, n_ref=32, guard=1, p_fa=1e-3, alpha=None):
        a = cfar_alpha_ca(n_ref, p_fa) if alpha is None else alpha
        self.state = CfarState(n_ref, guard, "mean", 0, float(a), np.zeros(n_ref + guard))

    @property
    def warmup_frames(self) -> int:
        return self.state.n_ref + self.state.guard + 1

    def reference_level(self, cells: np.ndarray) -> float:
        return float(np.mean(cells))

    def process(self, frame: Frame) -> DetectorOutput:
        return self.process_statistic(float(frame_statistic(frame.samples)), frame)

    def process_statistic(self, x: float, frame: Frame) -> DetectorOutput:
        st = self.state
        s = 0.0
        if st.fill >= self.warmup_frames:
            s = x / (st.alpha * self.reference_level(st.history[:st.n_ref]))
        # the ring absorbs the tested statistic only after the decision
        st.history[:-1] = st.history[1:]
        st.history[-1] = x
        st.fill += 1
        return _out(s >= 1.0, s, self.detector_id, frame)

    def run(self, frames: np.ndarray) -> np.ndarray:
        return self.run_statistic(frame_statistic(frames))

    def _levels(self, ref: np.ndarray) -> np.ndarray:
        return np.mean(ref, axis=1)

    def run_statistic(self, x: np.ndarray) -> np.ndarray:
        st = self.state
        x = np.asarray(x, dtype=float)
        out = np.zeros(len(x))
        w = self.warmup_frames
        if len(x) <= w:
            return out
        ref = sliding_window_view(x, st.n_ref)
        m = np.arange(w, len(x))
        z = self._levels(ref[m - st.n_ref - st.guard])
        out[w:] = x[w:] / (st.alpha * z)
        return out


class OsCfar(CaCfar):
    """Order-statistic CFAR: the reference level is the ``rank``-th smallest cell."""

    detector_id = OS_CFAR

    def __init__(self, n_ref=32, guard=1, rank=None, alpha=6.09):
        super().__init__(n_ref, guard, alpha=alpha)
        r = (3 * n_ref) // 4 if rank is None else rank
        self.state.variant = "order"
        self.state.rank = int(r)

    def reference_level(self, cells: np.ndarray) -> float:
        return float(np.partition(cells, self.state.rank - 1)[self.state.rank - 1])

    def _levels(self, ref: np.ndarray) -> np.ndarray:
        r = self.state.rank - 1
        return np.partition(ref, r, axis=1)[:, r]


# --------------------------------------------------------------------- CUSUM

@dataclass
class CusumState:
    h: float
    k_end: float
    snr_factor: float
    n_cal: int
    holdoff: int
    mu0: float = 0.0
    var: float = 0.0
    mu1: float = 0.0
    score: float = 0.0
    hold: int = 0
    cal_buf: Optional[np.ndarray] = None
    cal_count: int = 0


class Cusum(Detector):
    """Variance-shift CUSUM on the frame energy.

    After a trigger the score resets to zero and the detector is disarmed
    for ``holdoff`` frames; its strength is reported as 0 while disarmed.
    """

    detector_id = CUSUM

    def __init__(self, alpha_fa=1e-5, k_end=None, snr_factor=3.0, n_cal=512, holdoff=1):
        h = math.log(1.0 / alpha_fa)
        ke = 2.0 * h if k_end is None else float(k_end)
        self.state = CusumState(h, ke, float(snr_factor), int(n_cal), int(holdoff),
                                cal_buf=np.zeros(n_cal))

    def increment(self, x: float) -> float:
        st = self.state
        return (x - st.mu0) ** 2 / (2 * st.var) - (st.mu1 - st.mu0) ** 2 / (4 * st.var)

    def _finish_calibration(self):
        st = self.state
        st.mu0, st.var, st.mu1 = _cusum_calibrate(st.cal_buf, st.snr_factor)

    def process(self, frame: Frame) -> DetectorOutput:
        return self.process_statistic(float(frame_statistic(frame.samples)), frame)

    def process_statistic(self, x: float, frame: Frame) -> DetectorOutput:
        st = self.state
        if st.cal_count < st.n_cal:
            st.cal_buf[st.cal_count] = x
            st.cal_count += 1
            if st.cal_count == st.n_cal:
                self._finish_calibration()
            return _out(False, 0.0, self.detector_id, frame)
        st.score = min(max(st.score + self.increment(x), 0.0), st.k_end)
        if st.hold > 0:
            st.hold -= 1
            return _out(False, 0.0, self.detector_id, frame)
        s = st.score / st.h
        if s >= 1.0:
            st.score = 0.0
            st.hold = st.holdoff
        return _out(s >= 1.0, s, self.detector_id, frame)

    def run(self, frames: np.ndarray) -> np.ndarray:
        return self.run_statistic(frame_statistic(frames))

    def run_statistic(self, x: np.ndarray) -> np.ndarray:
        st = self.state
        x = np.ascontiguousarray(x, dtype=float)
        out = np.zeros(len(x))
        if len(x) < st.n_cal:
            return out
        mu0, var, mu1 = _cusum_calibrate(x[:st.n_cal], st.snr_factor)
        _cusum_loop(x, mu0, var, mu1, st.h, st.k_end, st.n_cal, st.holdoff, out)
        return out


def _cusum_calibrate(buf, snr_factor):
    mu0 = float(np.mean(buf))
    var = max(float(np.var(buf, ddof=1)), np.finfo(float).tiny)
    return mu0, var, mu0 + snr_factor * math.sqrt(var)


@numba.njit(cache=True)
def _cusum_loop(x, mu0, var, mu1, h, k_end, n_cal, holdoff, out):
    score = 0.0
    hold = 0
    for m in range(n_cal, len(x)):
        d = (x[m] - mu0) ** 2 / (2 * var) - (mu1 - mu0) ** 2 / (4 * var)
        score = min(max(score + d, 0.0), k_end)
        if hold > 0:
            hold -= 1
            continue
        s = score / h
        out[m] = s
        if s >= 1.0:
            score = 0.0
            hold = holdoff


# ------------------------------------------------------------------- factory

def make_detector(det_id: str, **kw) -> Detector:
    cls: Dict[str, type] = {TSNFA: Tsnfa, LIPSKI: Lipski, CA_CFAR: CaCfar,
                            OS_CFAR: OsCfar, CUSUM: Cusum}
    return cls[det_id](**kw)


def run_all(frames: np.ndarray, detectors: Dict[str, Detector]) -> Dict[str, np.ndarray]:
    """Batch strengths for several detectors over one node series.

    The FFT and the frame energy are shared by the detectors that need them.
    """
    out = {}
    x = None
    for name, det in detectors.items():
        if isinstance(det, (CaCfar, Cusum)):
            if x is None:
                x = frame_statistic(frames)
            out[name] = det.run_statistic(x)
        else:
            out[name] = det.run(frames)
    return out
