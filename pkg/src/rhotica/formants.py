"""LPC formant analysis: framing, Levinson-Durbin, formant picking from the
roots of the prediction polynomial, F3 tracking and slope statistics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus_io import Pcm
from .errors import DegenerateInputError, InsufficientDataError, NumericalInstabilityError, RhoticaError
from .roots import polynomial_roots


@dataclass(frozen=True)
class TrackConfig:
    sample_rate: int = 16000
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    preemphasis: float = 0.97
    order: int | None = None  # None: 2 + sample_rate/1000
    max_bandwidth: float = 400.0
    min_freq: float = 90.0

    def __post_init__(self):
        if self.sample_rate <= 0 or self.frame_ms <= 0 or self.hop_ms <= 0:
            raise RhoticaError("sample_rate, frame_ms and hop_ms must be positive")
        if not 0.0 <= self.preemphasis < 1.0:
            raise RhoticaError("preemphasis must lie in [0, 1)")
        if self.order is not None and self.order < 2:
            raise RhoticaError("LPC order must be at least 2")

    @property
    def lpc_order(self) -> int:
        return self.order if self.order is not None else 2 + self.sample_rate // 1000

    def to_dict(self) -> dict:
        d = asdict(self)
        d["order"] = self.lpc_order
        return d


# ---------------------------------------------------------------------------
# Front end


def frame_geometry(sample_rate: int, frame_ms: float, hop_ms: float) -> tuple[int, int]:
    return round(frame_ms * sample_rate / 1000), round(hop_ms * sample_rate / 1000)


def preprocess(pcm: Pcm, frame_ms: float = 25.0, hop_ms: float = 10.0,
               preemphasis: float = 0.97) -> np.ndarray:
    """Pre-emphasise, frame and Hamming-window a signal.

    Returns an array of shape (n_frames, frame_length); zero frames when the
    signal is shorter than one frame.
    """
    if not 0.0 <= preemphasis < 1.0:
        raise RhoticaError("preemphasis must lie in [0, 1)")
    length, hop = frame_geometry(pcm.sample_rate, frame_ms, hop_ms)
    if length < 1 or hop < 1:
        raise RhoticaError("frame and hop must each span at least one sample")
    x = pcm.samples
    if len(x) < length:
        return np.empty((0, length))
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - preemphasis * x[:-1]
    n_frames = 1 + (len(y) - length) // hop
    idx = np.arange(length)[None, :] + hop * np.arange(n_frames)[:, None]
    return y[idx] * np.hamming(length)


# ---------------------------------------------------------------------------
# LPC


@dataclass(frozen=True, eq=False)
class LpcModel:
    """All-pole model with prediction polynomial A(z) = 1 - sum_k a[k] z^-k."""

    order: int
    coefficients: np.ndarray  # a[1..p]
    gain: float
    reflection: np.ndarray  # k[1..p]
    error_energies: np.ndarray = field(default=None)  # E[0..p]

    @property
    def polynomial(self) -> np.ndarray:
        """Coefficients of z^p A(z), highest power first."""
        return np.concatenate([[1.0], -np.asarray(self.coefficients, dtype=float)])

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[float], gain: float = 1.0) -> "LpcModel":
        """Build a model from known predictor coefficients (reflection
        coefficients are recovered with the step-down recursion)."""
        a = np.asarray(coefficients, dtype=float)
        return cls(order=len(a), coefficients=a, gain=gain, reflection=_step_down(a))


def _step_down(a: np.ndarray) -> np.ndarray:
    p = len(a)
    k = np.zeros(p)
    cur = a.copy()
    for i in range(p - 1, -1, -1):
        k[i] = cur[i]
        if i == 0:
            break
        if abs(k[i]) >= 1.0:
            k[:i] = np.nan
            break
        cur = (cur[:i] + k[i] * cur[:i][::-1]) / (1.0 - k[i] ** 2)
    return k


def autocorrelation(frame: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(frame, dtype=float)
    n = len(x)
    return np.array([np.dot(x[:n - lag], x[lag:]) for lag in range(max_lag + 1)])


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve the Toeplitz normal equations for predictor coefficients.

    Returns ``(a, k, E)``: coefficients a[1..p], reflection coefficients
    k[1..p] and prediction error energies E[0..p].
    """
    r = np.asarray(r, dtype=float)
    if len(r) < order + 1:
        raise RhoticaError(f"need {order + 1} autocorrelation lags, got {len(r)}")
    if r[0] <= 0:
        raise NumericalInstabilityError("autocorrelation r[0] must be positive")
    # Extended precision: speech autocorrelations are often ill-conditioned.
    rl = r.astype(np.longdouble)
    a = np.zeros(order, dtype=np.longdouble)
    k = np.zeros(order, dtype=np.longdouble)
    err = np.zeros(order + 1, dtype=np.longdouble)
    err[0] = rl[0]
    for i in range(order):
        acc = rl[i + 1] - np.dot(a[:i], rl[i:0:-1])
        ki = acc / err[i]
        if not abs(ki) < 1.0:
            raise NumericalInstabilityError(
                f"reflection coefficient {i + 1} is {float(ki):.6g}; autocorrelation not positive definite")
        prev = a[:i].copy()
        a[:i] = prev - ki * prev[::-1]
        a[i] = ki
        k[i] = ki
        err[i + 1] = err[i] * (1 - ki * ki)
        if err[i + 1] <= 0:
            raise NumericalInstabilityError(f"prediction error vanished at order {i + 1}")
    a, k, err = a.astype(float), k.astype(float), err.astype(float)
    return a, k, err


def lpc_fit(frame, order: int) -> LpcModel:
    """Autocorrelation-method LPC of a single (already windowed) frame."""
    x = np.asarray(frame, dtype=float)
    if order < 1:
        raise RhoticaError("LPC order must be positive")
    if len(x) <= order:
        raise RhoticaError(f"frame of {len(x)} samples is too short for order {order}")
    if not np.any(x):
        raise DegenerateInputError("all-zero frame")
    r = autocorrelation(x, order)
    a, k, err = levinson_durbin(r, order)
    return LpcModel(order=order, coefficients=a, gain=math.sqrt(err[-1]), reflection=k, error_energies=err)


# ---------------------------------------------------------------------------
# Formants


@dataclass(frozen=True)
class Formant:
    frequency: float
    bandwidth: float


def formants_from_lpc(model: LpcModel, sample_rate: float, max_bandwidth: float = 400.0,
                      min_freq: float = 90.0) -> list[Formant]:
    """Resonances of the model, ascending in frequency.

    Each root with positive imaginary part gives a candidate at
    ``fs*arg(z)/(2*pi)`` with bandwidth ``-fs*ln|z|/pi``; candidates outside
    ``(min_freq, fs/2 - 50)`` or at least ``max_bandwidth`` wide are dropped.
    """
    roots = polynomial_roots(model.polynomial)
    out = []
    nyquist_guard = sample_rate / 2 - 50.0
    for z in roots:
        if z.imag <= 0 or abs(z) == 0:
            continue
        freq = sample_rate * math.atan2(z.imag, z.real) / (2 * math.pi)
        bw = -sample_rate * math.log(abs(z)) / math.pi
        if min_freq < freq < nyquist_guard and 0 < bw < max_bandwidth:
            out.append(Formant(freq, bw))
    out.sort(key=lambda f: f.frequency)
    return out


@dataclass(frozen=True)
class TrackFrame:
    time: float
    f1: Formant | None = None
    f2: Formant | None = None
    f3: Formant | None = None


@dataclass(frozen=True)
class FormantTrack:
    frames: tuple[TrackFrame, ...]
    span: tuple[float, float]
    utterance_id: str = ""

    def f3_series(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and F3 frequencies of the frames where F3 was found."""
        pts = [(fr.time, fr.f3.frequency) for fr in self.frames if fr.f3 is not None]
        if not pts:
            return np.empty(0), np.empty(0)
        t, f = zip(*pts)
        return np.array(t), np.array(f)


def _resample(pcm: Pcm, rate: int) -> Pcm:
    if pcm.sample_rate == rate:
        return pcm
    from scipy.signal import resample_poly

    g = math.gcd(int(pcm.sample_rate), rate)
    return Pcm(resample_poly(pcm.samples, rate // g, int(pcm.sample_rate) // g), rate)


def frame_formants(frame: np.ndarray, config: TrackConfig) -> list[Formant]:
    """Formants of one windowed frame; empty for silent or unstable frames."""
    try:
        model = lpc_fit(frame, config.lpc_order)
    except (DegenerateInputError, NumericalInstabilityError):
        return []
    return formants_from_lpc(model, config.sample_rate, config.max_bandwidth, config.min_freq)


def track_formants(pcm: Pcm, span: tuple[float, float], config: TrackConfig | None = None,
                   utterance_id: str = "") -> FormantTrack:
    """Formant track over the frames whose centre lies inside ``span``.

    Audio at another rate is resampled to ``config.sample_rate`` first.
    """
    config = config or TrackConfig()
    start, end = span
    if not (0.0 <= start <= end <= pcm.duration + 1e-9):
        raise RhoticaError(f"span {span} lies outside the audio (0..{pcm.duration:.3f} s)")
    pcm = _resample(pcm, config.sample_rate)
    fs = config.sample_rate
    length, hop = frame_geometry(fs, config.frame_ms, config.hop_ms)
    frames = preprocess(pcm, config.frame_ms, config.hop_ms, config.preemphasis)
    out = []
    for i, frame in enumerate(frames):
        t = (i * hop + length / 2) / fs
        if t < start:
            continue
        if t > end:
            break
        found = frame_formants(frame, config)
        f1, f2, f3 = (found + [None, None, None])[:3]
        out.append(TrackFrame(t, f1, f2, f3))
    return FormantTrack(tuple(out), (start, end), utterance_id)


track_f3 = track_formants


def track_many(jobs: Iterable[tuple[str, Pcm, tuple[float, float]]], config: TrackConfig | None = None,
               workers: int = 1) -> list[FormantTrack]:
    """Track several (utterance id, audio, span) jobs, ordered by utterance id."""
    jobs = sorted(jobs, key=lambda j: (j[0], j[2]))
    if workers <= 1:
        return [track_formants(pcm, span, config, utt) for utt, pcm, span in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: track_formants(j[1], j[2], config, j[0]), jobs))


# ---------------------------------------------------------------------------
# Slopes


@dataclass(frozen=True)
class SlopeStat:
    ols_slope: float  # Hz/s
    net_change: float  # Hz
    n_frames: int
    context_id: str | None = None


def f3_slope(track: FormantTrack, context_id: str | None = None) -> SlopeStat:
    """Least-squares F3 slope and summed frame-to-frame F3 change.

    The summed change only counts differences between neighbouring frames
    that both carry an F3 value.
    """
    t, f = track.f3_series()
    if len(t) < 2:
        raise InsufficientDataError(f"{track.utterance_id or 'track'}: need at least 2 frames with F3, "
                                    f"got {len(t)}")
    tc = t - t.mean()
    denom = float(np.dot(tc, tc))
    if denom == 0:
        raise InsufficientDataError("F3 frames share a single time stamp")
    slope = float(np.dot(tc, f - f.mean())) / denom
    net = 0.0
    for prev, cur in zip(track.frames, track.frames[1:]):
        if prev.f3 is not None and cur.f3 is not None:
            net += cur.f3.frequency - prev.f3.frequency
    if context_id is None:
        context_id = track.utterance_id or None
    return SlopeStat(slope, net, len(t), context_id)
