"""Signal cleaning and physiological decomposition of wristband channels."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .datamodel import DataError, SensorStream

logger = logging.getLogger(__name__)

BVP_BAND_HZ = (0.5, 3.0)
BVP_ORDER = 2
EDA_CUTOFF_HZ = 0.8
EDA_ORDER = 8
TONIC_CUTOFF_HZ = 0.05

SCR_MIN_AMPLITUDE = 0.01
SCR_MIN_PROMINENCE = 0.005
SCR_REFRACTORY_S = 1.0

HR_PEAK_PERCENTILE = 60.0
HR_REFRACTORY_S = 0.33
HR_RANGE = (30.0, 220.0)


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    order: int
    cutoffs_hz: tuple
    sample_rate_hz: float

    def __post_init__(self):
        cut = tuple(float(c) for c in np.atleast_1d(self.cutoffs_hz))
        object.__setattr__(self, "cutoffs_hz", cut)
        nyq = self.sample_rate_hz / 2
        if self.kind not in ("lowpass", "bandpass"):
            raise ValueError(f"unsupported filter kind {self.kind!r}")
        if self.order < 1:
            raise ValueError("filter order must be a positive integer")
        if len(cut) != (2 if self.kind == "bandpass" else 1):
            raise ValueError(f"{self.kind} needs {2 if self.kind == 'bandpass' else 1} cutoff(s)")
        if any(c <= 0 or c >= nyq for c in cut):
            raise ValueError(f"cutoffs {cut} must lie in (0, Nyquist={nyq})")
        if self.kind == "bandpass" and not cut[0] < cut[1]:
            raise ValueError("band-pass low cutoff must be below high cutoff")


@dataclass(frozen=True)
class FilterCoefficients:
    spec: FilterSpec
    sos: np.ndarray

    @property
    def padlen(self) -> int:
        return 3 * self.spec.order

    def response(self, freqs_hz, zero_phase: bool = False) -> np.ndarray:
        """Magnitude response at ``freqs_hz``; squared when applied forward-backward."""
        _, h = signal.sosfreqz(self.sos, worN=np.atleast_1d(np.asarray(freqs_hz, float)),
                               fs=self.spec.sample_rate_hz)
        mag = np.abs(h)
        return mag ** 2 if zero_phase else mag

    def apply(self, x) -> np.ndarray:
        """Zero-phase (forward-backward) filtering with odd reflection padding."""
        x = np.asarray(x, dtype=float)
        padlen = min(self.padlen, len(x) - 1)
        return signal.sosfiltfilt(self.sos, x, padtype="odd", padlen=padlen)


def design_butterworth(spec: FilterSpec) -> FilterCoefficients:
    btype = "lowpass" if spec.kind == "lowpass" else "bandpass"
    cut = spec.cutoffs_hz[0] if spec.kind == "lowpass" else list(spec.cutoffs_hz)
    sos = signal.butter(spec.order, cut, btype=btype, fs=spec.sample_rate_hz, output="sos")
    return FilterCoefficients(spec, sos)


def _require(stream: SensorStream, channel: str, rate: float) -> None:
    if stream.channel != channel:
        raise DataError(f"expected a {channel} stream, got {stream.channel}")
    if abs(stream.rate_hz - rate) > 0.01 * rate:
        raise DataError(f"{channel} stream must be sampled at {rate} Hz, got {stream.rate_hz}")


def bvp_filter(rate_hz: float = 64.0) -> FilterCoefficients:
    return design_butterworth(FilterSpec("bandpass", BVP_ORDER, BVP_BAND_HZ, rate_hz))


def eda_filter(rate_hz: float = 4.0) -> FilterCoefficients:
    return design_butterworth(FilterSpec("lowpass", EDA_ORDER, (EDA_CUTOFF_HZ,), rate_hz))


def filter_bvp(stream: SensorStream) -> SensorStream:
    _require(stream, "bvp", 64.0)
    return stream.replace_values(bvp_filter(stream.rate_hz).apply(stream.values))


def filter_eda(stream: SensorStream) -> SensorStream:
    _require(stream, "eda", 4.0)
    return stream.replace_values(eda_filter(stream.rate_hz).apply(stream.values))


@dataclass(frozen=True)
class HeartRateSeries:
    times: np.ndarray  # window start, seconds from the reference time
    hr_bpm: np.ndarray


def detect_beats(segment: np.ndarray, rate_hz: float) -> np.ndarray:
    """Indices of beat peaks: local maxima above the 60th percentile, 0.33 s apart."""
    distance = max(1, int(np.floor(HR_REFRACTORY_S * rate_hz)))
    peaks, _ = signal.find_peaks(segment, height=np.percentile(segment, HR_PEAK_PERCENTILE),
                                 distance=distance)
    return peaks


def extract_heart_rate(bvp: SensorStream, window_s: float = 10.0, stride_s: float = 1.0,
                       ref_us: int | None = None) -> HeartRateSeries:
    """Sliding-window peak-count heart rate from a filtered BVP stream.

    Each window yields ``60 * (peaks - 1) / (t_last - t_first)``; windows
    with fewer than three peaks or an implausible rate produce no sample.
    """
    fs = bvp.rate_hz
    n = int(round(window_s * fs))
    step = int(round(stride_s * fs))
    x = bvp.values
    if len(x) < n:
        raise DataError(f"BVP stream shorter than one {window_s} s window")
    offset = bvp.times_s(ref_us)[0]
    times, rates = [], []
    for start in range(0, len(x) - n + 1, step):
        seg = x[start:start + n]
        if np.ptp(seg) == 0:
            continue
        peaks = detect_beats(seg, fs)
        if len(peaks) < 3:
            continue
        hr = 60.0 * (len(peaks) - 1) / ((peaks[-1] - peaks[0]) / fs)
        if HR_RANGE[0] <= hr <= HR_RANGE[1]:
            times.append(offset + start / fs)
            rates.append(hr)
    return HeartRateSeries(np.asarray(times, float), np.asarray(rates, float))


@dataclass(frozen=True)
class EdaDecomposition:
    tonic: np.ndarray
    scl_series: np.ndarray  # tonic clamped at zero
    phasic: np.ndarray
    scr_times: np.ndarray  # seconds from the stream start
    scr_amplitudes: np.ndarray

    @property
    def scr_events(self) -> list[tuple[float, float]]:
        return list(zip(self.scr_times.tolist(), self.scr_amplitudes.tolist()))


def decompose_eda(eda: SensorStream) -> EdaDecomposition:
    """Split cleaned EDA into tonic level and phasic responses.

    The tonic trace is a zero-phase first-order low-pass at 0.05 Hz and the
    phasic trace is the remainder, so ``tonic + phasic`` reproduces the input.
    """
    x = eda.values
    fs = eda.rate_hz
    tonic_filter = design_butterworth(FilterSpec("lowpass", 1, (TONIC_CUTOFF_HZ,), fs))
    tonic = tonic_filter.apply(x)
    phasic = x - tonic
    peaks, _ = signal.find_peaks(
        phasic,
        height=SCR_MIN_AMPLITUDE,
        prominence=SCR_MIN_PROMINENCE,
        distance=max(1, int(round(SCR_REFRACTORY_S * fs))),
    )
    peaks = peaks[phasic[peaks] > SCR_MIN_AMPLITUDE]
    return EdaDecomposition(tonic, np.clip(tonic, 0.0, None), phasic, peaks / fs, phasic[peaks])
