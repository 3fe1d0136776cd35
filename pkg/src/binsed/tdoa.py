"""Per-band time difference of arrival from generalised cross-correlation
with phase transform (GCC-PHAT) weighting.

For a stereo frame the cross-power spectrum is whitened bin-wise,

    G(k) = X1(k) * conj(X2(k)) / (|X1(k)| * |X2(k)|),

then weighted by a triangular mel band response H_b and correlated over
integer lags:

    R_b(delta) = sum_k H_b(k) * G(k) * exp(-2j * pi * k * delta / N).

The emitted delay is argmax_delta |R_b(delta)| restricted to
[-max_lag, +max_lag]; exact ties prefer the smaller |delta| and then the
negative sign.  Positive delays mean channel 2 lags channel 1.  Bins whose
magnitude product falls below a floor contribute nothing, so silent frames
deterministically emit 0.

Delays are estimated independently over three analysis window lengths
centred on the common 20 ms feature hop.  The ``tdoa3`` variant emits all
three per band; the ``tdoa`` variant takes the per-band median across the
windows and then smooths each band with a temporal median filter of
length 3 (truncated at the clip edges).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, FrameGrid, Spectrogram, next_pow2
from .errors import DataError
from .layout import FeatureLayout, FeatureMatrix
from .melbank import MelFilterbank, build_mel_filterbank

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class TdoaConfig:
    band_count: int = 5
    window_lengths_ms: tuple[float, ...] = (120.0, 240.0, 480.0)
    mic_spacing_m: float = 0.20
    speed_of_sound: float = SPEED_OF_SOUND
    spectral_floor: float = 1e-12

    def max_physical_delay(self, sample_rate: int) -> int:
        """Largest physical inter-channel delay in samples, rounded up."""
        return max_delay_samples(self.mic_spacing_m, sample_rate,
                                 self.speed_of_sound)

    def max_lag(self, sample_rate: int) -> int:
        """Search half-width: twice the physical maximum."""
        return 2 * self.max_physical_delay(sample_rate)


def max_delay_samples(mic_spacing_m: float, sample_rate: int,
                      speed_of_sound: float = SPEED_OF_SOUND) -> int:
    if mic_spacing_m <= 0:
        raise ValueError("mic spacing must be positive")
    return int(math.ceil(mic_spacing_m / speed_of_sound * sample_rate))


def _lag_order(max_lag: int, fft_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Candidate lags ordered 0, -1, +1, -2, +2, ... and their irfft indices.

    Ordering encodes the tie break: numpy's argmax keeps the first of equal
    values, so smaller |delta| wins, then the negative sign.
    """
    if fft_size < 2 * max_lag + 1:
        raise ValueError("fft_size too small for the requested lag range")
    offsets = [0]
    for d in range(1, max_lag + 1):
        offsets.extend((-d, d))
    offsets = np.array(offsets, dtype=np.int64)
    # R(delta) lives at irfft index (-delta) mod N.
    indices = (-offsets) % fft_size
    return offsets, indices


def _phat_cross_spectrum(bins1: np.ndarray, bins2: np.ndarray,
                         floor: float) -> np.ndarray:
    cross = bins1 * np.conj(bins2)
    magnitude = np.abs(bins1) * np.abs(bins2)
    live = magnitude > floor
    out = np.zeros_like(cross)
    np.divide(cross, magnitude, out=out, where=live)
    return out


_TIE_REL_TOL = 1e-12


def _band_delays(cross: np.ndarray, weights: np.ndarray, fft_size: int,
                 offsets: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Delays (frames, bands) from a whitened cross-spectrum (frames, bins).

    Scores within a hair of the maximum are treated as tied so that
    mathematically equal |R| values (which the FFT renders with last-bit
    noise) resolve by the search order, not by rounding accidents.
    """
    frames = cross.shape[0]
    delays = np.empty((frames, weights.shape[0]), dtype=np.float64)
    for b in range(weights.shape[0]):
        corr = np.fft.irfft(cross * weights[b], n=fft_size, axis=1)
        scores = np.abs(corr[:, indices])
        top = scores.max(axis=1, keepdims=True)
        at_top = scores >= top * (1.0 - _TIE_REL_TOL)
        delays[:, b] = offsets[np.argmax(at_top, axis=1)]
    return delays


def gcc_phat_band(spec1: Spectrogram, spec2: Spectrogram,
                  filterbank: MelFilterbank, frame: int, band: int,
                  max_lag: int, floor: float = 1e-12) -> int:
    """Band-restricted GCC-PHAT delay for one frame of a stereo spectrogram pair."""
    if spec1.bins.shape != spec2.bins.shape or spec1.fft_size != spec2.fft_size:
        raise ValueError("channel spectrograms must have identical shape")
    if filterbank.fft_size != spec1.fft_size:
        raise ValueError("filterbank fft_size does not match the spectrograms")
    if not 0 <= frame < spec1.frame_count:
        raise IndexError(f"frame {frame} out of range")
    if not 0 <= band < filterbank.band_count:
        raise IndexError(f"band {band} out of range")
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    offsets, indices = _lag_order(max_lag, spec1.fft_size)
    cross = _phat_cross_spectrum(spec1.bins[frame:frame + 1],
                                 spec2.bins[frame:frame + 1], floor)
    delay = _band_delays(cross, filterbank.weights[band:band + 1],
                         spec1.fft_size, offsets, indices)[0, 0]
    return int(delay)


def _frame_centers(frame_count: int, sample_rate: int,
                   grid: FrameGrid) -> np.ndarray:
    hop = grid.hop_samples(sample_rate)
    frame = grid.frame_samples(sample_rate)
    return np.arange(frame_count, dtype=np.int64) * hop + frame // 2


def _gather_segments(samples: np.ndarray, starts: np.ndarray,
                     length: int) -> np.ndarray:
    """Zero-padded (len(starts), length) segment matrix."""
    pad = length
    padded = np.pad(samples, (pad, pad))
    view = np.lib.stride_tricks.sliding_window_view(padded, length)
    return view[starts + pad]


def tdoa_window_spectrograms(clip: AudioClip, window_length_ms: float,
                             grid: FrameGrid | None = None,
                             max_lag: int | None = None,
                             config: TdoaConfig | None = None,
                             ) -> tuple[Spectrogram, Spectrogram]:
    """Rectangular-window stereo spectrograms centred on the feature hop grid.

    These are the window transforms the TDOA extractor correlates; the pair
    is exposed so individual frames and bands can be probed directly.  The
    whole spectrogram is materialised, so keep clips short.
    """
    config = config or TdoaConfig()
    grid = grid or FrameGrid()
    if clip.channel_count != 2:
        raise ValueError("TDOA extraction requires a stereo clip")
    if max_lag is None:
        max_lag = config.max_lag(clip.sample_rate)
    frame_count = grid.frame_count(clip.sample_count, clip.sample_rate)
    if frame_count == 0:
        raise DataError("clip is shorter than one analysis frame")
    window_length = int(round(window_length_ms * clip.sample_rate / 1000.0))
    fft_size = next_pow2(window_length + 2 * max_lag + 1)
    centers = _frame_centers(frame_count, clip.sample_rate, grid)
    starts = centers - window_length // 2
    specs = []
    for ch in range(2):
        segments = _gather_segments(clip.samples[ch], starts, window_length)
        bins = np.fft.rfft(segments, n=fft_size, axis=1)
        specs.append(Spectrogram(bins=bins, fft_size=fft_size,
                                 sample_rate=clip.sample_rate, grid=grid,
                                 channel_index=ch))
    return specs[0], specs[1]


def _temporal_median3(values: np.ndarray) -> np.ndarray:
    """Median filter of length 3 along axis 0, truncated at the edges."""
    frames = values.shape[0]
    if frames < 3:
        return values.mean(axis=0, keepdims=True).repeat(frames, axis=0) \
            if frames == 2 else values.copy()
    out = np.empty_like(values)
    out[1:-1] = np.median(np.stack([values[:-2], values[1:-1], values[2:]]),
                          axis=0)
    out[0] = 0.5 * (values[0] + values[1])
    out[-1] = 0.5 * (values[-2] + values[-1])
    return out


def extract_tdoa(clip: AudioClip, variant: str = "tdoa",
                 config: TdoaConfig | None = None,
                 grid: FrameGrid | None = None) -> FeatureMatrix:
    """Per-band delays on the common feature grid.

    ``variant="tdoa3"`` emits band_count delays for each analysis window
    (windows in ascending length order); ``variant="tdoa"`` collapses the
    windows by a per-band median and median-smooths over time.
    """
    if variant not in ("tdoa", "tdoa3"):
        raise ValueError(f"unknown TDOA variant {variant!r}")
    config = config or TdoaConfig()
    grid = grid or FrameGrid()
    if clip.channel_count != 2:
        raise ValueError("TDOA extraction requires a stereo clip")
    frame_count = grid.frame_count(clip.sample_count, clip.sample_rate)
    if frame_count == 0:
        raise DataError("clip is shorter than one analysis frame")
    sr = clip.sample_rate
    max_lag = config.max_lag(sr)
    centers = _frame_centers(frame_count, sr, grid)
    per_window = []
    for window_ms in config.window_lengths_ms:
        window_length = int(round(window_ms * sr / 1000.0))
        fft_size = next_pow2(window_length + 2 * max_lag + 1)
        filterbank = build_mel_filterbank(config.band_count, fft_size, sr)
        offsets, indices = _lag_order(max_lag, fft_size)
        starts = centers - window_length // 2
        delays = np.empty((frame_count, config.band_count))
        chunk = max(1, int(2 ** 22 / max(fft_size, 1)))
        for lo in range(0, frame_count, chunk):
            hi = min(lo + chunk, frame_count)
            seg1 = _gather_segments(clip.samples[0], starts[lo:hi], window_length)
            seg2 = _gather_segments(clip.samples[1], starts[lo:hi], window_length)
            cross = _phat_cross_spectrum(np.fft.rfft(seg1, n=fft_size, axis=1),
                                         np.fft.rfft(seg2, n=fft_size, axis=1),
                                         config.spectral_floor)
            delays[lo:hi] = _band_delays(cross, filterbank.weights, fft_size,
                                         offsets, indices)
        per_window.append(delays)
    stacked = np.stack(per_window, axis=1)  # (frames, windows, bands)
    if variant == "tdoa3":
        values = stacked.reshape(frame_count,
                                 len(config.window_lengths_ms) * config.band_count)
        layout = FeatureLayout((("tdoa3", values.shape[1]),))
    else:
        median = np.median(stacked, axis=1)
        values = _temporal_median3(median)
        layout = FeatureLayout((("tdoa", config.band_count),))
    return FeatureMatrix(values=values, layout=layout)
