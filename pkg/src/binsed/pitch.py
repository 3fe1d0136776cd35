"""Dominant pitch and periodicity from thresholded, parabolically
interpolated spectral peaks.

Per frame, local maxima of the magnitude spectrum inside the pitch range are
kept if they reach a fraction of the frame's peak magnitude.  Each surviving
peak is refined with a parabolic fit through the log-magnitudes of the peak
bin and its two neighbours.  The refined magnitude relative to the frame
maximum serves as the periodicity score, so it always lands in [0, 1].
Frames with no qualifying peak emit (0, 0) pairs.
"""

from __future__ import annotations

import numpy as np

from .audio import Spectrogram
from .layout import FeatureLayout, FeatureMatrix

_TINY = 1e-300


def extract_pitch(spec: Spectrogram, top_k: int = 1, f_min: float = 100.0,
                  f_max: float = 4000.0, threshold: float = 0.1) -> FeatureMatrix:
    """(frequency, periodicity) pairs for the top_k dominant peaks per frame.

    Pairs are interleaved and ordered by decreasing interpolated magnitude;
    missing peaks are zero-filled.  Output width is 2 * top_k.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    if not 0.0 < f_min < f_max:
        raise ValueError("need 0 < f_min < f_max")
    if f_max > spec.sample_rate / 2.0:
        raise ValueError(f"f_max {f_max} exceeds Nyquist for "
                         f"sample rate {spec.sample_rate}")
    magnitude = np.abs(spec.bins)
    bin_hz = spec.sample_rate / spec.fft_size
    k_lo = max(1, int(np.ceil(f_min / bin_hz)))
    k_hi = min(spec.bin_count - 2, int(np.floor(f_max / bin_hz)))
    values = np.zeros((spec.frame_count, 2 * top_k))
    if k_hi < k_lo:
        return FeatureMatrix(values=values,
                             layout=FeatureLayout((("pitch", 2 * top_k),)))

    log_mag = np.log(np.maximum(magnitude, _TINY))
    for t in range(spec.frame_count):
        row = magnitude[t]
        frame_max = row.max()
        if frame_max <= 0.0:
            continue
        seg = row[k_lo - 1:k_hi + 2]
        center = seg[1:-1]
        is_peak = (center > seg[:-2]) & (center >= seg[2:]) \
            & (center >= threshold * frame_max)
        peak_bins = np.nonzero(is_peak)[0] + k_lo
        if peak_bins.size == 0:
            continue
        alpha = log_mag[t, peak_bins - 1]
        beta = log_mag[t, peak_bins]
        gamma = log_mag[t, peak_bins + 1]
        denom = alpha - 2.0 * beta + gamma
        shift = np.where(np.abs(denom) > 0.0,
                         0.5 * (alpha - gamma) / np.where(denom == 0.0, 1.0, denom),
                         0.0)
        shift = np.clip(shift, -0.5, 0.5)
        interp_log = beta - 0.25 * (alpha - gamma) * shift
        interp_mag = np.exp(interp_log)
        freqs = np.clip((peak_bins + shift) * bin_hz, f_min, f_max)
        order = np.argsort(-interp_mag, kind="stable")[:top_k]
        periodicity = np.clip(interp_mag[order] / frame_max, 0.0, 1.0)
        for rank, idx in enumerate(order):
            values[t, 2 * rank] = freqs[idx]
            values[t, 2 * rank + 1] = periodicity[rank]
    return FeatureMatrix(values=values,
                         layout=FeatureLayout((("pitch", 2 * top_k),)))
