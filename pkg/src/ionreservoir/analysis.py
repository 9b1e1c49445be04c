"""Signal measurements on sampled coherence curves.

These turn a sampled R(t) into the handful of numbers used to judge a
run: the fast Rabi frequency from peak spacing, the period of the slow
envelope, and the size of the fast oscillation at a given time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, find_peaks, hilbert, sosfiltfilt


@dataclass(frozen=True)
class PeakMeasurement:
    frequency: float
    n_spacings: int
    band: tuple[float, float]
    spread: float  # relative standard deviation of the spacings used


def _uniform(t):
    t = np.asarray(t, dtype=float)
    d = np.diff(t)
    if d.size < 8 or np.any(d <= 0) or np.ptp(d) > 1e-9 * max(1.0, abs(d[0])):
        raise ValueError("need a uniform, increasing grid with at least 9 points")
    return t, float(d[0])


def dominant_frequency(t, y, above: float) -> float:
    """Angular frequency of the largest spectral line above ``above``."""
    t, dt = _uniform(t)
    y = np.asarray(y, dtype=float)
    spec = np.abs(np.fft.rfft(y - y.mean()))
    w = 2 * np.pi * np.fft.rfftfreq(t.size, dt)
    mask = w > above
    if not np.any(mask):
        raise ValueError(f"grid too coarse to resolve frequencies above {above}")
    return float(w[mask][np.argmax(spec[mask])])


def fast_peak_frequency(t, R, omega: float, strong: float = 0.25, trim: float | None = None) -> PeakMeasurement:
    """Fast oscillation frequency from the spacing of successive maxima.

    The curve is band-passed around its dominant line above 5 omega, which
    strips the slow envelope and the higher harmonics. Where the fast
    amplitude nearly vanishes (it does twice per trap period for
    symmetric initial states) the maxima stop tracking the oscillation,
    so only spacings between neighbouring maxima whose local amplitude
    is at least ``strong`` times the largest are averaged. ``trim``
    (default one trap period) is dropped at each end to avoid filter
    edge effects.
    """
    t, dt = _uniform(t)
    R = np.asarray(R, dtype=float)
    wd = dominant_frequency(t, R, 5.0 * omega)
    band = (0.5 * wd, 1.5 * wd)
    nyq = math.pi / dt
    if band[1] >= nyq:
        raise ValueError("sampling too coarse for the fast oscillation")
    sos = butter(4, band, btype="band", fs=2 * nyq, output="sos")
    fast = sosfiltfilt(sos, R)
    amp = np.abs(hilbert(fast))
    trim = 2 * np.pi / omega if trim is None else trim
    if t[-1] - t[0] <= 2 * trim:
        trim = 0.1 * (t[-1] - t[0])
    inner = (t >= t[0] + trim) & (t <= t[-1] - trim)
    peaks, _ = find_peaks(fast)
    ok = inner[peaks] & (amp[peaks] >= strong * amp[inner].max())
    pairs = ok[:-1] & ok[1:]
    spacings = np.diff(t[peaks])[pairs]
    if spacings.size == 0:
        raise ValueError("no pair of strong neighbouring maxima found")
    mean = float(spacings.mean())
    return PeakMeasurement(2 * np.pi / mean, int(spacings.size), band, float(spacings.std() / mean))


def slow_part(t, R, cutoff: float) -> np.ndarray:
    """Low-pass R at angular frequency ``cutoff`` (zero-phase)."""
    t, dt = _uniform(t)
    sos = butter(4, cutoff, btype="low", fs=2 * np.pi / dt, output="sos")
    return sosfiltfilt(sos, np.asarray(R, dtype=float))


def envelope_period(t, R, omega: float, rabi: float) -> float:
    """Mean spacing of the minima of the slow envelope.

    The cutoff sits at the geometric mean of ``omega`` and ``rabi`` so the
    envelope keeps its own harmonics but loses the fast oscillation.
    """
    t, _ = _uniform(t)
    env = slow_part(t, R, math.sqrt(omega * rabi))
    depth = np.ptp(env)
    minima, _ = find_peaks(-env, prominence=0.25 * depth if depth > 0 else None)
    if minima.size < 2:
        raise ValueError("fewer than two envelope minima in the record")
    return float(np.mean(np.diff(t[minima])))


def oscillation_amplitude(t, y, center: float, width: float) -> float:
    """Peak-to-peak excursion of ``y`` within ``[center - width/2, center + width/2]``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.abs(t - center) <= 0.5 * width
    if mask.sum() < 2:
        raise ValueError(f"fewer than two samples within {width} of t={center}")
    return float(np.ptp(y[mask]))
