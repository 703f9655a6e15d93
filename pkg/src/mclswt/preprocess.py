"""Continuous-signal filtering, causal standardization, and epoch extraction.

Conventions (documented because the decoding literature leaves them loose):

* Bandpass filtering is a 4th-order Butterworth applied forward-backward
  (zero phase).  A low edge of 0 Hz degenerates to a pure lowpass.
* "Sliding normalization" is a causal exponential-moving standardization:
  per channel, running mean and variance with decay 0.999 by default, output
  ``(x_t - mu_t) / sqrt(max(v_t, eps))``.  The output at time t depends only
  on samples up to t.
* Epochs run from 0.5 s before the cue to 3.98 s after it; at 250 Hz that is
  125 + 995 = 1120 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, sosfiltfilt, lfilter

from .errors import ConfigurationError

EPOCH_PRE_SECONDS = 0.5
EPOCH_POST_SECONDS = 3.98


class EpochBoundsError(ValueError):
    """The requested epoch window does not fit inside the recording."""


@dataclass
class ContinuousRecording:
    """A continuous multi-channel recording with cue annotations.

    ``samples`` is [N, C] in microvolts; ``cue_events`` holds
    (sample_index, label) pairs marking cue onsets.
    """

    samples: np.ndarray
    fs: float
    channel_names: list[str]
    cue_events: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ConfigurationError(
                f"recording samples must be [N,C], got shape {self.samples.shape}"
            )
        if self.fs <= 0:
            raise ConfigurationError(f"sampling rate must be positive, got {self.fs}")
        if len(self.channel_names) != self.samples.shape[1]:
            raise ConfigurationError(
                f"{len(self.channel_names)} channel names for "
                f"{self.samples.shape[1]} channels"
            )


@dataclass
class Trial:
    """One cue-aligned segment: ``x`` is [T, C]."""

    x: np.ndarray
    label: int
    subject_id: int = 0
    provenance: str = "original"


def bandpass_array(x: np.ndarray, fs: float, low_hz: float, high_hz: float,
                   order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth filtering of [N,C] samples; ``low_hz == 0`` is lowpass."""
    nyquist = fs / 2.0
    if not 0.0 <= low_hz < high_hz:
        raise ConfigurationError(
            f"band edges must satisfy 0 <= low < high, got ({low_hz}, {high_hz})"
        )
    if high_hz >= nyquist:
        raise ConfigurationError(
            f"high edge {high_hz} Hz must stay below the Nyquist rate {nyquist} Hz"
        )
    if low_hz == 0.0:
        sos = butter(order, high_hz / nyquist, btype="low", output="sos")
    else:
        sos = butter(order, [low_hz / nyquist, high_hz / nyquist],
                     btype="band", output="sos")
    return np.ascontiguousarray(sosfiltfilt(sos, x, axis=0))


def bandpass(rec: ContinuousRecording, low_hz: float, high_hz: float,
             order: int = 4) -> ContinuousRecording:
    return replace(rec, samples=bandpass_array(rec.samples, rec.fs, low_hz,
                                               high_hz, order))


def standardize_array(x: np.ndarray, decay: float = 0.999,
                      eps: float = 1e-4) -> np.ndarray:
    """Causal exponential-moving standardization of [N,C] samples.

    ``mu_t = decay*mu_{t-1} + (1-decay)*x_t`` seeded with the first sample;
    the variance recursion runs on the deviations and is seeded at 1.
    """
    if not 0.0 < decay < 1.0:
        raise ConfigurationError(f"decay must lie in (0,1), got {decay}")
    a = 1.0 - decay
    # one-pole IIR: y_t = a*x_t + decay*y_{t-1}; zi encodes the seed value
    zi_mean = (decay * x[0])[None, :]
    mu, _ = lfilter([a], [1.0, -decay], x, axis=0, zi=zi_mean)
    dev = x - mu
    zi_var = np.full((1, x.shape[1]), decay)
    var, _ = lfilter([a], [1.0, -decay], dev * dev, axis=0, zi=zi_var)
    return dev / np.sqrt(np.maximum(var, eps))


def sliding_standardize(rec: ContinuousRecording, decay: float = 0.999,
                        eps: float = 1e-4) -> ContinuousRecording:
    return replace(rec, samples=standardize_array(rec.samples, decay, eps))


def epoch_window(fs: float) -> tuple[int, int]:
    """(pre, post) sample counts of the epoch around the cue."""
    return int(round(EPOCH_PRE_SECONDS * fs)), int(round(EPOCH_POST_SECONDS * fs))


def extract_epoch(rec: ContinuousRecording, cue_index: int,
                  subject_id: int = 0) -> Trial:
    """Cut the cue-aligned window and attach the cue's label.

    At 250 Hz the trial is exactly 1120 samples: [cue-125, cue+995).
    """
    pre, post = epoch_window(rec.fs)
    start, stop = cue_index - pre, cue_index + post
    n = rec.samples.shape[0]
    if start < 0 or stop > n:
        raise EpochBoundsError(
            f"epoch [{start}, {stop}) around cue {cue_index} falls outside the "
            f"recording of {n} samples"
        )
    labels = {idx: lab for idx, lab in rec.cue_events}
    if cue_index not in labels:
        raise EpochBoundsError(f"no cue event at sample {cue_index}")
    return Trial(x=rec.samples[start:stop].copy(), label=labels[cue_index],
                 subject_id=subject_id)


def extract_all_epochs(rec: ContinuousRecording, subject_id: int = 0) -> list[Trial]:
    return [extract_epoch(rec, idx, subject_id) for idx, _ in rec.cue_events]
