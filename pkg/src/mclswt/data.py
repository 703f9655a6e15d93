"""Trial containers, the eegb-v1 on-disk format, and synthetic ERD data.

The eegb-v1 file layout is a single UTF-8 JSON header line (terminated by
``\\n``) followed immediately by the raw payload: float32 little-endian
samples in trial-major, channel-major order, i.e. a C-ordered
[n_trials, n_channels, n_samples] array.

Labels are 0 = left hand, 1 = right hand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataFormatError
from .preprocess import Trial

FORMAT_TAG = "eegb-v1"
LEFT, RIGHT = 0, 1
DEFAULT_CHANNELS = ["C3", "Cz", "C4"]


@dataclass
class TrialSet:
    """A set of EEG trials: data [n, T, C] with labels and subject ids."""

    data: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray
    fs: float = 250.0
    channel_names: list[str] = field(default_factory=lambda: list(DEFAULT_CHANNELS))

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subject_ids = np.asarray(self.subject_ids, dtype=np.int64)
        n = self.data.shape[0]
        if self.data.ndim != 3:
            raise ConfigurationError(f"trial data must be [n,T,C], got {self.data.shape}")
        if self.labels.shape != (n,) or self.subject_ids.shape != (n,):
            raise ConfigurationError(
                f"labels/subject_ids lengths {self.labels.shape}/{self.subject_ids.shape} "
                f"do not match {n} trials"
            )

    def __len__(self) -> int:
        return self.data.shape[0]

    def trial(self, i: int) -> Trial:
        return Trial(x=self.data[i], label=int(self.labels[i]),
                     subject_id=int(self.subject_ids[i]))

    def subset(self, mask: np.ndarray) -> "TrialSet":
        return TrialSet(self.data[mask], self.labels[mask], self.subject_ids[mask],
                        fs=self.fs, channel_names=list(self.channel_names))


# ---------------------------------------------------------------------------
# eegb-v1 container
# ---------------------------------------------------------------------------


def write_trialset(ts: TrialSet, path) -> None:
    header = {
        "format": FORMAT_TAG,
        "n_trials": len(ts),
        "n_channels": ts.data.shape[2],
        "n_samples": ts.data.shape[1],
        "fs_hz": ts.fs,
        "channel_names": list(ts.channel_names),
        "labels": [int(v) for v in ts.labels],
        "subject_ids": [int(v) for v in ts.subject_ids],
    }
    # payload is trial-major, channel-major: [n, C, T]
    payload = ts.data.transpose(0, 2, 1).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def read_trialset(path) -> TrialSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataFormatError("missing newline-terminated JSON header")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"header is not valid UTF-8 JSON: {exc}") from None
    tag = header.get("format")
    if tag != FORMAT_TAG:
        raise DataFormatError(f"unknown format tag {tag!r}, expected {FORMAT_TAG!r}")
    n, c, t = header["n_trials"], header["n_channels"], header["n_samples"]
    if len(header["labels"]) != n or len(header["subject_ids"]) != n:
        raise DataFormatError(
            f"labels/subject_ids lengths {len(header['labels'])}/"
            f"{len(header['subject_ids'])} do not match n_trials={n}"
        )
    payload = raw[newline + 1:]
    expected = n * c * t * 4
    if len(payload) != expected:
        raise DataFormatError(
            f"payload holds {len(payload)} bytes, expected {expected} "
            f"({n} trials x {c} channels x {t} samples x 4)"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, c, t).transpose(0, 2, 1)
    return TrialSet(
        data=data.astype(np.float64),
        labels=np.array(header["labels"], dtype=np.int64),
        subject_ids=np.array(header["subject_ids"], dtype=np.int64),
        fs=float(header["fs_hz"]),
        channel_names=list(header["channel_names"]),
    )


# ---------------------------------------------------------------------------
# synthetic ERD trials
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    """Synthetic two-class generator: mu rhythm plus contralateral post-cue ERD.

    Left-hand trials attenuate the C4 mu amplitude after the cue, right-hand
    trials attenuate C3.  Subjects perturb the mu amplitude (+-amp_jitter)
    and per-channel gain (+-gain_jitter) so a held-out subject really is new.
    """

    fs: float = 250.0
    n_samples: int = 1120
    cue_sample: int = 125
    mu_freq_hz: float = 10.0
    mu_amp: float = 1.0
    erd_attenuation: float = 0.5
    noise_std: float = 1.0
    n_trials_per_class: int = 200
    n_subjects: int = 9
    subject_amp_jitter: float = 0.3
    subject_gain_jitter: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.cue_sample < self.n_samples:
            raise ConfigurationError(
                f"cue_sample {self.cue_sample} must precede n_samples {self.n_samples}"
            )
        if not 0.0 < self.erd_attenuation < 1.0:
            raise ConfigurationError(
                f"erd_attenuation must lie in (0,1), got {self.erd_attenuation}"
            )


def _subject_params(cfg: SynthConfig, subject_id: int):
    rng = np.random.default_rng([cfg.seed, 1000 + subject_id])
    amp = cfg.mu_amp * rng.uniform(1.0 - cfg.subject_amp_jitter,
                                   1.0 + cfg.subject_amp_jitter)
    gains = rng.uniform(1.0 - cfg.subject_gain_jitter,
                        1.0 + cfg.subject_gain_jitter, size=3)
    return amp, gains


def synth_trial(cfg: SynthConfig, label: int, trial_seed: int,
                subject_id: int = 0) -> np.ndarray:
    """One [n_samples, 3] trial on channels [C3, Cz, C4].

    Right-hand trials are, by construction, the exact channel swap of the
    left-hand trial drawn with the same seed, so the generator is literally
    mirror-symmetric.
    """
    rng = np.random.default_rng([cfg.seed, subject_id, trial_seed])
    amp, gains = _subject_params(cfg, subject_id)
    t = np.arange(cfg.n_samples) / cfg.fs
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    x = np.empty((cfg.n_samples, 3))
    for ch in range(3):
        envelope = np.full(cfg.n_samples, amp)
        if ch == 2:  # left-hand imagery suppresses the contralateral (C4) rhythm
            envelope[cfg.cue_sample:] *= cfg.erd_attenuation
        wave = envelope * np.sin(2.0 * np.pi * cfg.mu_freq_hz * t + phases[ch])
        noise = rng.normal(0.0, cfg.noise_std, size=cfg.n_samples)
        x[:, ch] = gains[ch] * (wave + noise)
    if label == RIGHT:
        x = x[:, [2, 1, 0]].copy()
    return x


def generate_synthetic_erd(cfg: SynthConfig) -> TrialSet:
    """Balanced left/right TrialSet with subjects assigned round-robin."""
    n = cfg.n_trials_per_class
    data = np.empty((2 * n, cfg.n_samples, 3))
    labels = np.empty(2 * n, dtype=np.int64)
    subjects = np.empty(2 * n, dtype=np.int64)
    for k in range(n):
        sid = k % cfg.n_subjects
        data[2 * k] = synth_trial(cfg, LEFT, trial_seed=k, subject_id=sid)
        labels[2 * k] = LEFT
        subjects[2 * k] = sid
        data[2 * k + 1] = synth_trial(cfg, RIGHT, trial_seed=n + k, subject_id=sid)
        labels[2 * k + 1] = RIGHT
        subjects[2 * k + 1] = sid
    return TrialSet(data, labels, subjects, fs=cfg.fs,
                    channel_names=list(DEFAULT_CHANNELS))


# ---------------------------------------------------------------------------
# subject-disjoint split
# ---------------------------------------------------------------------------


def split_new_subject(ts: TrialSet, train_subjects: set[int],
                      test_subjects: set[int]) -> tuple[TrialSet, TrialSet]:
    """Partition by subject id so the test subjects are entirely unseen."""
    train_subjects, test_subjects = set(train_subjects), set(test_subjects)
    overlap = train_subjects & test_subjects
    if overlap:
        raise ConfigurationError(
            f"train and test subject sets overlap: {sorted(overlap)}"
        )
    if not test_subjects:
        raise ConfigurationError("test subject set is empty; evaluation impossible")
    if not train_subjects:
        raise ConfigurationError("train subject set is empty")
    train_mask = np.isin(ts.subject_ids, sorted(train_subjects))
    test_mask = np.isin(ts.subject_ids, sorted(test_subjects))
    return ts.subset(train_mask), ts.subset(test_mask)
