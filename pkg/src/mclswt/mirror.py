"""Mirror trials (hemisphere channel interchange) and contrastive pair lists.

A mirror trial swaps each left-hemisphere channel with its right counterpart
and flips the class label, exploiting that imagining one hand desynchronizes
the contralateral sensorimotor rhythm.  Applying the swap twice is the
identity, which the pair-building below relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .preprocess import Trial

KIND_ORIG_ORIG = "orig-orig"
KIND_MIRROR_ORIG = "mirror-orig"


class PairError(ValueError):
    """The batch cannot yield a valid pair list."""


@dataclass(frozen=True)
class ChannelMirrorMap:
    """Left/right channel interchange as swap pairs plus fixed midline channels."""

    swap_pairs: tuple[tuple[int, int], ...]
    fixed: tuple[int, ...]

    @property
    def n_channels(self) -> int:
        return 2 * len(self.swap_pairs) + len(self.fixed)

    def __post_init__(self):
        seen = [i for pair in self.swap_pairs for i in pair] + list(self.fixed)
        if len(seen) != len(set(seen)) or sorted(seen) != list(range(len(seen))):
            raise ConfigurationError(
                f"mirror map must cover each channel index exactly once, got {seen}"
            )

    def permutation(self) -> np.ndarray:
        perm = np.arange(self.n_channels)
        for left, right in self.swap_pairs:
            perm[left], perm[right] = right, left
        return perm

    @staticmethod
    def from_names(swap_names: list[tuple[str, str]], fixed_names: list[str],
                   channel_names: list[str]) -> "ChannelMirrorMap":
        index = {name: i for i, name in enumerate(channel_names)}
        try:
            pairs = tuple((index[a], index[b]) for a, b in swap_names)
            fixed = tuple(index[name] for name in fixed_names)
        except KeyError as missing:
            raise ConfigurationError(
                f"mirror map names channel {missing} not present in {channel_names}"
            ) from None
        return ChannelMirrorMap(swap_pairs=pairs, fixed=fixed)


def default_mirror_map() -> ChannelMirrorMap:
    """The [C3, Cz, C4] montage: swap C3 and C4, keep Cz fixed."""
    return ChannelMirrorMap(swap_pairs=((0, 2),), fixed=(1,))


@dataclass(frozen=True)
class Pair:
    i: int
    j: int
    g: int       # +1 same label, -1 different
    kind: str    # KIND_ORIG_ORIG or KIND_MIRROR_ORIG


@dataclass
class PairList:
    """Labeled sample pairs indexing the concatenated [originals; mirrors] batch."""

    pairs: list[Pair]

    def by_kind(self, kind: str) -> list[Pair]:
        return [p for p in self.pairs if p.kind == kind]

    def counts(self) -> tuple[int, int]:
        oo = sum(1 for p in self.pairs if p.kind == KIND_ORIG_ORIG)
        return oo, len(self.pairs) - oo


def mirror_trial(trial: Trial, mirror_map: ChannelMirrorMap) -> Trial:
    """Swap hemisphere channels, flip the two-class label, mark provenance."""
    if trial.x.shape[1] != mirror_map.n_channels:
        raise ConfigurationError(
            f"mirror map covers {mirror_map.n_channels} channels but the trial "
            f"has {trial.x.shape[1]}"
        )
    perm = mirror_map.permutation()
    return replace(trial, x=trial.x[:, perm].copy(), label=1 - trial.label,
                   provenance="mirror")


def build_pairs(originals: list[Trial], mirrors: list[Trial]) -> PairList:
    """All original-original pairs (i<j) plus every mirror x original pair.

    Row indices refer to the concatenated embedding matrix whose first B rows
    are the originals and whose next B rows are their mirrors.  ``g`` is +1
    for equal labels (the mirror label is already flipped) and -1 otherwise.
    A trial paired with its own mirror is always negative in a two-class task.
    """
    b = len(originals)
    if b == 0 or len(mirrors) != b:
        raise PairError(
            f"need a nonempty batch with one mirror per original, got "
            f"{b} originals and {len(mirrors)} mirrors"
        )
    pairs: list[Pair] = []
    for i in range(b):
        for j in range(i + 1, b):
            g = 1 if originals[i].label == originals[j].label else -1
            pairs.append(Pair(i, j, g, KIND_ORIG_ORIG))
    for i in range(b):
        for j in range(b):
            g = 1 if mirrors[i].label == originals[j].label else -1
            pairs.append(Pair(b + i, j, g, KIND_MIRROR_ORIG))
    return PairList(pairs)
