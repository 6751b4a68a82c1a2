"""Per-utterance representations: whole-utterance, segment-based, combined."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Waveform
from .features import (
    FeatureVector,
    f0_feature_block,
    formant_feature_block,
    native_segment_registry,
    perturbation_block,
    track_feature_block,
    utterance_features,
    _append_sidecar,
)
from .tracks import (
    AudibilitySegmentation,
    ScalarTrack,
    audibility,
    band_intensity_track,
    f0_track,
    formant_tracks,
    intensity_track,
    mfcc_scalar_track,
)

MODES = ("utterance", "segment", "combination")

SEGMENT_MIN_S = 0.200
SPLIT_SMOOTH_FRAMES = 5


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    vector: FeatureVector

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError("segment needs t0 < t1")


@dataclass(frozen=True)
class SegmentSet:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if b.t0 < a.t1:
                raise ValueError("segments must be time-ordered and non-overlapping")


@dataclass(frozen=True)
class Representation:
    """What the classifier consumes for one utterance, in one of three modes."""

    mode: str
    utterance_vector: FeatureVector | None = None
    segment_set: SegmentSet | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown representation mode {self.mode!r}")
        if self.mode in ("utterance", "combination") and self.utterance_vector is None:
            raise ValueError(f"{self.mode} mode requires an utterance vector")
        if self.mode in ("segment", "combination") and not (
            self.segment_set and self.segment_set.segments
        ):
            raise ValueError(f"{self.mode} mode requires a non-empty segment set")


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    kernel = np.ones(width) / width
    pad = width // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    return np.convolve(padded, kernel, "valid")


def segment_bounds(
    intensity: ScalarTrack, seg: AudibilitySegmentation
) -> list[tuple[float, float]]:
    """Time bounds of energy segments.

    Each audible run becomes one segment, split at smoothed-intensity valleys
    whenever both resulting pieces stay at or above 200 ms.  With no audible
    run, a single segment spans the whole utterance.
    """
    hop = intensity.hop_s
    n = len(intensity)
    audible_runs = [(s, e) for s, e, a in seg.runs if a]
    if not audible_runs:
        return [(0.0, intensity.extent_s)]
    min_frames = int(round(SEGMENT_MIN_S / hop))
    smooth = _moving_average(intensity.values, SPLIT_SMOOTH_FRAMES)
    bounds: list[tuple[float, float]] = []
    for run_start, run_end in audible_runs:
        pieces = []
        start = run_start
        for c in range(run_start + 1, run_end - 1):
            is_valley = smooth[c - 1] > smooth[c] < smooth[c + 1]
            if is_valley and c - start >= min_frames and run_end - c >= min_frames:
                pieces.append((start, c))
                start = c
        pieces.append((start, run_end))
        for s, e in pieces:
            t1 = intensity.extent_s if e >= n else e * hop
            bounds.append((s * hop, t1))
    return bounds


def _segment_vector_values(w: Waveform) -> np.ndarray:
    inten = intensity_track(w)
    f0 = f0_track(w)
    return np.concatenate([
        f0_feature_block(f0),
        track_feature_block(inten),
        track_feature_block(band_intensity_track(w, "lowpass")),
        track_feature_block(band_intensity_track(w, "highpass")),
        track_feature_block(mfcc_scalar_track(w)),
        formant_feature_block(formant_tracks(w, f0)),
        perturbation_block(f0, inten),
    ])


def segment_features(
    w: Waveform, bounds: tuple[float, float], sidecar: dict[str, float] | None = None
) -> FeatureVector:
    """Feature vector for one segment: its duration followed by every feature
    group except the duration group, computed on the excised sub-waveform."""
    t0, t1 = bounds
    i0 = int(round(t0 * w.rate))
    i1 = min(int(round(t1 * w.rate)), w.samples.size)
    if i1 <= i0:
        raise ValueError(f"empty excision [{t0}, {t1})")
    sub = Waveform(w.samples[i0:i1], w.rate)
    values = np.concatenate([[t1 - t0], _segment_vector_values(sub)])
    registry = native_segment_registry()
    if sidecar:
        registry, values = _append_sidecar(registry, values, sidecar)
    return FeatureVector(values, registry)


def build_representation(
    w: Waveform, mode: str, sidecar: dict[str, float] | None = None
) -> Representation:
    """Build the requested representation; combination carries both parts."""
    if mode not in MODES:
        raise ValueError(f"unknown representation mode {mode!r}")
    utt = utterance_features(w, sidecar) if mode in ("utterance", "combination") else None
    segs = None
    if mode in ("segment", "combination"):
        inten = intensity_track(w)
        pieces = segment_bounds(inten, audibility(inten))
        segs = SegmentSet(
            tuple(Segment(t0, t1, segment_features(w, (t0, t1), sidecar)) for t0, t1 in pieces)
        )
    return Representation(mode, utt, segs)
