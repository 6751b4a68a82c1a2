"""Utterance-level acoustic features: series statistics, registry, scaling."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Waveform
from .tracks import (
    AudibilitySegmentation,
    FormantTracks,
    ScalarTrack,
    audibility,
    band_intensity_track,
    f0_track,
    formant_tracks,
    intensity_track,
    mfcc_scalar_track,
)

STAT_NAMES = ("mean", "max", "min", "range", "var", "med", "q1", "q3", "iqr", "mad")
_SERIES_PARTS = ("minima", "maxima", "extrema durations", "series")

PERTURBATION_WINDOW = 5


def _block_names(prefix: str) -> list[str]:
    return [f"{prefix} {part} {stat}" for part in _SERIES_PARTS for stat in STAT_NAMES]


_F0_NAMES = _block_names("f0") + [
    "f0 skewness",
    "f0 fraction above mean",
    "f0 range above mean",
    "f0 range below mean",
]
_FORMANT_NAMES = [f"{stat} F{i}" for stat in ("mean", "std", "max", "min", "range") for i in (1, 2, 3)]
_DURATION_NAMES = [
    "mean dur of aud segs",
    "max dur of aud segs",
    "min dur of aud segs",
    "std of dur of aud segs",
    "mean dur of inaud segs",
    "max dur of inaud segs",
    "min dur of inaud segs",
    "std of dur of inaud segs",
    "no of aud segs",
    "no of inaud segs",
    "no of aud frames",
    "no of inaud frames",
    "longest aud seg",
    "longest inaud seg",
    "ratio aud to inaud frames",
    "ratio aud to inaud segs",
    "ratio aud frames to total frames",
    "ratio aud segs to total segs",
    "ratio aud frames to aud segs",
    "ratio aud dur to inaud dur",
    "ratio aud dur to total dur",
    "ratio inaud dur to total dur",
    "ratio avg aud dur to avg inaud dur",
]
_PERTURBATION_NAMES = [
    "jitter PF",
    "max jitter PQ",
    "min jitter PQ",
    "shimmer PF",
    "max shimmer PQ",
    "min shimmer PQ",
]

_NATIVE_GROUPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("f0", tuple(_F0_NAMES)),
    ("intensity", tuple(_block_names("intensity"))),
    ("lowpass_intensity", tuple(_block_names("lowpass intensity"))),
    ("highpass_intensity", tuple(_block_names("highpass intensity"))),
    ("mfcc", tuple(_block_names("mfcc"))),
    ("formant", tuple(_FORMANT_NAMES)),
    ("duration", tuple(_DURATION_NAMES)),
    ("perturbation", tuple(_PERTURBATION_NAMES)),
)


def _quartile_names(param: str) -> tuple[str, ...]:
    return (
        f"25 percentile of {param}",
        f"median of {param}",
        f"75 percentile of {param}",
        f"iqr of normalized d{param}",
    )


EXTERNAL_GROUPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    (
        "loudness",
        (
            "loudness mean",
            "loudness 25 percentile",
            "loudness 50 percentile",
            "loudness 75 percentile",
            "loudness 25 percentile rms",
            "loudness 50 percentile rms",
            "loudness 75 percentile rms",
        )
        + tuple(f"msl b{i}" for i in range(1, 14)),
    ),
    (
        "voice_source",
        sum((_quartile_names(p) for p in ("Ev", "gamma", "alpha", "beta", "OQ", "epsv", "epss")), ()),
    ),
    ("gne_psp", _quartile_names("GNE") + _quartile_names("PSP")),
    (
        "harmonicity",
        (
            "median of intrinsic diss Db",
            "range of intrinsic diss Di",
            "median of avg diss",
            "median of avg diss derivative",
            "median of cons values at interval a1c",
            "median of highest cons interval a1c",
            "median of cons values at interval a2c",
            "median of second highest cons interval a2c",
            "median of avg cons peak values",
            "median of diss values at interval a1d",
            "median of highest diss interval a1d",
            "median of diss values at interval a2d",
            "median of second highest diss interval a2d",
            "median of avg diss peak values",
        ),
    ),
)

_EXTERNAL_NAME_TO_GROUP = {
    name: group for group, names in EXTERNAL_GROUPS for name in names
}
_EXTERNAL_ORDER = {
    name: i
    for i, name in enumerate(n for _, names in EXTERNAL_GROUPS for n in names)
}


@dataclass(frozen=True)
class FeatureRegistry:
    """Ordered (feature name, group) pairs defining a vector layout."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def fingerprint(self) -> str:
        payload = "\n".join(f"{n}\t{g}" for n, g in self.entries)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def native_utterance_registry() -> FeatureRegistry:
    """The 248-entry registry produced by the built-in DSP pipeline."""
    return FeatureRegistry(
        tuple((name, group) for group, names in _NATIVE_GROUPS for name in names)
    )


def native_segment_registry() -> FeatureRegistry:
    """Per-segment registry: segment duration plus all groups except duration."""
    entries = [("segment duration", "segment")]
    for group, names in _NATIVE_GROUPS:
        if group == "duration":
            continue
        entries.extend((name, group) for name in names)
    return FeatureRegistry(tuple(entries))


def external_feature_names() -> tuple[str, ...]:
    """All recognized sidecar feature names, in canonical group order."""
    return tuple(n for _, names in EXTERNAL_GROUPS for n in names)


def extend_with_external(registry: FeatureRegistry, names: tuple[str, ...]) -> FeatureRegistry:
    """Append externally-supplied features, reordered into canonical order."""
    for name in names:
        if name not in _EXTERNAL_NAME_TO_GROUP:
            raise KeyError(f"unknown external feature {name!r}")
    ordered = sorted(set(names), key=_EXTERNAL_ORDER.__getitem__)
    extra = tuple((n, _EXTERNAL_NAME_TO_GROUP[n]) for n in ordered)
    return FeatureRegistry(registry.entries + extra)


def registry_from_names(names: list[str] | tuple[str, ...]) -> FeatureRegistry:
    """Rebuild a registry from stored feature names (groups looked up)."""
    known = {n: g for g, ns in _NATIVE_GROUPS for n in ns}
    known.update(_EXTERNAL_NAME_TO_GROUP)
    known["segment duration"] = "segment"
    entries = []
    for name in names:
        if name not in known:
            raise KeyError(f"unknown feature {name!r}")
        entries.append((name, known[name]))
    return FeatureRegistry(tuple(entries))


@dataclass(frozen=True)
class FeatureVector:
    """A real vector whose layout is described by a registry."""

    values: np.ndarray
    registry: FeatureRegistry

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.registry),):
            raise ValueError(
                f"expected {len(self.registry)} values, got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("feature values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class FeatureSubset:
    """A named, ordered selection of registry feature names."""

    name: str
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("subset feature names must not repeat")
        if not self.feature_names:
            raise ValueError("subset must name at least one feature")


@dataclass(frozen=True)
class Scaler:
    """Per-dimension z-score parameters fit on training vectors only."""

    mean: np.ndarray
    std: np.ndarray

    def transform_array(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def extrema_series(track: ScalarTrack) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior minima/maxima of the valid subsequence plus gaps between them.

    Plateaus count once, at their first frame.  The third series holds the
    position gaps (in seconds) between consecutive extrema of either kind.
    """
    vals = track.valid_values()
    empty = np.array([])
    if vals.size < 3:
        return empty, empty, empty
    keep = np.concatenate(([True], np.diff(vals) != 0.0))
    cvals = vals[keep]
    cpos = np.flatnonzero(keep)
    minima, maxima, positions = [], [], []
    for j in range(1, cvals.size - 1):
        if cvals[j - 1] < cvals[j] > cvals[j + 1]:
            maxima.append(cvals[j])
            positions.append(cpos[j])
        elif cvals[j - 1] > cvals[j] < cvals[j + 1]:
            minima.append(cvals[j])
            positions.append(cpos[j])
    durations = np.diff(positions) * track.hop_s if len(positions) > 1 else empty
    return np.asarray(minima), np.asarray(maxima), np.asarray(durations)


def series_statistics(series) -> np.ndarray:
    """The 10 series measures: mean, max, min, range, var, med, q1, q3, iqr,
    mean absolute derivative.  Empty series map to ten zeros."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return np.zeros(10)
    med, q1, q3 = np.percentile(x, [50, 25, 75])
    mad = float(np.abs(np.diff(x)).mean()) if x.size > 1 else 0.0
    return np.array([
        x.mean(),
        x.max(),
        x.min(),
        x.max() - x.min(),
        x.var(),
        med,
        q1,
        q3,
        q3 - q1,
        mad,
    ])


def track_feature_block(track: ScalarTrack) -> np.ndarray:
    """40 values: series_statistics over minima, maxima, extrema gaps, series."""
    minima, maxima, durations = extrema_series(track)
    return np.concatenate([
        series_statistics(minima),
        series_statistics(maxima),
        series_statistics(durations),
        series_statistics(track.valid_values()),
    ])


def f0_feature_block(f0: ScalarTrack) -> np.ndarray:
    """44 values: the 40-value block plus skewness, fraction above mean and
    the ranges above/below the mean of the voiced values."""
    block = track_feature_block(f0)
    v = f0.valid_values()
    if v.size == 0:
        return np.concatenate([block, np.zeros(4)])
    mean = v.mean()
    std = v.std()
    skew = float((((v - mean) / std) ** 3).mean()) if v.size >= 2 and std > 1e-12 else 0.0
    extras = np.array([skew, float(np.mean(v > mean)), v.max() - mean, mean - v.min()])
    return np.concatenate([block, extras])


def formant_feature_block(ft: FormantTracks) -> np.ndarray:
    """15 values: mean/std/max/min/range of F1..F3 over valid frames."""
    tracks = (ft.f1, ft.f2, ft.f3)
    if ft.f1.valid_values().size == 0:
        return np.zeros(15)
    out = []
    for stat in ("mean", "std", "max", "min", "range"):
        for t in tracks:
            v = t.valid_values()
            if stat == "mean":
                out.append(v.mean())
            elif stat == "std":
                out.append(v.std())
            elif stat == "max":
                out.append(v.max())
            elif stat == "min":
                out.append(v.min())
            else:
                out.append(v.max() - v.min())
    return np.asarray(out)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def duration_feature_block(seg: AudibilitySegmentation, hop_s: float) -> np.ndarray:
    """23 duration measures over audible/inaudible runs, durations in seconds."""
    aud_len = np.array([e - s for s, e, a in seg.runs if a], dtype=np.float64)
    inaud_len = np.array([e - s for s, e, a in seg.runs if not a], dtype=np.float64)
    aud = aud_len * hop_s
    inaud = inaud_len * hop_s
    n_frames = seg.n_frames
    aud_frames = float(aud_len.sum())
    inaud_frames = float(inaud_len.sum())

    def stats(x: np.ndarray) -> list[float]:
        if x.size == 0:
            return [0.0, 0.0, 0.0, 0.0]
        return [float(x.mean()), float(x.max()), float(x.min()), float(x.std())]

    total_dur = n_frames * hop_s
    return np.array(
        stats(aud)
        + stats(inaud)
        + [
            float(aud.size),
            float(inaud.size),
            aud_frames,
            inaud_frames,
            float(aud.max()) if aud.size else 0.0,
            float(inaud.max()) if inaud.size else 0.0,
            _ratio(aud_frames, inaud_frames),
            _ratio(aud.size, inaud.size),
            _ratio(aud_frames, n_frames),
            _ratio(aud.size, aud.size + inaud.size),
            _ratio(aud_frames, aud.size),
            _ratio(aud.sum(), inaud.sum()),
            _ratio(aud.sum(), total_dur),
            _ratio(inaud.sum(), total_dur),
            _ratio(aud.mean() if aud.size else 0.0, inaud.mean() if inaud.size else 0.0),
        ]
    )


def _voiced_runs(valid: np.ndarray) -> list[np.ndarray]:
    runs = []
    start = None
    for i, v in enumerate(valid):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append(np.arange(start, i))
            start = None
    if start is not None:
        runs.append(np.arange(start, valid.size))
    return [r for r in runs if r.size >= 2]


def _pf_and_pq(series_per_run: list[np.ndarray]) -> tuple[float, float, float]:
    """Perturbation factor plus max/min perturbation quotient over 5-wide windows."""
    diffs = np.concatenate([np.abs(np.diff(s)) for s in series_per_run]) if series_per_run else np.array([])
    pooled = np.concatenate(series_per_run) if series_per_run else np.array([])
    pf = float(diffs.mean() / pooled.mean()) if diffs.size and pooled.mean() > 0 else 0.0
    pqs = []
    for s in series_per_run:
        for k in range(s.size - PERTURBATION_WINDOW + 1):
            win = s[k:k + PERTURBATION_WINDOW]
            m = win.mean()
            if m > 0:
                pqs.append(float(np.abs(win - m).mean() / m))
    if pqs:
        return pf, max(pqs), min(pqs)
    return pf, 0.0, 0.0


def perturbation_block(f0: ScalarTrack, intensity: ScalarTrack) -> np.ndarray:
    """Jitter and shimmer: PF plus max/min PQ for period and amplitude."""
    if abs(f0.hop_s - intensity.hop_s) > 1e-12:
        raise ValueError("f0 and intensity tracks must share one hop")
    runs = _voiced_runs(f0.valid)
    periods = [1.0 / f0.values[r] for r in runs]
    amps = [10.0 ** (intensity.values[r] / 20.0) for r in runs]
    j_pf, j_max, j_min = _pf_and_pq(periods)
    s_pf, s_max, s_min = _pf_and_pq(amps)
    return np.array([j_pf, j_max, j_min, s_pf, s_max, s_min])


def utterance_features(w: Waveform, sidecar: dict[str, float] | None = None) -> FeatureVector:
    """Assemble the native 248-value utterance vector, plus sidecar features.

    ``sidecar`` maps external feature names (see :data:`EXTERNAL_GROUPS`) to
    per-utterance values; they are appended in canonical order.
    """
    inten = intensity_track(w)
    f0 = f0_track(w)
    blocks = [
        f0_feature_block(f0),
        track_feature_block(inten),
        track_feature_block(band_intensity_track(w, "lowpass")),
        track_feature_block(band_intensity_track(w, "highpass")),
        track_feature_block(mfcc_scalar_track(w)),
        formant_feature_block(formant_tracks(w, f0)),
        duration_feature_block(audibility(inten), inten.hop_s),
        perturbation_block(f0, inten),
    ]
    values = np.concatenate(blocks)
    registry = native_utterance_registry()
    if sidecar:
        registry, values = _append_sidecar(registry, values, sidecar)
    return FeatureVector(values, registry)


def _append_sidecar(registry, values, sidecar):
    extended = extend_with_external(registry, tuple(sidecar))
    extra_names = extended.names[len(registry):]
    extra = np.array([float(sidecar[n]) for n in extra_names])
    if not np.all(np.isfinite(extra)):
        bad = extra_names[int(np.flatnonzero(~np.isfinite(extra))[0])]
        raise ValueError(f"non-finite sidecar value for feature {bad!r}")
    return extended, np.concatenate([values, extra])


def select_subset(v: FeatureVector, s: FeatureSubset) -> FeatureVector:
    """Project a vector onto a named subset, preserving the subset's order."""
    idx = [v.registry.index_of(name) for name in s.feature_names]
    entries = tuple(v.registry.entries[i] for i in idx)
    return FeatureVector(v.values[idx], FeatureRegistry(entries))


def zscore_fit(train: list[FeatureVector]) -> Scaler:
    """Per-dimension mean/std from training vectors; constant dims get std 1."""
    if not train:
        raise ValueError("cannot fit a scaler on an empty training set")
    fp = train[0].registry.fingerprint()
    if any(v.registry.fingerprint() != fp for v in train):
        raise ValueError("training vectors use mismatched registries")
    x = np.stack([v.values for v in train])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return Scaler(mean, std)


def zscore_apply(s: Scaler, v: FeatureVector) -> FeatureVector:
    if s.mean.shape != v.values.shape:
        raise ValueError("scaler dimension does not match vector registry")
    return FeatureVector(s.transform_array(v.values), v.registry)


def read_sidecar(path: str | Path) -> dict[str, dict[str, float]]:
    """Read a per-utterance external-feature CSV (utterance_id,feature_name,value).

    All utterances must carry the same feature-name set so that assembled
    vectors stay uniform.
    """
    path = Path(path)
    table: dict[str, dict[str, float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("utterance_id", "feature_name", "value"):
            raise ValueError(f"{path}: expected header utterance_id,feature_name,value")
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{row_no}: expected 3 fields")
            uid, name, raw = (f.strip() for f in row)
            if name not in _EXTERNAL_NAME_TO_GROUP:
                raise ValueError(f"{path}:{row_no}: unknown external feature {name!r}")
            try:
                value = float(raw)
            except ValueError:
                raise ValueError(f"{path}:{row_no}: bad value {raw!r}") from None
            if not math.isfinite(value):
                raise ValueError(f"{path}:{row_no}: non-finite value for {name!r}")
            table.setdefault(uid, {})[name] = value
    name_sets = {frozenset(d) for d in table.values()}
    if len(name_sets) > 1:
        raise ValueError(f"{path}: utterances carry inconsistent feature-name sets")
    return table


_BUILTIN_SUBSETS = ("universal-utterance", "universal-segment")


def load_subset(name_or_path: str | Path) -> FeatureSubset:
    """Load a feature subset: a built-in name or a text file (one name per
    line, ``#`` comments)."""
    name = str(name_or_path)
    if name in _BUILTIN_SUBSETS:
        text = resources.files("emocat.data").joinpath(f"{name}.txt").read_text(encoding="utf-8")
        label = name
    else:
        p = Path(name_or_path)
        if not p.is_file():
            raise FileNotFoundError(f"subset file not found: {p}")
        text = p.read_text(encoding="utf-8")
        label = p.stem
    names = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    return FeatureSubset(label, tuple(names))
