"""Corpus manifests, WAV loading and rate normalization."""
from __future__ import annotations

import csv
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Every waveform is normalized to this rate right after load so that all
# frame-size constants downstream are exact sample counts.
PIPELINE_RATE = 16000

GENDERS = ("male", "female", "unknown")
AGE_GROUPS = ("young", "old", "unknown")
KINDS = ("word", "short_sentence", "long_sentence", "passage")

MANIFEST_FIELDS = ("id", "path", "speaker", "gender", "age_group", "label", "kind")


class ManifestError(ValueError):
    """Unreadable or inconsistent corpus manifest."""


class AudioFormatError(ValueError):
    """WAV file outside the supported PCM-16 subset."""


@dataclass(frozen=True)
class UtteranceRecord:
    """One manifest row: an utterance with its speaker metadata and label."""

    id: str
    audio_path: Path
    speaker: str
    gender: str
    age_group: str
    label: str
    kind: str


@dataclass(frozen=True)
class CorpusManifest:
    """Ordered utterance records plus the label set they draw from."""

    records: tuple[UtteranceRecord, ...]
    label_set: tuple[str, ...]

    def __post_init__(self):
        if len(self.label_set) < 2:
            raise ManifestError("label set needs at least 2 distinct labels")


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        if np.abs(s).max() > 1.0:
            raise ValueError("waveform samples must lie in [-1, 1]")
        if self.rate <= 0:
            raise ValueError("sample rate must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


def parse_manifest(path: str | Path) -> CorpusManifest:
    """Parse a corpus manifest CSV into records and an ordered label set.

    The file must carry the header ``id,path,speaker,gender,age_group,label,kind``.
    Audio paths are resolved relative to the manifest's directory.  The label
    set is the union of labels in order of first appearance.  Every malformed
    row is reported with its line number.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    records: list[UtteranceRecord] = []
    labels: list[str] = []
    seen_ids: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_FIELDS:
            raise ManifestError(
                f"{path}: expected header {','.join(MANIFEST_FIELDS)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(MANIFEST_FIELDS):
                raise ManifestError(
                    f"{path}:{row_no}: expected {len(MANIFEST_FIELDS)} fields, got {len(row)}"
                )
            rid, rel, speaker, gender, age, label, kind = (f.strip() for f in row)
            if not rid:
                raise ManifestError(f"{path}:{row_no}: empty id")
            if rid in seen_ids:
                raise ManifestError(f"{path}:{row_no}: duplicate id {rid!r}")
            if not label:
                raise ManifestError(f"{path}:{row_no}: empty label")
            if gender not in GENDERS:
                raise ManifestError(f"{path}:{row_no}: unknown gender {gender!r}")
            if age not in AGE_GROUPS:
                raise ManifestError(f"{path}:{row_no}: unknown age_group {age!r}")
            if kind not in KINDS:
                raise ManifestError(f"{path}:{row_no}: unknown kind {kind!r}")
            seen_ids.add(rid)
            if label not in labels:
                labels.append(label)
            records.append(
                UtteranceRecord(rid, path.parent / rel, speaker, gender, age, label, kind)
            )
    return CorpusManifest(tuple(records), tuple(labels))


def read_wav(path: str | Path) -> Waveform:
    """Read a PCM-16 RIFF/WAVE file; stereo is averaged to mono sample-wise."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV not supported")
            width = wf.getsampwidth()
            if width != 2:
                raise AudioFormatError(
                    f"{path}: only 16-bit PCM supported, got {8 * width}-bit"
                )
            channels = wf.getnchannels()
            if channels not in (1, 2):
                raise AudioFormatError(
                    f"{path}: expected 1 or 2 channels, got {channels}"
                )
            rate = wf.getframerate()
            data = wf.readframes(wf.getnframes())
    except FileNotFoundError:
        raise AudioFormatError(f"{path}: file not found") from None
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a readable PCM WAV file ({exc})") from None
    if len(data) == 0:
        raise AudioFormatError(f"{path}: empty data chunk")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return Waveform(samples, rate)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Linear-interpolation resampling; identity when rates already match."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.rate:
        return w
    n_out = max(int(round(w.samples.size * target_rate / w.rate)), 1)
    # endpoint-preserving grid: first/last samples map onto first/last samples
    positions = np.linspace(0.0, w.samples.size - 1, n_out)
    out = np.interp(positions, np.arange(w.samples.size), w.samples)
    return Waveform(out, target_rate)


def load_utterance(path: str | Path) -> Waveform:
    """Read a WAV file and bring it to the pipeline rate."""
    return resample(read_wav(path), PIPELINE_RATE)
