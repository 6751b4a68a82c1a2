"""Shared synthetic-signal and corpus fixtures."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
import pytest

from emocat.corpus import PIPELINE_RATE, Waveform


def sine_wave(freq: float, dur: float = 1.0, amp: float = 0.8, rate: int = PIPELINE_RATE) -> Waveform:
    t = np.arange(int(round(dur * rate))) / rate
    return Waveform(amp * np.sin(2.0 * np.pi * freq * t), rate)


def synthetic_vowel(
    f0: float = 100.0,
    formants=((700.0, 80.0), (1200.0, 90.0), (2500.0, 120.0)),
    dur: float = 1.0,
    rate: int = PIPELINE_RATE,
) -> Waveform:
    """Impulse train filtered through second-order resonator sections."""
    from scipy import signal as sps

    n = int(round(dur * rate))
    x = np.zeros(n)
    period = int(round(rate / f0))
    x[::period] = 1.0
    for freq, bw in formants:
        r = np.exp(-np.pi * bw / rate)
        theta = 2.0 * np.pi * freq / rate
        x = sps.lfilter([1.0], [1.0, -2.0 * r * np.cos(theta), r * r], x)
    return Waveform(0.9 * x / np.abs(x).max(), rate)


def write_wav(path: Path, samples: np.ndarray, rate: int, channels: int = 1):
    """Write float samples in [-1, 1] as PCM-16; stereo interleaves columns."""
    data = np.clip(np.asarray(samples), -1.0, 1.0)
    pcm = (data * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def write_manifest(path: Path, rows: list[tuple], header: bool = True):
    lines = []
    if header:
        lines.append("id,path,speaker,gender,age_group,label,kind")
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def voiced_tone(freq: float, seed: int, rate: int = PIPELINE_RATE) -> Waveform:
    """Tone with vibrato, amplitude wobble and a noise floor.

    The variation gives every feature dimension genuine within-class spread,
    which pure sines lack."""
    rng = np.random.RandomState(seed)
    dur = rng.uniform(0.35, 0.45)
    n = int(dur * rate)
    t = np.arange(n) / rate
    vib = 1.0 + 0.015 * np.sin(2 * np.pi * rng.uniform(4, 6) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(freq * vib) / rate
    amp = rng.uniform(0.5, 0.8) * (0.8 + 0.2 * np.sin(2 * np.pi * rng.uniform(1, 3) * t))
    x = amp * np.sin(phase) + 0.01 * rng.randn(n)
    return Waveform(np.clip(x, -1, 1), rate)


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory):
    """WAV corpus: 2 speakers x 3 pitch-coded labels x 5 utterances."""
    root = tmp_path_factory.mktemp("tones")
    audio = root / "audio"
    audio.mkdir()
    label_freq = {"calm": 110.0, "bright": 220.0, "sharp": 390.0}
    rows = []
    seed = 0
    for speaker, gender in (("sp1", "female"), ("sp2", "male")):
        for label, freq in label_freq.items():
            for j in range(5):
                seed += 1
                uid = f"u{seed:03d}"
                w = voiced_tone(freq, seed)
                write_wav(audio / f"{uid}.wav", w.samples, w.rate)
                rows.append(
                    (uid, f"audio/{uid}.wav", speaker, gender, "unknown", label, "word")
                )
    manifest = root / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest
