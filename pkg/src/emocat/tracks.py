"""Framed scalar tracks (intensity, band intensities, F0, MFCC c1, formants)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.fft import dct

from .corpus import Waveform

WIN_S = 0.025
HOP_S = 0.010
F0_WIN_S = 0.040

DB_FLOOR = -80.0
LOG_FLOOR = 1e-10

F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
VOICING_PEAK_MIN = 0.45
# earliest autocorrelation peak within this fraction of the global one wins
PEAK_RELATIVE_MIN = 0.85
# Voicing intensity gate: relative drop below the loudest frame, with an
# absolute floor so that near-digital silence can never count as voiced.
VOICING_DB_DROP = 30.0
VOICING_DB_ABS = -60.0

LOWPASS_CUTOFF_HZ = 250.0
HIGHPASS_CUTOFF_HZ = 1000.0

PREEMPHASIS = 0.97
N_MEL_FILTERS = 26
MFCC_NFFT = 512

LPC_ORDER = 12
FORMANT_MAX_BW_HZ = 400.0
FORMANT_MIN_HZ = 90.0
FORMANT_MAX_HZ = 5500.0

AUDIBLE_DB_DROP = 30.0
MIN_RUN_FRAMES = 3


@dataclass(frozen=True)
class ScalarTrack:
    """A framed time series with a per-frame validity mask."""

    values: np.ndarray
    valid: np.ndarray
    hop_s: float
    win_s: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.valid, dtype=bool)
        if vals.shape != mask.shape or vals.ndim != 1:
            raise ValueError("values and valid must be 1-D arrays of equal length")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        if not np.all(np.isfinite(vals[mask])):
            raise ValueError("track values must be finite wherever valid")
        vals.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", mask)

    def __len__(self) -> int:
        return self.values.size

    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]

    @property
    def extent_s(self) -> float:
        """Time covered by the framing, from frame 0 start to last frame end."""
        return (self.values.size - 1) * self.hop_s + self.win_s


@dataclass(frozen=True)
class FormantTracks:
    """First three formant tracks sharing one hop and validity mask."""

    f1: ScalarTrack
    f2: ScalarTrack
    f3: ScalarTrack


@dataclass(frozen=True)
class AudibilitySegmentation:
    """Alternating audible/inaudible frame runs covering a whole track."""

    runs: tuple[tuple[int, int, bool], ...]

    @property
    def n_frames(self) -> int:
        return self.runs[-1][1] if self.runs else 0


def _frame_starts(n_samples: int, frame_len: int, hop: int) -> tuple[np.ndarray, int]:
    """Frame start offsets; signals shorter than one window yield one frame."""
    if n_samples < frame_len:
        return np.array([0]), n_samples
    count = (n_samples - frame_len) // hop + 1
    return np.arange(count) * hop, frame_len


def _frames(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    starts, flen = _frame_starts(x.size, frame_len, hop)
    view = np.lib.stride_tricks.sliding_window_view(x, flen)
    return view[starts]


def _rms_db(rms: np.ndarray) -> np.ndarray:
    return np.maximum(20.0 * np.log10(rms + LOG_FLOOR), DB_FLOOR)


def _intensity_values(x: np.ndarray, rate: int) -> np.ndarray:
    frame_len = round(WIN_S * rate)
    hop = round(HOP_S * rate)
    frames = _frames(x, frame_len, hop)
    window = np.hamming(frames.shape[1])
    # Window-energy normalization so a full-scale signal reads ~0 dB.
    rms = np.sqrt(np.maximum(frames**2 @ window**2, 0.0) / (window @ window))
    return _rms_db(rms)


def intensity_track(w: Waveform) -> ScalarTrack:
    """Frame-wise RMS level in dB: 25 ms Hamming window, 10 ms hop, floor -80 dB."""
    values = _intensity_values(w.samples, w.rate)
    frame_len = min(round(WIN_S * w.rate), w.samples.size)
    return ScalarTrack(values, np.ones(values.size, bool), HOP_S, frame_len / w.rate)


def band_intensity_track(w: Waveform, band: str) -> ScalarTrack:
    """Intensity of the band-filtered signal (2nd-order Butterworth IIR).

    ``band`` is ``"lowpass"`` (250 Hz cutoff) or ``"highpass"`` (1 kHz cutoff).
    """
    if band == "lowpass":
        b, a = sps.butter(2, LOWPASS_CUTOFF_HZ, "lowpass", fs=w.rate)
    elif band == "highpass":
        b, a = sps.butter(2, HIGHPASS_CUTOFF_HZ, "highpass", fs=w.rate)
    else:
        raise ValueError(f"band must be 'lowpass' or 'highpass', got {band!r}")
    filtered = sps.lfilter(b, a, w.samples)
    values = _intensity_values(filtered, w.rate)
    frame_len = min(round(WIN_S * w.rate), w.samples.size)
    return ScalarTrack(values, np.ones(values.size, bool), HOP_S, frame_len / w.rate)


def f0_track(w: Waveform) -> ScalarTrack:
    """Fundamental-frequency track from normalized autocorrelation.

    40 ms frames on a 10 ms hop.  Per frame the autocorrelation is normalized
    by the geometric mean of the two lag-window energies; the peak over lags
    covering 50-500 Hz is refined by parabolic interpolation.  A frame is
    voiced iff the peak reaches 0.45 and the frame level clears the intensity
    gate.  Unvoiced frames carry value 0 and valid=False.
    """
    x = w.samples
    rate = w.rate
    frame_len = round(F0_WIN_S * rate)
    hop = round(HOP_S * rate)
    frames = _frames(x, frame_len, hop)
    n_frames, flen = frames.shape

    frame_db = _rms_db(np.sqrt((frames**2).mean(axis=1)))
    gate_db = max(frame_db.max() - VOICING_DB_DROP, VOICING_DB_ABS)

    lag_min = int(np.ceil(rate / F0_MAX_HZ))
    lag_max = min(int(np.floor(rate / F0_MIN_HZ)), flen - 1)

    values = np.zeros(n_frames)
    valid = np.zeros(n_frames, bool)
    if lag_max < lag_min:
        return ScalarTrack(values, valid, HOP_S, flen / rate)

    nfft = 1 << int(2 * flen - 1).bit_length()
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :flen]
    csum = np.cumsum(frames**2, axis=1)
    total = csum[:, -1:]

    lags = np.arange(lag_min, lag_max + 1)
    e_head = csum[:, flen - 1 - lags]
    e_tail = total - csum[:, lags - 1]
    denom = np.sqrt(np.maximum(e_head * e_tail, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = np.where(denom > 1e-20, acf[:, lags] / np.maximum(denom, 1e-20), 0.0)

    peak_pos = np.argmax(ncc, axis=1)
    for i in range(n_frames):
        p = peak_pos[i]
        peak = ncc[i, p]
        if peak < VOICING_PEAK_MIN or frame_db[i] <= gate_db:
            continue
        # a periodic signal peaks at every period multiple; take the first
        # local maximum close to the global one to avoid octave errors
        row = ncc[i]
        interior = (row[1:-1] >= row[:-2]) & (row[1:-1] >= row[2:])
        qualify = interior & (row[1:-1] >= PEAK_RELATIVE_MIN * peak)
        if qualify.any():
            p = int(np.argmax(qualify)) + 1
        lag = float(lags[p])
        if 0 < p < lags.size - 1:
            ym, y0, yp = ncc[i, p - 1], ncc[i, p], ncc[i, p + 1]
            denom_p = ym - 2.0 * y0 + yp
            if abs(denom_p) > 1e-12:
                delta = 0.5 * (ym - yp) / denom_p
                lag += float(np.clip(delta, -0.5, 0.5))
        f0 = rate / lag
        values[i] = float(np.clip(f0, F0_MIN_HZ, F0_MAX_HZ))
        valid[i] = True
    return ScalarTrack(values, valid, HOP_S, flen / rate)


def _preemphasize(x: np.ndarray, coeff: float = PREEMPHASIS) -> np.ndarray:
    out = np.empty_like(x)
    out[0] = x[0]
    out[1:] = x[1:] - coeff * x[:-1]
    return out


def _mel_filterbank(n_filters: int, nfft: int, rate: int) -> np.ndarray:
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    high = rate / 2.0
    mel_points = np.linspace(0.0, hz_to_mel(high), n_filters + 2)
    bins = np.floor((nfft + 1) * mel_to_hz(mel_points) / rate).astype(int)
    fb = np.zeros((n_filters, nfft // 2 + 1))
    for j in range(n_filters):
        for i in range(bins[j], bins[j + 1]):
            fb[j, i] = (i - bins[j]) / max(bins[j + 1] - bins[j], 1)
        for i in range(bins[j + 1], bins[j + 2]):
            fb[j, i] = (bins[j + 2] - i) / max(bins[j + 2] - bins[j + 1], 1)
    return fb


def mfcc_scalar_track(w: Waveform) -> ScalarTrack:
    """Per-frame MFCC coefficient c1 (26 mel filters over 0-8 kHz, DCT-II)."""
    x = _preemphasize(w.samples)
    frame_len = round(WIN_S * w.rate)
    hop = round(HOP_S * w.rate)
    frames = _frames(x, frame_len, hop)
    window = np.hamming(frames.shape[1])
    mag = np.abs(np.fft.rfft(frames * window, MFCC_NFFT, axis=1))
    fb = _mel_filterbank(N_MEL_FILTERS, MFCC_NFFT, w.rate)
    energies = np.maximum(mag @ fb.T, LOG_FLOOR)
    ceps = dct(np.log(energies), type=2, norm="ortho", axis=1)
    c1 = ceps[:, 1]
    return ScalarTrack(c1, np.ones(c1.size, bool), HOP_S, min(frame_len, w.samples.size) / w.rate)


def _levinson_durbin(r: np.ndarray, order: int) -> np.ndarray | None:
    """LPC coefficients a[1..order] from autocorrelation r (A(z) = 1 + sum a_k z^-k)."""
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    if err <= 0.0:
        return None
    for m in range(1, order + 1):
        acc = r[m] + a[1:m] @ r[m - 1:0:-1]
        k = -acc / err
        new_a = a.copy()
        new_a[m] = k
        new_a[1:m] = a[1:m] + k * a[m - 1:0:-1]
        a = new_a
        err *= 1.0 - k * k
        if err <= 0.0:
            return None
    return a


def formant_tracks(w: Waveform, f0: ScalarTrack) -> FormantTracks:
    """LPC formants on voiced frames; frame invalid unless three roots qualify.

    Roots of the order-12 LPC polynomial with angle in (0, pi) become formant
    candidates; those with bandwidth < 400 Hz and frequency in (90, 5500) Hz
    are kept and sorted ascending.
    """
    x = _preemphasize(w.samples)
    rate = w.rate
    frame_len = min(round(WIN_S * rate), x.size)
    hop = round(HOP_S * rate)
    n_frames = len(f0)
    window = np.hamming(frame_len)

    freqs = np.zeros((n_frames, 3))
    valid = np.zeros(n_frames, bool)
    for i in np.flatnonzero(f0.valid):
        start = min(i * hop, x.size - frame_len)
        frame = x[start:start + frame_len] * window
        r = np.correlate(frame, frame, "full")[frame_len - 1:frame_len + LPC_ORDER]
        a = _levinson_durbin(r, LPC_ORDER)
        if a is None:
            continue
        roots = np.roots(a)
        roots = roots[roots.imag > 0.0]
        if roots.size == 0:
            continue
        angle = np.angle(roots)
        freq = angle * rate / (2.0 * np.pi)
        with np.errstate(divide="ignore"):
            bw = -np.log(np.abs(roots)) * rate / np.pi
        keep = (bw < FORMANT_MAX_BW_HZ) & (freq > FORMANT_MIN_HZ) & (freq < FORMANT_MAX_HZ)
        cand = np.sort(freq[keep])
        # enforce strictly increasing candidates
        distinct = [cand[0]] if cand.size else []
        for f in cand[1:]:
            if f > distinct[-1]:
                distinct.append(f)
        if len(distinct) < 3:
            continue
        freqs[i] = distinct[:3]
        valid[i] = True

    def track(col: int) -> ScalarTrack:
        return ScalarTrack(freqs[:, col], valid, f0.hop_s, frame_len / rate)

    return FormantTracks(track(0), track(1), track(2))


def audibility(intensity: ScalarTrack) -> AudibilitySegmentation:
    """Split a track into audible/inaudible runs (threshold: max - 30 dB).

    Runs shorter than 3 frames are merged into their neighbor in one
    left-to-right pass, so emitted runs alternate audibility.
    """
    vals = intensity.values
    audible = vals > vals.max() - AUDIBLE_DB_DROP
    runs: list[list] = []
    start = 0
    for i in range(1, audible.size + 1):
        if i == audible.size or audible[i] != audible[start]:
            runs.append([start, i, bool(audible[start])])
            start = i

    out: list[list] = []
    for run in runs:
        start, end, aud = run
        if out and end - start < MIN_RUN_FRAMES:
            out[-1][1] = end
        elif out and out[-1][2] == aud:
            out[-1][1] = end
        elif out and out[-1][1] - out[-1][0] < MIN_RUN_FRAMES:
            # stranded short head: fold it into this run
            out[-1] = [out[-1][0], end, aud]
        else:
            out.append([start, end, aud])
    return AudibilitySegmentation(tuple((s, e, a) for s, e, a in out))
