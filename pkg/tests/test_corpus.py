import numpy as np
import pytest

from emocat.corpus import (
    AudioFormatError,
    ManifestError,
    Waveform,
    parse_manifest,
    read_wav,
    resample,
)

from conftest import write_manifest, write_wav


def _grid_rows(n_speakers, n_labels, n_utts, kinds=("word",)):
    rows = []
    i = 0
    for s in range(n_speakers):
        for lab in range(n_labels):
            for u in range(n_utts):
                kind = kinds[u % len(kinds)]
                rows.append(
                    (f"u{i:05d}", f"a/u{i:05d}.wav", f"sp{s}", "unknown", "unknown", f"emo{lab}", kind)
                )
                i += 1
    return rows


def test_gees_shaped_manifest_record_count(tmp_path):
    # 6 speakers x 5 emotions x 93 utterances
    kinds = ["word"] * 32 + ["short_sentence"] * 30 + ["long_sentence"] * 30 + ["passage"]
    p = tmp_path / "gees.csv"
    write_manifest(p, _grid_rows(6, 5, 93, kinds))
    m = parse_manifest(p)
    assert len(m.records) == 2790
    assert len(m.label_set) == 5


def test_des_shaped_manifest_record_count(tmp_path):
    p = tmp_path / "des.csv"
    write_manifest(p, _grid_rows(4, 5, 13))
    m = parse_manifest(p)
    assert len(m.records) == 260


def test_label_set_order_of_first_appearance(tmp_path):
    p = tmp_path / "m.csv"
    rows = [
        ("a", "a.wav", "s", "male", "young", "zeta", "word"),
        ("b", "b.wav", "s", "male", "young", "alpha", "word"),
        ("c", "c.wav", "s", "male", "young", "zeta", "word"),
    ]
    write_manifest(p, rows)
    assert parse_manifest(p).label_set == ("zeta", "alpha")


def test_duplicate_id_reported_with_row_number(tmp_path):
    p = tmp_path / "m.csv"
    rows = [
        ("u1", "a.wav", "s", "male", "young", "x", "word"),
        ("u1", "b.wav", "s", "male", "young", "y", "word"),
    ]
    write_manifest(p, rows)
    with pytest.raises(ManifestError, match=r":3: duplicate id 'u1'"):
        parse_manifest(p)


@pytest.mark.parametrize(
    "field,value,message",
    [(6, "sonnet", "kind"), (3, "robot", "gender"), (4, "teen", "age_group")],
)
def test_unknown_enum_tokens_rejected(tmp_path, field, value, message):
    row = ["u1", "a.wav", "s", "male", "young", "x", "word"]
    row[field] = value
    p = tmp_path / "m.csv"
    write_manifest(p, [tuple(row), ("u2", "b.wav", "s", "male", "young", "y", "word")])
    with pytest.raises(ManifestError, match=message):
        parse_manifest(p)


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        parse_manifest(tmp_path / "nope.csv")
    p = tmp_path / "bad.csv"
    p.write_text("id,who\n1,2\n")
    with pytest.raises(ManifestError, match="expected header"):
        parse_manifest(p)


def test_manifest_is_pure_function_of_bytes(tmp_path):
    p = tmp_path / "m.csv"
    write_manifest(p, _grid_rows(2, 2, 3))
    assert parse_manifest(p) == parse_manifest(p)


def test_read_wav_mono_16k(tmp_path):
    w = tmp_path / "a.wav"
    rng = np.random.RandomState(1)
    write_wav(w, 0.5 * rng.randn(16000).clip(-1, 1), 16000)
    wav = read_wav(w)
    assert wav.samples.size == 16000
    assert wav.rate == 16000
    assert np.all(np.abs(wav.samples) <= 1.0)


def test_read_wav_stereo_averages_to_mono(tmp_path):
    w = tmp_path / "st.wav"
    left = np.full(1000, 0.5)
    right = np.full(1000, -0.5)
    write_wav(w, np.stack([left, right], axis=1), 8000, channels=2)
    wav = read_wav(w)
    assert wav.samples.size == 1000
    assert np.allclose(wav.samples, 0.0, atol=1.0 / 32767)


def test_read_wav_truncated_header(tmp_path):
    p = tmp_path / "t.wav"
    p.write_bytes(b"RIFF\x10\x00\x00\x00WAVE")
    with pytest.raises(AudioFormatError):
        read_wav(p)


def test_read_wav_not_riff(tmp_path):
    p = tmp_path / "t.wav"
    p.write_bytes(b"not audio at all, sorry")
    with pytest.raises(AudioFormatError):
        read_wav(p)


def test_resample_identity_returns_input():
    w = Waveform(np.linspace(-0.5, 0.5, 100), 16000)
    assert resample(w, 16000) is w


def test_resample_constant_stays_constant():
    w = Waveform(np.full(8000, 0.25), 8000)
    out = resample(w, 16000)
    assert out.samples.size == 16000
    assert np.allclose(out.samples, 0.25, atol=0)


def test_resample_ramp_against_analytic_line():
    n = 8000
    ramp = Waveform(np.arange(n) / (n - 1), 8000)
    out = resample(ramp, 16000)
    assert out.samples.size == 16000
    line = np.arange(16000) / (16000 - 1)
    assert np.abs(out.samples - line).max() < 1e-6


def test_resampled_output_respects_waveform_invariants():
    rng = np.random.RandomState(7)
    w = Waveform(rng.uniform(-1, 1, 4413), 44100)
    out = resample(w, 16000)
    assert out.rate == 16000
    assert np.all(np.isfinite(out.samples))
    assert np.abs(out.samples).max() <= 1.0
