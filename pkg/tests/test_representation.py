import numpy as np
import pytest

from emocat.corpus import Waveform
from emocat.features import external_feature_names, native_utterance_registry
from emocat.representation import (
    Representation,
    build_representation,
    segment_bounds,
    segment_features,
)
from emocat.tracks import ScalarTrack, audibility, intensity_track

from conftest import sine_wave, synthetic_vowel


def _intensity(values, hop=0.01, win=0.025):
    values = np.asarray(values, dtype=float)
    return ScalarTrack(values, np.ones(values.size, bool), hop, win)


class TestSegmentBounds:
    def test_short_utterance_single_segment(self):
        w = sine_wave(150.0, dur=0.15)
        inten = intensity_track(w)
        bounds = segment_bounds(inten, audibility(inten))
        assert len(bounds) == 1

    def test_two_audible_runs_two_segments(self):
        # 300 ms loud / 300 ms quiet / 300 ms loud, constant within runs
        values = np.concatenate([np.full(30, -5.0), np.full(30, -60.0), np.full(30, -5.0)])
        inten = _intensity(values)
        seg = audibility(inten)
        bounds = segment_bounds(inten, seg)
        assert len(bounds) == 2
        (a0, a1), (b0, b1) = bounds
        assert a0 == pytest.approx(0.0)
        assert a1 == pytest.approx(0.30)
        assert b0 == pytest.approx(0.60)

    def test_fully_silent_single_whole_utterance_segment(self):
        w = Waveform(np.zeros(8000), 16000)
        inten = intensity_track(w)
        bounds = segment_bounds(inten, audibility(inten))
        assert len(bounds) == 1
        t0, t1 = bounds[0]
        assert t0 == 0.0
        assert t1 == pytest.approx(w.duration, abs=inten.hop_s)

    def test_energy_valley_splits_long_run(self):
        # two 400 ms loud lobes joined by a shallow dip still above audibility
        lobe = np.full(40, -5.0)
        dip = np.full(5, -12.0)
        inten = _intensity(np.concatenate([lobe, dip, lobe]))
        seg = audibility(inten)
        assert seg.runs == ((0, 85, True),)
        bounds = segment_bounds(inten, seg)
        assert len(bounds) == 2

    def test_min_length_rule_blocks_tiny_pieces(self):
        # dip too close to the start: the left piece would be < 200 ms
        head = np.full(10, -5.0)
        dip = np.full(3, -12.0)
        tail = np.full(40, -5.0)
        inten = _intensity(np.concatenate([head, dip, tail]))
        bounds = segment_bounds(inten, audibility(inten))
        assert len(bounds) == 1

    def test_segments_cover_audible_runs_only(self):
        values = np.concatenate([np.full(25, -4.0), np.full(40, -70.0), np.full(25, -4.0)])
        inten = _intensity(values)
        bounds = segment_bounds(inten, audibility(inten))
        for t0, t1 in bounds:
            mid = int(((t0 + t1) / 2) / inten.hop_s)
            assert values[mid] > -30.0


class TestSegmentFeatures:
    def test_native_length_226_and_duration_component(self):
        w = sine_wave(150.0, dur=0.8)
        fv = segment_features(w, (0.1, 0.6))
        assert len(fv.values) == 226
        assert fv.values[0] == pytest.approx(0.5)
        assert fv.registry.names[0] == "segment duration"

    def test_full_sidecar_reaches_296(self):
        sidecar = {name: 1.0 for name in external_feature_names()}
        fv = segment_features(sine_wave(150.0, dur=0.5), (0.0, 0.5), sidecar)
        assert len(fv.values) == 296

    def test_empty_excision_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            segment_features(sine_wave(150.0, dur=0.5), (0.3, 0.3))


class TestBuildRepresentation:
    def test_utterance_mode_contract(self):
        rep = build_representation(sine_wave(150.0, dur=0.5), "utterance")
        assert rep.mode == "utterance"
        assert rep.segment_set is None
        assert len(rep.utterance_vector.values) == 248

    def test_combination_has_both_parts(self):
        rep = build_representation(sine_wave(150.0, dur=1.0), "combination")
        assert rep.utterance_vector is not None
        assert len(rep.segment_set.segments) >= 1

    def test_word_length_utterance_single_segment(self):
        rep = build_representation(sine_wave(150.0, dur=0.3), "segment")
        assert len(rep.segment_set.segments) == 1

    def test_combination_utterance_part_bit_identical(self):
        w = sine_wave(167.0, dur=0.7)
        combo = build_representation(w, "combination")
        solo = build_representation(w, "utterance")
        assert combo.utterance_vector.values.tobytes() == solo.utterance_vector.values.tobytes()

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            build_representation(sine_wave(100.0, dur=0.2), "holistic")

    def test_mode_invariants_enforced(self):
        with pytest.raises(ValueError):
            Representation("utterance", None, None)


def test_stationary_vowel_segments_near_identical():
    w = synthetic_vowel(dur=1.2)
    reg = native_utterance_registry()
    # disjoint 0.5 s ranges of a stationary signal
    a = segment_features(w, (0.0, 0.5))
    b = segment_features(w, (0.6, 1.1))
    idx = a.registry.index_of("f0 series mean")
    mean_a, mean_b = a.values[idx], b.values[idx]
    assert abs(mean_a - mean_b) / abs(mean_a) < 0.02
    assert reg.index_of("f0 series mean") >= 0  # same naming across registries
