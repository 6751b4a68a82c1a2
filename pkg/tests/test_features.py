import numpy as np
import pytest

from emocat.corpus import Waveform
from emocat.features import (
    FeatureRegistry,
    FeatureSubset,
    FeatureVector,
    duration_feature_block,
    external_feature_names,
    extrema_series,
    f0_feature_block,
    formant_feature_block,
    load_subset,
    native_segment_registry,
    native_utterance_registry,
    perturbation_block,
    read_sidecar,
    select_subset,
    series_statistics,
    track_feature_block,
    utterance_features,
    zscore_apply,
    zscore_fit,
)
from emocat.tracks import AudibilitySegmentation, ScalarTrack, FormantTracks

from conftest import sine_wave


def _track(values, valid=None, hop=0.01):
    values = np.asarray(values, dtype=float)
    if valid is None:
        valid = np.ones(values.size, bool)
    return ScalarTrack(values, valid, hop, 0.025)


class TestExtremaSeries:
    def test_hand_trace_alternating(self):
        minima, maxima, durations = extrema_series(_track([0, 1, 0, 1, 0]))
        assert maxima.tolist() == [1, 1]
        assert minima.tolist() == [0]
        assert np.allclose(durations, [0.01, 0.01])

    def test_monotone_series_has_no_extrema(self):
        minima, maxima, durations = extrema_series(_track([1, 2, 3, 4, 5]))
        assert minima.size == maxima.size == durations.size == 0

    def test_plateau_counts_once_at_first_frame(self):
        minima, maxima, _ = extrema_series(_track([0, 1, 1, 0]))
        assert maxima.tolist() == [1]
        assert minima.size == 0

    def test_too_short_series_empty(self):
        minima, maxima, durations = extrema_series(_track([1, 2]))
        assert minima.size == maxima.size == durations.size == 0

    def test_only_valid_frames_used(self):
        track = _track([0, 9, 1, 0, 1, 0], valid=[True, False, True, True, True, True])
        minima, maxima, _ = extrema_series(track)
        # valid subsequence is 0,1,0,1,0
        assert maxima.tolist() == [1, 1]
        assert minima.tolist() == [0]


class TestSeriesStatistics:
    def test_hand_arithmetic(self):
        got = series_statistics([1, 2, 3, 4])
        expected = (2.5, 4, 1, 3, 1.25, 2.5, 1.75, 3.25, 1.5, 1.0)
        assert np.allclose(got, expected)

    def test_empty_is_ten_zeros(self):
        assert series_statistics([]).tolist() == [0.0] * 10

    def test_constant_series(self):
        c = 7.25
        got = series_statistics([c, c, c])
        assert np.allclose(got, (c, c, c, 0, 0, c, c, c, 0, 0))

    def test_singleton_has_zero_derivative_term(self):
        got = series_statistics([3.5])
        assert got[-1] == 0.0

    def test_matches_numpy_oracle_on_random_series(self):
        rng = np.random.RandomState(0)
        for _ in range(50):
            x = rng.randn(rng.randint(1, 40))
            got = series_statistics(x)
            assert got[0] == pytest.approx(np.mean(x))
            assert got[4] == pytest.approx(np.var(x))
            assert got[5] == pytest.approx(np.median(x))
            assert got[6] == pytest.approx(np.percentile(x, 25))
            assert got[8] == pytest.approx(np.percentile(x, 75) - np.percentile(x, 25))


class TestTrackFeatureBlock:
    def test_all_invalid_gives_40_zeros(self):
        track = _track([1, 2, 3], valid=[False] * 3)
        assert track_feature_block(track).tolist() == [0.0] * 40

    def test_constant_track(self):
        block = track_feature_block(_track([5.0] * 10))
        assert np.allclose(block[:30], 0.0)
        assert np.allclose(block[30:], (5, 5, 5, 0, 0, 5, 5, 5, 0, 0))

    def test_composition_of_oracles(self):
        track = _track([0, 1, 0, 1, 0])
        minima, maxima, durations = extrema_series(track)
        expected = np.concatenate([
            series_statistics(minima),
            series_statistics(maxima),
            series_statistics(durations),
            series_statistics(track.values),
        ])
        assert np.allclose(track_feature_block(track), expected)


class TestF0FeatureBlock:
    def test_constant_voiced_extras_zero(self):
        block = f0_feature_block(_track([100.0] * 8))
        assert block.size == 44
        assert np.allclose(block[40:], 0.0)

    def test_hand_arithmetic_extras(self):
        block = f0_feature_block(_track([90.0, 100.0, 110.0]))
        skew, frac, above, below = block[40:]
        assert skew == pytest.approx(0.0)
        assert frac == pytest.approx(1 / 3)
        assert above == pytest.approx(10.0)
        assert below == pytest.approx(10.0)

    def test_fully_unvoiced_gives_44_zeros(self):
        block = f0_feature_block(_track([0.0] * 5, valid=[False] * 5))
        assert block.tolist() == [0.0] * 44


class TestFormantFeatureBlock:
    def _tracks(self, rows, valid):
        rows = np.asarray(rows, dtype=float)
        mask = np.asarray(valid, bool)
        return FormantTracks(
            ScalarTrack(rows[:, 0], mask, 0.01, 0.025),
            ScalarTrack(rows[:, 1], mask, 0.01, 0.025),
            ScalarTrack(rows[:, 2], mask, 0.01, 0.025),
        )

    def test_single_valid_frame(self):
        ft = self._tracks([[700, 1200, 2500]], [True])
        block = formant_feature_block(ft)
        assert np.allclose(block[:3], (700, 1200, 2500))   # means
        assert np.allclose(block[3:6], 0.0)                # stds
        assert np.allclose(block[12:], 0.0)                # ranges

    def test_no_valid_frames(self):
        ft = self._tracks([[0, 0, 0]], [False])
        assert formant_feature_block(ft).tolist() == [0.0] * 15

    def test_two_frames_hand_arithmetic(self):
        ft = self._tracks([[600, 1000, 2000], [800, 1400, 3000]], [True, True])
        block = formant_feature_block(ft)
        # F1 column: mean 700, std 100, max 800, min 600, range 200
        assert block[0] == pytest.approx(700.0)
        assert block[3] == pytest.approx(100.0)
        assert block[6] == pytest.approx(800.0)
        assert block[9] == pytest.approx(600.0)
        assert block[12] == pytest.approx(200.0)


class TestDurationFeatureBlock:
    def test_single_audible_run(self):
        seg = AudibilitySegmentation(((0, 10, True),))
        block = duration_feature_block(seg, 0.01)
        assert block.size == 23
        assert np.allclose(block[0:4], (0.1, 0.1, 0.1, 0.0))  # aud mean/max/min/std
        assert np.allclose(block[4:8], 0.0)                    # inaud stats
        assert block[12] == pytest.approx(0.1)                 # longest audible
        assert block[14] == 0.0                                # aud/inaud frames: /0 -> 0
        assert block[20] == pytest.approx(1.0)                 # aud dur / total dur

    def test_three_run_hand_arithmetic(self):
        seg = AudibilitySegmentation(((0, 3, True), (3, 5, False), (5, 10, True)))
        block = duration_feature_block(seg, 0.01)
        assert block[8] == 2.0                       # audible segs
        assert block[9] == 1.0                       # inaudible segs
        assert block[0] == pytest.approx(0.04)       # mean audible duration
        assert block[12] == pytest.approx(0.05)      # longest audible
        assert block[14] == pytest.approx(4.0)       # 8 audible / 2 inaudible frames

    def test_fully_inaudible(self):
        seg = AudibilitySegmentation(((0, 10, False),))
        block = duration_feature_block(seg, 0.01)
        assert np.allclose(block[0:4], 0.0)
        assert block[14] == 0.0 and block[16] == 0.0 and block[20] == 0.0


class TestPerturbationBlock:
    def _f0_and_intensity(self, f0_values, db_values=None, valid=None):
        f0 = _track(f0_values, valid)
        if db_values is None:
            db_values = [-6.0] * len(f0_values)
        inten = _track(db_values)
        return f0, inten

    def test_constant_tracks_all_zero(self):
        f0, inten = self._f0_and_intensity([100.0] * 10)
        assert perturbation_block(f0, inten).tolist() == [0.0] * 6

    def test_alternating_periods_hand_arithmetic(self):
        # periods alternate 10 ms / 11 ms
        f0_values = [100.0, 1000.0 / 11.0] * 5
        f0, inten = self._f0_and_intensity(f0_values)
        block = perturbation_block(f0, inten)
        assert block[0] == pytest.approx(0.001 / 0.0105)        # jitter PF ~ 0.0952
        assert block[1] == pytest.approx(0.00048 / 0.0104)      # max jitter PQ
        assert block[2] == pytest.approx(0.00048 / 0.0106)      # min jitter PQ
        assert np.allclose(block[3:], 0.0)                      # constant amplitude

    def test_short_voiced_run_pq_zero_pf_defined(self):
        f0_values = [100.0, 1000.0 / 11.0, 100.0]
        f0, inten = self._f0_and_intensity(f0_values)
        block = perturbation_block(f0, inten)
        assert block[0] > 0.0
        assert block[1] == 0.0 and block[2] == 0.0

    def test_shimmer_on_linear_amplitude(self):
        db = [-6.0, -12.0] * 4
        f0, inten = self._f0_and_intensity([100.0] * 8, db)
        block = perturbation_block(f0, inten)
        a1, a2 = 10 ** (-6.0 / 20.0), 10 ** (-12.0 / 20.0)
        assert block[3] == pytest.approx((a1 - a2) / ((a1 + a2) / 2.0))
        assert np.allclose(block[:3], 0.0)


class TestUtteranceVector:
    def test_native_length_248(self):
        fv = utterance_features(sine_wave(150.0, dur=0.5))
        assert len(fv.values) == 248
        assert len(fv.registry) == 248

    def test_full_sidecar_reaches_318(self):
        sidecar = {name: 0.5 for name in external_feature_names()}
        fv = utterance_features(sine_wave(150.0, dur=0.5), sidecar)
        assert len(fv.values) == 318

    def test_silence_stays_finite_at_248(self):
        fv = utterance_features(Waveform(np.zeros(8000), 16000))
        assert len(fv.values) == 248
        assert np.all(np.isfinite(fv.values))
        # f0 block all zeros on silence
        assert np.allclose(fv.values[:44], 0.0)

    def test_unknown_sidecar_name_rejected(self):
        with pytest.raises(KeyError, match="no such feature"):
            utterance_features(sine_wave(150.0, dur=0.3), {"no such feature": 1.0})

    def test_non_finite_sidecar_rejected(self):
        with pytest.raises(ValueError, match="msl b1"):
            utterance_features(sine_wave(150.0, dur=0.3), {"msl b1": float("nan")})

    def test_registry_group_sizes(self):
        reg = native_utterance_registry()
        sizes = {}
        for _, group in reg.entries:
            sizes[group] = sizes.get(group, 0) + 1
        assert sizes == {
            "f0": 44,
            "intensity": 40,
            "lowpass_intensity": 40,
            "highpass_intensity": 40,
            "mfcc": 40,
            "formant": 15,
            "duration": 23,
            "perturbation": 6,
        }

    def test_halving_amplitude_shifts_intensity_locations_only(self):
        loud = sine_wave(180.0, amp=0.8)
        soft = Waveform(loud.samples * 0.5, loud.rate)
        v1 = utterance_features(loud).values
        v2 = utterance_features(soft).values
        reg = native_utterance_registry()
        base = reg.index_of("intensity series mean")
        shift = 20.0 * np.log10(0.5)
        # location statistics shift by -6.02 dB
        for offset, name in ((0, "mean"), (1, "max"), (2, "min"), (5, "med"), (6, "q1"), (7, "q3")):
            assert v2[base + offset] - v1[base + offset] == pytest.approx(shift, abs=1e-6), name
        # spread statistics unchanged
        for offset in (3, 8):  # range, iqr
            assert v2[base + offset] == pytest.approx(v1[base + offset], abs=1e-6)
        # f0 block unchanged while both versions stay voiced
        assert np.allclose(v1[:44], v2[:44], atol=1e-9)


class TestSubsets:
    def test_identity_projection(self):
        fv = utterance_features(sine_wave(140.0, dur=0.4))
        subset = FeatureSubset("all", fv.registry.names)
        out = select_subset(fv, subset)
        assert np.array_equal(out.values, fv.values)

    def test_three_name_projection_preserves_order(self):
        fv = utterance_features(sine_wave(140.0, dur=0.4))
        names = ("mean F1", "f0 series mean", "jitter PF")
        out = select_subset(fv, FeatureSubset("trio", names))
        assert out.registry.names == names
        for name in names:
            assert out.values[out.registry.index_of(name)] == fv.values[fv.registry.index_of(name)]

    def test_missing_name_is_reported(self):
        fv = utterance_features(sine_wave(140.0, dur=0.4))
        with pytest.raises(KeyError, match="msl b1"):
            select_subset(fv, FeatureSubset("ext", ("msl b1",)))

    def test_selection_is_idempotent(self):
        fv = utterance_features(sine_wave(140.0, dur=0.4))
        subset = FeatureSubset("trio", ("mean F1", "f0 series mean", "jitter PF"))
        once = select_subset(fv, subset)
        twice = select_subset(once, subset)
        assert np.array_equal(once.values, twice.values)

    def test_builtin_subsets_load_and_resolve_with_sidecar(self):
        sidecar = {name: 0.25 for name in external_feature_names()}
        fv = utterance_features(sine_wave(140.0, dur=0.4), sidecar)
        for name in ("universal-utterance", "universal-segment"):
            subset = load_subset(name)
            out = select_subset(fv, subset)
            assert len(out.values) == len(subset.feature_names) == 65


class TestZScore:
    def _vectors(self, rows):
        reg = FeatureRegistry(tuple((f"dim{i}", "synthetic") for i in range(len(rows[0]))))
        return [FeatureVector(np.asarray(r, dtype=float), reg) for r in rows]

    def test_fit_apply_standardizes(self):
        rng = np.random.RandomState(2)
        vectors = self._vectors(rng.randn(20, 4) * 3.0 + 1.0)
        scaler = zscore_fit(vectors)
        out = np.stack([zscore_apply(scaler, v).values for v in vectors])
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(out.std(axis=0), 1.0, atol=1e-9)

    def test_constant_dimension_maps_to_zero(self):
        vectors = self._vectors([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        scaler = zscore_fit(vectors)
        out = np.stack([zscore_apply(scaler, v).values for v in vectors])
        assert np.allclose(out[:, 1], 0.0)

    def test_two_point_hand_arithmetic(self):
        vectors = self._vectors([[0.0], [2.0]])
        scaler = zscore_fit(vectors)
        assert zscore_apply(scaler, self._vectors([[1.0]])[0]).values[0] == pytest.approx(0.0)
        assert zscore_apply(scaler, self._vectors([[3.0]])[0]).values[0] == pytest.approx(2.0)

    def test_registry_mismatch_rejected(self):
        a = self._vectors([[0.0, 1.0]])
        b = self._vectors([[0.0]])
        with pytest.raises(ValueError):
            zscore_apply(zscore_fit(a), b[0])


def test_read_sidecar_roundtrip(tmp_path):
    p = tmp_path / "ext.csv"
    p.write_text(
        "utterance_id,feature_name,value\n"
        "u1,msl b1,0.5\nu1,loudness mean,1.5\n"
        "u2,msl b1,0.25\nu2,loudness mean,2.5\n"
    )
    table = read_sidecar(p)
    assert table["u1"]["msl b1"] == 0.5
    assert table["u2"]["loudness mean"] == 2.5


def test_read_sidecar_rejects_inconsistent_names(tmp_path):
    p = tmp_path / "ext.csv"
    p.write_text("utterance_id,feature_name,value\nu1,msl b1,0.5\nu2,msl b2,0.5\n")
    with pytest.raises(ValueError, match="inconsistent"):
        read_sidecar(p)


def test_read_sidecar_rejects_unknown_feature(tmp_path):
    p = tmp_path / "ext.csv"
    p.write_text("utterance_id,feature_name,value\nu1,bogus,0.5\n")
    with pytest.raises(ValueError, match="bogus"):
        read_sidecar(p)


def test_segment_registry_is_226_with_duration_first():
    reg = native_segment_registry()
    assert len(reg) == 226
    assert reg.names[0] == "segment duration"
    assert all(group != "duration" for _, group in reg.entries)
