"""JSON-lines feature store: extracted representations decoupled from DSP."""
from __future__ import annotations

import json
from pathlib import Path

from .corpus import UtteranceRecord
from .features import FeatureVector, registry_from_names
from .representation import Representation, Segment, SegmentSet

STORE_FORMAT = "emocat-store-v1"


class StoreError(ValueError):
    """Unreadable or stale feature store."""


def write_feature_store(
    path: str | Path,
    records: list[UtteranceRecord],
    reps: list[Representation],
    mode: str,
    config_hash: str = "",
):
    """Write one header line plus one record line per utterance."""
    path = Path(path)
    utt_names = seg_names = None
    for rep in reps:
        if rep.utterance_vector is not None and utt_names is None:
            utt_names = list(rep.utterance_vector.registry.names)
        if rep.segment_set is not None and seg_names is None:
            seg_names = list(rep.segment_set.segments[0].vector.registry.names)
    header = {
        "kind": "header",
        "format": STORE_FORMAT,
        "mode": mode,
        "utterance_feature_names": utt_names,
        "segment_feature_names": seg_names,
        "utterance_registry": registry_from_names(utt_names).fingerprint() if utt_names else None,
        "segment_registry": registry_from_names(seg_names).fingerprint() if seg_names else None,
        "config_hash": config_hash,
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec, rep in zip(records, reps):
            row = {
                "kind": "utterance",
                "id": rec.id,
                "speaker": rec.speaker,
                "gender": rec.gender,
                "age_group": rec.age_group,
                "label": rec.label,
                "utterance_kind": rec.kind,
                "utterance_vector": (
                    rep.utterance_vector.values.tolist() if rep.utterance_vector else None
                ),
                "segments": (
                    [
                        {"t0": s.t0, "t1": s.t1, "vector": s.vector.values.tolist()}
                        for s in rep.segment_set.segments
                    ]
                    if rep.segment_set
                    else None
                ),
            }
            fh.write(json.dumps(row) + "\n")


def read_feature_store(path: str | Path) -> tuple[str, list[tuple[UtteranceRecord, Representation]]]:
    """Read a store back into (mode, [(record, representation), ...]).

    The header's registry fingerprints must match registries rebuilt from the
    stored feature names, otherwise the store is rejected as stale.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("format") != STORE_FORMAT:
        raise StoreError(f"{path}: not an emocat feature store")
    header = lines[0]
    mode = header["mode"]
    utt_registry = seg_registry = None
    try:
        if header["utterance_feature_names"]:
            utt_registry = registry_from_names(header["utterance_feature_names"])
            if utt_registry.fingerprint() != header["utterance_registry"]:
                raise StoreError(f"{path}: stale store (utterance registry mismatch)")
        if header["segment_feature_names"]:
            seg_registry = registry_from_names(header["segment_feature_names"])
            if seg_registry.fingerprint() != header["segment_registry"]:
                raise StoreError(f"{path}: stale store (segment registry mismatch)")
    except KeyError as exc:
        raise StoreError(f"{path}: stale store ({exc.args[0]})") from None
    items = []
    for row in lines[1:]:
        if row.get("kind") != "utterance":
            raise StoreError(f"{path}: unexpected record kind {row.get('kind')!r}")
        rec = UtteranceRecord(
            row["id"],
            Path(""),
            row["speaker"],
            row["gender"],
            row["age_group"],
            row["label"],
            row["utterance_kind"],
        )
        utt = None
        if row["utterance_vector"] is not None:
            utt = FeatureVector(row["utterance_vector"], utt_registry)
        segs = None
        if row["segments"] is not None:
            segs = SegmentSet(
                tuple(
                    Segment(s["t0"], s["t1"], FeatureVector(s["vector"], seg_registry))
                    for s in row["segments"]
                )
            )
        items.append((rec, Representation(mode, utt, segs)))
    return mode, items
