"""Leave-one-out protocol, confusion and contrast matrices, group reports."""
from __future__ import annotations

import csv
import multiprocessing
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusManifest, UtteranceRecord, load_utterance
from .features import FeatureSubset, select_subset
from .representation import Representation, Segment, SegmentSet, build_representation
from .taxonomy import Hyper, TaxonomyTree, classify, prune, train_tree

GROUPINGS = ("speaker", "gender", "kind", "age_group", "all")


class ProtocolError(ValueError):
    """Evaluation protocol cannot be satisfied by the given corpus."""


@dataclass(frozen=True)
class Protocol:
    """How folds are formed: per-speaker units or one pooled unit, with an
    optional utterance-kind exclusion (e.g. passages)."""

    unit: str = "speaker"
    exclude_kinds: tuple[str, ...] = ()

    def __post_init__(self):
        if self.unit not in ("speaker", "pooled"):
            raise ValueError("protocol unit must be 'speaker' or 'pooled'")


@dataclass(frozen=True)
class PredEntry:
    id: str
    true: str
    predicted: str
    speaker: str
    gender: str
    kind: str
    age_group: str


@dataclass(frozen=True)
class PredictionLog:
    labels: tuple[str, ...]
    entries: tuple[PredEntry, ...]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts plus row-normalized percents; empty rows are flagged."""

    labels: tuple[str, ...]
    counts: np.ndarray
    percents: np.ndarray
    empty_rows: tuple[str, ...]


@dataclass(frozen=True)
class ContrastMatrix:
    """Machine percents minus human percents, cell-wise."""

    labels: tuple[str, ...]
    cells: np.ndarray


@dataclass(frozen=True)
class GroupRates:
    """Per-group accuracy plus per-class diagonal rates."""

    grouping: str
    labels: tuple[str, ...]
    rows: tuple[tuple[str, int, float, tuple[float, ...]], ...]


def task_tree(tree: TaxonomyTree, labels) -> TaxonomyTree:
    """Prune a (possibly wider) tree down to the task's label set."""
    extra = set(labels) - set(tree.label_set)
    if extra:
        raise ProtocolError(f"manifest labels not covered by the tree: {sorted(extra)}")
    if set(labels) == set(tree.label_set):
        return tree
    return prune(tree, labels)


def _apply_subset(rep: Representation, subset: FeatureSubset | None) -> Representation:
    if subset is None:
        return rep
    utt = rep.utterance_vector
    segs = rep.segment_set
    if utt is not None:
        utt = select_subset(utt, subset)
    if segs is not None:
        segs = SegmentSet(
            tuple(Segment(s.t0, s.t1, select_subset(s.vector, subset)) for s in segs.segments)
        )
    return Representation(rep.mode, utt, segs)


def apply_subsets(
    rep: Representation,
    utterance_subset: FeatureSubset | None,
    segment_subset: FeatureSubset | None,
) -> Representation:
    """Project a representation's vectors onto per-part feature subsets."""
    utt = rep.utterance_vector
    segs = rep.segment_set
    if utt is not None and utterance_subset is not None:
        utt = select_subset(utt, utterance_subset)
    if segs is not None and segment_subset is not None:
        segs = SegmentSet(
            tuple(Segment(s.t0, s.t1, select_subset(s.vector, segment_subset)) for s in segs.segments)
        )
    return Representation(rep.mode, utt, segs)


_EXTRACT_STATE: dict = {}


def _extract_one(idx: int):
    rec: UtteranceRecord = _EXTRACT_STATE["records"][idx]
    mode = _EXTRACT_STATE["mode"]
    sidecar = _EXTRACT_STATE["sidecar"]
    per_utt = sidecar.get(rec.id) if sidecar else None
    if sidecar is not None and per_utt is None:
        raise ProtocolError(f"sidecar has no entry for utterance {rec.id!r}")
    return build_representation(load_utterance(rec.audio_path), mode, per_utt)


def extract_representations(
    manifest: CorpusManifest,
    mode: str,
    sidecar: dict[str, dict[str, float]] | None = None,
    workers: int = 1,
) -> list[Representation]:
    """Load audio and build one representation per manifest record, in order."""
    _EXTRACT_STATE.update(records=manifest.records, mode=mode, sidecar=sidecar)
    indices = range(len(manifest.records))
    try:
        if workers > 1 and len(manifest.records) > 1:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(workers) as pool:
                return pool.map(_extract_one, indices)
        return [_extract_one(i) for i in indices]
    finally:
        _EXTRACT_STATE.clear()


def _units(records, protocol: Protocol) -> list[tuple[str, list[int]]]:
    if protocol.unit == "pooled":
        return [("all", list(range(len(records))))]
    units: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        units.setdefault(rec.speaker, []).append(i)
    return list(units.items())


_FOLD_STATE: dict = {}


def _run_fold(args):
    unit_indices, held = args
    items = _FOLD_STATE["items"]
    tree = _FOLD_STATE["tree"]
    hyper = _FOLD_STATE["hyper"]
    train = [items[i] for i in unit_indices if i != held]
    trained = train_tree(tree, [(rep, rec.label) for rec, rep in train], hyper)
    rec, rep = items[held]
    return held, classify(trained, rep)


def loocv_items(
    items: list[tuple[UtteranceRecord, Representation]],
    tree: TaxonomyTree,
    hyper: Hyper = Hyper(),
    protocol: Protocol = Protocol(),
    workers: int = 1,
) -> PredictionLog:
    """Leave-one-out over prepared representations.

    Within each evaluation unit, every utterance is classified by a tree
    trained on the unit minus that utterance.  Entries come back in item
    order, so results are deterministic for any worker count.
    """
    records = [rec for rec, _ in items]
    kept = [
        i for i, rec in enumerate(records) if rec.kind not in protocol.exclude_kinds
    ]
    # label order follows first appearance in the data, as manifests declare it
    labels = tuple(dict.fromkeys(records[i].label for i in kept))
    effective = task_tree(tree, labels)
    units = _units([records[i] for i in kept], protocol)
    # _units indexes into the kept list; map back to item indices
    units = [(name, [kept[j] for j in idx]) for name, idx in units]
    for name, idx in units:
        for label in labels:
            have = sum(1 for i in idx if records[i].label == label)
            if have < 2:
                raise ProtocolError(
                    f"unit {name!r} has {have} utterance(s) labelled {label!r}; "
                    "leave-one-out needs at least 2"
                )
    folds = [(idx, held) for _, idx in units for held in idx]
    _FOLD_STATE.update(items=items, tree=effective, hyper=hyper)
    try:
        if workers > 1 and len(folds) > 1:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(workers) as pool:
                results = pool.map(_run_fold, folds, chunksize=max(1, len(folds) // (workers * 4)))
        else:
            results = [_run_fold(f) for f in folds]
    finally:
        _FOLD_STATE.clear()
    predicted = dict(results)
    entries = tuple(
        PredEntry(
            rec.id, rec.label, predicted[i], rec.speaker, rec.gender, rec.kind, rec.age_group
        )
        for i, rec in enumerate(records)
        if i in predicted
    )
    return PredictionLog(labels, entries)


def loocv(
    manifest: CorpusManifest,
    tree: TaxonomyTree,
    mode: str = "utterance",
    subset: FeatureSubset | None = None,
    hyper: Hyper = Hyper(),
    protocol: Protocol = Protocol(),
    sidecar: dict[str, dict[str, float]] | None = None,
    workers: int = 1,
) -> PredictionLog:
    """Full-pipeline leave-one-out: audio -> features -> per-fold training."""
    reps = extract_representations(manifest, mode, sidecar, workers)
    reps = [_apply_subset(r, subset) for r in reps]
    items = list(zip(manifest.records, reps))
    return loocv_items(items, tree, hyper, protocol, workers)


def confusion(log: PredictionLog, filt=None) -> ConfusionMatrix:
    """Row-normalized confusion percents over (optionally filtered) entries."""
    labels = log.labels
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=int)
    for e in log.entries:
        if filt is None or filt(e):
            counts[index[e.true], index[e.predicted]] += 1
    percents = np.zeros_like(counts, dtype=float)
    empty = []
    for i, lab in enumerate(labels):
        row_total = counts[i].sum()
        if row_total == 0:
            empty.append(lab)
        else:
            percents[i] = counts[i] * 100.0 / row_total
    return ConfusionMatrix(labels, counts, percents, tuple(empty))


def contrast(machine: ConfusionMatrix, human: ConfusionMatrix) -> ContrastMatrix:
    """Machine minus human percents; positive diagonal means machine is ahead."""
    if machine.labels != human.labels:
        raise ValueError("confusion matrices must share one label order")
    return ContrastMatrix(machine.labels, machine.percents - human.percents)


def group_rates(log: PredictionLog, grouping: str) -> GroupRates:
    """Accuracy and per-class diagonal rates per group of one grouping key."""
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    labels = log.labels

    def key(e: PredEntry) -> str:
        return "all" if grouping == "all" else getattr(e, grouping)

    groups: dict[str, list[PredEntry]] = {}
    for e in log.entries:
        groups.setdefault(key(e), []).append(e)
    rows = []
    for name in sorted(groups):
        entries = groups[name]
        correct = sum(1 for e in entries if e.predicted == e.true)
        acc = 100.0 * correct / len(entries)
        diag = []
        for lab in labels:
            of_label = [e for e in entries if e.true == lab]
            hit = sum(1 for e in of_label if e.predicted == lab)
            diag.append(100.0 * hit / len(of_label) if of_label else 0.0)
        rows.append((name, len(entries), acc, tuple(diag)))
    return GroupRates(grouping, labels, tuple(rows))


# --- delimited file formats ------------------------------------------------

def _open_out(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="", encoding="utf-8")


def write_prediction_log(log: PredictionLog, path: str | Path, comments: tuple[str, ...] = ()):
    path = Path(path)
    with _open_out(path) as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("# labels=" + ",".join(log.labels) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["id", "true", "predicted", "speaker", "gender", "kind", "age_group"])
        for e in log.entries:
            writer.writerow([e.id, e.true, e.predicted, e.speaker, e.gender, e.kind, e.age_group])


def read_prediction_log(path: str | Path) -> PredictionLog:
    path = Path(path)
    labels: tuple[str, ...] = ()
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("labels="):
                    labels = tuple(body[len("labels="):].split(","))
                continue
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None:
        raise ValueError(f"{path}: empty prediction log")
    entries = tuple(PredEntry(*row) for row in reader if row)
    if not labels:
        labels = tuple(dict.fromkeys(e.true for e in entries))
    return PredictionLog(labels, entries)


def write_matrix_csv(
    labels: tuple[str, ...],
    cells: np.ndarray,
    path: str | Path,
    comments: tuple[str, ...] = (),
):
    """Matrix CSV: first column is the true label, header the predicted ones;
    cells are written with 2 decimals."""
    path = Path(path)
    with _open_out(path) as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh)
        writer.writerow(["true"] + list(labels))
        for i, lab in enumerate(labels):
            writer.writerow([lab] + [f"{v:.2f}" for v in cells[i]])


def read_matrix_csv(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if not header or header[0] != "true":
        raise ValueError(f"{path}: expected a matrix CSV with a 'true' first column")
    labels = tuple(header[1:])
    cells = []
    row_labels = []
    for row in reader:
        if not row:
            continue
        row_labels.append(row[0])
        cells.append([float(v) for v in row[1:]])
    if tuple(row_labels) != labels:
        raise ValueError(f"{path}: row labels must match column labels in order")
    return labels, np.array(cells)


def write_group_rates(rates: GroupRates, path: str | Path, comments: tuple[str, ...] = ()):
    path = Path(path)
    with _open_out(path) as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh)
        writer.writerow(["group", "n", "accuracy"] + list(rates.labels))
        for name, n, acc, diag in rates.rows:
            writer.writerow([name, n, f"{acc:.2f}"] + [f"{v:.2f}" for v in diag])


def model_fingerprint(tree: TaxonomyTree) -> str:
    """Stable hash of a trained tree's parameters (for leakage checks)."""
    import hashlib

    from .taxonomy import serialize_tree

    return hashlib.sha256(serialize_tree(tree).encode()).hexdigest()


def default_workers() -> int:
    return os.cpu_count() or 1
