"""Batch command-line front end: extract, train, loocv, contrast, report."""
from __future__ import annotations

import argparse
import hashlib
import os
import re
import sys
import tempfile
from pathlib import Path

from . import evaluation as ev
from .corpus import parse_manifest
from .features import load_subset, read_sidecar
from .representation import MODES
from .store import read_feature_store, write_feature_store
from .taxonomy import Hyper, format_tree_spec, resolve_tree, serialize_tree, train_tree


class CliError(ValueError):
    """Configuration or input problem surfaced to the user."""


_DEFAULTS = {
    "mode": "utterance",
    "subset": "full",
    "C": 10.0,
    "gamma": None,
    "grid": False,
    "unit": "speaker",
    "exclude_kind": None,
    "workers": ev.default_workers(),
    "tree": "generalized",
}


def _read_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    values: dict[str, str] = {}
    for line_no, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{p}:{line_no}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if key in ("C", "gamma"):
        return float(value)
    if key == "workers":
        return int(value)
    if key == "grid":
        return value.lower() in ("1", "true", "yes", "on")
    return value


def _merge_config(args: argparse.Namespace, keys: tuple[str, ...]) -> dict:
    file_vals = _read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(keys)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key in keys:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in file_vals:
            resolved[key] = _coerce(key, file_vals[key])
        else:
            resolved[key] = _DEFAULTS.get(key)
    return resolved


# Only keys that change results enter the hash; input paths and worker
# counts do not, so equivalent runs produce byte-identical outputs.
_SEMANTIC_KEYS = ("mode", "tree", "subset", "C", "gamma", "grid", "unit", "exclude_kind")


def _config_hash(cfg: dict) -> str:
    sem = {k: cfg[k] for k in _SEMANTIC_KEYS if k in cfg}
    payload = "\n".join(f"{k}={sem[k]}" for k in sorted(sem))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _atomic_write(path: Path, write_fn):
    """Write through a temp file in the destination directory, then rename.

    The temp name keeps the real suffix so format-sniffing writers behave."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        prefix=path.stem + ".tmp.", suffix=path.suffix, dir=path.parent
    )
    os.close(fd)
    tmp = Path(tmp_name)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _resolve_subsets(subset_arg: str | None, mode: str):
    if subset_arg in (None, "full"):
        return None, None
    if subset_arg == "universal":
        utt = load_subset("universal-utterance") if mode in ("utterance", "combination") else None
        seg = load_subset("universal-segment") if mode in ("segment", "combination") else None
        return utt, seg
    sub = load_subset(subset_arg)
    if mode == "utterance":
        return sub, None
    if mode == "segment":
        return None, sub
    raise CliError(
        "combination mode takes --subset full or universal; a single list "
        "cannot cover both the utterance and the segment registry"
    )


def _load_items(cfg: dict):
    """Items either from a feature store or from manifest + audio."""
    if cfg.get("store"):
        mode, items = read_feature_store(cfg["store"])
        cfg["mode"] = mode
        return items
    if not cfg.get("manifest"):
        raise CliError("need --manifest or --store")
    manifest = parse_manifest(cfg["manifest"])
    sidecar = read_sidecar(cfg["sidecar"]) if cfg.get("sidecar") else None
    reps = ev.extract_representations(manifest, cfg["mode"], sidecar, cfg["workers"])
    return list(zip(manifest.records, reps))


def _apply_subsets_to_items(items, cfg):
    utt_sub, seg_sub = _resolve_subsets(cfg.get("subset"), cfg["mode"])
    if utt_sub is None and seg_sub is None:
        return items
    return [(rec, ev.apply_subsets(rep, utt_sub, seg_sub)) for rec, rep in items]


def _hyper(cfg: dict) -> Hyper:
    return Hyper(c=cfg["C"], gamma=cfg["gamma"], grid=cfg["grid"])


def _protocol(cfg: dict) -> ev.Protocol:
    exclude = tuple(k for k in (cfg.get("exclude_kind") or "").split(",") if k)
    return ev.Protocol(unit=cfg["unit"], exclude_kinds=exclude)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]", "_", name)


def cmd_extract(args) -> int:
    cfg = _merge_config(args, ("manifest", "mode", "sidecar", "out", "workers"))
    if not cfg["manifest"] or not cfg["out"]:
        raise CliError("extract needs --manifest and --out")
    chash = _config_hash(cfg)
    manifest = parse_manifest(cfg["manifest"])
    sidecar = read_sidecar(cfg["sidecar"]) if cfg.get("sidecar") else None
    reps = ev.extract_representations(manifest, cfg["mode"], sidecar, cfg["workers"])
    _atomic_write(
        Path(cfg["out"]),
        lambda p: write_feature_store(p, list(manifest.records), reps, cfg["mode"], chash),
    )
    print(f"wrote {len(reps)} representations to {cfg['out']}")
    return 0


def cmd_train(args) -> int:
    cfg = _merge_config(
        args, ("manifest", "store", "mode", "sidecar", "tree", "subset", "C", "gamma", "grid", "out", "workers")
    )
    if not cfg["out"]:
        raise CliError("train needs --out")
    items = _load_items(cfg)
    base_tree = resolve_tree(cfg["tree"])
    cfg["tree"] = format_tree_spec(base_tree)
    chash = _config_hash(cfg)
    items = _apply_subsets_to_items(items, cfg)
    labels = tuple(dict.fromkeys(rec.label for rec, _ in items))
    tree = ev.task_tree(base_tree, labels)
    trained = train_tree(tree, [(rep, rec.label) for rec, rep in items], _hyper(cfg))
    meta = {"mode": cfg["mode"], "subset": cfg["subset"], "config_hash": chash}
    text = serialize_tree(trained, meta)
    _atomic_write(Path(cfg["out"]), lambda p: p.write_text(text, encoding="utf-8"))
    print(f"trained {len(tree.internal_nodes())} taxon dichotomies -> {cfg['out']}")
    return 0


def cmd_loocv(args) -> int:
    cfg = _merge_config(
        args,
        (
            "manifest", "store", "mode", "sidecar", "tree", "subset",
            "C", "gamma", "grid", "unit", "exclude_kind", "out", "workers",
        ),
    )
    if not cfg["out"]:
        raise CliError("loocv needs --out")
    items = _load_items(cfg)
    tree = resolve_tree(cfg["tree"])
    cfg["tree"] = format_tree_spec(tree)
    chash = _config_hash(cfg)
    items = _apply_subsets_to_items(items, cfg)
    log = ev.loocv_items(items, tree, _hyper(cfg), _protocol(cfg), cfg["workers"])
    out = Path(cfg["out"])
    comments = (f"config_hash={chash}",)
    _atomic_write(out / "predictions.csv", lambda p: ev.write_prediction_log(log, p, comments))
    overall = ev.confusion(log)
    _atomic_write(
        out / "confusion_all.csv",
        lambda p: ev.write_matrix_csv(overall.labels, overall.percents, p, comments),
    )
    for speaker in dict.fromkeys(e.speaker for e in log.entries):
        m = ev.confusion(log, lambda e, s=speaker: e.speaker == s)
        _atomic_write(
            out / f"confusion_speaker_{_safe(speaker)}.csv",
            lambda p, mm=m: ev.write_matrix_csv(mm.labels, mm.percents, p, comments),
        )
    correct = sum(1 for e in log.entries if e.predicted == e.true)
    print(
        f"loocv: {len(log.entries)} utterances, "
        f"accuracy {100.0 * correct / len(log.entries):.2f}% -> {out}"
    )
    return 0


def cmd_contrast(args) -> int:
    cfg = _merge_config(args, ("machine", "human", "out"))
    for key in ("machine", "human", "out"):
        if not cfg[key]:
            raise CliError(f"contrast needs --{key}")
    chash = _config_hash(cfg)
    m_labels, m_cells = ev.read_matrix_csv(cfg["machine"])
    h_labels, h_cells = ev.read_matrix_csv(cfg["human"])
    diff = ev.contrast(
        ev.ConfusionMatrix(m_labels, None, m_cells, ()),
        ev.ConfusionMatrix(h_labels, None, h_cells, ()),
    )
    _atomic_write(
        Path(cfg["out"]),
        lambda p: ev.write_matrix_csv(diff.labels, diff.cells, p, (f"config_hash={chash}",)),
    )
    print(f"wrote contrast matrix -> {cfg['out']}")
    return 0


def _read_human_rates(path: str) -> dict[str, dict[str, float]]:
    import csv as _csv

    table: dict[str, dict[str, float]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in fh if not r.startswith("#")]
    reader = _csv.reader(rows)
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:3]] != ["grouping", "group", "accuracy"]:
        raise CliError(f"{path}: expected header grouping,group,accuracy")
    for row in reader:
        if row:
            table.setdefault(row[0], {})[row[1]] = float(row[2])
    return table


def cmd_report(args) -> int:
    cfg = _merge_config(args, ("log", "out", "human_rates"))
    if not cfg["log"] or not cfg["out"]:
        raise CliError("report needs --log and --out")
    chash = _config_hash(cfg)
    log = ev.read_prediction_log(cfg["log"])
    human = _read_human_rates(cfg["human_rates"]) if cfg.get("human_rates") else {}
    out = Path(cfg["out"])
    comments = (f"config_hash={chash}",)

    from .figures import save_confusion_figure, save_group_rates_figure

    for grouping in ev.GROUPINGS:
        rates = ev.group_rates(log, grouping)
        _atomic_write(
            out / f"rates_{grouping}.csv", lambda p, r=rates: ev.write_group_rates(r, p, comments)
        )
        _atomic_write(
            out / f"rates_{grouping}.png",
            lambda p, r=rates, g=grouping: save_group_rates_figure(r, p, human.get(g)),
        )
    overall = ev.confusion(log)
    _atomic_write(
        out / "confusion_all.csv",
        lambda p: ev.write_matrix_csv(overall.labels, overall.percents, p, comments),
    )
    _atomic_write(out / "confusion_all.png", lambda p: save_confusion_figure(overall, p))
    print(f"report written -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emocat",
        description="Multistage (hierarchical dichotomy) SVM categorization of emotional speech.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--out", help="output file or directory")

    def pipeline_flags(p: argparse.ArgumentParser, store: bool):
        p.add_argument("--manifest", help="corpus manifest CSV")
        if store:
            p.add_argument("--store", help="feature store written by 'extract'")
        p.add_argument("--mode", choices=MODES, help="representation mode")
        p.add_argument("--sidecar", help="external-feature sidecar CSV")
        p.add_argument("--workers", type=int, help="worker processes (default: all cores)")

    def model_flags(p: argparse.ArgumentParser):
        p.add_argument("--tree", help="tree spec: 'generalized', a file, or inline text")
        p.add_argument("--subset", help="feature subset: full, universal, builtin name or file")
        p.add_argument("--C", type=float, dest="C", help="SVM soft-margin trade-off")
        p.add_argument("--gamma", type=float, help="RBF width (default 1/dimension)")
        p.add_argument("--grid", action="store_const", const=True, help="inner 5-fold grid search")

    p = sub.add_parser("extract", help="manifest -> feature store")
    common(p)
    pipeline_flags(p, store=False)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train", help="manifest or store -> trained tree model file")
    common(p)
    pipeline_flags(p, store=True)
    model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("loocv", help="leave-one-out evaluation -> log + confusion CSVs")
    common(p)
    pipeline_flags(p, store=True)
    model_flags(p)
    p.add_argument("--unit", choices=("speaker", "pooled"), help="evaluation unit")
    p.add_argument(
        "--exclude-kind", dest="exclude_kind",
        help="comma-separated utterance kinds to drop (e.g. passage)",
    )
    p.set_defaults(fn=cmd_loocv)

    p = sub.add_parser("contrast", help="machine CSV - human CSV -> contrast CSV")
    common(p)
    p.add_argument("--machine", help="machine confusion CSV")
    p.add_argument("--human", help="human confusion CSV")
    p.set_defaults(fn=cmd_contrast)

    p = sub.add_parser("report", help="prediction log -> group-rate tables and figures")
    common(p)
    p.add_argument("--log", help="prediction log CSV")
    p.add_argument(
        "--human-rates", dest="human_rates",
        help="optional human rates CSV (grouping,group,accuracy) to overlay",
    )
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"emocat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
