"""Hierarchical dichotomy tree: build, prune, train one SVM per taxon, classify."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .features import Scaler
from .representation import Representation
from .svm import SvmModel, SvmProblem, decision_values, train_smo

GENERALIZED_SPEC = "((fear | (anger | (happy | surprise))) | (neutral | (sad | disgust)))"


class TreeSpecError(ValueError):
    """Malformed tree specification text."""


class TrainingDataError(ValueError):
    """Training data cannot populate every taxon dichotomy."""


@dataclass(frozen=True)
class Hyper:
    """SVM hyperparameters; gamma=None means 1/dimension after scaling."""

    c: float = 10.0
    gamma: float | None = None
    grid: bool = False

    GRID_C = (1.0, 10.0, 100.0)
    GRID_GAMMA_SCALE = (0.1, 1.0, 10.0)


@dataclass(frozen=True)
class TrainedDichotomy:
    scaler: Scaler
    model: SvmModel


@dataclass(frozen=True)
class TaxonNode:
    """A taxon: either a leaf label or a binary split over two label sets."""

    labels: tuple[str, ...]
    left: TaxonNode | None = None
    right: TaxonNode | None = None
    utterance_model: TrainedDichotomy | None = None
    segment_model: TrainedDichotomy | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def left_labels(self) -> tuple[str, ...]:
        return self.left.labels

    @property
    def right_labels(self) -> tuple[str, ...]:
        return self.right.labels


@dataclass(frozen=True)
class TaxonomyTree:
    root: TaxonNode

    @property
    def label_set(self) -> tuple[str, ...]:
        return self.root.labels

    def leaves(self) -> list[TaxonNode]:
        return [n for n in self._walk() if n.is_leaf]

    def internal_nodes(self) -> list[TaxonNode]:
        return [n for n in self._walk() if not n.is_leaf]

    def _walk(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend([node.right, node.left])


def _leaf(label: str) -> TaxonNode:
    return TaxonNode((label,))


def _split(left: TaxonNode, right: TaxonNode) -> TaxonNode:
    overlap = set(left.labels) & set(right.labels)
    if overlap:
        raise TreeSpecError(f"labels on both sides of a split: {sorted(overlap)}")
    return TaxonNode(left.labels + right.labels, left, right)


def parse_tree_spec(text: str) -> TaxonomyTree:
    """Parse ``(left | right)`` nesting with emotion-label atoms at the leaves."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").replace("|", " | ").split()
    pos = 0

    def parse_node() -> TaxonNode:
        nonlocal pos
        if pos >= len(tokens):
            raise TreeSpecError("unexpected end of tree spec")
        tok = tokens[pos]
        if tok == "(":
            pos += 1
            left = parse_node()
            if pos >= len(tokens) or tokens[pos] != "|":
                raise TreeSpecError("expected '|' inside a split")
            pos += 1
            right = parse_node()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise TreeSpecError("expected ')' closing a split")
            pos += 1
            return _split(left, right)
        if tok in ("|", ")"):
            raise TreeSpecError(f"unexpected {tok!r}")
        pos += 1
        return _leaf(tok)

    root = parse_node()
    if pos != len(tokens):
        raise TreeSpecError(f"trailing content after tree spec: {tokens[pos:]}")
    if root.is_leaf:
        raise TreeSpecError("tree must have at least one dichotomy")
    return TaxonomyTree(root)


def format_tree_spec(tree: TaxonomyTree) -> str:
    def fmt(node: TaxonNode) -> str:
        if node.is_leaf:
            return node.labels[0]
        return f"({fmt(node.left)} | {fmt(node.right)})"

    return fmt(tree.root)


def generalized_tree() -> TaxonomyTree:
    """The seven-emotion activation/evaluation tree: active states (fear,
    anger, happy, surprise) against passive ones (neutral, sad, disgust)."""
    return parse_tree_spec(GENERALIZED_SPEC)


def prune(t: TaxonomyTree, keep) -> TaxonomyTree:
    """Drop leaves outside ``keep`` and collapse single-child splits."""
    keep = set(keep)
    unknown = keep - set(t.label_set)
    if unknown:
        raise ValueError(f"labels not in tree: {sorted(unknown)}")
    if len(keep) < 2:
        raise ValueError("must keep at least 2 labels")

    def prune_node(node: TaxonNode) -> TaxonNode | None:
        if node.is_leaf:
            return node if node.labels[0] in keep else None
        left = prune_node(node.left)
        right = prune_node(node.right)
        if left and right:
            return _split(left, right)
        return left or right

    return TaxonomyTree(prune_node(t.root))


def _node_path(path: list[str], node: TaxonNode) -> str:
    where = "/".join(path) or "root"
    return f"{where} [{'+'.join(node.left_labels)} vs {'+'.join(node.right_labels)}]"


def _fit_dichotomy(x: np.ndarray, y: np.ndarray, hyper: Hyper, groups: np.ndarray) -> TrainedDichotomy:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    scaler = Scaler(mean, std)
    xs = scaler.transform_array(x)
    d = xs.shape[1]
    if hyper.grid:
        c, gamma = _grid_search(xs, y, groups, hyper)
    else:
        c = hyper.c
        gamma = hyper.gamma if hyper.gamma is not None else 1.0 / d
    model = train_smo(SvmProblem(xs, y, c, gamma))
    return TrainedDichotomy(scaler, model)


def _grid_search(xs: np.ndarray, y: np.ndarray, groups: np.ndarray, hyper: Hyper):
    """Deterministic 5-fold grid search on the training fold only.

    Folds are assigned by group (utterance) index so segments of one
    utterance never straddle a fold boundary.
    """
    d = xs.shape[1]
    base_gamma = hyper.gamma if hyper.gamma is not None else 1.0 / d
    unique_groups = list(dict.fromkeys(groups.tolist()))
    fold_of_group = {g: i % 5 for i, g in enumerate(unique_groups)}
    folds = np.array([fold_of_group[g] for g in groups])
    best = None
    for c in Hyper.GRID_C:
        for scale in Hyper.GRID_GAMMA_SCALE:
            gamma = base_gamma * scale
            correct = 0
            total = 0
            for f in range(5):
                tr = folds != f
                te = ~tr
                if not te.any() or len(set(y[tr].tolist())) < 2:
                    continue
                model = train_smo(SvmProblem(xs[tr], y[tr], c, gamma))
                pred = np.where(decision_values(model, xs[te]) >= 0.0, 1.0, -1.0)
                correct += int((pred == y[te]).sum())
                total += int(te.sum())
            score = correct / total if total else 0.0
            key = (score, -c, -gamma)
            if best is None or key > best[0]:
                best = (key, c, gamma)
    return best[1], best[2]


def train_tree(
    t: TaxonomyTree, data: list[tuple[Representation, str]], hyper: Hyper = Hyper()
) -> TaxonomyTree:
    """Train one SVM per taxon dichotomy and return the trained tree.

    Utterance-mode nodes learn from utterance vectors, segment-mode nodes
    from per-segment vectors (segments inherit the utterance label), and
    combination-mode nodes learn both.
    """
    if not data:
        raise TrainingDataError("no training data")
    mode = data[0][0].mode
    if any(rep.mode != mode for rep, _ in data):
        raise TrainingDataError("all representations must share one mode")
    known = set(t.label_set)
    for _, label in data:
        if label not in known:
            raise TrainingDataError(f"label {label!r} not in tree label set")

    def train_node(node: TaxonNode, path: list[str]) -> TaxonNode:
        if node.is_leaf:
            return node
        left_set = set(node.left_labels)
        subset = [(rep, label) for rep, label in data if label in node.labels]
        y_rows = np.array([1.0 if label in left_set else -1.0 for _, label in subset])
        if not (np.any(y_rows > 0) and np.any(y_rows < 0)):
            raise TrainingDataError(f"empty side at taxon {_node_path(path, node)}")
        utt_model = seg_model = None
        if mode in ("utterance", "combination"):
            x = np.stack([rep.utterance_vector.values for rep, _ in subset])
            utt_model = _fit_dichotomy(x, y_rows, hyper, np.arange(len(subset)))
        if mode in ("segment", "combination"):
            rows, labels_per_row, owner = [], [], []
            for idx, (rep, _) in enumerate(subset):
                for s in rep.segment_set.segments:
                    rows.append(s.vector.values)
                    labels_per_row.append(y_rows[idx])
                    owner.append(idx)
            seg_model = _fit_dichotomy(
                np.stack(rows), np.array(labels_per_row), hyper, np.array(owner)
            )
        return replace(
            node,
            left=train_node(node.left, path + ["L"]),
            right=train_node(node.right, path + ["R"]),
            utterance_model=utt_model,
            segment_model=seg_model,
        )

    return TaxonomyTree(train_node(t.root, []))


def node_margin(n: TaxonNode, r: Representation) -> float:
    """Signed routing margin for a representation at one trained taxon."""
    if n.is_leaf:
        raise ValueError("leaves have no margin")
    if r.mode == "utterance":
        return _utterance_margin(n, r)
    if r.mode == "segment":
        return _segment_margin(n, r)
    return (_utterance_margin(n, r) + _segment_margin(n, r)) / 2.0


def _utterance_margin(n: TaxonNode, r: Representation) -> float:
    if n.utterance_model is None:
        raise ValueError("taxon has no trained utterance model")
    td = n.utterance_model
    return float(decision_values(td.model, td.scaler.transform_array(r.utterance_vector.values))[0])


def _segment_margin(n: TaxonNode, r: Representation) -> float:
    if n.segment_model is None:
        raise ValueError("taxon has no trained segment model")
    td = n.segment_model
    x = np.stack([s.vector.values for s in r.segment_set.segments])
    return float(decision_values(td.model, td.scaler.transform_array(x)).mean())


def classify(t: TaxonomyTree, r: Representation) -> str:
    """Cascade the dichotomies from the root; non-negative margins go left."""
    node = t.root
    while not node.is_leaf:
        node = node.left if node_margin(node, r) >= 0.0 else node.right
    return node.labels[0]


# --- model file (JSON) ----------------------------------------------------

def _dichotomy_to_dict(td: TrainedDichotomy | None):
    if td is None:
        return None
    return {
        "scaler": {"mean": td.scaler.mean.tolist(), "std": td.scaler.std.tolist()},
        "svm": {
            "support_vectors": td.model.support_vectors.tolist(),
            "coefficients": td.model.coefficients.tolist(),
            "bias": td.model.bias,
            "gamma": td.model.gamma,
        },
    }


def _dichotomy_from_dict(d) -> TrainedDichotomy | None:
    if d is None:
        return None
    scaler = Scaler(np.array(d["scaler"]["mean"]), np.array(d["scaler"]["std"]))
    svm = d["svm"]
    model = SvmModel(
        np.array(svm["support_vectors"]),
        np.array(svm["coefficients"]),
        float(svm["bias"]),
        float(svm["gamma"]),
    )
    return TrainedDichotomy(scaler, model)


def _node_to_dict(node: TaxonNode):
    if node.is_leaf:
        return {"leaf": node.labels[0]}
    return {
        "left_labels": list(node.left_labels),
        "right_labels": list(node.right_labels),
        "utterance_model": _dichotomy_to_dict(node.utterance_model),
        "segment_model": _dichotomy_to_dict(node.segment_model),
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d) -> TaxonNode:
    if "leaf" in d:
        return _leaf(d["leaf"])
    left = _node_from_dict(d["left"])
    right = _node_from_dict(d["right"])
    node = _split(left, right)
    return replace(
        node,
        utterance_model=_dichotomy_from_dict(d.get("utterance_model")),
        segment_model=_dichotomy_from_dict(d.get("segment_model")),
    )


def serialize_tree(tree: TaxonomyTree, meta: dict | None = None) -> str:
    """JSON text for a (trained) tree; floats keep full round-trip precision."""
    doc = {
        "format": "emocat-tree-v1",
        "routing": "non-negative margin goes to the left subtree",
        "label_set": list(tree.label_set),
        "meta": meta or {},
        "root": _node_to_dict(tree.root),
    }
    return json.dumps(doc, indent=1)


def deserialize_tree(text: str) -> tuple[TaxonomyTree, dict]:
    doc = json.loads(text)
    if doc.get("format") != "emocat-tree-v1":
        raise ValueError("not an emocat tree file")
    return TaxonomyTree(_node_from_dict(doc["root"])), doc.get("meta", {})


def resolve_tree(spec: str) -> TaxonomyTree:
    """Turn a CLI tree argument (named builtin, file path, or inline spec)
    into a taxonomy tree."""
    from pathlib import Path

    if spec == "generalized":
        return generalized_tree()
    p = Path(spec)
    if p.is_file():
        return parse_tree_spec(p.read_text(encoding="utf-8").strip())
    return parse_tree_spec(spec)
