"""emocat: multistage (hierarchical dichotomy) SVM categorization of emotional speech."""

from .corpus import (
    CorpusManifest,
    ManifestError,
    AudioFormatError,
    PIPELINE_RATE,
    UtteranceRecord,
    Waveform,
    load_utterance,
    parse_manifest,
    read_wav,
    resample,
)
from .features import (
    FeatureRegistry,
    FeatureSubset,
    FeatureVector,
    Scaler,
    load_subset,
    native_segment_registry,
    native_utterance_registry,
    read_sidecar,
    select_subset,
    series_statistics,
    utterance_features,
    zscore_apply,
    zscore_fit,
)
from .representation import (
    Representation,
    Segment,
    SegmentSet,
    build_representation,
    segment_bounds,
    segment_features,
)
from .svm import SvmModel, SvmProblem, decision_value, predict, rbf_kernel, train_smo
from .taxonomy import (
    Hyper,
    TaxonomyTree,
    TaxonNode,
    classify,
    generalized_tree,
    node_margin,
    parse_tree_spec,
    prune,
    train_tree,
)
from .evaluation import (
    ConfusionMatrix,
    ContrastMatrix,
    PredictionLog,
    Protocol,
    confusion,
    contrast,
    group_rates,
    loocv,
    loocv_items,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
