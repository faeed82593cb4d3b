"""Log anomaly diagnosis with gated fusion of word statistics and semantics.

The package trains a small classifier that injects per-word label-count
statistics (compressed by a variational autoencoder) into a token-level
semantic representation wherever the semantic features are uncertain,
then attends over the fused map to predict a diagnosis label.
"""

from .corpus import (CorpusProfile, LabelVocab, LogDataset, LogRecord,
                     SplitSpec, load_dataset, profile_corpus, tokenize)
from .fusion import DiagnosisModel, build_model, forward
from .metrics import MetricsReport, compute_metrics
from .pipeline import (RunConfig, evaluate, load_config, run_ablation,
                       run_sweep, train)
from .statvae import StatVae, embed_statistics, pretrain
from .synth import PRESETS, SynthSpec, generate_synthetic
from .wordstats import StatDictionary, build_stat_dictionary, message_stats

__version__ = "0.1.0"

__all__ = [
    "CorpusProfile", "DiagnosisModel", "LabelVocab", "LogDataset", "LogRecord",
    "MetricsReport", "PRESETS", "RunConfig", "SplitSpec", "StatDictionary",
    "StatVae", "SynthSpec", "build_model", "build_stat_dictionary",
    "compute_metrics", "embed_statistics", "evaluate", "forward",
    "generate_synthetic", "load_config", "load_dataset", "message_stats",
    "pretrain", "profile_corpus", "run_ablation", "run_sweep", "tokenize",
    "train", "__version__",
]
