"""End-to-end orchestration: preprocessing, pretraining, training, reports.

Every stage is deterministic for a given (config, seed); sub-stages draw
from independent child seeds so changing one stage's schedule never
shifts another's randomness.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import fusion, statvae
from .autodiff import Tensor
from .corpus import (FIRST_WORD_ID, LogDataset, SplitSpec, load_dataset,
                     train_split_hash)
from .fusion import MODES, DiagnosisModel
from .metrics import MetricsReport, compute_metrics, format_metrics, write_metrics
from .optim import Adam
from .wordstats import (StatDictionary, build_stat_dictionary, load_stat_dictionary,
                        message_stats, save_stat_dictionary)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = ""
    train_ratio: float = 0.8
    dev_ratio: float = 0.1
    test_ratio: float = 0.1
    m_fixed: int = 16
    d_model: int = 64
    latent_dim: int = 16
    epsilon: float = 0.2
    learning_rate: float = 1e-3
    batch_size: int = 32
    vae_epochs: int = 30
    classifier_epochs: int = 30
    seed: int = 7
    mode: str = "full"

    def validate(self) -> None:
        if not 0.0 <= self.epsilon <= 0.5:
            raise ConfigError(f"epsilon must lie in [0, 0.5], got {self.epsilon}")
        for name in ("m_fixed", "d_model", "latent_dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("vae_epochs", "classifier_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        total = self.train_ratio + self.dev_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split ratios sum to {total}, expected 1")


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTERS = {"str": str, "int": int, "float": float}


def _cast_field(key: str, raw: str):
    if key not in _CONFIG_TYPES:
        raise ConfigError(
            f"unknown config key {key!r}; valid keys: {', '.join(sorted(_CONFIG_TYPES))}")
    caster = _CASTERS[_CONFIG_TYPES[key]]
    try:
        return caster(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r} expects {_CONFIG_TYPES[key]}, got {raw!r}")


def load_config(path: str | Path) -> RunConfig:
    """Flat `key=value` file; blank lines and #-comments ignored."""
    values = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        values[key.strip()] = _cast_field(key.strip(), raw.strip())
    config = RunConfig(**values)
    config.validate()
    return config


def save_config(config: RunConfig, path: str | Path) -> None:
    lines = [f"{f.name}={getattr(config, f.name)}" for f in fields(RunConfig)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def apply_overrides(config: RunConfig, pairs) -> RunConfig:
    """New config with `key=value` override strings applied."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        updates[key.strip()] = _cast_field(key.strip(), raw.strip())
    merged = replace(config, **updates)
    merged.validate()
    return merged


def _child_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def _config_snapshot(config: RunConfig) -> dict[str, str]:
    return {f.name: str(getattr(config, f.name)) for f in fields(RunConfig)}


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class PreprocessResult:
    dataset: LogDataset
    stats: StatDictionary
    vae: statvae.StatVae
    embeddings: dict[int, np.ndarray]
    dict_hash: str
    run_dir: Path


@dataclass
class TrainResult:
    model: DiagnosisModel
    report: MetricsReport
    dataset: LogDataset
    stats: StatDictionary
    vae: statvae.StatVae
    embeddings: dict[int, np.ndarray]
    run_dir: Path


def _stat_vectors(stats: StatDictionary, records, m_fixed: int) -> np.ndarray:
    return np.stack([message_stats(stats, rec, m_fixed).normalized
                     for rec in records])


def _forward_record(model: DiagnosisModel, dataset: LogDataset, record,
                    embeddings: dict[int, np.ndarray]) -> Tensor:
    return fusion.forward(model, dataset.token_ids(record.tokens),
                          embeddings.get(record.message_id))


def collect_logits(model: DiagnosisModel, dataset: LogDataset, records,
                   embeddings: dict[int, np.ndarray]) -> np.ndarray:
    """(N, n_labels) logits, one row per record, evaluation mode."""
    if not records:
        return np.zeros((0, model.n_labels))
    return np.concatenate([
        _forward_record(model, dataset, rec, embeddings).values
        for rec in records])


def _predict(model, dataset, records, embeddings) -> np.ndarray:
    logits = collect_logits(model, dataset, records, embeddings)
    return logits.argmax(axis=1) if len(records) else np.zeros(0, dtype=np.int64)


def _split_report(model, dataset, records, embeddings, config,
                  wall_clock: float) -> MetricsReport:
    true_ids = np.array([rec.label_id for rec in records], dtype=np.int64)
    preds = _predict(model, dataset, records, embeddings)
    return compute_metrics(true_ids, preds, dataset.label_vocab.labels,
                           config=_config_snapshot(config), wall_clock=wall_clock)


def _load_stage_dataset(config: RunConfig) -> LogDataset:
    if not config.dataset:
        raise ConfigError("config key 'dataset' is required")
    spec = SplitSpec(config.train_ratio, config.dev_ratio,
                     config.test_ratio, config.seed)
    return load_dataset(config.dataset, split_spec=spec)


def build_stats(config: RunConfig, out_dir: str | Path) -> Path:
    """Load the dataset and persist its statistics dictionary only."""
    config.validate()
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stage = "load-dataset"
    try:
        dataset = _load_stage_dataset(config)
        stage = "stat-dictionary"
        stats = build_stat_dictionary(dataset)
        dict_path = run_dir / "stat_dict.tsv"
        save_stat_dictionary(stats, dict_path)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    return dict_path


def preprocess(config: RunConfig, out_dir: str | Path) -> PreprocessResult:
    """Stages ahead of the classifier: dataset, dictionary, VAE, cache."""
    config.validate()
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "run.cfg")
    stage = "load-dataset"
    try:
        dataset = _load_stage_dataset(config)

        stage = "stat-dictionary"
        stats = build_stat_dictionary(dataset)
        dict_path = run_dir / "stat_dict.tsv"
        save_stat_dictionary(stats, dict_path)
        dict_hash = _file_digest(dict_path)

        stage = "vae-pretrain"
        train_records = dataset.split_records("train")
        vae_config = statvae.VaeConfig(
            latent_dim=config.latent_dim, epochs=config.vae_epochs,
            batch_size=config.batch_size, learning_rate=config.learning_rate,
            seed=int(_child_rng(config.seed, 1).integers(2 ** 31)))
        vae, curve = statvae.pretrain(
            _stat_vectors(stats, train_records, config.m_fixed), vae_config)
        statvae.save_stat_vae(vae, run_dir / "vae.ckpt")
        _write_rows(run_dir / "vae_log.tsv", ("step", "loss"),
                    [(i, repr(v)) for i, v in enumerate(curve)])

        stage = "embed-statistics"
        all_vectors = _stat_vectors(stats, dataset.records, config.m_fixed)
        embedded = statvae.embed_statistics(vae, all_vectors)
        ids = np.array([rec.message_id for rec in dataset.records], dtype=np.int64)
        statvae.save_embedding_cache(run_dir / "embeddings.tbl", ids, embedded,
                                     dict_hash)
        embeddings = {int(i): embedded[k] for k, i in enumerate(ids)}
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    return PreprocessResult(dataset, stats, vae, embeddings, dict_hash, run_dir)


def train(config: RunConfig, out_dir: str | Path) -> TrainResult:
    """Run every stage in order and leave all artifacts under out_dir.

    Stages: load dataset, build statistics dictionary, pretrain the VAE,
    cache per-message embeddings, train the classifier with best-dev
    selection, evaluate on test.
    """
    started = time.perf_counter()
    pre = preprocess(config, out_dir)
    dataset, embeddings, run_dir = pre.dataset, pre.embeddings, pre.run_dir
    stage = "train-classifier"
    try:
        model, log_rows = _train_classifier(config, dataset, embeddings)
        _write_rows(run_dir / "train_log.tsv",
                    ("epoch", "mean_loss", "dev_macro_f1", "selected"), log_rows)
        fusion.save_model(model, run_dir / "model.ckpt", extra_meta={
            "dict_hash": pre.dict_hash, "train_hash": train_split_hash(dataset)})

        stage = "evaluate-test"
        report = _split_report(model, dataset, dataset.split_records("test"),
                               embeddings, config,
                               time.perf_counter() - started)
        write_metrics(report, run_dir / "metrics.tsv")
        (run_dir / "metrics.txt").write_text(format_metrics(report) + "\n",
                                             encoding="utf-8")
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    return TrainResult(model, report, dataset, pre.stats, pre.vae,
                       embeddings, run_dir)


def _train_classifier(config: RunConfig, dataset: LogDataset,
                      embeddings: dict[int, np.ndarray]):
    vocab_size = FIRST_WORD_ID + len(dataset.vocab)
    init_rng = _child_rng(config.seed, 2)
    model = fusion.build_model(
        vocab_size, dataset.label_vocab.size, config.d_model, config.latent_dim,
        config.m_fixed, config.epsilon, config.mode, init_rng)
    params = model.parameters()
    optimizer = Adam(params, lr=config.learning_rate)
    shuffle_rng = _child_rng(config.seed, 3)
    train_records = dataset.split_records("train")
    dev_records = dataset.split_records("dev")
    best_values = {name: t.values.copy() for name, t in params.items()}
    best_f1 = -1.0
    log_rows = []
    for epoch in range(config.classifier_epochs):
        order = shuffle_rng.permutation(len(train_records))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_records[i] for i in order[start:start + config.batch_size]]
            rows = [fusion.forward(model, dataset.token_ids(rec.tokens),
                                   embeddings.get(rec.message_id))
                    for rec in batch]
            loss = ad.cross_entropy(
                ad.concat_rows(rows),
                np.array([rec.label_id for rec in batch], dtype=np.int64))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.values))
        if dev_records:
            dev_true = np.array([r.label_id for r in dev_records], dtype=np.int64)
            dev_pred = _predict(model, dataset, dev_records, embeddings)
            dev_f1 = compute_metrics(dev_true, dev_pred,
                                     dataset.label_vocab.labels).macro_f1
            selected = dev_f1 > best_f1
            if selected:
                best_f1 = dev_f1
                best_values = {name: t.values.copy() for name, t in params.items()}
        else:
            # No dev split: keep the final parameters.
            dev_f1, selected = float("nan"), True
            best_values = {name: t.values.copy() for name, t in params.items()}
        log_rows.append((epoch, repr(float(np.mean(losses))) if losses else "nan",
                         repr(dev_f1), int(selected)))
    for name, tensor in params.items():
        tensor.values = best_values[name]
    return model, log_rows


def _write_rows(path: Path, header, rows) -> None:
    lines = ["\t".join(str(v) for v in header)]
    lines.extend("\t".join(str(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def evaluate(run_dir: str | Path, split: str = "test") -> MetricsReport:
    """Metrics for one split from a finished run's artifacts.

    Refuses to run when the statistics dictionary, embedding cache and
    checkpoint digests disagree (stale artifacts).
    """
    run_dir = Path(run_dir)
    stage = "load-artifacts"
    try:
        config = load_config(run_dir / "run.cfg")
        spec = SplitSpec(config.train_ratio, config.dev_ratio,
                         config.test_ratio, config.seed)
        dataset = load_dataset(config.dataset, split_spec=spec)
        load_stat_dictionary(run_dir / "stat_dict.tsv")
        dict_hash = _file_digest(run_dir / "stat_dict.tsv")
        embeddings, cached_hash = statvae.load_embedding_cache(
            run_dir / "embeddings.tbl")
        model, meta = fusion.load_model(run_dir / "model.ckpt")

        stage = "staleness-check"
        if cached_hash != dict_hash:
            raise StageError(stage, "embedding cache was built from a different "
                                    "statistics dictionary; rerun preprocessing")
        if meta.get("dict_hash") != dict_hash:
            raise StageError(stage, "checkpoint was trained against a different "
                                    "statistics dictionary; retrain")
        if meta.get("train_hash") != train_split_hash(dataset):
            raise StageError(stage, "dataset train split changed since training; "
                                    "retrain")

        stage = f"evaluate-{split}"
        started = time.perf_counter()
        records = dataset.split_records(split)
        return _split_report(model, dataset, records, embeddings, config,
                             time.perf_counter() - started)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc


def run_ablation(config: RunConfig, out_dir: str | Path) -> dict[str, MetricsReport]:
    """Full model plus the three ablations, identical settings and seed."""
    out_dir = Path(out_dir)
    reports = {}
    for mode in MODES:
        result = train(replace(config, mode=mode), out_dir / mode)
        reports[mode] = result.report
    _write_rows(out_dir / "ablation.tsv", ("mode", "macro_f1", "micro_f1"),
                [(mode, repr(rep.macro_f1), repr(rep.micro_f1))
                 for mode, rep in reports.items()])
    return reports


SWEEP_AXES = {"hidden_dim": "d_model", "epsilon": "epsilon"}


def run_sweep(config: RunConfig, axis: str, grid,
              out_dir: str | Path) -> list[tuple[float, MetricsReport]]:
    """One full training run per grid value on the chosen axis."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    grid = list(grid)
    if not grid:
        raise ConfigError("sweep grid is empty")
    field_name = SWEEP_AXES[axis]
    caster = _CASTERS[_CONFIG_TYPES[field_name]]
    out_dir = Path(out_dir)
    results = []
    for value in grid:
        value = caster(value)
        point = replace(config, **{field_name: value})
        result = train(point, out_dir / f"{axis}={value}")
        results.append((value, result.report))
    _write_rows(out_dir / "sweep.tsv",
                (axis, "macro_f1", "micro_f1", "wall_clock"),
                [(value, repr(rep.macro_f1), repr(rep.micro_f1),
                  repr(rep.wall_clock)) for value, rep in results])
    return results
