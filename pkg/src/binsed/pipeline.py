"""Dataset discovery and the extract / train / evaluate / ablate pipelines.

Data layout on disk::

    <data_root>/<context>/audio/<recording>.wav
    <data_root>/<context>/annotations/<recording>.txt

Run artefacts land under the output directory::

    <out>/features/<context>/<recording>.feat / .targets (+ optional .csv)
    <out>/features/<context>/manifest.json
    <out>/models/<context>/fold<k>.ckpt / fold<k>.log
    <out>/evaluation/results.json / results.txt
    <out>/ablation/table.txt / table.json
    <out>/config.json
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioClip, decode_wav
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .container import atomic_write_bytes, export_csv, read_features, write_features
from .errors import DataError
from .events import EventList, EventRoll, parse_annotations, rasterize
from .features import combination_layout, compose_features, extract_block_values, parse_combination
from .folds import FoldSplit, make_folds
from .layout import FeatureLayout, FeatureMatrix
from .metrics import MetricReport, SegmentCounts, combine, score
from .training import (SequenceBatch, concat_batches, detect_roll, fit_scaler,
                       init_train_state, run_training, split_sequences)


@dataclass(frozen=True)
class Recording:
    name: str
    wav_path: str
    annotation_path: str


def discover_recordings(data_root: str, context: str) -> list[Recording]:
    """Pair up audio and annotation files for a context."""
    audio_dir = os.path.join(data_root, context, "audio")
    ann_dir = os.path.join(data_root, context, "annotations")
    if not os.path.isdir(audio_dir):
        raise DataError(f"no audio directory for context {context!r}: {audio_dir}")
    recordings = []
    for entry in sorted(os.listdir(audio_dir)):
        if not entry.lower().endswith(".wav"):
            continue
        name = entry[:-4]
        ann_path = os.path.join(ann_dir, f"{name}.txt")
        if not os.path.isfile(ann_path):
            raise DataError(f"recording {name!r} has no annotation file "
                            f"({ann_path})")
        recordings.append(Recording(name=name,
                                    wav_path=os.path.join(audio_dir, entry),
                                    annotation_path=ann_path))
    if not recordings:
        raise DataError(f"context {context!r} has no recordings under {audio_dir}")
    return recordings


@dataclass
class ContextData:
    """Everything extracted for one context and combination."""

    context: str
    combination: str
    class_order: tuple[str, ...]
    recordings: list[str]
    features: dict[str, FeatureMatrix]
    rolls: dict[str, EventRoll] = field(default_factory=dict)
    labels: dict[str, tuple[str, ...]] = field(default_factory=dict)


def context_class_order(event_lists: list[EventList]) -> tuple[str, ...]:
    labels = sorted({e.label for el in event_lists for e in el.events})
    if not labels:
        raise DataError("context has no annotated events")
    return tuple(labels)


def extract_context(config: RunConfig, context: str,
                    tokens: list[str] | None = None,
                    combination: str | None = None) -> ContextData:
    """Decode, extract and rasterise a whole context in memory.

    ``tokens`` widens the extracted block set beyond the single combination
    (used by the ablation grid so audio is only processed once).
    """
    combination = combination or config.features
    wanted = list(tokens) if tokens else \
        [s.token for s in parse_combination(combination)]
    feature_config = config.feature_config()
    recordings = discover_recordings(config.data_root, context)
    event_lists = {r.name: parse_annotations(r.annotation_path, recording=r.name,
                                             context=context)
                   for r in recordings}
    class_order = context_class_order(list(event_lists.values()))
    features: dict[str, FeatureMatrix] = {}
    rolls: dict[str, EventRoll] = {}
    labels: dict[str, tuple[str, ...]] = {}
    for recording in recordings:
        clip = decode_wav(recording.wav_path)
        block_values = extract_block_values(clip, wanted, feature_config)
        layout = FeatureLayout(tuple(
            (token, block_values[token].shape[1]) for token in wanted))
        matrix = FeatureMatrix(
            values=np.hstack([block_values[t] for t in wanted]),
            layout=layout)
        features[recording.name] = matrix
        rolls[recording.name] = rasterize(event_lists[recording.name],
                                          matrix.frame_count, class_order,
                                          feature_config.grid)
        labels[recording.name] = event_lists[recording.name].labels
    return ContextData(context=context, combination=combination,
                       class_order=class_order,
                       recordings=[r.name for r in recordings],
                       features=features, rolls=rolls, labels=labels)


def select_combination(data: ContextData, combination: str,
                       config: RunConfig) -> dict[str, FeatureMatrix]:
    """Slice a combination's blocks out of wider extracted features."""
    feature_config = config.feature_config()
    out = {}
    for name, matrix in data.features.items():
        block_values = {token: matrix.block(token)
                        for token in matrix.layout.block_names}
        out[name] = compose_features(block_values, combination, feature_config)
    return out


# ---------------------------------------------------------------------------
# Feature persistence (extract command / train command hand-off)


def features_dir(config: RunConfig, context: str) -> str:
    return os.path.join(config.out_dir, "features", context)


def write_context_features(config: RunConfig, data: ContextData) -> None:
    directory = features_dir(config, data.context)
    os.makedirs(directory, exist_ok=True)
    target_layout = FeatureLayout(tuple((label, 1)
                                        for label in data.class_order))
    for name in data.recordings:
        matrix = data.features[name]
        write_features(os.path.join(directory, f"{name}.feat"), matrix)
        roll = data.rolls[name]
        write_features(os.path.join(directory, f"{name}.targets"),
                       FeatureMatrix(values=roll.activity.astype(np.float64),
                                     layout=target_layout))
        if config.export_csv:
            export_csv(os.path.join(directory, f"{name}.csv"), matrix)
    manifest = {
        "context": data.context,
        "combination": data.combination,
        "recordings": data.recordings,
        "class_order": list(data.class_order),
        "labels": {name: list(labels) for name, labels in data.labels.items()},
    }
    atomic_write_bytes(os.path.join(directory, "manifest.json"),
                       (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))


def read_context_features(config: RunConfig, context: str) -> ContextData:
    directory = features_dir(config, context)
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise DataError(f"no extracted features for context {context!r} under "
                        f"{directory}; run the extract command first")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    class_order = tuple(manifest["class_order"])
    features = {}
    rolls = {}
    for name in manifest["recordings"]:
        matrix = read_features(os.path.join(directory, f"{name}.feat"))
        targets = read_features(os.path.join(directory, f"{name}.targets"))
        if targets.layout.block_names != class_order:
            raise DataError(f"target container for {name!r} does not match "
                            "the manifest class order")
        features[name] = matrix
        rolls[name] = EventRoll(activity=targets.values.astype(np.uint8),
                                class_order=class_order)
    labels = {name: tuple(values)
              for name, values in manifest.get("labels", {}).items()}
    return ContextData(context=manifest["context"],
                       combination=manifest["combination"],
                       class_order=class_order,
                       recordings=list(manifest["recordings"]),
                       features=features, rolls=rolls, labels=labels)


# ---------------------------------------------------------------------------
# Fold assembly and training


def fold_seed(config_seed: int, context: str, combination: str,
              fold_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config_seed,
                                   zlib.crc32(context.encode("utf-8")),
                                   zlib.crc32(combination.encode("utf-8")),
                                   fold_index])


def check_fold_coverage(data: ContextData, split: FoldSplit) -> None:
    """Every class present in test recordings must occur in the training set."""
    def union(names):
        seen = set()
        for name in names:
            seen.update(data.labels.get(name, ()))
        return seen

    uncovered = union(split.test) - union(split.train)
    if uncovered:
        raise DataError(
            f"fold {split.fold_index}: test classes {sorted(uncovered)} "
            "never occur in its training recordings")


def context_folds(config: RunConfig, data: ContextData) -> list[FoldSplit]:
    folds = make_folds(data.recordings, fold_count=config.fold_count,
                       validation_fraction=config.validation_fraction,
                       seed=config.seed)
    for split in folds:
        check_fold_coverage(data, split)
    return folds


def train_fold(config: RunConfig, data: ContextData, split: FoldSplit,
               features: dict[str, FeatureMatrix] | None = None,
               combination: str | None = None) -> Checkpoint:
    """Scale, batch and train one fold; returns its checkpoint."""
    combination = combination or data.combination
    features = features or data.features
    train_config = config.train_config()
    scaler = fit_scaler([features[name] for name in split.train])
    layout = features[split.train[0]].layout
    batches = []
    for name in split.train:
        scaled = scaler.transform(features[name].values)
        batches.append(split_sequences(scaled,
                                       data.rolls[name].activity.astype(float),
                                       train_config.sequence_length,
                                       layout=layout,
                                       class_order=data.class_order))
    train_batch = concat_batches(batches)
    validation = [(scaler.transform(features[name].values), data.rolls[name])
                  for name in split.validation]
    if not validation:
        raise DataError(f"fold {split.fold_index} has no validation recordings; "
                        "use more recordings or fewer folds")
    state = init_train_state(train_batch.inputs.shape[2],
                             len(data.class_order), train_config,
                             fold_seed(config.seed, data.context, combination,
                                       split.fold_index))
    state = run_training(state, train_batch, validation, train_config)
    return Checkpoint(state=state, scaler=scaler,
                      class_order=data.class_order,
                      combination=combination, layout=layout)


def models_dir(config: RunConfig, context: str) -> str:
    return os.path.join(config.out_dir, "models", context)


def checkpoint_path(config: RunConfig, context: str, fold_index: int) -> str:
    return os.path.join(models_dir(config, context), f"fold{fold_index}.ckpt")


def write_training_log(path: str, checkpoint: Checkpoint) -> None:
    lines = ["epoch,train_loss,validation_er,validation_f"]
    for record in checkpoint.state.history:
        lines.append(f"{record.epoch},{record.train_loss:.6f},"
                     f"{record.validation_er:.6f},{record.validation_f:.4f}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def train_context(config: RunConfig, data: ContextData) -> list[Checkpoint]:
    """Train every fold of a context and persist checkpoints and logs."""
    directory = models_dir(config, data.context)
    os.makedirs(directory, exist_ok=True)
    checkpoints = []
    for split in context_folds(config, data):
        checkpoint = train_fold(config, data, split)
        save_checkpoint(checkpoint_path(config, data.context,
                                        split.fold_index), checkpoint)
        write_training_log(os.path.join(directory,
                                        f"fold{split.fold_index}.log"),
                           checkpoint)
        checkpoints.append(checkpoint)
    return checkpoints


def evaluate_context(config: RunConfig, data: ContextData,
                     checkpoints: dict[int, Checkpoint] | None = None,
                     features: dict[str, FeatureMatrix] | None = None,
                     ) -> tuple[MetricReport, list[SegmentCounts]]:
    """Detect on each fold's test recordings with that fold's model.

    Returns the aggregated report (micro by default, macro behind the config
    flag) plus the per-fold counts.
    """
    features = features or data.features
    folds = context_folds(config, data)
    per_fold = []
    for split in folds:
        if checkpoints is not None:
            checkpoint = checkpoints[split.fold_index]
        else:
            path = checkpoint_path(config, data.context, split.fold_index)
            if not os.path.isfile(path):
                raise DataError(f"missing checkpoint {path}; "
                                "run the train command first")
            checkpoint = load_checkpoint(path)
        sample = features[split.test[0]]
        if checkpoint.layout.blocks != sample.layout.blocks:
            raise DataError(
                f"checkpoint layout {checkpoint.layout.blocks} does not match "
                f"extracted feature layout {sample.layout.blocks}")
        if checkpoint.class_order != data.class_order:
            raise DataError("checkpoint class order does not match the context")
        params = checkpoint.state.best_params
        counts = []
        for name in split.test:
            system = detect_roll(params, checkpoint.scaler, features[name],
                                 data.class_order,
                                 threshold=config.threshold,
                                 sequence_length=config.sequence_length)
            counts.append(score(data.rolls[name], system))
        fold_counts = SegmentCounts()
        for c in counts:
            fold_counts = fold_counts + c
        per_fold.append(fold_counts)
    return combine(per_fold, macro=config.macro_average), per_fold


# ---------------------------------------------------------------------------
# Ablation over feature combinations


def ablation_tokens(combinations: list[str]) -> list[str]:
    tokens = []
    for combination in combinations:
        for spec in parse_combination(combination):
            if spec.token not in tokens:
                tokens.append(spec.token)
    return tokens


def run_ablation(config: RunConfig, combinations: list[str],
                 contexts: list[str]) -> dict[str, dict[str, MetricReport]]:
    """Train and evaluate every combination on every context.

    Audio is decoded and blocks extracted once per context; each combination
    then slices its blocks, trains all folds and is scored on the test folds.
    """
    tokens = ablation_tokens(combinations)
    rows: dict[str, dict[str, MetricReport]] = {c: {} for c in combinations}
    for context in contexts:
        data = extract_context(config, context, tokens=tokens)
        folds = context_folds(config, data)
        for combination in combinations:
            features = select_combination(data, combination, config)
            checkpoints = {}
            for split in folds:
                checkpoints[split.fold_index] = train_fold(
                    config, data, split, features=features,
                    combination=combination)
            report, _ = evaluate_context(config, data,
                                         checkpoints=checkpoints,
                                         features=features)
            rows[combination][context] = report
    return rows
