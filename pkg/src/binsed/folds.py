"""Recording-level cross-validation folds with held-out validation recordings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        groups = (set(self.train), set(self.validation), set(self.test))
        for i in range(3):
            for j in range(i + 1, 3):
                if groups[i] & groups[j]:
                    raise ValueError(f"overlapping fold groups: "
                                     f"{sorted(groups[i] & groups[j])}")
        if not self.train or not self.test:
            raise ValueError("folds need non-empty train and test groups")


def make_folds(recordings: list[str], fold_count: int = 4,
               validation_fraction: float = 0.2, seed: int = 0) -> list[FoldSplit]:
    """Split recordings into cross-validation folds.

    Every recording appears in exactly one test group.  Within each fold the
    remaining recordings are split into train and validation, the validation
    group holding roughly ``validation_fraction`` of them (at least one
    recording whenever possible).  The assignment is a pure function of the
    recording names, fold count and seed.
    """
    names = sorted(set(recordings))
    if len(names) != len(recordings):
        raise DataError("duplicate recording names")
    if fold_count < 2:
        raise ValueError("fold_count must be at least 2 so every fold "
                         "keeps a non-empty train group")
    if fold_count > len(names):
        raise DataError(f"cannot make {fold_count} folds from "
                        f"{len(names)} recordings")
    if not 0.0 <= validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in [0, 1)")
    order = [names[i] for i in
             np.random.default_rng(seed).permutation(len(names))]
    chunks = [list(c) for c in np.array_split(np.array(order, dtype=object),
                                              fold_count)]
    folds = []
    for fold_index in range(fold_count):
        test = chunks[fold_index]
        pool = [name for name in order if name not in set(test)]
        if len(pool) >= 2:
            val_count = int(round(validation_fraction * len(pool)))
            val_count = min(max(val_count, 1), len(pool) - 1)
            rng = np.random.default_rng([seed, fold_index])
            val_idx = set(rng.choice(len(pool), size=val_count, replace=False))
            validation = [pool[i] for i in sorted(val_idx)]
            train = [pool[i] for i in range(len(pool)) if i not in val_idx]
        else:
            validation, train = [], pool
        folds.append(FoldSplit(fold_index=fold_index,
                               train=tuple(train),
                               validation=tuple(validation),
                               test=tuple(test)))
    return folds
