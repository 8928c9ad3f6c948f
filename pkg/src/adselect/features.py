"""Detector features, landmark vectors, and meta-dataset assembly.

A detector's features are its hypervolume and its Monte-Carlo
cross-validated false-positive rate, both computable from normal-only data.
A dataset's landmark vector stacks those two features for every
default-configured portfolio detector. Meta-instances join landmarks with
one detector's features and its scaled-MCC target measured on the labeled
test partition.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import detectors
from .dataset import LabeledDataset, SemiSupervisedSplit
from .detectors import ALGORITHMS, DetectorConfig, TrainedDetector
from .errors import DataError, FitError
from .hypervolume import EnclosingBall, estimate_hypervolume
from .ranking import confusion_counts, mcc, scaled_mcc
from .util import fmt_float, log_event, pmap, rng_from, seed_from


@dataclass(frozen=True)
class DetectorFeatures:
    hypervolume: float
    fpr: float
    config_id: str

    def __post_init__(self) -> None:
        if not (0.0 <= self.hypervolume <= 1.0 and 0.0 <= self.fpr <= 1.0):
            raise ValueError("detector features must lie in [0, 1]")


@dataclass(frozen=True)
class LandmarkVector:
    """(hypervolume, fpr) per portfolio algorithm; None marks a failed landmark."""

    dataset_id: str
    entries: dict[str, tuple[float, float] | None]

    def __post_init__(self) -> None:
        missing = set(ALGORITHMS) - set(self.entries)
        if missing:
            raise ValueError(f"landmark vector lacks algorithms {sorted(missing)}")
        for alg, entry in self.entries.items():
            if entry is not None and not (0.0 <= entry[0] <= 1.0 and 0.0 <= entry[1] <= 1.0):
                raise ValueError(f"landmark {alg} outside [0, 1]: {entry}")

    def as_row(self) -> list[float | None]:
        row: list[float | None] = []
        for alg in ALGORITHMS:
            entry = self.entries[alg]
            row.extend(entry if entry is not None else (None, None))
        return row


@dataclass(frozen=True)
class MetaInstance:
    landmarks: LandmarkVector
    detector: DetectorFeatures
    target_scaled_mcc: float
    dataset_id: str
    config_id: str

    def __post_init__(self) -> None:
        if not (0.0 <= self.target_scaled_mcc <= 1.0):
            raise ValueError("target scaled MCC must lie in [0, 1]")


def meta_columns() -> list[str]:
    cols: list[str] = []
    for alg in ALGORITHMS:
        cols.append(f"landmark_hv_{alg}")
        cols.append(f"landmark_fpr_{alg}")
    cols.extend(["detector_hv", "detector_fpr"])
    return cols


@dataclass
class MetaDataset:
    """Stacked meta-instances with a fixed column schema; NaN encodes absence."""

    columns: list[str]
    X: np.ndarray  # (m, len(columns)) float64 with NaN for absent values
    y: np.ndarray  # (m,) target scaled MCC
    dataset_ids: list[str]
    config_ids: list[str]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows: np.ndarray) -> "MetaDataset":
        rows = np.asarray(rows)
        return MetaDataset(
            columns=list(self.columns),
            X=self.X[rows].copy(),
            y=self.y[rows].copy(),
            dataset_ids=[self.dataset_ids[i] for i in rows],
            config_ids=[self.config_ids[i] for i in rows],
        )

    def for_dataset(self, dataset_id: str) -> "MetaDataset":
        rows = np.flatnonzero(np.asarray([d == dataset_id for d in self.dataset_ids]))
        return self.subset(rows)

    @staticmethod
    def concat(parts: Sequence["MetaDataset"]) -> "MetaDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        cols = parts[0].columns
        for p in parts[1:]:
            if p.columns != cols:
                raise DataError("meta-datasets have mismatched schemas")
        return MetaDataset(
            columns=list(cols),
            X=np.concatenate([p.X for p in parts], axis=0),
            y=np.concatenate([p.y for p in parts]),
            dataset_ids=[d for p in parts for d in p.dataset_ids],
            config_ids=[c for p in parts for c in p.config_ids],
        )

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset_id", "config_id", *self.columns, "target_scaled_mcc"])
            for i in range(self.n):
                cells = [
                    "" if np.isnan(v) else fmt_float(v) for v in self.X[i]
                ]
                w.writerow([self.dataset_ids[i], self.config_ids[i], *cells, fmt_float(self.y[i])])

    @classmethod
    def from_csv(cls, path: str) -> "MetaDataset":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["dataset_id", "config_id"] or header[-1] != "target_scaled_mcc":
                raise DataError(f"{path}: not a meta-dataset CSV")
            columns = header[2:-1]
            X_rows, y_vals, ds_ids, cfg_ids = [], [], [], []
            for row in reader:
                if not row:
                    continue
                ds_ids.append(row[0])
                cfg_ids.append(row[1])
                X_rows.append([np.nan if c == "" else float(c) for c in row[2:-1]])
                y_vals.append(float(row[-1]))
        if not X_rows:
            raise DataError(f"{path}: no instances")
        return cls(
            columns=columns,
            X=np.asarray(X_rows, dtype=np.float64),
            y=np.asarray(y_vals, dtype=np.float64),
            dataset_ids=ds_ids,
            config_ids=cfg_ids,
        )


# ---------------------------------------------------------------------------
# feature computation


def mc_cv_fpr_rates(
    config: DetectorConfig,
    train: LabeledDataset,
    test_fraction: float = 0.3,
    repetitions: int = 10,
    seed: int = 0,
    fitter: Callable[[DetectorConfig, LabeledDataset], TrainedDetector] = detectors.fit,
) -> list[float]:
    """Per-repetition held-out false-positive rates on all-normal train data.

    Each repetition redraws a uniform split; fit failures propagate so the
    caller can mark the feature absent or replace the config.
    """
    n = train.n
    held = int(np.floor(n * test_fraction))
    if held < 1 or n - held < 1:
        raise FitError(f"MC-CV needs at least one row on each side, n={n}, test_fraction={test_fraction}")
    rates = []
    for rep in range(repetitions):
        rng = rng_from(seed, "mccv", rep)
        perm = rng.permutation(n)
        held_idx, fit_idx = perm[:held], perm[held:]
        det = fitter(config, train.take(fit_idx, name=f"{train.name}/mccv{rep}"))
        flagged = int(det.predict_many(train.features[held_idx]).sum())
        rates.append(flagged / held)
    return rates


def mc_cv_fpr(
    config: DetectorConfig,
    train: LabeledDataset,
    test_fraction: float = 0.3,
    repetitions: int = 10,
    seed: int = 0,
    fitter: Callable[[DetectorConfig, LabeledDataset], TrainedDetector] = detectors.fit,
) -> float:
    """Mean held-out FPR over the Monte-Carlo cross-validation repetitions."""
    rates = mc_cv_fpr_rates(config, train, test_fraction, repetitions, seed, fitter)
    return float(np.mean(rates))


@dataclass(frozen=True)
class FeatureBudgets:
    """Wall-clock limits; overruns mark landmarks absent / replace detectors."""

    landmark_timeout_s: float = 300.0
    detector_timeout_s: float = 300.0
    retries: int = 10


def _detector_features(
    config: DetectorConfig,
    train: LabeledDataset,
    ball: EnclosingBall,
    hv_samples: int,
    mc_cv_test_fraction: float,
    mc_cv_repetitions: int,
    seed: int,
    fitter: Callable,
) -> tuple[TrainedDetector, DetectorFeatures]:
    det = fitter(config, train)
    hv = estimate_hypervolume(det, ball, hv_samples, seed=seed)
    fpr = mc_cv_fpr(config, train, mc_cv_test_fraction, mc_cv_repetitions, seed=seed, fitter=fitter)
    return det, DetectorFeatures(hypervolume=hv.fraction, fpr=fpr, config_id=config.config_id)


def build_landmarks(
    train: LabeledDataset,
    ball: EnclosingBall,
    dataset_id: str,
    hv_samples: int = 200_000,
    mc_cv_test_fraction: float = 0.3,
    mc_cv_repetitions: int = 10,
    seed: int = 0,
    budget_s: float = 300.0,
    fitter: Callable = detectors.fit,
    jobs: int = 1,
) -> LandmarkVector:
    """Hypervolume and FPR of every default-configured portfolio detector.

    A detector that fails to fit or overruns its budget contributes an
    absent (None) entry; the others are unaffected.
    """

    def one(config: DetectorConfig) -> tuple[str, tuple[float, float] | None]:
        alg = config.algorithm
        t0 = time.monotonic()
        try:
            _, feats = _detector_features(
                config, train, ball, hv_samples, mc_cv_test_fraction, mc_cv_repetitions,
                seed=seed_from(seed, dataset_id, "landmark", alg),
                fitter=fitter,
            )
        except FitError as exc:
            log_event("landmark_failed", dataset=dataset_id, algorithm=alg, reason=str(exc))
            return alg, None
        if time.monotonic() - t0 > budget_s:
            log_event("landmark_timeout", dataset=dataset_id, algorithm=alg, budget_s=budget_s)
            return alg, None
        return alg, (feats.hypervolume, feats.fpr)

    results = pmap(one, detectors.default_configs(), jobs)
    return LandmarkVector(dataset_id=dataset_id, entries=dict(results))


def build_detector_instance(
    split: SemiSupervisedSplit,
    ball: EnclosingBall,
    landmarks: LandmarkVector,
    dataset_id: str,
    index: int,
    hv_samples: int = 200_000,
    mc_cv_test_fraction: float = 0.3,
    mc_cv_repetitions: int = 10,
    seed: int = 0,
    budgets: FeatureBudgets = FeatureBudgets(),
    fitter: Callable = detectors.fit,
) -> MetaInstance | None:
    """One meta-instance from one randomly configured detector.

    On fit failure or budget overrun a freshly configured detector replaces
    the old one, up to `budgets.retries` times; exhaustion skips the
    instance with a logged reason.
    """
    for attempt in range(budgets.retries + 1):
        config = detectors.sample_random_config(
            rng_from(seed, dataset_id, "detector", index, attempt)
        )
        t0 = time.monotonic()
        try:
            det, feats = _detector_features(
                config, split.train, ball, hv_samples, mc_cv_test_fraction, mc_cv_repetitions,
                seed=seed_from(seed, dataset_id, "detector-features", index, attempt),
                fitter=fitter,
            )
        except FitError as exc:
            log_event(
                "detector_replaced", dataset=dataset_id, index=index, attempt=attempt,
                config=config.config_id, reason=str(exc),
            )
            continue
        if time.monotonic() - t0 > budgets.detector_timeout_s:
            log_event(
                "detector_timeout", dataset=dataset_id, index=index, attempt=attempt,
                config=config.config_id, budget_s=budgets.detector_timeout_s,
            )
            continue
        predicted = det.predict_many(split.test.features)
        target = scaled_mcc(mcc(confusion_counts(predicted, split.test.labels)))
        return MetaInstance(
            landmarks=landmarks,
            detector=feats,
            target_scaled_mcc=target,
            dataset_id=dataset_id,
            config_id=config.config_id,
        )
    log_event("instance_skipped", dataset=dataset_id, index=index, retries=budgets.retries)
    return None


def assemble_meta_dataset(
    landmark_vectors: Sequence[LandmarkVector],
    instances: Sequence[MetaInstance],
) -> MetaDataset:
    """Join every instance with its dataset's landmark block, stable column order."""
    by_dataset = {lv.dataset_id: lv for lv in landmark_vectors}
    cols = meta_columns()
    rows, targets, ds_ids, cfg_ids = [], [], [], []
    for inst in instances:
        if inst.dataset_id not in by_dataset:
            raise DataError(f"instance {inst.config_id} has no landmark vector for {inst.dataset_id}")
        lm_row = by_dataset[inst.dataset_id].as_row()
        row = [np.nan if v is None else v for v in lm_row]
        row.extend([inst.detector.hypervolume, inst.detector.fpr])
        rows.append(row)
        targets.append(inst.target_scaled_mcc)
        ds_ids.append(inst.dataset_id)
        cfg_ids.append(inst.config_id)
    if not rows:
        raise DataError("no instances to assemble")
    return MetaDataset(
        columns=cols,
        X=np.asarray(rows, dtype=np.float64),
        y=np.asarray(targets, dtype=np.float64),
        dataset_ids=ds_ids,
        config_ids=cfg_ids,
    )
