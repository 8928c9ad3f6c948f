"""End-to-end orchestration: assimilation, evaluation, and ranking runs.

Every artifact written here is a pure function of (input data, RunConfig,
master seed): worker counts only change scheduling, never bytes.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from . import detectors, ranking
from .detectors import PORTFOLIO_VERSION, DetectorConfig
from .errors import ConfigError, DataError, FitError
from .features import (
    FeatureBudgets,
    LandmarkVector,
    MetaDataset,
    assemble_meta_dataset,
    build_detector_instance,
    build_landmarks,
    mc_cv_fpr,
    meta_columns,
)
from .hypervolume import estimate_hypervolume, fit_enclosing_ball
from .metamodel import MetaModel, load_model
from .util import dump_json, fmt_float, load_json, log_event, pmap, rng_from, seed_from


@dataclass(frozen=True)
class RunConfig:
    """All pipeline knobs, with the protocol's defaults."""

    datasets: tuple[str, ...] = ()
    label_column: str = "label"
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.70, 0.20, 0.10)
    outlier_lo: float = 0.05
    outlier_hi: float = 0.10
    hv_samples: int = 200_000
    mc_cv_test_fraction: float = 0.3
    mc_cv_repetitions: int = 10
    n_random_detectors: int = 50
    landmark_budget_s: float = 300.0
    detector_budget_s: float = 300.0
    retries: int = 10
    cherry_threshold: float = 0.6
    out_dir: str = "out"
    jobs: int = 1

    def __post_init__(self) -> None:
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or any(f <= 0 for f in self.split_fractions):
            raise ConfigError(f"split fractions must be positive and sum to 1: {self.split_fractions}")
        if not (0 < self.outlier_lo <= self.outlier_hi < 1):
            raise ConfigError(f"invalid outlier band ({self.outlier_lo}, {self.outlier_hi})")
        for name in ("hv_samples", "mc_cv_repetitions", "n_random_detectors", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not (0 < self.mc_cv_test_fraction < 1):
            raise ConfigError("mc_cv_test_fraction must be in (0, 1)")
        if self.retries < 0:
            raise ConfigError("retries must be nonnegative")

    @classmethod
    def from_file(cls, path: str, **overrides) -> "RunConfig":
        raw = load_json(path)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        merged = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
        return cls._normalized(merged)

    @classmethod
    def _normalized(cls, values: dict) -> "RunConfig":
        if "datasets" in values:
            values["datasets"] = tuple(values["datasets"])
        if "split_fractions" in values:
            values["split_fractions"] = tuple(values["split_fractions"])
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def budgets(self) -> FeatureBudgets:
        return FeatureBudgets(
            landmark_timeout_s=self.landmark_budget_s,
            detector_timeout_s=self.detector_budget_s,
            retries=self.retries,
        )

    def fingerprint(self) -> str:
        relevant = (
            self.label_column, self.seed, self.split_fractions, self.outlier_lo, self.outlier_hi,
            self.hv_samples, self.mc_cv_test_fraction, self.mc_cv_repetitions,
            self.n_random_detectors, PORTFOLIO_VERSION,
        )
        return hashlib.sha256(repr(relevant).encode()).hexdigest()[:16]


def _data_fingerprint(data: ds.LabeledDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.features).tobytes())
    h.update(np.ascontiguousarray(data.labels).tobytes())
    return h.hexdigest()[:16]


def assimilate_split(data: ds.LabeledDataset, cfg: RunConfig) -> ds.SemiSupervisedSplit:
    """Sub-sample outliers, stratified split, strip train anomalies, scale."""
    sub = ds.subsample_outliers(
        data, cfg.outlier_lo, cfg.outlier_hi, rng_from(cfg.seed, data.name, "subsample")
    )
    split = ds.stratified_split(
        sub, cfg.split_fractions, rng_from(cfg.seed, data.name, "split"), seed=cfg.seed
    )
    return ds.scale_split(ds.strip_anomalies(split))


def _write_landmarks_csv(path: str, lv: LandmarkVector) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(meta_columns()[:-2])
        w.writerow(["" if v is None else fmt_float(v) for v in lv.as_row()])


def _write_detectors_csv(path: str, meta: MetaDataset) -> None:
    hv_col = meta.columns.index("detector_hv")
    fpr_col = meta.columns.index("detector_fpr")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_id", "detector_hv", "detector_fpr", "target_scaled_mcc"])
        for i in range(meta.n):
            w.writerow(
                [
                    meta.config_ids[i],
                    fmt_float(meta.X[i, hv_col]),
                    fmt_float(meta.X[i, fpr_col]),
                    fmt_float(meta.y[i]),
                ]
            )


def assimilate_dataset(data: ds.LabeledDataset, cfg: RunConfig) -> MetaDataset:
    """Produce (or reuse) one base dataset's meta-dataset and its artifacts.

    Output files under <out_dir>/<dataset>/: split_manifest.json,
    landmarks.csv, detectors.csv, meta.csv, manifest.json. A rerun whose
    manifest fingerprints match simply reloads meta.csv.
    """
    out = os.path.join(cfg.out_dir, data.name)
    manifest_path = os.path.join(out, "manifest.json")
    meta_path = os.path.join(out, "meta.csv")
    fingerprint = {"input": _data_fingerprint(data), "config": cfg.fingerprint()}
    if os.path.exists(manifest_path) and os.path.exists(meta_path):
        previous = load_json(manifest_path)
        if previous.get("fingerprint") == fingerprint:
            log_event("assimilate_skipped", dataset=data.name, reason="manifest hit")
            return MetaDataset.from_csv(meta_path)

    os.makedirs(out, exist_ok=True)
    split = assimilate_split(data, cfg)
    ball = fit_enclosing_ball(split.train.features)
    landmarks = build_landmarks(
        split.train,
        ball,
        dataset_id=data.name,
        hv_samples=cfg.hv_samples,
        mc_cv_test_fraction=cfg.mc_cv_test_fraction,
        mc_cv_repetitions=cfg.mc_cv_repetitions,
        seed=cfg.seed,
        budget_s=cfg.landmark_budget_s,
        jobs=cfg.jobs,
    )

    def one(i: int):
        return build_detector_instance(
            split,
            ball,
            landmarks,
            dataset_id=data.name,
            index=i,
            hv_samples=cfg.hv_samples,
            mc_cv_test_fraction=cfg.mc_cv_test_fraction,
            mc_cv_repetitions=cfg.mc_cv_repetitions,
            seed=cfg.seed,
            budgets=cfg.budgets(),
        )

    instances = [r for r in pmap(one, list(range(cfg.n_random_detectors)), cfg.jobs) if r is not None]
    if not instances:
        raise DataError(f"{data.name}: every detector instance was skipped")
    meta = assemble_meta_dataset([landmarks], instances)

    dump_json(ds.split_manifest(split, data.name, cfg.seed), os.path.join(out, "split_manifest.json"))
    _write_landmarks_csv(os.path.join(out, "landmarks.csv"), landmarks)
    _write_detectors_csv(os.path.join(out, "detectors.csv"), meta)
    meta.to_csv(meta_path)
    dump_json(
        {
            "dataset": data.name,
            "fingerprint": fingerprint,
            "seed": cfg.seed,
            "portfolio_version": PORTFOLIO_VERSION,
            "budgets": {
                "landmark_timeout_s": cfg.landmark_budget_s,
                "detector_timeout_s": cfg.detector_budget_s,
                "retries": cfg.retries,
            },
            "hv_samples": cfg.hv_samples,
            "n_random_detectors": cfg.n_random_detectors,
            "files": ["split_manifest.json", "landmarks.csv", "detectors.csv", "meta.csv"],
        },
        manifest_path,
    )
    return meta


def assimilate_all(datasets: list[ds.LabeledDataset], cfg: RunConfig) -> list[MetaDataset]:
    metas = []
    failures = []
    for data in datasets:
        try:
            metas.append(assimilate_dataset(data, cfg))
        except (DataError, FitError) as exc:
            log_event("dataset_failed", dataset=data.name, reason=str(exc))
            failures.append(data.name)
    if failures and not metas:
        raise DataError(f"all datasets failed: {failures}")
    if failures:
        log_event("assimilate_partial", failed=failures)
    os.makedirs(cfg.out_dir, exist_ok=True)
    dump_json(
        {
            "datasets": sorted(m.dataset_ids[0] for m in metas),
            "failed": sorted(failures),
            "portfolio_version": PORTFOLIO_VERSION,
            "seed": cfg.seed,
            "hv_samples": cfg.hv_samples,
            "n_random_detectors": cfg.n_random_detectors,
            "mc_cv": {"test_fraction": cfg.mc_cv_test_fraction, "repetitions": cfg.mc_cv_repetitions},
            "budgets": {
                "landmark_timeout_s": cfg.landmark_budget_s,
                "detector_timeout_s": cfg.detector_budget_s,
                "retries": cfg.retries,
            },
        },
        os.path.join(cfg.out_dir, "assimilation_manifest.json"),
    )
    return metas


# ---------------------------------------------------------------------------
# evaluation


_TABLE_METRIC_LABELS = {"regret1": "regret@1", "regret5": "regret@5", "ndcg": "ndcg", "tau_b": "tau_b"}


def write_evaluation_files(
    reports: list[ranking.RankingReport], aggregates: dict, out_dir: str
) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for report in reports:
        p = os.path.join(out_dir, f"report_{report.dataset_id}.json")
        dump_json(report.to_dict(), p)
        paths[report.dataset_id] = p

    table_path = os.path.join(out_dir, "table.csv")
    header = ["dataset", "mcc_max", "mcc_mean", "mcc_min"]
    for metric in ranking.METRICS:
        for method in ranking.METHODS:
            header.append(f"{_TABLE_METRIC_LABELS[metric]}_{method}")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for report in reports:
            row = [
                report.dataset_id,
                fmt_float(report.mcc_max),
                fmt_float(report.mcc_mean),
                fmt_float(report.mcc_min),
            ]
            for metric in ranking.METRICS:
                for method in ranking.METHODS:
                    value = report.metrics.get(method, {}).get(metric)
                    row.append("" if value is None else fmt_float(value))
            w.writerow(row)
        for agg_name in ("mean", "median"):
            row = [agg_name, "", "", ""]
            for metric in ranking.METRICS:
                for method in ranking.METHODS:
                    value = aggregates[agg_name].get(method, {}).get(metric)
                    row.append("" if value is None else fmt_float(value))
            w.writerow(row)
    paths["table"] = table_path
    dump_json(aggregates, os.path.join(out_dir, "aggregates.json"))
    paths["aggregates"] = os.path.join(out_dir, "aggregates.json")
    return paths


def evaluate_meta_datasets(metas: list[MetaDataset], cfg: RunConfig) -> tuple[list, dict]:
    if len(metas) < 2:
        raise DataError(f"evaluation needs at least 2 meta-datasets, got {len(metas)}")
    ordered = sorted(metas, key=lambda m: m.dataset_ids[0])
    reports, aggregates = ranking.leave_one_out_evaluate(
        ordered,
        master_seed=cfg.seed,
        cherry_threshold=cfg.cherry_threshold,
        jobs=cfg.jobs,
    )
    return reports, aggregates


# ---------------------------------------------------------------------------
# ranking new datasets


@dataclass(frozen=True)
class RecommendationResult:
    """Candidate detectors in recommendation order with their scores."""

    entries: tuple[tuple[DetectorConfig, float], ...]
    method: str
    provenance: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "provenance": self.provenance,
            "candidates": [
                {
                    "rank": i + 1,
                    "config": {
                        "algorithm": c.algorithm,
                        "params": c.params,
                        "contamination": c.contamination,
                        "seed": c.seed,
                        "config_id": c.config_id,
                    },
                    "score": float(s),
                }
                for i, (c, s) in enumerate(self.entries)
            ],
        }


def _candidate_features(
    train: ds.LabeledDataset,
    ball,
    cfg: RunConfig,
    index: int,
) -> tuple[DetectorConfig, float, float] | None:
    for attempt in range(cfg.retries + 1):
        config = detectors.sample_random_config(
            rng_from(cfg.seed, train.name, "candidate", index, attempt)
        )
        try:
            det = detectors.fit(config, train)
            hv = estimate_hypervolume(
                det, ball, cfg.hv_samples, seed=seed_from(cfg.seed, train.name, "candidate-hv", index, attempt)
            )
            fpr = mc_cv_fpr(
                config,
                train,
                cfg.mc_cv_test_fraction,
                cfg.mc_cv_repetitions,
                seed=seed_from(cfg.seed, train.name, "candidate-fpr", index, attempt),
            )
        except FitError as exc:
            log_event("candidate_replaced", index=index, attempt=attempt, reason=str(exc))
            continue
        return config, hv.fraction, fpr
    log_event("candidate_skipped", index=index, retries=cfg.retries)
    return None


def rank_candidates(
    data: ds.LabeledDataset,
    cfg: RunConfig,
    method: str,
    n_candidates: int,
    model_path: str | None = None,
) -> RecommendationResult:
    """Sample candidate configs, compute their features, and rank them.

    `data` is treated as normal-only: any labeled anomalies are ignored with
    a warning. method "linear" needs no model file; "meta" loads one.
    """
    if method not in ("linear", "meta"):
        raise ConfigError(f"unknown ranking method {method!r}; use linear or meta")
    model: MetaModel | None = None
    provenance = "linear"
    if method == "meta":
        if not model_path:
            raise ConfigError("method=meta requires --model")
        model = load_model(model_path)
        with open(model_path, "rb") as fh:
            provenance = hashlib.sha256(fh.read()).hexdigest()

    if data.n_anomalies > 0:
        log_event("labeled_anomalies_ignored", dataset=data.name, count=data.n_anomalies)
    normal_only = ds.LabeledDataset(
        features=data.features,
        labels=np.zeros(data.n, dtype=np.int8),
        name=data.name,
        feature_names=data.feature_names,
    )
    scaler = ds.fit_robust_scaler(normal_only)
    train = ds.apply_scaler(scaler, normal_only)
    ball = fit_enclosing_ball(train.features)

    feats = [
        r
        for r in pmap(
            lambda i: _candidate_features(train, ball, cfg, i), list(range(n_candidates)), cfg.jobs
        )
        if r is not None
    ]
    if not feats:
        raise DataError("no candidate detector could be fitted")

    if method == "linear":
        scored = [(config, ranking.lc_score(hv, fpr)) for config, hv, fpr in feats]
    else:
        landmarks = build_landmarks(
            train,
            ball,
            dataset_id=data.name,
            hv_samples=cfg.hv_samples,
            mc_cv_test_fraction=cfg.mc_cv_test_fraction,
            mc_cv_repetitions=cfg.mc_cv_repetitions,
            seed=cfg.seed,
            budget_s=cfg.landmark_budget_s,
            jobs=cfg.jobs,
        )
        lm_row = [np.nan if v is None else v for v in landmarks.as_row()]
        rows = [lm_row + [hv, fpr] for _, hv, fpr in feats]
        md = MetaDataset(
            columns=meta_columns(),
            X=np.asarray(rows, dtype=np.float64),
            y=np.zeros(len(rows)),
            dataset_ids=[data.name] * len(rows),
            config_ids=[c.config_id for c, _, _ in feats],
        )
        predictions = model.predict(md)
        scored = [(feats[i][0], float(predictions[i])) for i in range(len(feats))]

    scored.sort(key=lambda cs: (-cs[1], cs[0].config_id))
    return RecommendationResult(entries=tuple(scored), method=method, provenance=provenance)
