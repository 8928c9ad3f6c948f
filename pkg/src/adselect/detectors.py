"""Native portfolio of semi-supervised anomaly detectors.

Seven families covering distance (knn), local density (lof), ensemble
(iforest), histogram (hbos), projection (pca), parametric (gaussian), and
kernel density (kde) approaches. Every detector is fitted on normal-only
data; its decision threshold is the (1 - contamination) interpolated
quantile of its training scores, and scores are oriented so that higher
means more anomalous.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .dataset import LabeledDataset
from .errors import ConfigError, FitError
from .util import rng_from

PORTFOLIO_VERSION = "native-7/1"


# ---------------------------------------------------------------------------
# configuration space


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "int" | "real" | "log-real" | "categorical"
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None
    default: object = None

    def contains(self, value: object) -> bool:
        if self.kind == "categorical":
            return value in (self.choices or ())
        if self.kind == "int":
            return isinstance(value, (int, np.integer)) and self.low <= value <= self.high
        if self.kind in ("real", "log-real"):
            return isinstance(value, (int, float, np.floating)) and self.low <= value <= self.high
        raise ValueError(f"unknown param kind {self.kind!r}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.choices[int(rng.integers(0, len(self.choices)))]
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == "real":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "log-real":
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        raise ValueError(f"unknown param kind {self.kind!r}")


CONTAMINATION = ParamSpec("contamination", "real", 0.01, 0.2, default=0.1)

SPACES: dict[str, tuple[ParamSpec, ...]] = {
    "knn": (
        ParamSpec("k", "int", 1, 50, default=5),
        ParamSpec("aggregation", "categorical", choices=("largest", "mean", "median"), default="largest"),
    ),
    "lof": (ParamSpec("n_neighbors", "int", 2, 50, default=20),),
    "iforest": (
        ParamSpec("n_trees", "int", 50, 300, default=100),
        ParamSpec("subsample", "int", 64, 512, default=256),
    ),
    "hbos": (ParamSpec("n_bins", "int", 5, 50, default=10),),
    "pca": (ParamSpec("retained_variance", "real", 0.5, 0.99, default=0.9),),
    "gaussian": (ParamSpec("ridge", "log-real", 1e-6, 1e-1, default=1e-3),),
    "kde": (ParamSpec("bandwidth", "log-real", 1e-2, 1e1, default=1.0),),
}

ALGORITHMS: tuple[str, ...] = tuple(SPACES)


@dataclass(frozen=True)
class DetectorConfig:
    """An algorithm identity plus a full hyperparameter assignment."""

    algorithm: str
    params: Mapping[str, object]
    contamination: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in SPACES:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; portfolio: {list(SPACES)}")
        if not CONTAMINATION.contains(self.contamination) or not (0 < self.contamination < 0.5):
            raise ConfigError(f"contamination {self.contamination} outside (0, 0.5) band")
        object.__setattr__(self, "params", dict(self.params))
        for p in SPACES[self.algorithm]:
            if p.name not in self.params:
                raise ConfigError(f"{self.algorithm}: missing hyperparameter {p.name!r}")
            if not p.contains(self.params[p.name]):
                raise ConfigError(
                    f"{self.algorithm}: {p.name}={self.params[p.name]!r} outside its space"
                )
        extra = set(self.params) - {s.name for s in SPACES[self.algorithm]}
        if extra:
            raise ConfigError(f"{self.algorithm}: unknown hyperparameters {sorted(extra)}")

    @property
    def config_id(self) -> str:
        digest = hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:10]
        return f"{self.algorithm}-{digest}"

    def to_json(self) -> str:
        return json.dumps(
            {
                "algorithm": self.algorithm,
                "params": self.params,
                "contamination": self.contamination,
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DetectorConfig":
        try:
            raw = json.loads(text)
            return cls(
                algorithm=raw["algorithm"],
                params=raw["params"],
                contamination=raw["contamination"],
                seed=raw.get("seed", 0),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"malformed detector config: {exc}") from exc


def default_configs() -> list[DetectorConfig]:
    """One default-parameterized config per portfolio algorithm, stable order."""
    return [
        DetectorConfig(
            algorithm=alg,
            params={s.name: s.default for s in SPACES[alg]},
            contamination=CONTAMINATION.default,
            seed=0,
        )
        for alg in ALGORITHMS
    ]


def sample_random_config(
    rng: np.random.Generator, algorithm: str | None = None
) -> DetectorConfig:
    """Uniformly random algorithm (unless given) and hyperparameter assignment."""
    if algorithm is None:
        algorithm = ALGORITHMS[int(rng.integers(0, len(ALGORITHMS)))]
    params = {s.name: s.sample(rng) for s in SPACES[algorithm]}
    contamination = CONTAMINATION.sample(rng)
    seed = int(rng.integers(0, 2**31 - 1))
    return DetectorConfig(algorithm=algorithm, params=params, contamination=contamination, seed=seed)


# ---------------------------------------------------------------------------
# model implementations

_CHUNK = 16384  # bounds the (chunk x n_train) distance matrices


def _pairwise_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared euclidean distances, (len(A), len(B)); clipped at 0 for fp noise."""
    d2 = (
        np.sum(A * A, axis=1)[:, None]
        - 2.0 * (A @ B.T)
        + np.sum(B * B, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


class _KnnModel:
    def __init__(self, X: np.ndarray, k: int, aggregation: str):
        self.X = X
        self.k = k
        self.aggregation = aggregation

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_KnnModel":
        k = int(params["k"])
        if X.shape[0] <= k:
            raise FitError(f"knn with k={k} needs more than {k} training rows, got {X.shape[0]}")
        return cls(X, k, str(params["aggregation"]))

    def _aggregate(self, dists: np.ndarray) -> np.ndarray:
        # dists: (m, >=k) ascending k smallest in the first k columns
        block = dists[:, : self.k]
        if self.aggregation == "largest":
            return block[:, -1]
        if self.aggregation == "mean":
            return block.mean(axis=1)
        return np.median(block, axis=1)

    def _knn_dists(self, Q: np.ndarray, exclude_self: bool) -> np.ndarray:
        k_eff = self.k + 1 if exclude_self else self.k
        out = np.empty((Q.shape[0], self.k))
        for s in range(0, Q.shape[0], _CHUNK):
            block = Q[s : s + _CHUNK]
            d2 = _pairwise_sq_dists(block, self.X)
            part = np.sort(np.partition(d2, k_eff - 1, axis=1)[:, :k_eff], axis=1)
            if exclude_self:
                part = part[:, 1:]  # drop the zero self-distance
            out[s : s + block.shape[0]] = np.sqrt(part)
        return out

    def train_scores(self) -> np.ndarray:
        return self._aggregate(self._knn_dists(self.X, exclude_self=True))

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        return self._aggregate(self._knn_dists(Q, exclude_self=False))


_LRD_CAP = 1e10  # stands in for infinite local reachability density at duplicates


class _LofModel:
    def __init__(self, X: np.ndarray, k: int, kdist: np.ndarray):
        self.X = X
        self.k = k
        self.kdist = kdist

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_LofModel":
        k = int(params["n_neighbors"])
        n = X.shape[0]
        if n <= k:
            raise FitError(f"lof with n_neighbors={k} needs more than {k} training rows, got {n}")
        d = np.sqrt(_pairwise_sq_dists(X, X))
        np.fill_diagonal(d, np.inf)
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        ndist = np.take_along_axis(d, order, axis=1)
        model = cls(X, k, kdist=ndist[:, -1])
        model._lrd = model._lrd_from(ndist, order)
        model._train_lof = model._lrd[order].mean(axis=1) / model._lrd
        return model

    def _lrd_from(self, ndist: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
        reach = np.maximum(self.kdist[neighbors], ndist)
        mean_reach = reach.mean(axis=1)
        lrd = np.full_like(mean_reach, _LRD_CAP)
        pos = mean_reach > 0
        lrd[pos] = 1.0 / mean_reach[pos]
        return np.minimum(lrd, _LRD_CAP)

    def train_scores(self) -> np.ndarray:
        return self._train_lof

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        out = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], _CHUNK):
            block = Q[s : s + _CHUNK]
            d = np.sqrt(_pairwise_sq_dists(block, self.X))
            order = np.argsort(d, axis=1, kind="stable")[:, : self.k]
            ndist = np.take_along_axis(d, order, axis=1)
            lrd_q = self._lrd_from(ndist, order)
            out[s : s + block.shape[0]] = self._lrd[order].mean(axis=1) / lrd_q
        return out


class _IsolationForest:
    """Isolation forest with level-synchronous vectorized build and scoring."""

    def __init__(self, trees: list[dict], psi: int):
        self.trees = trees
        self.psi = psi

    @staticmethod
    def _avg_path(n: np.ndarray | float):
        """Expected unsuccessful-search path length c(n) in a BST of n points."""
        n = np.asarray(n, dtype=np.float64)
        out = np.zeros_like(n)
        big = n > 2
        out[big] = 2.0 * (np.log(n[big] - 1.0) + np.euler_gamma) - 2.0 * (n[big] - 1.0) / n[big]
        out[n == 2] = 1.0
        return out

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_IsolationForest":
        n, d = X.shape
        if n < 2:
            raise FitError(f"iforest needs at least 2 training rows, got {n}")
        n_trees = int(params["n_trees"])
        psi = min(int(params["subsample"]), n)
        max_depth = max(1, int(np.ceil(np.log2(max(psi, 2)))))
        rng = rng_from(seed, "iforest")
        trees = [cls._build_tree(X, psi, max_depth, rng) for _ in range(n_trees)]
        return cls(trees, psi)

    @staticmethod
    def _build_tree(X: np.ndarray, psi: int, max_depth: int, rng: np.random.Generator) -> dict:
        n, d = X.shape
        sample = rng.choice(n, size=psi, replace=False) if psi < n else np.arange(n)
        Xs = X[sample]

        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        leaf_size: list[int] = []

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_size.append(0)
            return len(feature) - 1

        idx = np.arange(psi)
        # segments: (node, start, end) windows into idx, one level at a time;
        # only segments of size > 1 below the depth cap are enqueued
        segs = [(new_node(), 0, psi)]
        depth = 0
        while segs:
            k = len(segs)
            sizes = np.asarray([e - s for _, s, e in segs])
            bounds = np.concatenate(([0], np.cumsum(sizes)))
            flat = np.concatenate([idx[s:e] for _, s, e in segs])
            feats = rng.integers(0, d, size=k)
            vals = Xs[flat, np.repeat(feats, sizes)]
            lo = np.minimum.reduceat(vals, bounds[:-1])
            hi = np.maximum.reduceat(vals, bounds[:-1])
            # constant drawn feature: redraw uniformly among non-constant ones
            for j in np.flatnonzero(lo == hi):
                b0, b1 = bounds[j], bounds[j + 1]
                sub = Xs[flat[b0:b1]]
                mins = sub.min(axis=0)
                maxs = sub.max(axis=0)
                usable = np.flatnonzero(mins < maxs)
                if len(usable) == 0:
                    continue  # every feature constant: the segment becomes a leaf
                f = int(usable[int(rng.integers(0, len(usable)))])
                feats[j] = f
                vals[b0:b1] = sub[:, f]
                lo[j] = mins[f]
                hi[j] = maxs[f]
            thr = rng.uniform(lo, hi)
            thr = np.where(thr > lo, thr, np.nextafter(lo, hi))
            go_left = vals < np.repeat(thr, sizes)
            left_counts = np.add.reduceat(go_left.astype(np.int64), bounds[:-1])

            next_segs = []
            for j, (node, s, e) in enumerate(segs):
                if lo[j] == hi[j]:
                    leaf_size[node] = int(sizes[j])
                    continue
                feature[node] = int(feats[j])
                threshold[node] = float(thr[j])
                b0, b1 = bounds[j], bounds[j + 1]
                gl = go_left[b0:b1]
                seg_rows = flat[b0:b1]
                idx[s:e] = np.concatenate([seg_rows[gl], seg_rows[~gl]])
                mid = s + int(left_counts[j])
                ln, rn = new_node(), new_node()
                left[node], right[node] = ln, rn
                if mid - s > 1 and depth + 1 < max_depth:
                    next_segs.append((ln, s, mid))
                else:
                    leaf_size[ln] = mid - s
                if e - mid > 1 and depth + 1 < max_depth:
                    next_segs.append((rn, mid, e))
                else:
                    leaf_size[rn] = e - mid
            segs = next_segs
            depth += 1

        return {
            "feature": np.asarray(feature, dtype=np.int32),
            "threshold": np.asarray(threshold, dtype=np.float64),
            "left": np.asarray(left, dtype=np.int32),
            "right": np.asarray(right, dtype=np.int32),
            "leaf_size": np.asarray(leaf_size, dtype=np.int64),
            "depth_cap": max_depth,
        }

    def _path_lengths(self, Q: np.ndarray) -> np.ndarray:
        m = Q.shape[0]
        total = np.zeros(m)
        for t in self.trees:
            node = np.zeros(m, dtype=np.int32)
            depth = np.zeros(m, dtype=np.int32)
            for _ in range(t["depth_cap"] + 1):
                internal = t["left"][node] >= 0
                if not internal.any():
                    break
                rows = np.flatnonzero(internal)
                cur = node[rows]
                go = Q[rows, t["feature"][cur]] < t["threshold"][cur]
                node[rows] = np.where(go, t["left"][cur], t["right"][cur])
                depth[rows] += 1
            total += depth + self._avg_path(t["leaf_size"][node])
        return total / len(self.trees)

    def scores_from_paths(self, Q: np.ndarray) -> np.ndarray:
        c = float(self._avg_path(np.asarray([self.psi], dtype=np.float64))[0])
        c = max(c, 1.0)
        return np.power(2.0, -self._path_lengths(Q) / c)

    def train_scores(self) -> np.ndarray:
        return self.query_scores(self._train_X)

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        out = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], 65536):
            block = Q[s : s + 65536]
            out[s : s + block.shape[0]] = self.scores_from_paths(block)
        return out


class _HbosModel:
    def __init__(self, edges: list[np.ndarray | None], masses: list[np.ndarray], ranges: np.ndarray):
        self.edges = edges
        self.masses = masses
        self.ranges = ranges  # (d, 2) of (min, max)

    _EPS = 1e-12

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_HbosModel":
        n, d = X.shape
        bins = int(params["n_bins"])
        edges: list[np.ndarray | None] = []
        masses: list[np.ndarray] = []
        ranges = np.empty((d, 2))
        for j in range(d):
            col = X[:, j]
            mn, mx = float(col.min()), float(col.max())
            ranges[j] = (mn, mx)
            if mn == mx:
                edges.append(None)
                masses.append(np.asarray([1.0]))
                continue
            counts, e = np.histogram(col, bins=bins, range=(mn, mx))
            edges.append(e)
            masses.append(counts / n)
        return cls(edges, masses, ranges)

    def _feature_mass(self, col: np.ndarray, j: int) -> np.ndarray:
        mn, mx = self.ranges[j]
        if self.edges[j] is None:
            return np.where(col == mn, 1.0, 0.0)
        bins = len(self.masses[j])
        width = (mx - mn) / bins
        pos = np.clip(np.floor((col - mn) / width).astype(np.int64), 0, bins - 1)
        mass = self.masses[j][pos]
        return np.where((col >= mn) & (col <= mx), mass, 0.0)

    def _score_block(self, Q: np.ndarray) -> np.ndarray:
        s = np.zeros(Q.shape[0])
        for j in range(Q.shape[1]):
            s -= np.log(np.maximum(self._feature_mass(Q[:, j], j), self._EPS))
        return s

    def train_scores(self) -> np.ndarray:
        return self.query_scores(self._train_X)

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        return self._score_block(Q)


class _PcaModel:
    def __init__(self, mean: np.ndarray, components: np.ndarray):
        self.mean = mean
        self.components = components  # (m, d) orthonormal rows

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_PcaModel":
        n, d = X.shape
        if n < 2:
            raise FitError(f"pca needs at least 2 training rows, got {n}")
        retained = float(params["retained_variance"])
        mean = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
        var = s**2
        total = var.sum()
        if total <= 0:
            m = 1
        else:
            ratio = np.cumsum(var) / total
            m = int(np.searchsorted(ratio, retained - 1e-12) + 1)
            m = min(m, vt.shape[0])
        return cls(mean, vt[:m])

    def train_scores(self) -> np.ndarray:
        return self.query_scores(self._train_X)

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        centered = Q - self.mean
        proj = centered @ self.components.T
        recon = proj @ self.components
        return np.sum((centered - recon) ** 2, axis=1)


class _GaussianModel:
    def __init__(self, mean: np.ndarray, chol: np.ndarray):
        self.mean = mean
        self.chol = chol

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_GaussianModel":
        ridge = float(params["ridge"])
        mean = X.mean(axis=0)
        centered = X - mean
        cov = (centered.T @ centered) / X.shape[0]
        cov[np.diag_indices_from(cov)] += ridge
        return cls(mean, np.linalg.cholesky(cov))

    def train_scores(self) -> np.ndarray:
        return self.query_scores(self._train_X)

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        # squared Mahalanobis distance via triangular solve
        z = np.linalg.solve(self.chol, (Q - self.mean).T)
        return np.sum(z * z, axis=0)


class _KdeModel:
    def __init__(self, X: np.ndarray, bandwidth: float):
        self.X = X
        self.h = bandwidth

    @classmethod
    def fit(cls, X: np.ndarray, params: Mapping, seed: int) -> "_KdeModel":
        return cls(X, float(params["bandwidth"]))

    def _neg_log_density(self, Q: np.ndarray) -> np.ndarray:
        n, d = self.X.shape
        const = -np.log(n) - d * np.log(self.h) - 0.5 * d * np.log(2.0 * np.pi)
        out = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], _CHUNK):
            block = Q[s : s + _CHUNK]
            e = -_pairwise_sq_dists(block, self.X) / (2.0 * self.h**2)
            m = e.max(axis=1)
            lse = m + np.log(np.sum(np.exp(e - m[:, None]), axis=1))
            out[s : s + block.shape[0]] = -(lse + const)
        return out

    def train_scores(self) -> np.ndarray:
        return self.query_scores(self._train_X)

    def query_scores(self, Q: np.ndarray) -> np.ndarray:
        return self._neg_log_density(Q)


_FITTERS: dict[str, Callable] = {
    "knn": _KnnModel.fit,
    "lof": _LofModel.fit,
    "iforest": _IsolationForest.fit,
    "hbos": _HbosModel.fit,
    "pca": _PcaModel.fit,
    "gaussian": _GaussianModel.fit,
    "kde": _KdeModel.fit,
}


# ---------------------------------------------------------------------------
# fitting, scoring, prediction


@dataclass(frozen=True)
class TrainedDetector:
    """A fitted scorer with a contamination-calibrated decision threshold."""

    config: DetectorConfig
    model: object
    threshold: float
    trained_on: str
    dim: int

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional inputs, got {X.shape[1]}")
        return self.model.query_scores(X)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        """1 where score exceeds the threshold (anomaly), else 0."""
        return (self.scores(X) > self.threshold).astype(np.int8)


def canonical_rows(X: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically (first column primary).

    Fitting on canonically ordered rows makes every detector's state, and
    hence its scores, bitwise independent of training-row order (randomized
    detectors additionally need a fixed structural seed).
    """
    return X[np.lexsort(X.T[::-1])]


def fit(config: DetectorConfig, train: LabeledDataset) -> TrainedDetector:
    """Fit a detector on (nominally all-normal) training data.

    The threshold is the (1 - contamination) linearly interpolated quantile
    of training scores; for knn/lof those are leave-self-out scores.
    """
    if train.n_anomalies > 0:
        warnings.warn(
            f"{train.name}: training data contains {train.n_anomalies} labeled anomalies",
            stacklevel=2,
        )
    X = canonical_rows(train.features)
    model = _FITTERS[config.algorithm](X, config.params, config.seed)
    model._train_X = X
    train_scores = np.asarray(model.train_scores(), dtype=np.float64)
    if not np.all(np.isfinite(train_scores)):
        raise FitError(f"{config.algorithm}: non-finite training scores")
    threshold = float(np.quantile(train_scores, 1.0 - config.contamination, method="linear"))
    return TrainedDetector(
        config=config, model=model, threshold=threshold, trained_on=train.name, dim=train.dim
    )


def score(detector: TrainedDetector, x: np.ndarray) -> float:
    """Anomaly score of a single feature vector (higher = more anomalous)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != detector.dim:
        raise ValueError(f"expected a {detector.dim}-vector, got shape {x.shape}")
    return float(detector.scores(x[None, :])[0])


def predict(detector: TrainedDetector, x: np.ndarray) -> int:
    """1 if x scores above the calibrated threshold (anomaly), else 0."""
    return int(score(detector, x) > detector.threshold)


def describe_portfolio() -> list[dict]:
    """Machine-readable portfolio description for the list-detectors command."""
    out = []
    for alg in ALGORITHMS:
        params = []
        for s in SPACES[alg] + (CONTAMINATION,):
            entry: dict = {"name": s.name, "kind": s.kind, "default": s.default}
            if s.kind == "categorical":
                entry["choices"] = list(s.choices)
            else:
                entry["low"], entry["high"] = s.low, s.high
            params.append(entry)
        out.append({"algorithm": alg, "params": params})
    return out
