import numpy as np
import pytest

from adselect.dataset import LabeledDataset
from adselect.detectors import (
    ALGORITHMS,
    SPACES,
    DetectorConfig,
    default_configs,
    fit,
    predict,
    sample_random_config,
    score,
)
from adselect.errors import ConfigError, FitError

from conftest import make_dataset


def normals(n, dim=2, seed=0, name="train"):
    rng = np.random.default_rng(seed)
    return LabeledDataset(
        features=rng.standard_normal((n, dim)), labels=np.zeros(n, dtype=np.int8), name=name
    )


def config_for(algorithm, **overrides):
    params = {s.name: s.default for s in SPACES[algorithm]}
    contamination = overrides.pop("contamination", 0.1)
    seed = overrides.pop("seed", 0)
    params.update(overrides)
    return DetectorConfig(algorithm=algorithm, params=params, contamination=contamination, seed=seed)


# ---------------------------------------------------------------------------
# configuration space


def test_default_configs_cover_portfolio():
    configs = default_configs()
    assert len(configs) == len(ALGORITHMS) == 7
    assert [c.algorithm for c in configs] == list(ALGORITHMS)
    ids = [c.config_id for c in configs]
    assert len(set(ids)) == len(ids)


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown algorithm"):
        DetectorConfig(algorithm="svm", params={}, contamination=0.1)
    with pytest.raises(ConfigError, match="outside"):
        config_for("knn", k=500)
    with pytest.raises(ConfigError, match="contamination"):
        config_for("knn", contamination=0.4)
    with pytest.raises(ConfigError, match="missing"):
        DetectorConfig(algorithm="knn", params={"k": 3}, contamination=0.1)


def test_config_json_roundtrip():
    cfg = config_for("kde", bandwidth=0.37, contamination=0.05, seed=9)
    again = DetectorConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.config_id == cfg.config_id


def test_sample_random_config_deterministic():
    a = sample_random_config(np.random.default_rng(77))
    b = sample_random_config(np.random.default_rng(77))
    assert a == b
    assert a.config_id == b.config_id


def test_sample_random_config_integer_uniformity():
    # knn k over [1, 50]: each value ~ Binomial(10000, 1/50), 3 sigma band
    n = 10_000
    rng = np.random.default_rng(123)
    ks = [sample_random_config(rng, algorithm="knn").params["k"] for _ in range(n)]
    counts = np.bincount(ks, minlength=51)[1:]
    sigma = np.sqrt(n * (1 / 50) * (49 / 50))
    assert np.all(np.abs(counts - n / 50) <= 3 * sigma + 1e-9), counts


def test_sample_random_config_log_real_median():
    # gaussian ridge is log-uniform on [1e-6, 1e-1]: median ~ geometric mean 3.16e-4
    n = 10_000
    rng = np.random.default_rng(321)
    vals = np.asarray(
        [sample_random_config(rng, algorithm="gaussian").params["ridge"] for _ in range(n)]
    )
    med = np.median(vals)
    geo_mean = 10 ** (-3.5)
    # 3 sigma of the sample median in log10 space: 1.2533 * (5/sqrt(12)) / sqrt(n)
    tol_dex = 3 * 1.2533 * (5 / np.sqrt(12)) / np.sqrt(n)
    assert abs(np.log10(med) - np.log10(geo_mean)) <= tol_dex


def test_sampled_configs_fit_everywhere():
    data = normals(80, dim=3, seed=5)
    for i in range(20):
        cfg = sample_random_config(np.random.default_rng(1000 + i))
        det = fit(cfg, data)
        assert np.isfinite(det.threshold)


# ---------------------------------------------------------------------------
# fit and threshold calibration


def test_knn_threshold_equals_brute_force_quantile():
    data = normals(10, dim=2, seed=1)
    det = fit(config_for("knn", k=1), data)
    X = data.features
    d = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    loo = d.min(axis=1)  # 1-NN leave-self-out distances
    assert det.threshold == pytest.approx(np.quantile(loo, 0.9, method="linear"), abs=1e-12)


def test_knn_needs_more_rows_than_k():
    one = normals(1, dim=2, seed=2)
    with pytest.raises(FitError, match="knn"):
        fit(config_for("knn", k=1), one)


def test_lof_needs_more_rows_than_neighbors():
    with pytest.raises(FitError, match="lof"):
        fit(config_for("lof", n_neighbors=20), normals(10, seed=3))


def test_gaussian_accepts_origin_of_standard_normal():
    data = normals(300, dim=3, seed=4)
    det = fit(config_for("gaussian"), data)
    assert predict(det, np.zeros(3)) == 0


def test_fit_warns_on_labeled_anomalies():
    ds = make_dataset(50, 5, seed=6)
    with pytest.warns(UserWarning, match="anomalies"):
        fit(config_for("hbos"), ds)


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_calibration_bound_on_training_data(algorithm):
    data = normals(157, dim=3, seed=7)
    for contamination in (0.05, 0.1, 0.2):
        det = fit(config_for(algorithm, contamination=contamination), data)
        flagged = det.predict_many(data.features).mean()
        assert flagged <= contamination + 1.0 / data.n + 1e-12


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_fit_deterministic(algorithm):
    data = normals(90, dim=2, seed=8)
    probes = np.random.default_rng(9).standard_normal((50, 2)) * 2
    a = fit(config_for(algorithm), data)
    b = fit(config_for(algorithm), data)
    assert a.threshold == b.threshold
    assert np.array_equal(a.scores(probes), b.scores(probes))
    assert np.array_equal(a.predict_many(probes), b.predict_many(probes))


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_permutation_invariance(algorithm):
    data = normals(70, dim=2, seed=10)
    perm = np.random.default_rng(11).permutation(data.n)
    shuffled = data.take(perm)
    probes = np.random.default_rng(12).standard_normal((40, 2))
    a = fit(config_for(algorithm, seed=5), data)
    b = fit(config_for(algorithm, seed=5), shuffled)
    assert a.threshold == b.threshold
    assert np.array_equal(a.scores(probes), b.scores(probes))


# ---------------------------------------------------------------------------
# score and predict


def test_knn_score_zero_at_training_point():
    data = normals(20, dim=2, seed=13)
    det = fit(config_for("knn", k=1), data)
    assert score(det, data.features[4]) == 0.0


def test_gaussian_score_minimal_at_mean():
    data = normals(100, dim=3, seed=14)
    det = fit(config_for("gaussian"), data)
    mean = data.features.mean(axis=0)
    probes = np.random.default_rng(15).standard_normal((200, 3)) * 3
    assert score(det, mean) < det.scores(probes).min()


def test_iforest_scores_drop_toward_dense_center():
    rng = np.random.default_rng(16)
    dense = rng.normal(0.0, 0.3, size=(180, 2))
    sparse = rng.normal(6.0, 1.5, size=(20, 2))
    data = LabeledDataset(
        features=np.concatenate([dense, sparse]),
        labels=np.zeros(200, dtype=np.int8),
        name="two-cluster",
    )
    det = fit(config_for("iforest", seed=3), data)
    # walk from far away toward the dense center: scores should shrink
    path = np.asarray([[8.0, 8.0], [4.0, 4.0], [2.0, 2.0], [0.0, 0.0]])
    s = det.scores(path)
    assert s[0] > s[-1]
    assert s[1] > s[-1]


def test_score_dimension_mismatch():
    det = fit(config_for("hbos"), normals(30, dim=3, seed=17))
    with pytest.raises(ValueError, match="3"):
        score(det, np.zeros(2))
    with pytest.raises(ValueError):
        det.scores(np.zeros((4, 5)))


def test_predict_threshold_semantics():
    data = normals(50, dim=2, seed=18)
    det = fit(config_for("kde"), data)
    x = data.features[0]
    assert predict(det, x) == int(score(det, x) > det.threshold)


def test_predict_infinite_threshold_flags_nothing():
    data = normals(40, dim=2, seed=19)
    det = fit(config_for("knn"), data)
    relaxed = type(det)(
        config=det.config, model=det.model, threshold=np.inf, trained_on=det.trained_on, dim=det.dim
    )
    probes = np.random.default_rng(20).standard_normal((100, 2)) * 10
    assert relaxed.predict_many(probes).sum() == 0


def test_raising_threshold_is_monotone():
    data = normals(60, dim=2, seed=21)
    det = fit(config_for("lof"), data)
    probes = np.random.default_rng(22).standard_normal((100, 2)) * 4
    base = det.predict_many(probes)
    raised = type(det)(
        config=det.config,
        model=det.model,
        threshold=det.threshold * 2 + 1,
        trained_on=det.trained_on,
        dim=det.dim,
    )
    after = raised.predict_many(probes)
    assert np.all(after <= base)


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_scores_finite_everywhere(algorithm):
    data = normals(64, dim=4, seed=23)
    det = fit(config_for(algorithm), data)
    probes = np.concatenate(
        [
            np.random.default_rng(24).standard_normal((50, 4)) * 8,
            data.features[:10],
            np.full((1, 4), 50.0),
        ]
    )
    s = det.scores(probes)
    assert np.all(np.isfinite(s))
