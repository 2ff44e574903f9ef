import pytest

from latentperm import ConfigError, DataError, load_config, parse_config, validate_config
from conftest import write_experiment


def test_full_round_trip(tmp_path):
    path = write_experiment(tmp_path)
    config = load_config(path)
    assert config.seed == 5
    assert config.permutation.permutations == 200
    assert config.permutation.sample_size == 30
    assert config.permutation.statistic == "mrpp"
    assert [s.name for s in config.sources] == ["main"]
    assert config.ensemble_ind == ["0", "1"]
    assert config.ensemble_ood == ["9"]
    summary = validate_config(config)
    assert summary["rows"] == ["0", "1", "9"]
    assert summary["cols"] == ["0", "1"]


def test_defaults_match_reference_values():
    config = parse_config(
        "source.m.validation = v.csv\nsource.m.test = t.csv\n"
    )
    assert config.permutation.permutations == 3000
    assert config.permutation.sample_size == 100
    assert config.permutation.statistic == "mrpp"
    assert config.permutation.dissimilarity == "euclidean"
    assert config.sources[0].k == 5
    assert config.normalize is True


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("source.m.validation = v\nsource.m.test = t\nbogus.key = 1\n")


def test_missing_source_required():
    with pytest.raises(ConfigError, match="source"):
        parse_config("seed = 1\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config("seed = 1\nseed = 2\nsource.m.validation = v\nsource.m.test = t\n")


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("just some words\n")


def test_explicit_metric_sections():
    config = parse_config(
        """
source.m.validation = v.csv
source.m.test = t.csv
source.m.anchors = a.csv
source.m.metric.near5.kind = knn-l2
source.m.metric.near5.columns = kind:feature
source.m.metric.near5.k = 7
source.m.metric.soft.kind = one-minus-max-softmax
"""
    )
    specs = config.sources[0].specs
    assert [s.name for s in specs] == ["near5", "soft"]
    assert specs[0].params["k"] == 7.0


def test_bad_metric_kind():
    with pytest.raises(ConfigError, match="unknown kind"):
        parse_config(
            "source.m.validation = v\nsource.m.test = t\n"
            "source.m.metric.x.kind = mahalanobis\n"
        )


def test_bad_boolean():
    with pytest.raises(ConfigError, match="true/false"):
        parse_config(
            "normalize = maybe\nsource.m.validation = v\nsource.m.test = t\n"
        )


def test_validate_reports_missing_file(tmp_path):
    config = parse_config(
        "source.m.validation = nowhere.csv\nsource.m.test = t.csv\n",
        tmp_path / "c.conf",
    )
    with pytest.raises(DataError, match="no such file"):
        validate_config(config)


def test_validate_rejects_unknown_row_label(tmp_path):
    path = write_experiment(tmp_path)
    path.write_text(path.read_text().replace("matrix.rows = all", "matrix.rows = 0,7"))
    with pytest.raises(DataError, match="row labels"):
        validate_config(load_config(path))


def test_paths_resolve_relative_to_config(tmp_path):
    path = write_experiment(tmp_path / "sub")
    config = load_config(path)
    assert config.sources[0].validation.is_absolute() or (
        config.sources[0].validation.exists()
    )
    validate_config(config)  # does not raise


def test_knn_anchor_role_validation():
    with pytest.raises(ConfigError, match="knn_anchors"):
        parse_config(
            "source.m.validation = v\nsource.m.test = t\nsource.m.knn_anchors = test\n"
        )


def test_config_hash_stable(tmp_path):
    path = write_experiment(tmp_path)
    a = load_config(path).config_hash()
    b = load_config(path).config_hash()
    assert a == b and len(a) == 64
