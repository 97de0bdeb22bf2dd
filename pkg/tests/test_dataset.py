import numpy as np
import pytest

from mvcon.dataset import (AugmentConfig, LesionRecord, SynthConfig, augment_view,
                           fingerprint, flatten, generate_synthetic, load_manifest,
                           read_features, save_dataset, write_features)
from mvcon.errors import ConfigError, DataIntegrityError


def test_counts():
    recs = generate_synthetic(SynthConfig(lesions_per_class=2, views_per_lesion=(3, 3)))
    assert len(recs) == 4
    assert sum(r.n_views for r in recs) == 12
    assert sorted(r.label for r in recs) == [0, 0, 1, 1]


def test_imbalanced_classes():
    recs = generate_synthetic(SynthConfig(lesions_per_class=(3, 5), views_per_lesion=(1, 2)))
    assert [r.label for r in recs].count(0) == 3
    assert [r.label for r in recs].count(1) == 5


def test_noise_free_views_share_norm():
    cfg = SynthConfig(latent_dim=6, view_dim=6, view_noise_sigma=0.0,
                      views_per_lesion=(2, 2), lesions_per_class=5)
    for r in generate_synthetic(cfg):
        n0, n1 = np.linalg.norm(r.views, axis=1)
        assert n0 == pytest.approx(n1, rel=1e-12)


def test_views_are_distinct():
    r = generate_synthetic(SynthConfig(view_noise_sigma=0.0, lesions_per_class=1))[0]
    assert not np.allclose(r.views[0], r.views[1])


def test_deterministic():
    a = generate_synthetic(SynthConfig(seed=3, lesions_per_class=10))
    b = generate_synthetic(SynthConfig(seed=3, lesions_per_class=10))
    assert a == b
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint(generate_synthetic(SynthConfig(seed=4, lesions_per_class=10)))


def test_view_dim_below_latent():
    with pytest.raises(ConfigError):
        SynthConfig(latent_dim=8, view_dim=4)


def test_linear_separability_oracle():
    # least-squares linear classifier on raw views as the calibration oracle
    recs = generate_synthetic(SynthConfig(class_separation=6, view_noise_sigma=0.5, seed=0))
    X, y, _ = flatten(recs)
    Xb = np.hstack([X, np.ones((len(X), 1))])
    train, test = np.arange(len(X)) % 2 == 0, np.arange(len(X)) % 2 == 1
    w, *_ = np.linalg.lstsq(Xb[train], 2.0 * y[train] - 1.0, rcond=None)
    acc = np.mean((Xb[test] @ w > 0) == (y[test] == 1))
    assert acc > 0.9


def test_augment_identity():
    v = np.array([1.0, -2.0, 3.5])
    out = augment_view(v, AugmentConfig(0.0, 0.0), np.random.default_rng(0))
    np.testing.assert_array_equal(out, v)


def test_augment_full_dropout():
    out = augment_view(np.ones(6), AugmentConfig(0.3, 1.0), np.random.default_rng(0))
    np.testing.assert_array_equal(out, np.zeros(6))


def test_augment_replay():
    v = np.arange(5.0)
    a = augment_view(v, AugmentConfig(), np.random.default_rng(9))
    b = augment_view(v, AugmentConfig(), np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_augment_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(dropout_prob=1.5)


@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_roundtrip_bit_exact(tmp_path, fmt):
    recs = generate_synthetic(SynthConfig(lesions_per_class=4, seed=5))
    save_dataset(recs, tmp_path, fmt=fmt)
    loaded = load_manifest(tmp_path / "manifest.csv")
    assert loaded == recs


def test_binary_layout(tmp_path):
    views = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    write_features(tmp_path / "f.mvc", views)
    raw = (tmp_path / "f.mvc").read_bytes()
    assert raw[:4] == b"MVC1"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert int.from_bytes(raw[8:12], "little") == 3
    assert len(raw) == 12 + 6 * 8
    np.testing.assert_array_equal(read_features(tmp_path / "f.mvc"), views)


def _write_manifest(path, rows):
    path.write_text("lesion_id,label,feature_path\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows))


def test_manifest_groups_rows(tmp_path):
    (tmp_path / "a1.txt").write_text("1 2\n3 4\n")
    (tmp_path / "a2.txt").write_text("5 6\n")
    (tmp_path / "b.txt").write_text("0.5 0.25\n")
    _write_manifest(tmp_path / "m.csv", [("A", 1, "a1.txt"), ("B", 0, "b.txt"), ("A", 1, "a2.txt")])
    recs = load_manifest(tmp_path / "m.csv")
    assert [r.lesion_id for r in recs] == ["A", "B"]
    np.testing.assert_array_equal(recs[0].views, [[1, 2], [3, 4], [5, 6]])


def test_manifest_conflicting_labels(tmp_path):
    (tmp_path / "x.txt").write_text("1 2\n")
    _write_manifest(tmp_path / "m.csv", [("X", 0, "x.txt"), ("X", 1, "x.txt")])
    with pytest.raises(DataIntegrityError):
        load_manifest(tmp_path / "m.csv")


def test_manifest_missing_feature_file(tmp_path):
    _write_manifest(tmp_path / "m.csv", [("X", 0, "nope.txt")])
    with pytest.raises(OSError):
        load_manifest(tmp_path / "m.csv")


def test_record_validation():
    with pytest.raises(DataIntegrityError):
        LesionRecord("x", 2, np.ones((1, 3)))
    with pytest.raises(DataIntegrityError):
        LesionRecord("x", 0, np.ones((0, 3)))
