from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dollda.data import (DaDataset, check_embedded_labels, decode_fbin, embed_labels,
                         encode_fbin, fit_normalizer, hard_labels, load_labels, load_matrix,
                         normalize, save_labels, save_matrix)
from dollda.errors import ConfigError, DataError


class TestEmbedLabels:
    def test_one_hot_padded(self):
        np.testing.assert_array_equal(embed_labels([2], 3, 5), [[0, 1, 0, 0, 0]])

    def test_single_class(self):
        np.testing.assert_array_equal(embed_labels([1], 1, 1), [[1]])

    def test_distinct_classes_orthogonal(self):
        y = embed_labels([1, 2], 3, 5)
        assert y[0] @ y[1] == 0

    def test_k_below_class_count(self):
        with pytest.raises(ConfigError, match="k=2.*C=3"):
            embed_labels([1], 3, 2)

    @pytest.mark.parametrize("bad", [0, 4, -1])
    def test_out_of_range(self, bad):
        with pytest.raises(DataError):
            embed_labels([1, bad], 3, 5)


class TestHardLabels:
    def test_argmax(self):
        assert hard_labels(np.array([[0.2, 0.5, 0.3, 0, 0]]), 3)[0] == 2

    def test_tie_takes_lowest(self):
        assert hard_labels(np.array([[0.5, 0.5, 0, 0, 0]]), 3)[0] == 1

    def test_padding_ignored(self):
        assert hard_labels(np.array([[0.1, 0.2, 0.0, 9.0]]), 3)[0] == 2

    @given(st.lists(st.integers(1, 6), min_size=1, max_size=30), st.integers(0, 4))
    def test_round_trip(self, labels, pad):
        y = embed_labels(labels, 6, 6 + pad)
        np.testing.assert_array_equal(hard_labels(y, 6), labels)
        check_embedded_labels(y, 6)


def test_check_embedded_rejects_bad_rows():
    with pytest.raises(DataError):
        check_embedded_labels(np.array([[0.6, 0.6, 0.0]]), 2)
    with pytest.raises(DataError):
        check_embedded_labels(np.array([[0.5, 0.0, 0.5]]), 2)


class TestNormalize:
    def test_none_is_identity(self, rng):
        x = rng.normal(size=(4, 6))
        np.testing.assert_array_equal(normalize(x, "none"), x)

    def test_zscore_two_points(self):
        np.testing.assert_allclose(normalize(np.array([[1.0, 3.0]]), "zscore"), [[-1.0, 1.0]])

    def test_unit_columns(self, rng):
        x = rng.normal(size=(5, 9))
        norms = np.linalg.norm(normalize(x, "zscore_unit"), axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_zero_variance_row_only_centered(self):
        x = np.array([[2.0, 2.0, 2.0], [1.0, 2.0, 3.0]])
        out = normalize(x, "zscore")
        np.testing.assert_array_equal(out[0], 0.0)

    def test_fitted_normalizer_reapplies(self, rng):
        x = rng.normal(size=(3, 7))
        nz = fit_normalizer(x, "zscore")
        np.testing.assert_allclose(nz.apply(x[:, :2]), normalize(x, "zscore")[:, :2])

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            normalize(np.eye(2), "l2")


class TestMatrixFiles:
    def test_fbin_identity_bit_exact(self, tmp_path):
        path = tmp_path / "eye.fbin"
        save_matrix(np.eye(2), path)
        back = load_matrix(path)
        assert back.tobytes() == np.eye(2).tobytes()
        assert path.read_bytes() == encode_fbin(back)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_fbin_round_trip(self, rows, cols, seed):
        x = np.random.default_rng(seed).normal(size=(rows, cols))
        np.testing.assert_array_equal(decode_fbin(encode_fbin(x)), x)

    def test_fbin_truncated(self, tmp_path):
        path = tmp_path / "bad.fbin"
        path.write_bytes(encode_fbin(np.ones((3, 3)))[:-8])
        with pytest.raises(DataError, match="bad.fbin"):
            load_matrix(path)

    def test_fbin_bad_magic(self):
        buf = b"XXXX" + encode_fbin(np.ones((1, 1)))[4:]
        with pytest.raises(DataError, match="magic"):
            decode_fbin(buf)

    def test_csv_parse(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1.5,2.5\n3.5,4.5")
        np.testing.assert_array_equal(load_matrix(path), [[1.5, 2.5], [3.5, 4.5]])

    def test_csv_nan_rejected_with_position(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3,nan\n")
        with pytest.raises(DataError, match="row 2, column 2"):
            load_matrix(path)

    def test_csv_ragged(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(DataError, match="row 2"):
            load_matrix(path)

    def test_csv_round_trip_exact(self, tmp_path, rng):
        x = rng.normal(size=(3, 4))
        save_matrix(x, tmp_path / "m.csv")
        np.testing.assert_array_equal(load_matrix(tmp_path / "m.csv"), x)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_matrix(tmp_path / "absent.fbin")


def test_labels_round_trip(tmp_path):
    save_labels([3, 1, 2], tmp_path / "y.txt")
    np.testing.assert_array_equal(load_labels(tmp_path / "y.txt"), [3, 1, 2])


def test_labels_reject_fraction(tmp_path):
    (tmp_path / "y.txt").write_text("1\n2.5\n")
    with pytest.raises(DataError, match="line 2"):
        load_labels(tmp_path / "y.txt")


class TestDataset:
    def test_from_domains(self, rng):
        ds = DaDataset.from_domains(rng.normal(size=(3, 4)), [1, 2, 1, 2], rng.normal(size=(3, 5)))
        assert (ds.n_source, ds.n_target, ds.class_count) == (4, 5, 2)
        assert ds.x_target.shape == (3, 5)

    def test_feature_mismatch(self, rng):
        with pytest.raises(DataError, match="features"):
            DaDataset.from_domains(rng.normal(size=(3, 2)), [1, 2], rng.normal(size=(4, 2)))

    def test_missing_source_class(self, rng):
        with pytest.raises(DataError, match=r"\[2\]"):
            DaDataset.from_domains(rng.normal(size=(2, 2)), [1, 3], rng.normal(size=(2, 2)), 3)

    def test_immutable(self, rng):
        ds = DaDataset.from_domains(rng.normal(size=(2, 2)), [1, 2], rng.normal(size=(2, 2)))
        with pytest.raises(ValueError):
            ds.x[0, 0] = 1.0

    def test_digest_tracks_content(self, rng):
        xs, xt = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        a = DaDataset.from_domains(xs, [1, 2], xt)
        b = DaDataset.from_domains(xs.copy(), [1, 2], xt.copy())
        c = DaDataset.from_domains(xs, [2, 1], xt)
        assert a.digest() == b.digest() != c.digest()
