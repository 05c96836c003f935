from __future__ import annotations

import numpy as np
import pytest

from certsensor.data import (
    BIN_LABELS,
    FULL_RANGE,
    GENERATOR_VERSION,
    bin_of,
    bins_of,
    generate,
    header_for,
    load_csv,
    meta_path,
    save_csv,
)
from certsensor.errors import ConfigurationError, DatasetParseError, DomainError


class TestGenerate:
    def test_same_seed_same_data(self):
        a, b = generate(500, 8, seed=4), generate(500, 8, seed=4)
        assert a.equals(b)
        assert not a.equals(generate(500, 8, seed=5))

    def test_normalized(self, small_dataset):
        assert small_dataset.X.shape == (200, 6)
        assert np.all((small_dataset.X >= 0.0) & (small_dataset.X <= 1.0))
        assert np.all((small_dataset.Y >= 0.05) & (small_dataset.Y <= 1.0))

    def test_signal_follows_target(self):
        ds = generate(2000, 16, seed=0)
        assert np.corrcoef(ds.X[:, -1], ds.Y)[0, 1] > 0.5
        assert np.corrcoef(ds.X[:, :-1].sum(axis=1), ds.Y)[0, 1] > 0.5

    def test_meta(self, small_dataset):
        assert small_dataset.meta.seed == 3
        assert small_dataset.meta.generator_version == GENERATOR_VERSION
        assert small_dataset.meta.n == 200

    @pytest.mark.parametrize(("n", "k"), [(0, 4), (10, 1)])
    def test_invalid_sizes(self, n, k):
        with pytest.raises(ConfigurationError):
            generate(n, k, seed=0)

    def test_invalid_floor(self):
        with pytest.raises(ConfigurationError):
            generate(10, 4, seed=0, y_min=0.0)

    def test_noiseless_scalar_is_affine_in_target(self):
        ds = generate(300, 8, seed=2, scalar_sigma=0.0)
        np.testing.assert_allclose(ds.X[:, -1], 0.2 + 0.6 * ds.Y, rtol=0, atol=1e-15)
        assert ds.meta.scalar_sigma == 0.0
        assert generate(300, 8, seed=2).meta.scalar_sigma == 0.001

    def test_head(self, small_dataset):
        head = small_dataset.head(10)
        assert len(head) == 10
        assert head.meta.n == 10
        assert small_dataset.head(None) is small_dataset


class TestCsv:
    def test_round_trip_is_exact(self, tmp_path, small_dataset):
        path = save_csv(small_dataset, tmp_path / "train.csv")
        loaded = load_csv(path)
        assert np.array_equal(loaded.X, small_dataset.X)
        assert np.array_equal(loaded.Y, small_dataset.Y)
        assert loaded.meta == small_dataset.meta

    def test_layout(self, tmp_path):
        path = save_csv(generate(3, 4, seed=1), tmp_path / "d.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "s_0,s_1,s_2,p,y"
        assert len(lines) == 4
        assert meta_path(path).name == "d.meta.json"

    def test_empty_dataset(self, tmp_path, small_dataset):
        path = save_csv(small_dataset.head(0), tmp_path / "empty.csv")
        assert path.read_text(encoding="utf-8").splitlines() == [",".join(header_for(6))]
        assert len(load_csv(path)) == 0

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "plain.csv"
        path.write_text("s_0,p,y\n0.1,0.2,0.3\n", encoding="utf-8")
        loaded = load_csv(path)
        assert loaded.meta.generator_version == "external"
        assert loaded.meta.input_dim == 2

    def test_extra_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("s_0,p,y\n0.1,0.2,0.3\n0.1,0.2,0.3\n0.1,0.2,0.3,0.4\n", encoding="utf-8")
        with pytest.raises(DatasetParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.row == 3
        assert str(excinfo.value).startswith(f"{path}:3:")

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("s_0,p,y\n0.1,0.2,0.3\n0.1,abc,0.3\n", encoding="utf-8")
        with pytest.raises(DatasetParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.row == 2

    def test_out_of_range(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("s_0,p,y\n0.1,0.2,1.5\n", encoding="utf-8")
        with pytest.raises(DatasetParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.row == 1

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n0.1,0.2,0.3\n", encoding="utf-8")
        with pytest.raises(DatasetParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.row == 0

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_bytes(b"s_0,p,y\n0.1,0.2,0.3\n\xff,0.1,0.2\n")
        with pytest.raises(DatasetParseError, match="not valid UTF-8") as excinfo:
            load_csv(path)
        assert excinfo.value.row == 2

    def test_blank_line_keeps_row_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("s_0,p,y\n0.1,0.2,0.3\n\n0.1,0.2,0.3\n", encoding="utf-8")
        with pytest.raises(DatasetParseError, match="missing") as excinfo:
            load_csv(path)
        assert excinfo.value.row == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DatasetParseError):
            load_csv(path)


class TestBins:
    @pytest.mark.parametrize(
        ("y", "expected"), [(0.0, 0), (0.1999, 0), (0.2, 1), (0.5, 2), (0.8, 4), (1.0, 4)]
    )
    def test_edges(self, y, expected):
        assert bin_of(y) == expected

    def test_labels(self):
        assert BIN_LABELS[FULL_RANGE] == "[0.0-1.0]"
        assert BIN_LABELS[bin_of(1.0)] == "[0.8-1.0]"

    def test_vectorized(self):
        assert bins_of(np.array([0.05, 0.35, 0.95])).tolist() == [0, 1, 4]

    def test_outside(self):
        with pytest.raises(DomainError):
            bin_of(1.01)
