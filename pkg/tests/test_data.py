"""IDX and CSV loading."""

import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from vmfml.data import LabeledDataset, load_csv, load_idx, write_csv, write_idx
from vmfml.errors import (
    BadMagic,
    CountMismatch,
    DataError,
    NonNumericField,
    RaggedRow,
    SparseLabels,
    TruncatedFile,
)

ROOT = Path(__file__).resolve().parents[1]
SUBSET = ROOT / "data" / "mnist10k"


def tiny_idx(tmp_path, n_images=4, n_labels=4, suffix=""):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (n_images, 3, 2), dtype=np.uint8)
    labels = np.arange(n_labels, dtype=np.uint8) % 3
    ip, lp = tmp_path / f"img{suffix}", tmp_path / f"lab{suffix}"
    write_idx(ip, lp, images, labels)
    return ip, lp, images, labels


class TestIdx:

    def test_round_trip(self, tmp_path):
        ip, lp, images, labels = tiny_idx(tmp_path)
        data = load_idx(ip, lp)
        assert data.features.shape == (4, 6)
        assert np.array_equal(data.features, images.reshape(4, 6) / 255.0)
        assert np.array_equal(data.labels, labels)
        assert data.n_classes == 3

    def test_gzip(self, tmp_path):
        ip, lp, images, _ = tiny_idx(tmp_path, suffix=".gz")
        assert np.array_equal(load_idx(ip, lp).features, images.reshape(4, 6) / 255.0)

    def test_hand_built_bytes(self, tmp_path):
        ip, lp = tmp_path / "i", tmp_path / "l"
        ip.write_bytes(bytes.fromhex("00000803 00000002 00000001 00000002".replace(" ", "")) + bytes([0, 255, 51, 102]))
        lp.write_bytes(bytes.fromhex("00000801 00000002".replace(" ", "")) + bytes([1, 0]))
        data = load_idx(ip, lp)
        assert data.features.tolist() == [[0.0, 1.0], [0.2, 0.4]]
        assert data.labels.tolist() == [1, 0]

    def test_count_mismatch(self, tmp_path):
        ip, lp, _, _ = tiny_idx(tmp_path, n_images=4, n_labels=3)
        with pytest.raises(CountMismatch):
            load_idx(ip, lp)

    def test_bad_magic(self, tmp_path):
        ip, lp, _, _ = tiny_idx(tmp_path)
        with pytest.raises(BadMagic):
            load_idx(lp, lp)
        with pytest.raises(BadMagic):
            load_idx(ip, ip)

    def test_truncated(self, tmp_path):
        ip, lp, _, _ = tiny_idx(tmp_path)
        ip.write_bytes(ip.read_bytes()[:-1])
        with pytest.raises(TruncatedFile):
            load_idx(ip, lp)
        ip.write_bytes(b"\x00\x00")
        with pytest.raises(TruncatedFile):
            load_idx(ip, lp)

    def test_truncated_gzip(self, tmp_path):
        ip, lp, _, _ = tiny_idx(tmp_path, suffix=".gz")
        ip.write_bytes(ip.read_bytes()[:-10])
        with pytest.raises(TruncatedFile):
            load_idx(ip, lp)

    def test_sparse_labels(self, tmp_path):
        ip, lp = tmp_path / "i", tmp_path / "l"
        write_idx(ip, lp, np.zeros((2, 2, 2)), np.array([0, 2]))
        with pytest.raises(SparseLabels):
            load_idx(ip, lp)

    @pytest.mark.skipif(not SUBSET.exists(), reason="MNIST subset not built")
    def test_bundled_subset_header(self):
        """Header fields decoded by hand agree with the loader."""
        raw = gzip.open(SUBSET / "train-images-idx3-ubyte.gz").read(16)
        magic, n, rows, cols = struct.unpack(">IIII", raw)
        assert (magic, rows, cols) == (0x803, 28, 28)
        data = load_idx(SUBSET / "train-images-idx3-ubyte.gz", SUBSET / "train-labels-idx1-ubyte.gz")
        assert data.features.shape == (n, 784)
        assert data.n_classes == 10
        assert 0.0 <= data.features.min() and data.features.max() <= 1.0

    @pytest.mark.skipif(not os.environ.get("VMFML_MNIST_DIR"), reason="full MNIST not available")
    def test_full_mnist(self):
        d = Path(os.environ["VMFML_MNIST_DIR"])
        data = load_idx(d / "train-images-idx3-ubyte.gz", d / "train-labels-idx1-ubyte.gz")
        assert data.features.shape == (60_000, 784)
        assert data.n_classes == 10


class TestCsv:

    def write(self, tmp_path, text):
        path = tmp_path / "d.csv"
        path.write_text(text)
        return path

    def test_basic(self, tmp_path):
        data = load_csv(self.write(tmp_path, "# label,a,b\n0,1.5,2\n1,3,4\n0,-1,0\n"))
        assert (len(data), data.n_features, data.n_classes) == (3, 2, 2)
        assert data.features[0].tolist() == [1.5, 2.0]

    def test_ragged(self, tmp_path):
        with pytest.raises(RaggedRow):
            load_csv(self.write(tmp_path, "0,1,2\n1,3\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(NonNumericField):
            load_csv(self.write(tmp_path, "0,1,x\n"))
        with pytest.raises(NonNumericField):
            load_csv(self.write(tmp_path, "a,1,2\n"))
        with pytest.raises(NonNumericField):
            load_csv(self.write(tmp_path, "0,1,nan\n"))

    def test_sparse(self, tmp_path):
        with pytest.raises(SparseLabels):
            load_csv(self.write(tmp_path, "0,1\n2,1\n"))

    def test_negative_label(self, tmp_path):
        with pytest.raises(SparseLabels):
            load_csv(self.write(tmp_path, "-1,1\n0,1\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(self.write(tmp_path, "# nothing\n"))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = LabeledDataset(rng.standard_normal((6, 3)), [0, 1, 2, 0, 1, 2])
        write_csv(tmp_path / "x.csv", data)
        back = load_csv(tmp_path / "x.csv")
        assert np.array_equal(back.features, data.features)
        assert np.array_equal(back.labels, data.labels)


class TestDataset:

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            LabeledDataset(np.zeros((3, 2)), [0, 1])

    def test_bad_split(self):
        with pytest.raises(DataError):
            LabeledDataset(np.zeros((2, 2)), [0, 1], split="dev")

    def test_subset(self):
        data = LabeledDataset(np.arange(8.0).reshape(4, 2), [0, 1, 0, 1])
        part = data.subset(slice(0, 2), "test")
        assert len(part) == 2 and part.split == "test"
