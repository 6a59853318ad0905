import gzip
import json
import struct
import warnings

import numpy as np
import pytest

from conftest import DATA_DIR, FIXTURE_IMAGES, FIXTURE_LABELS
from lotlab.datasets import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    file_sha256,
    find_mnist,
    gaussian_grid_reference,
    grid_points,
    image_to_measure,
    load_mnist_idx,
    make_fixture,
    read_idx,
    read_mnist_arrays,
    synthetic_gaussian_class,
    write_fixture,
    write_idx,
)
from lotlab.errors import BadMagic, CountMismatch, TruncatedFile, ZeroTotalMass
from lotlab.measures import GaussianMeasure


def test_fixture_hashes_match_manifest():
    manifest = json.loads((DATA_DIR / "manifest.json").read_text())
    for name, digest in manifest["files"].items():
        assert file_sha256(DATA_DIR / name) == digest


def test_fixture_regenerates_identically(tmp_path):
    manifest = write_fixture(tmp_path)
    stored = json.loads((DATA_DIR / "manifest.json").read_text())
    assert manifest["files"] == stored["files"]


def test_fixture_contents(fixture_arrays):
    images, labels = fixture_arrays
    assert images.shape == (64, 28, 28)
    assert images.dtype == np.uint8
    np.testing.assert_array_equal(labels, np.arange(64) % 10)
    assert all(img.max() > 0 for img in images)


def test_idx_round_trip(tmp_path, rng):
    arr = rng.integers(0, 256, size=(3, 5, 4), dtype=np.uint8)
    write_idx(tmp_path / "x", arr)
    np.testing.assert_array_equal(read_idx(tmp_path / "x", IMAGE_MAGIC), arr)


def test_idx_gzip(tmp_path, rng):
    arr = rng.integers(0, 256, size=(7,), dtype=np.uint8)
    write_idx(tmp_path / "y", arr)
    with gzip.open(tmp_path / "y.gz", "wb") as fh:
        fh.write((tmp_path / "y").read_bytes())
    np.testing.assert_array_equal(read_idx(tmp_path / "y.gz", LABEL_MAGIC), arr)


def test_idx_header_parsed_by_hand(tmp_path):
    raw = struct.pack(">IIII", IMAGE_MAGIC, 2, 2, 2) + bytes([1, 2, 3, 4, 5, 6, 7, 8])
    (tmp_path / "h").write_bytes(raw)
    out = read_idx(tmp_path / "h", IMAGE_MAGIC)
    assert out.shape == (2, 2, 2)
    assert out[1, 0, 1] == 6


def test_idx_errors(tmp_path):
    write_idx(tmp_path / "lab", np.zeros(4, dtype=np.uint8))
    with pytest.raises(BadMagic):
        read_idx(tmp_path / "lab", IMAGE_MAGIC)
    raw = (tmp_path / "lab").read_bytes()
    (tmp_path / "short").write_bytes(raw[:-1])
    with pytest.raises(TruncatedFile):
        read_idx(tmp_path / "short", LABEL_MAGIC)
    (tmp_path / "tiny").write_bytes(raw[:2])
    with pytest.raises(TruncatedFile):
        read_idx(tmp_path / "tiny", LABEL_MAGIC)
    write_idx(tmp_path / "img", np.zeros((3, 2, 2), dtype=np.uint8))
    with pytest.raises(CountMismatch):
        read_mnist_arrays(tmp_path / "img", tmp_path / "lab")


def test_load_mnist_idx_pairs():
    pairs = load_mnist_idx(FIXTURE_IMAGES, FIXTURE_LABELS)
    assert len(pairs) == 64
    grid, label = pairs[11]
    assert grid.side == 28 and label == 1


def test_find_mnist(tmp_path, monkeypatch):
    monkeypatch.delenv("LOTLAB_DATA_DIR", raising=False)
    assert find_mnist() is None
    for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"):
        (tmp_path / name).write_bytes(b"")
    monkeypatch.setenv("LOTLAB_DATA_DIR", str(tmp_path))
    assert find_mnist()[0].name == "train-images-idx3-ubyte"


def test_canonical_mnist_header_if_available():
    paths = find_mnist()
    if paths is None:
        pytest.skip("MNIST not available (set LOTLAB_DATA_DIR)")
    images, labels = read_mnist_arrays(*paths)
    assert images.shape == (60000, 28, 28)
    assert labels.shape == (60000,)


def test_grid_orientation():
    pts = grid_points(2)
    np.testing.assert_allclose(pts, [[0.25, 0.75], [0.75, 0.75], [0.25, 0.25], [0.75, 0.25]])


def test_image_to_measure_examples():
    img = np.zeros((4, 4))
    img[1, 2] = 7.0
    one = image_to_measure(img)
    assert one.size == 1 and one.weights[0] == 1.0
    np.testing.assert_allclose(one.points, [[0.625, 0.625]])
    flat = image_to_measure(np.ones((3, 3)))
    np.testing.assert_allclose(flat.weights, 1 / 9)
    two = np.zeros((3, 3))
    two[0, 0], two[2, 2] = 1.0, 3.0
    np.testing.assert_allclose(image_to_measure(two).weights, [0.25, 0.75])
    with pytest.raises(ZeroTotalMass):
        image_to_measure(np.zeros((3, 3)))


def test_gaussian_grid_symmetric():
    ref = gaussian_grid_reference(GaussianMeasure([0.5, 0.5], 0.02 * np.eye(2)), 28)
    w = ref.weights.reshape(28, 28)
    assert abs(ref.weights.sum() - 1.0) < 1e-12
    assert np.abs(w - np.rot90(w)).max() < 1e-12
    assert ref.size == 784


def test_gaussian_grid_degenerate_warns():
    with pytest.warns(RuntimeWarning):
        gaussian_grid_reference(GaussianMeasure([5.0, 5.0], 1e-4 * np.eye(2)), 28)


def test_synthetic_class(rng):
    g = GaussianMeasure([1.0, -2.0], np.diag([4.0, 1.0]))
    assert synthetic_gaussian_class(g, 1, rng).size == 1
    a = synthetic_gaussian_class(g, 50, 3)
    b = synthetic_gaussian_class(g, 50, 3)
    assert a == b
    big = synthetic_gaussian_class(g, 10000, rng)
    sd = np.sqrt(np.diag(g.covariance))
    assert np.all(np.abs(big.mean() - g.mean) < 5 * sd / 100)
    with pytest.raises(ValueError):
        synthetic_gaussian_class(g, 0, rng)


def test_make_fixture_deterministic():
    a, la = make_fixture(12, seed=5)
    b, lb = make_fixture(12, seed=5)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(la, lb)
