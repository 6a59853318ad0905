"""Image and synthetic data sources.

Images live on the unit square: pixel (i, j) of an n x n image (row i,
column j, 0-based) sits at the cell centre ((j + 0.5)/n, 1 - (i + 0.5)/n),
i.e. columns run along x and rows are flipped so that y points up.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, TruncatedFile, ZeroTotalMass
from .measures import DiscreteMeasure, GaussianMeasure

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "LOTLAB_DATA_DIR"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Square image of nonnegative intensities."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ValueError(f"expected a square image, got shape {px.shape}")
        if np.any(px < 0) or not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite and nonnegative")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------


def _open(path):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, magic: int) -> np.ndarray:
    """Read an unsigned-byte IDX file whose magic number must equal ``magic``."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: missing header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic number {found:#010x}, expected {magic:#010x}")
    ndim = found & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFile(f"{path}: header ends early")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    body = raw[header:]
    if len(body) < expected:
        raise TruncatedFile(f"{path}: {len(body)} data bytes, header promises {expected}")
    return np.frombuffer(body, dtype=np.uint8, count=expected).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | arr.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_mnist_arrays(images_path, labels_path):
    """Raw uint8 image stack (N, rows, cols) and label vector (N,)."""
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if len(images) != len(labels):
        raise CountMismatch(f"{len(images)} images but {len(labels)} labels")
    return images, labels


def load_mnist_idx(images_path, labels_path) -> list:
    """List of (ImageGrid, label) pairs with intensities in [0, 255]."""
    images, labels = read_mnist_arrays(images_path, labels_path)
    return [(ImageGrid(img.astype(np.float64)), int(lab)) for img, lab in zip(images, labels)]


def find_mnist(data_dir=None, split: str = "train"):
    """Locate the MNIST image/label files of ``split`` or return None."""
    base = data_dir or os.environ.get(DATA_DIR_ENV)
    if not base:
        return None
    names = MNIST_FILES[split]
    for suffix in ("", ".gz"):
        paths = [Path(base) / (n + suffix) for n in names]
        if all(p.exists() for p in paths):
            return tuple(paths)
    return None


# ---------------------------------------------------------------------------
# Measures from grids
# ---------------------------------------------------------------------------


def grid_points(side: int, bounds=(0.0, 1.0)) -> np.ndarray:
    """Cell centres of a side x side grid in row-major pixel order."""
    lo, hi = bounds
    step = (hi - lo) / side
    centres = lo + (np.arange(side) + 0.5) * step
    rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    x = centres[cols.ravel()]
    y = centres[::-1][rows.ravel()]
    return np.column_stack([x, y])


def image_to_measure(image, bounds=(0.0, 1.0)) -> DiscreteMeasure:
    """Normalized pixel mass on the grid points of nonzero pixels."""
    px = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    if px.ndim != 2 or px.shape[0] != px.shape[1]:
        raise ValueError(f"expected a square image, got shape {px.shape}")
    if np.any(px < 0):
        raise ValueError("pixel values must be nonnegative")
    flat = px.ravel()
    total = flat.sum()
    if not total > 0:
        raise ZeroTotalMass("image has no mass")
    keep = flat > 0
    pts = grid_points(px.shape[0], bounds)[keep]
    return DiscreteMeasure(pts, flat[keep] / total)


def gaussian_grid_reference(g: GaussianMeasure, side: int = 28, bounds=(0.0, 1.0)) -> DiscreteMeasure:
    """Gaussian density sampled at grid cell centres, normalized to mass one.

    All side*side atoms are kept, so the weight vector reshapes to the
    grid.  A warning is issued when one cell holds more than 99.9% of the
    mass.
    """
    if side < 2:
        raise ValueError("side must be at least 2")
    pts = grid_points(side, bounds)
    logp = g.log_density(pts)
    peak = logp.max()
    if not np.isfinite(peak):
        raise ZeroTotalMass("Gaussian density vanishes on the grid")
    w = np.exp(logp - peak)
    w /= w.sum()
    if w.max() > 0.999:
        warnings.warn(
            "Gaussian reference is nearly a point mass on this grid",
            RuntimeWarning,
            stacklevel=2,
        )
    return DiscreteMeasure(pts, w)


def synthetic_gaussian_class(g: GaussianMeasure, n_atoms: int, rng=None) -> DiscreteMeasure:
    """Uniform measure on ``n_atoms`` i.i.d. draws from ``g``."""
    if n_atoms < 1:
        raise ValueError("n_atoms must be at least 1")
    return DiscreteMeasure.uniform(g.sample(n_atoms, rng))


# ---------------------------------------------------------------------------
# Deterministic digit-like fixture
# ---------------------------------------------------------------------------

# Polyline skeletons in a unit box (x right, y down).
_DIGIT_STROKES = {
    0: [[(0.5, 0.0), (0.85, 0.2), (0.9, 0.6), (0.6, 1.0), (0.2, 0.85), (0.1, 0.4), (0.5, 0.0)]],
    1: [[(0.35, 0.2), (0.55, 0.0), (0.55, 1.0)]],
    2: [[(0.15, 0.25), (0.45, 0.0), (0.8, 0.15), (0.75, 0.45), (0.15, 1.0), (0.9, 1.0)]],
    3: [[(0.15, 0.1), (0.7, 0.05), (0.5, 0.45), (0.85, 0.7), (0.55, 1.0), (0.15, 0.9)]],
    4: [[(0.7, 1.0), (0.7, 0.0), (0.1, 0.65), (0.9, 0.65)]],
    5: [[(0.85, 0.0), (0.25, 0.0), (0.2, 0.45), (0.7, 0.45), (0.8, 0.8), (0.5, 1.0), (0.15, 0.9)]],
    6: [[(0.75, 0.0), (0.3, 0.35), (0.2, 0.8), (0.5, 1.0), (0.8, 0.75), (0.6, 0.5), (0.25, 0.6)]],
    7: [[(0.1, 0.05), (0.9, 0.05), (0.4, 1.0)]],
    8: [[(0.5, 0.5), (0.2, 0.25), (0.5, 0.0), (0.8, 0.25), (0.5, 0.5),
         (0.15, 0.75), (0.5, 1.0), (0.85, 0.75), (0.5, 0.5)]],
    9: [[(0.8, 0.4), (0.45, 0.55), (0.2, 0.3), (0.45, 0.0), (0.8, 0.2), (0.7, 1.0)]],
}


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / length2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def render_digit(digit: int, rng=None, side: int = 28) -> np.ndarray:
    """Anti-aliased stroke rendering of a digit skeleton, uint8 in [0, 255].

    The glyph occupies a jittered 20x20 box centred in the frame, with a
    soft stroke profile comparable to handwritten digit scans.
    """
    rng = np.random.default_rng(rng)
    box = 20.0 * rng.uniform(0.85, 1.0)
    slant = rng.uniform(-0.25, 0.25)
    width = rng.uniform(0.4, 0.9)
    off = (side - box) / 2.0 + rng.uniform(-1.0, 1.0, size=2)
    rows, cols = np.meshgrid(np.arange(side) + 0.5, np.arange(side) + 0.5, indexing="ij")
    dist = np.full((side, side), np.inf)
    for stroke in _DIGIT_STROKES[digit]:
        pts = np.asarray(stroke) + rng.normal(0.0, 0.03, size=(len(stroke), 2))
        xs = off[0] + box * (pts[:, 0] + slant * (pts[:, 1] - 0.5))
        ys = off[1] + box * pts[:, 1]
        for k in range(len(pts) - 1):
            seg = _segment_distance(cols, rows, (xs[k], ys[k]), (xs[k + 1], ys[k + 1]))
            dist = np.minimum(dist, seg)
    intensity = np.exp(-0.5 * (np.maximum(dist - width, 0.0) / 0.6) ** 2)
    intensity[intensity < 0.02] = 0.0
    return np.round(255.0 * intensity).astype(np.uint8)


def make_fixture(n_images: int = 64, seed: int = 20210521, side: int = 28):
    """Deterministic digit-like image stack and labels (cycling 0-9)."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n_images, dtype=np.uint8) % 10
    images = np.stack([render_digit(int(d), rng, side) for d in labels])
    return images, labels


def write_fixture(directory, n_images: int = 64, seed: int = 20210521) -> dict:
    """Write the fixture as IDX files plus a manifest of SHA-256 hashes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images, labels = make_fixture(n_images, seed)
    img_path = directory / "fixture-images-idx3-ubyte"
    lab_path = directory / "fixture-labels-idx1-ubyte"
    write_idx(img_path, images)
    write_idx(lab_path, labels)
    manifest = {
        "seed": seed,
        "n_images": n_images,
        "files": {p.name: file_sha256(p) for p in (img_path, lab_path)},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
