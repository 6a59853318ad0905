"""Binary LDA on LOT features and the repeated-trial experiment harness."""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .datasets import gaussian_grid_reference, image_to_measure, synthetic_gaussian_class
from .errors import DegenerateFeatures, InsufficientData, SingleClass, WidthMismatch
from .lot import concat_features, embed
from .measures import DiscreteMeasure, GaussianMeasure, pushforward
from .transforms import ShearRegime, sample_shear, shear_image, shear_to_affine

# ---------------------------------------------------------------------------
# LDA
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Linear rule: class_labels[0] when weight @ x + bias >= 0."""

    weight: np.ndarray
    bias: float
    class_labels: tuple

    def decision_function(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != len(self.weight):
            raise WidthMismatch(
                f"model expects {len(self.weight)} features, got {x.shape[1]}"
            )
        return x @ self.weight + self.bias

    def project(self, features) -> np.ndarray:
        """Coordinate along the unit discriminant direction."""
        return self.decision_function(features) / np.linalg.norm(self.weight)


def lda_fit(
    features,
    labels,
    shrinkage: float = 0.1,
    priors: Optional[Sequence[float]] = None,
    on_degenerate: str = "raise",
) -> LdaModel:
    """Two-class LDA with covariance shrunk towards a scaled identity.

    The covariance estimate is (1 - s) C + s (tr C / p) I with C the pooled
    within-class covariance.  It is never formed: the solve runs in the
    span of the centred training data, so cost is O(n^2 p) for n samples
    and p features.

    ``on_degenerate="identity"`` replaces an all-zero pooled covariance by
    the identity (nearest-mean rule) instead of raising.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be (n, p) with one label per row")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    classes = tuple(np.unique(y).tolist())
    if len(classes) < 2:
        raise SingleClass("training data contains a single class")
    if len(classes) > 2:
        raise ValueError(f"binary LDA got {len(classes)} classes")

    groups = [x[y == c] for c in classes]
    means = [g.mean(axis=0) for g in groups]
    centred = np.vstack([g - m for g, m in zip(groups, means)])
    dof = max(len(x) - 2, 1)
    diff = means[0] - means[1]

    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    pooled_eigs = s**2 / dof
    trace = pooled_eigs.sum()
    p = x.shape[1]
    if not trace > 0:
        if on_degenerate != "identity":
            raise DegenerateFeatures("pooled covariance vanishes in every direction")
        weight = diff.copy()
    else:
        ridge = shrinkage * trace / p
        eigs = (1.0 - shrinkage) * pooled_eigs + ridge
        coef = vt @ diff
        if ridge > 0:
            weight = diff / ridge + vt.T @ (coef * (1.0 / eigs - 1.0 / ridge))
        else:
            keep = eigs > eigs.max() * 1e-12
            weight = vt[keep].T @ (coef[keep] / eigs[keep])
    if not np.any(weight != 0):
        raise DegenerateFeatures("class means coincide along every retained direction")

    if priors is None:
        log_ratio = 0.0
    else:
        log_ratio = float(np.log(priors[0]) - np.log(priors[1]))
    bias = float(-weight @ (means[0] + means[1]) / 2.0 + log_ratio)
    return LdaModel(weight, bias, classes)


def lda_predict(model: LdaModel, features) -> np.ndarray:
    score = model.decision_function(features)
    first, second = model.class_labels
    return np.where(score >= 0, first, second)


def error_rate(model: LdaModel, features, labels) -> float:
    return float(np.mean(lda_predict(model, features) != np.asarray(labels)))


# ---------------------------------------------------------------------------
# Data sources
# ---------------------------------------------------------------------------


class SyntheticSource:
    """Point clouds of ``n_atoms`` draws from one Gaussian per class.

    Shears act directly on coordinates, shifts in coordinate units.
    """

    kind = "synthetic"

    def __init__(self, classes: dict, n_atoms: int = 100):
        self.classes = dict(classes)
        self.n_atoms = int(n_atoms)

    def draw(self, label, count: int, rng) -> list:
        g = self.classes[label]
        return [synthetic_gaussian_class(g, self.n_atoms, rng) for _ in range(count)]

    def to_measure(self, item: DiscreteMeasure, shear=None) -> DiscreteMeasure:
        if shear is None:
            return item
        return pushforward(item, shear_to_affine(shear), vectorized=True)


class ImageSource:
    """Images grouped by label; draws are without replacement per class."""

    kind = "images"

    def __init__(self, images, labels, bounds=(0.0, 1.0)):
        self.images = np.asarray(images)
        self.labels = np.asarray(labels)
        self.bounds = bounds

    def draw(self, label, count: int, rng) -> list:
        pool = np.flatnonzero(self.labels == label)
        if len(pool) < count:
            raise InsufficientData(
                f"label {label}: need {count} images, only {len(pool)} available"
            )
        picked = rng.choice(pool, size=count, replace=False)
        return [self.images[i] for i in picked]

    def to_measure(self, item, shear=None) -> DiscreteMeasure:
        img = np.asarray(item, dtype=np.float64)
        if shear is not None:
            img = shear_image(img, shear)
        return image_to_measure(img, self.bounds)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSpec:
    """``kind`` is "gaussian", "class-sample" or "sheared-class-sample".

    Gaussian references are sampled on a ``side`` x ``side`` grid over
    ``bounds``.  Class-sample references draw ``count`` items from each
    class, disjoint from the training and test draws.
    """

    kind: str = "gaussian"
    mean: tuple = (0.5, 0.5)
    cov: tuple = ((0.02, 0.0), (0.0, 0.02))
    side: int = 28
    bounds: tuple = (0.0, 1.0)
    count: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "class-sample", "sheared-class-sample"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be at least 1")

    def n_refs(self) -> int:
        return 1 if self.kind == "gaussian" else 2 * self.count

    def build_gaussian(self) -> DiscreteMeasure:
        g = GaussianMeasure(np.asarray(self.mean), np.asarray(self.cov))
        return gaussian_grid_reference(g, self.side, tuple(self.bounds))


@dataclass(frozen=True)
class TrialConfig:
    class_a: object
    class_b: object
    references: tuple = (ReferenceSpec(),)
    regime: Optional[ShearRegime] = None
    n_train: int = 50
    n_test: int = 200
    repeats: int = 10
    extraction: str = "argmax"
    solver: str = "exact"
    epsilon: Optional[float] = None
    lda_shrinkage: float = 0.1

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1 or self.repeats < 1:
            raise ValueError("n_train, n_test and repeats must be at least 1")
        if self.class_a == self.class_b:
            raise ValueError("class_a and class_b must differ")
        object.__setattr__(self, "references", tuple(self.references))

    def n_refs(self) -> int:
        return sum(r.n_refs() for r in self.references)


@dataclass
class TrialReport:
    n_train_per_class: int
    n_test_per_class: int
    repeats: int
    mean_error: float
    std_error: float
    per_trial_errors: list
    n_refs: int = 1
    regime: str = "none"
    config_hash: str = ""

    @classmethod
    def from_errors(cls, errors, **kwargs) -> "TrialReport":
        arr = np.asarray(errors, dtype=np.float64)
        return cls(
            repeats=len(arr),
            mean_error=float(arr.mean()),
            std_error=float(arr.std()),
            per_trial_errors=[float(e) for e in arr],
            **kwargs,
        )

    def to_json(self) -> dict:
        return asdict(self)


def regime_name(regime: Optional[ShearRegime]) -> str:
    from .transforms import REGIMES

    if regime is None:
        return "none"
    for name, r in REGIMES.items():
        if r == regime:
            return name
    return "custom"


def config_hash(config: TrialConfig, source=None) -> str:
    payload = repr(config)
    if source is not None:
        payload += source.kind
        if isinstance(source, SyntheticSource):
            payload += repr(
                {k: (g.mean.tolist(), g.covariance.tolist()) for k, g in source.classes.items()}
            ) + str(source.n_atoms)
        else:
            payload += hashlib.sha1(np.ascontiguousarray(source.images).tobytes()).hexdigest()
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


def _sample_refs(config: TrialConfig) -> list:
    return [spec for spec in config.references if spec.kind != "gaussian"]


def _references(config: TrialConfig, source, reserved: dict, rng) -> list:
    refs = []
    taken = {label: 0 for label in reserved}
    for spec in config.references:
        if spec.kind == "gaussian":
            refs.append(spec.build_gaussian())
            continue
        for label in (config.class_a, config.class_b):
            start = taken[label]
            taken[label] += spec.count
            for item in reserved[label][start : start + spec.count]:
                sheared = spec.kind == "sheared-class-sample" and config.regime is not None
                shear = sample_shear(config.regime, rng) if sheared else None
                refs.append(source.to_measure(item, shear).prune())
    return refs


def _featurize(config: TrialConfig, source, items, references, rng) -> np.ndarray:
    rows = []
    for item in items:
        shear = sample_shear(config.regime, rng) if config.regime is not None else None
        measure = source.to_measure(item, shear)
        feats = [
            embed(ref, measure, config.extraction, config.solver, config.epsilon)
            for ref in references
        ]
        rows.append(concat_features(feats))
    return np.vstack(rows)


def run_single_repeat(config: TrialConfig, source, seed: int, repeat: int) -> float:
    """Test error of one repeat; its RNG stream depends only on (seed, repeat)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(repeat)]))
    n_reserved = sum(spec.count for spec in _sample_refs(config))
    labels = (config.class_a, config.class_b)
    reserved, train, test = {}, {}, {}
    for label in labels:
        # One joint draw per class keeps references, train and test disjoint.
        items = source.draw(label, n_reserved + config.n_train + config.n_test, rng)
        reserved[label] = items[:n_reserved]
        train[label] = items[n_reserved : n_reserved + config.n_train]
        test[label] = items[n_reserved + config.n_train :]
    references = _references(config, source, reserved, rng)

    def split(parts):
        x = [_featurize(config, source, parts[label], references, rng) for label in labels]
        y = [np.full(len(parts[label]), k) for k, label in enumerate(labels)]
        return np.vstack(x), np.concatenate(y)

    x_train, y_train = split(train)
    x_test, y_test = split(test)
    model = lda_fit(x_train, y_train, shrinkage=config.lda_shrinkage, on_degenerate="identity")
    return error_rate(model, x_test, y_test)


def sample_features(config: TrialConfig, source, n_per_class: int, seed: int = 0):
    """Shear and embed ``n_per_class`` fresh draws per class.

    Returns ``(features, labels)``; reproducible given ``seed``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    n_reserved = sum(spec.count for spec in _sample_refs(config))
    labels = (config.class_a, config.class_b)
    reserved, items = {}, {}
    for label in labels:
        drawn = source.draw(label, n_reserved + n_per_class, rng)
        reserved[label] = drawn[:n_reserved]
        items[label] = drawn[n_reserved:]
    references = _references(config, source, reserved, rng)
    x = [_featurize(config, source, items[label], references, rng) for label in labels]
    y = [np.full(n_per_class, label, dtype=object) for label in labels]
    return np.vstack(x), np.concatenate(y)


def run_binary_trial(config: TrialConfig, source, seed: int = 0, jobs: int = 1) -> TrialReport:
    """Repeat sample / shear / embed / fit / test and aggregate test errors."""
    args = [(config, source, seed, r) for r in range(config.repeats)]
    if jobs > 1 and config.repeats > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            errors = list(pool.map(_repeat_star, args))
    else:
        errors = [run_single_repeat(*a) for a in args]
    return TrialReport.from_errors(
        errors,
        n_train_per_class=config.n_train,
        n_test_per_class=config.n_test,
        n_refs=config.n_refs(),
        regime=regime_name(config.regime),
        config_hash=config_hash(config, source),
    )


def _repeat_star(args):
    return run_single_repeat(*args)
