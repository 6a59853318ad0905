"""Command-line front end.

Subcommands::

    lotlab classify --config exp.json [--all-pairs] [--seed N] [--jobs N] [--output DIR]
    lotlab embed --config exp.json [--seed N] [--output DIR]
    lotlab bounds --w2 10 --delta 1 --epsilon 0.5 --r1 1 --r2 1 --m-b 0.25
    lotlab verify-compat --config compat.json [--output DIR]
    lotlab shear in.pgm out.pgm --lambda1 1.2 --lambda2 0.9 --theta 30

Experiment configs are JSON objects with ``"schema": 1``; unknown keys are
rejected.  CSV floats are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    ImageSource,
    ReferenceSpec,
    SyntheticSource,
    TrialConfig,
    config_hash,
    run_binary_trial,
    sample_features,
)
from .datasets import find_mnist, read_mnist_arrays
from .errors import ConfigError, InfeasibleBound, LotError
from .gaussian import compatibility_residual, rotation_matrix
from .lot import (
    SeparationInputs,
    discretized_compatibility,
    min_references,
    shear_class_bounds,
    transformation_budget,
)
from .measures import GaussianMeasure
from .transforms import REGIMES, ShearParams, shear_image, shear_to_affine

SCHEMA_VERSION = 1

EXPERIMENT_KEYS = {
    "schema", "dataset", "class_a", "class_b", "regime", "references",
    "reference_sets", "n_train", "n_test", "n_embed", "repeats", "seed",
    "extraction", "solver", "epsilon", "lda_shrinkage", "output_dir",
    "synthetic", "mnist", "pairs",
}
REFERENCE_KEYS = {"kind", "mean", "cov", "side", "bounds", "count"}
SYNTHETIC_KEYS = {"classes", "n_atoms"}
MNIST_KEYS = {"images", "labels", "bounds"}
COMPAT_KEYS = {
    "schema", "template", "basis_angle", "reference_diag", "reference_shift",
    "shears", "side", "bounds", "extraction", "output_dir",
}
SHEAR_KEYS = {"lambda1", "lambda2", "theta", "shift"}

RESULT_COLUMNS = ["config_hash", "n_train", "n_refs", "regime", "mean_error", "std_error", "error"]
PAIR_COLUMNS = ["pair", "class_a", "class_b"] + RESULT_COLUMNS


def fmt(value) -> str:
    """CSV cell; floats use 17 significant digits so they round-trip."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return "" if value is None else str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def load_config(path, allowed=EXPERIMENT_KEYS) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    _check_keys(cfg, allowed, "config")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config must declare \"schema\": {SCHEMA_VERSION}")
    return cfg


def parse_reference(obj) -> ReferenceSpec:
    _check_keys(obj, REFERENCE_KEYS, "reference")
    kwargs = dict(obj)
    if "mean" in kwargs:
        kwargs["mean"] = tuple(kwargs["mean"])
    if "cov" in kwargs:
        kwargs["cov"] = tuple(tuple(row) for row in kwargs["cov"])
    if "bounds" in kwargs:
        kwargs["bounds"] = tuple(kwargs["bounds"])
    try:
        return ReferenceSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad reference {obj}: {exc}") from None


def reference_sets(cfg) -> list:
    if "references" in cfg and "reference_sets" in cfg:
        raise ConfigError("give either references or reference_sets, not both")
    if "reference_sets" in cfg:
        raw = cfg["reference_sets"]
    else:
        raw = [cfg.get("references", [{"kind": "gaussian"}])]
    if not raw or any(not isinstance(s, list) or not s for s in raw):
        raise ConfigError("every reference set must be a nonempty list")
    return [tuple(parse_reference(r) for r in s) for s in raw]


def _solver(cfg):
    solver = cfg.get("solver", "exact")
    epsilon = cfg.get("epsilon")
    if isinstance(solver, dict):
        _check_keys(solver, {"name", "epsilon"}, "solver")
        epsilon = solver.get("epsilon", epsilon)
        solver = solver.get("name", "sinkhorn")
    if solver not in ("exact", "sinkhorn"):
        raise ConfigError(f"unknown solver {solver!r}")
    return solver, epsilon


def _regime(cfg):
    name = cfg.get("regime", "none")
    if name == "none" or name is None:
        return None
    if name not in REGIMES:
        raise ConfigError(f"unknown regime {name!r}; use mild, severe or none")
    return REGIMES[name]


def _n_train(cfg) -> list:
    n = cfg.get("n_train", [50])
    values = n if isinstance(n, list) else [n]
    if not values or any(not isinstance(v, int) or v < 1 for v in values):
        raise ConfigError("n_train must be a positive integer or a list of them")
    return values


def build_source(cfg):
    dataset = cfg.get("dataset", "synthetic")
    if dataset == "synthetic":
        syn = cfg.get("synthetic", {})
        _check_keys(syn, SYNTHETIC_KEYS, "synthetic")
        classes = syn.get("classes")
        if not classes:
            raise ConfigError("synthetic dataset needs synthetic.classes")
        gaussians = {}
        for label, params in classes.items():
            _check_keys(params, {"mean", "cov"}, f"synthetic class {label}")
            try:
                gaussians[label] = GaussianMeasure(params["mean"], params["cov"])
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"synthetic class {label}: {exc}") from None
        return SyntheticSource(gaussians, syn.get("n_atoms", 100))
    if dataset == "mnist":
        mn = cfg.get("mnist", {})
        _check_keys(mn, MNIST_KEYS, "mnist")
        if "images" in mn and "labels" in mn:
            paths = (mn["images"], mn["labels"])
        else:
            paths = find_mnist(None, "train")
            if paths is None:
                raise ConfigError(
                    "MNIST files not found; set mnist.images/labels or LOTLAB_DATA_DIR"
                )
        images, labels = read_mnist_arrays(*paths)
        return ImageSource(images, labels, tuple(mn.get("bounds", (0.0, 1.0))))
    raise ConfigError(f"unknown dataset {dataset!r}")


def _label(source, value):
    """Map a config label onto the source's label type."""
    if isinstance(source, SyntheticSource):
        key = str(value)
        if key not in source.classes:
            raise ConfigError(f"class {value!r} is not among synthetic.classes")
        return key
    return int(value)


def trial_config(cfg, source, refs, n_train, class_a=None, class_b=None) -> TrialConfig:
    solver, epsilon = _solver(cfg)
    a = _label(source, cfg.get("class_a") if class_a is None else class_a)
    b = _label(source, cfg.get("class_b") if class_b is None else class_b)
    try:
        return TrialConfig(
            class_a=a,
            class_b=b,
            references=refs,
            regime=_regime(cfg),
            n_train=n_train,
            n_test=cfg.get("n_test", 200),
            repeats=cfg.get("repeats", 10),
            extraction=cfg.get("extraction", "argmax"),
            solver=solver,
            epsilon=epsilon,
            lda_shrinkage=cfg.get("lda_shrinkage", 0.1),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _output_dir(args, cfg) -> Path:
    out = Path(args.output or cfg.get("output_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run_rows(cfg, source, pairs, seed, jobs):
    rows, reports = [], []
    for pair in pairs:
        for refs in reference_sets(cfg):
            for n_train in _n_train(cfg):
                config = trial_config(cfg, source, refs, n_train, *pair)
                row = {
                    "class_a": config.class_a,
                    "class_b": config.class_b,
                    "pair": f"{config.class_a}-{config.class_b}",
                    "config_hash": config_hash(config, source),
                    "n_train": n_train,
                    "n_refs": config.n_refs(),
                    "regime": cfg.get("regime", "none"),
                }
                try:
                    report = run_binary_trial(config, source, seed=seed, jobs=jobs)
                except (LotError, ArithmeticError, RuntimeError) as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                else:
                    row.update(mean_error=report.mean_error, std_error=report.std_error)
                    reports.append(dict(report.to_json(), pair=row["pair"]))
                rows.append(row)
    return rows, reports


def cmd_classify(args) -> int:
    cfg = load_config(args.config)
    source = build_source(cfg)
    seed = _seed(args, cfg)
    if args.all_pairs:
        labels = cfg.get("pairs")
        if labels is None:
            labels = sorted(source.classes) if isinstance(source, SyntheticSource) else list(range(10))
        pairs = list(itertools.combinations(labels, 2))
    else:
        pairs = [(None, None)]
    rows, reports = _run_rows(cfg, source, pairs, seed, args.jobs)
    out = _output_dir(args, cfg)
    if args.all_pairs:
        write_csv(out / "pairs.csv", PAIR_COLUMNS, rows)
    else:
        write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_json(out / "report.json", {"seed": seed, "config": cfg, "trials": reports})
    failed = [r for r in rows if r.get("error")]
    for r in failed:
        print(f"error: n_train={r['n_train']} n_refs={r['n_refs']}: {r['error']}", file=sys.stderr)
    return 1 if failed else 0


def cmd_embed(args) -> int:
    cfg = load_config(args.config)
    source = build_source(cfg)
    seed = _seed(args, cfg)
    n = cfg.get("n_embed", max(_n_train(cfg)))
    out = _output_dir(args, cfg)
    for k, refs in enumerate(reference_sets(cfg)):
        config = trial_config(cfg, source, refs, n)
        x, y = sample_features(config, source, n, seed)
        columns = ["label"] + [f"f{j}" for j in range(x.shape[1])]
        rows = [dict(zip(columns, [lab] + list(map(float, row)))) for lab, row in zip(y, x)]
        write_csv(out / f"features_set{k}.csv", columns, rows)
    return 0


def _attempt(fn):
    try:
        return fn()
    except InfeasibleBound as exc:
        return {"infeasible": str(exc)}


def cmd_bounds(args) -> int:
    result = {
        "inputs": {
            "w2": args.w2, "delta": args.delta, "epsilon": args.epsilon,
            "r1": args.r1, "r2": args.r2, "m_b": args.m_b,
            "l": args.l, "delta_star": args.delta_star,
        }
    }
    result["transformation_budget"] = _attempt(
        lambda: {"value": transformation_budget(args.w2, args.delta, args.epsilon)}
    )
    try:
        inputs = SeparationInputs(args.w2, args.delta, args.epsilon, args.r1, args.r2, args.m_b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result["shear_class_bounds"] = _attempt(lambda: shear_class_bounds(inputs).to_json())
    l = args.l
    if l is None:
        l = result["transformation_budget"].get("value")
    if l is None:
        result["min_references"] = {"infeasible": "no --l given and the budget is infeasible"}
    else:
        result["min_references"] = _attempt(
            lambda: {"value": min_references(args.delta_star, args.w2, l, args.epsilon), "l": l}
        )
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bounds.json").write_text(text + "\n")
    return 0


def _gaussian(obj, where):
    _check_keys(obj, {"mean", "cov"}, where)
    try:
        return GaussianMeasure(obj["mean"], obj["cov"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def cmd_verify_compat(args) -> int:
    """Analytic and grid-discretized compatibility checks for a shear sweep."""
    from .gaussian import make_compatible_reference

    cfg = load_config(args.config, COMPAT_KEYS)
    template = _gaussian(cfg.get("template", {"mean": [0, 0], "cov": [[1, 0], [0, 1]]}), "template")
    angle = float(cfg.get("basis_angle", 0.0))
    basis = rotation_matrix(np.deg2rad(angle))
    reference = make_compatible_reference(
        template, basis, cfg.get("reference_diag", [1.0, 1.0]), cfg.get("reference_shift")
    )
    side = int(cfg.get("side", 28))
    bounds = tuple(cfg.get("bounds", (-1.0, 1.0)))
    extraction = cfg.get("extraction", "barycentric")
    rows = []
    for obj in cfg.get("shears", []):
        _check_keys(obj, SHEAR_KEYS, "shear")
        row = {"lambda1": obj.get("lambda1"), "lambda2": obj.get("lambda2"),
               "theta": obj.get("theta", angle), "shift": list(obj.get("shift", (0.0, 0.0)))}
        try:
            s = shear_to_affine(ShearParams(row["lambda1"], row["lambda2"], row["theta"], row["shift"]))
            row["residual"] = compatibility_residual(reference, template, s)
            w2_lot, w2 = discretized_compatibility(template, reference, s, side, bounds, extraction)
            row.update(w2_lot=w2_lot, w2=w2, rel_error=abs(w2_lot - w2) / w2 if w2 > 0 else abs(w2_lot))
        except (LotError, TypeError, ArithmeticError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    payload = {"template": cfg.get("template"), "basis_angle": angle, "side": side,
               "bounds": list(bounds), "extraction": extraction, "rows": rows}
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.output or cfg.get("output_dir"):
        (_output_dir(args, cfg) / "compat.json").write_text(text + "\n")
    return 1 if any("error" in r for r in rows) else 0


# ---------------------------------------------------------------------------
# Image files for the shear command
# ---------------------------------------------------------------------------


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    if path.suffix == ".pgm":
        return read_pgm(path)
    raise ConfigError(f"unsupported image format {path.suffix!r}; use .pgm or .npy")


def write_image(path, image) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, np.asarray(image, dtype=np.float64))
    elif path.suffix == ".pgm":
        write_pgm(path, image)
    else:
        raise ConfigError(f"unsupported image format {path.suffix!r}; use .pgm or .npy")


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit greymap."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ConfigError(f"{path}: only binary P5 greymaps are supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ConfigError(f"{path}: 16-bit greymaps are not supported")
    body = raw[pos + 1 : pos + 1 + width * height]
    if len(body) < width * height:
        raise ConfigError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).astype(np.float64)


def write_pgm(path, image) -> None:
    """Values are rounded and clipped to [0, 255]."""
    px = np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + px.tobytes())


def cmd_shear(args) -> int:
    img = read_image(args.input)
    try:
        transform = shear_to_affine(ShearParams(args.lambda1, args.lambda2, args.theta, tuple(args.shift)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.inverse:
        transform = transform.inverse()
    write_image(args.output_image, shear_image(img, transform))
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="JSON config (schema 1)")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for repeats")
    p.add_argument("--output", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lotlab", description="Linear optimal transport experiments.")
    parser.add_argument("--version", action="version", version=f"lotlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="repeated binary classification trials")
    _common(p)
    p.add_argument("--all-pairs", action="store_true", help="sweep every pair of classes")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("embed", help="write LOT feature CSVs")
    _common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("bounds", help="evaluate the separation bound formulas")
    _common(p, config_required=False)
    p.add_argument("--w2", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--r1", type=float, default=0.0)
    p.add_argument("--r2", type=float, default=0.0)
    p.add_argument("--m-b", dest="m_b", type=float, default=0.0)
    p.add_argument("--l", type=float, default=None, help="transformation bound L (default: budget)")
    p.add_argument("--delta-star", dest="delta_star", type=float, default=0.0)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify-compat", help="compatibility residuals over a shear sweep")
    _common(p)
    p.set_defaults(func=cmd_verify_compat)

    p = sub.add_parser("shear", help="shear an image file (.pgm or .npy)")
    p.add_argument("input")
    p.add_argument("output_image")
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.0, help="degrees")
    p.add_argument("--shift", type=float, nargs=2, default=(0.0, 0.0))
    p.add_argument("--inverse", action="store_true", help="apply the inverse shear")
    p.set_defaults(func=cmd_shear)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lotlab: config error: {exc}", file=sys.stderr)
        return 2
    except (LotError, OSError) as exc:
        print(f"lotlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
