"""Seeded Monte-Carlo protocols for noisy transforms and corrupted GPA problems.

Every trial draws from ``numpy.random.default_rng([seed, ...indices])`` so a
trial's randomness depends only on the root seed and its own indices; trial
order and parallel execution cannot change the results.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from transync.errors import ConfigError
from transync.procrustes import (
    MEAN,
    GpaMethod,
    PointCloud,
    apply,
    common_shape_error,
    gpa_iterative_mean,
    gpa_reference,
    gpa_sync,
    read_shape_set,
    shape_error,
)
from transync.simulate.generate import (
    ETA_MAX,
    RANGE_SLACK,
    TRANSLATION_RANGE_TABLE,
    TRANSLATION_RANGE_TEXT,
    add_gaussian_noise,
    drop_points,
    gen_ground_truth,
    gen_shapes,
    scramble_index,
    transform_error,
)
from transync.sync import reconstruct_pairwise, synchronise
from transync.transform import ScaleMode, Transform, TransformClass, compose, invert

__all__ = [
    "GppConfig",
    "NoiseConfig",
    "ResultRow",
    "parse_config",
    "run_experiment",
    "run_gpp_experiment",
    "run_noise_experiment",
    "write_result_table",
]

DEFAULT_SIGMA_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
ALL_CLASSES = tuple(TransformClass)


@dataclass(frozen=True)
class ResultRow:
    grid_value: float
    method_or_signal: str
    mean_error: float
    std_error: float
    trials: int


@dataclass(frozen=True)
class NoiseConfig:
    """Additive-noise sweep over exactly one of ``sigma``, ``k`` or ``d``."""

    vary: str
    grid: tuple[float, ...]
    classes: tuple[TransformClass, ...] = ALL_CLASSES
    k: int = 30
    d: int = 3
    sigma: float = 0.5
    ground_truths: int = 100
    noise_draws: int = 20
    seed: int = 0
    scale_mode: ScaleMode = ScaleMode.GEOMETRIC
    translation_range: tuple[float, float] = TRANSLATION_RANGE_TEXT

    def point(self, value) -> tuple[int, int, float]:
        k, d, sigma = self.k, self.d, self.sigma
        if self.vary == "k":
            k = int(value)
        elif self.vary == "d":
            d = int(value)
        else:
            sigma = float(value)
        return k, d, sigma


@dataclass(frozen=True)
class GppConfig:
    """GPA under missing landmarks (``axis='eta'``) or wrong correspondences (``axis='nu'``)."""

    axis: str
    grid: tuple[float, ...]
    k: int = 30
    draws: int = 500
    methods: tuple[GpaMethod, ...] = tuple(GpaMethod)
    cls: TransformClass = TransformClass.SIMILARITY
    scale_mode: ScaleMode = ScaleMode.GEOMETRIC
    seed: int = 0
    shape_source: Mapping[str, Any] = field(default_factory=lambda: {"kind": "synthetic"})
    tol: float = 1e-8
    max_iter: int = 100


def _summarise(value, label, errors) -> ResultRow:
    e = np.asarray(errors, dtype=np.float64)
    return ResultRow(value, label, float(e.mean()), float(e.std()), int(e.size))


def run_noise_experiment(config: NoiseConfig) -> list[ResultRow]:
    """Mean pairwise-set error of noisy and synchronised sets against ground truth.

    For every grid value and class, ``ground_truths`` consistent sets are
    drawn and each is perturbed ``noise_draws`` times.  Rows are labelled
    ``"<class>:noisy"`` and ``"<class>:synced"``.
    """
    rows = []
    for gi, value in enumerate(config.grid):
        k, d, sigma = config.point(value)
        for cls in config.classes:
            ci = ALL_CLASSES.index(cls)
            noisy_err, synced_err = [], []
            for g in range(config.ground_truths):
                truth = gen_ground_truth(
                    k, d, cls, np.random.default_rng([config.seed, gi, ci, g]),
                    translation_range=config.translation_range,
                )
                for r in range(config.noise_draws):
                    noisy = add_gaussian_noise(
                        truth.pairwise, sigma, np.random.default_rng([config.seed, gi, ci, g, r])
                    )
                    synced = reconstruct_pairwise(synchronise(noisy, cls, config.scale_mode))
                    noisy_err.append(transform_error(noisy, truth.pairwise))
                    synced_err.append(transform_error(synced, truth.pairwise))
            rows.append(_summarise(value, f"{cls.value}:noisy", noisy_err))
            rows.append(_summarise(value, f"{cls.value}:synced", synced_err))
    return rows


def load_shape_source(source: Mapping[str, Any], seed: int = 0) -> list[PointCloud]:
    kind = source.get("kind", "synthetic")
    if kind == "synthetic":
        return gen_shapes(
            int(source.get("K", 100)),
            int(source.get("n", 98)),
            int(source.get("d", 2)),
            float(source.get("deform_level", 3)),
            float(source.get("noise_level", 3)),
            np.random.default_rng(int(source.get("seed", seed))),
        )
    if kind == "directory":
        return read_shape_set(source["path"])
    raise ConfigError(f"unknown shape source kind {kind!r}", "shape_source")


class _PairScrambler:
    """Correspondence hook: one fixed random row reordering per ordered pair."""

    def __init__(self, nu: float, seed_prefix: Sequence[int]):
        self.nu = nu
        self.prefix = list(seed_prefix)
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def __call__(self, i, j, x, y):
        key = (i, j)
        if key not in self._cache:
            rng = np.random.default_rng(self.prefix + [i, j - MEAN])
            self._cache[key] = scramble_index(y.shape[0], self.nu, rng)
        return x, y[self._cache[key]]


def _regauge(transforms: Sequence[Transform], index: int = 0) -> list[Transform]:
    """Express all transforms in the frame of shape ``index``."""
    back = invert(transforms[index])
    return [compose(t, back) for t in transforms]


def _evaluate(transforms, originals) -> float:
    mapped = [apply(t, s) for t, s in zip(_regauge(transforms), originals)]
    if all(s.is_full for s in mapped):
        return shape_error(mapped)
    return common_shape_error(mapped)


def run_gpp_draw(config: GppConfig, pool: Sequence[PointCloud], gi: int, t: int) -> dict[GpaMethod, float]:
    """One random draw: pick ``k`` shapes, corrupt, align with each method, score on originals."""
    value = config.grid[gi]
    rng = np.random.default_rng([config.seed, gi, t])
    subset = rng.choice(len(pool), size=config.k, replace=False)
    originals = [pool[s] for s in subset]
    ref = int(rng.integers(config.k))
    init = int(rng.integers(config.k))
    corrupt = None
    shapes = originals
    if config.axis == "eta":
        shapes = drop_points(originals, float(value), rng)
    elif float(value) > 0:
        corrupt = _PairScrambler(float(value), [config.seed, gi, t, 1])
    out = {}
    for method in config.methods:
        if method is GpaMethod.REFERENCE:
            res = gpa_reference(shapes, ref, config.cls, corrupt=corrupt)
        elif method is GpaMethod.ITERATIVE_MEAN:
            res = gpa_iterative_mean(
                shapes, config.cls, config.tol, config.max_iter, init=init, corrupt=corrupt
            )
        else:
            res = gpa_sync(shapes, config.cls, config.scale_mode, corrupt=corrupt)
        out[method] = _evaluate(res.transforms, originals)
    return out


def run_gpp_experiment(config: GppConfig, pool: Sequence[PointCloud] | None = None) -> list[ResultRow]:
    """Mean shape error per grid level and method over ``draws`` random draws.

    Errors are measured on the uncorrupted shapes mapped by the recovered
    transforms, after re-expressing every method's output in shape 0's frame.
    """
    if pool is None:
        pool = load_shape_source(config.shape_source, config.seed)
    if len(pool) < config.k:
        raise ConfigError(f"shape source has {len(pool)} shapes, fewer than k={config.k}", "k")
    rows = []
    for gi, value in enumerate(config.grid):
        errors: dict[GpaMethod, list[float]] = {m: [] for m in config.methods}
        for t in range(config.draws):
            for m, e in run_gpp_draw(config, pool, gi, t).items():
                errors[m].append(e)
        for m in config.methods:
            rows.append(_summarise(value, m.value, errors[m]))
    return rows


# -- configuration ---------------------------------------------------------


def _get(obj, key, conv, default=None, required=False):
    if key not in obj:
        if required:
            raise ConfigError("missing required field", key)
        return default
    try:
        return conv(obj[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value {obj[key]!r} ({exc})", key) from exc


def _grid(obj, allowed) -> tuple[str, tuple[float, ...]]:
    grid = obj.get("grid")
    if not isinstance(grid, Mapping) or not grid:
        raise ConfigError(f"must map one of {sorted(allowed)} to a list of values", "grid")
    if len(grid) != 1:
        raise ConfigError(f"exactly one varying parameter allowed, got {sorted(grid)}", "grid")
    (name, values), = grid.items()
    if name not in allowed:
        raise ConfigError(f"cannot vary {name!r}; choose one of {sorted(allowed)}", "grid")
    try:
        values = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"values must be numbers ({exc})", "grid") from exc
    if not values:
        raise ConfigError("grid values must be non-empty", "grid")
    return name, values


def _classes(value) -> tuple[TransformClass, ...]:
    if value in (None, "all"):
        return ALL_CLASSES
    if isinstance(value, str):
        return (TransformClass(value),)
    return tuple(TransformClass(v) for v in value)


def _translation_range(value) -> tuple[float, float]:
    if value in (None, "text"):
        return TRANSLATION_RANGE_TEXT
    if value == "table":
        return TRANSLATION_RANGE_TABLE
    lo, hi = (float(v) for v in value)
    if not lo < hi:
        raise ValueError("lower bound must be below upper bound")
    return lo, hi


def parse_config(obj: Mapping[str, Any]) -> NoiseConfig | GppConfig:
    """Validate an experiment configuration mapping.

    Raises
    ------
    ConfigError
        With the offending field name.
    """
    if not isinstance(obj, Mapping):
        raise ConfigError("configuration must be a JSON object")
    experiment = obj.get("experiment")
    seed = _get(obj, "seed", int, 0)
    scale_mode = _get(obj, "scale_mode", ScaleMode, ScaleMode.GEOMETRIC)
    if experiment == "noise":
        vary, grid = _grid(obj, {"sigma", "k", "d"})
        trials = obj.get("trials", {})
        if isinstance(trials, Mapping):
            G = _get(trials, "ground_truths", int, 100)
            R = _get(trials, "noise_draws", int, 20)
        else:
            G = _get(obj, "trials", int)
            R = _get(obj, "noise_draws", int, 20)
        cfg = NoiseConfig(
            vary=vary,
            grid=grid,
            classes=_get(obj, "class", _classes, ALL_CLASSES),
            k=_get(obj, "k", int, 30),
            d=_get(obj, "d", int, 3),
            sigma=_get(obj, "sigma", float, 0.5),
            ground_truths=G,
            noise_draws=R,
            seed=seed,
            scale_mode=scale_mode,
            translation_range=_get(obj, "translation_range", _translation_range, TRANSLATION_RANGE_TEXT),
        )
        ks = [cfg.point(v)[0] for v in grid]
        ds = [cfg.point(v)[1] for v in grid]
        sigmas = [cfg.point(v)[2] for v in grid]
        if min(ks) < 2:
            raise ConfigError("k must be >= 2", "k" if vary != "k" else "grid")
        if min(ds) < 1:
            raise ConfigError("d must be >= 1", "d" if vary != "d" else "grid")
        if min(sigmas) < 0:
            raise ConfigError("sigma must be >= 0", "sigma" if vary != "sigma" else "grid")
        if G < 1 or R < 1:
            raise ConfigError("trial counts must be positive", "trials")
        return cfg
    if experiment == "gpp":
        axis, grid = _grid(obj, {"eta", "nu"})
        upper = ETA_MAX if axis == "eta" else 1.0
        if min(grid) < 0 or max(grid) > upper + RANGE_SLACK:
            raise ConfigError(f"{axis} values must lie in [0, {upper}]", "grid")
        methods = obj.get("methods", [m.value for m in GpaMethod])
        if isinstance(methods, str):
            methods = [methods]
        try:
            methods = tuple(GpaMethod(m) for m in methods)
        except ValueError as exc:
            raise ConfigError(str(exc), "methods") from exc
        cls = _get(obj, "class", TransformClass, TransformClass.SIMILARITY)
        if not cls.is_projected:
            raise ConfigError("GPA needs similarity, euclidean or rigid", "class")
        source = obj.get("shape_source", {"kind": "synthetic"})
        if not isinstance(source, Mapping) or source.get("kind", "synthetic") not in ("synthetic", "directory"):
            raise ConfigError("expected {kind: synthetic|directory, ...}", "shape_source")
        if source.get("kind") == "directory" and "path" not in source:
            raise ConfigError("directory source needs a path", "shape_source")
        draws = _get(obj, "trials", int, 500)
        k = _get(obj, "k", int, 30)
        if draws < 1:
            raise ConfigError("must be positive", "trials")
        if k < 2:
            raise ConfigError("must be >= 2", "k")
        return GppConfig(
            axis=axis,
            grid=grid,
            k=k,
            draws=draws,
            methods=methods,
            cls=cls,
            scale_mode=scale_mode,
            seed=seed,
            shape_source=dict(source),
            tol=_get(obj, "tol", float, 1e-8),
            max_iter=_get(obj, "max_iter", int, 100),
        )
    raise ConfigError(f"unknown experiment {experiment!r}; expected 'noise' or 'gpp'", "experiment")


def run_experiment(config: NoiseConfig | GppConfig) -> list[ResultRow]:
    if isinstance(config, NoiseConfig):
        return run_noise_experiment(config)
    return run_gpp_experiment(config)


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def format_result_table(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["grid_value", "method_or_signal", "mean_error", "std_error", "trials"])
    for r in rows:
        w.writerow([_fmt(r.grid_value), r.method_or_signal, _fmt(r.mean_error), _fmt(r.std_error), r.trials])
    return buf.getvalue()


def write_result_table(rows: Sequence[ResultRow], path) -> None:
    Path(path).write_text(format_result_table(rows), encoding="utf-8")
