"""Random ground truth, corruption models and error measures for simulations."""

# ruff: noqa: N806
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from transync.errors import ContractError, InfeasibleDrawError
from transync.procrustes import PointCloud
from transync.sync import PairwiseTransformSet
from transync.transform import Kind, Transform, TransformClass

__all__ = [
    "DEFORM_STEP",
    "GroundTruth",
    "NOISE_STEP",
    "NoiseSpec",
    "TRANSLATION_RANGE_TABLE",
    "TRANSLATION_RANGE_TEXT",
    "add_gaussian_noise",
    "drop_points",
    "gen_ground_truth",
    "gen_shapes",
    "round_half_away",
    "scramble_correspondences",
    "scramble_index",
    "scramble_rows",
    "shape_template",
    "transform_error",
]

TRANSLATION_RANGE_TEXT = (-2.5, 2.5)
TRANSLATION_RANGE_TABLE = (0.5, 1.5)
SCALE_RANGE = (0.5, 1.5)
ETA_MAX = 0.7
#: Slack on range checks so grids built with ``np.arange`` pass.
RANGE_SLACK = 1e-12
LINEAR_NOISE_STD = 0.1
#: Generated absolute transforms at or above this condition number are redrawn.
GT_COND_LIMIT = 1e6

#: Warp amplitude and landmark jitter per unit of deformation / noise level.
DEFORM_STEP = 0.04
NOISE_STEP = 0.01


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    eta: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ContractError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 <= self.eta <= ETA_MAX + RANGE_SLACK:
            raise ContractError(f"eta must lie in [0, 0.7], got {self.eta}")
        if not 0 <= self.nu <= 1:
            raise ContractError(f"nu must lie in [0, 1], got {self.nu}")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    absolute: tuple[Transform, ...]
    pairwise: PairwiseTransformSet
    cls: TransformClass
    seed: int | None = None


def _random_orthogonal(d: int, rng: np.random.Generator, proper: bool) -> NDArray[np.float64]:
    while True:
        G = rng.standard_normal((d, d))
        if np.linalg.cond(G) < GT_COND_LIMIT:
            break
    U, _, Vt = np.linalg.svd(G)
    if proper:
        U[:, -1] *= np.sign(np.linalg.det(U @ Vt))
    return U @ Vt


def _sample_absolute(d, cls, rng, translation_range):
    scaled = cls in (TransformClass.LINEAR, TransformClass.AFFINE, TransformClass.SIMILARITY)
    s = rng.uniform(*SCALE_RANGE) if scaled else 1.0
    Q = _random_orthogonal(d, rng, proper=cls is TransformClass.RIGID)
    if cls in (TransformClass.LINEAR, TransformClass.AFFINE):
        N = np.eye(d) + rng.normal(0.0, LINEAR_NOISE_STD, (d, d))
    else:
        N = np.eye(d)
    A = s * Q @ N
    if cls is TransformClass.LINEAR:
        return Transform(d, Kind.LINEAR, A)
    t = rng.uniform(*translation_range, size=d)
    return Transform.from_parts(A, t)


def gen_ground_truth(
    k: int,
    d: int,
    cls: TransformClass | str,
    rng: np.random.Generator | int | None = None,
    *,
    translation_range: tuple[float, float] = TRANSLATION_RANGE_TEXT,
    max_retries: int = 100,
) -> GroundTruth:
    """Random absolute transforms ``s Q N`` (+ translation) and their consistent pairwise set.

    Scale is uniform on (0.5, 1.5) except for Euclidean and Rigid (1);
    ``Q`` is the orthogonal factor of a Gaussian matrix (a rotation for
    Rigid); ``N = I + eps`` with ``eps ~ N(0, 0.1^2)`` for Linear and Affine
    only; Linear transforms carry no translation.
    """
    if k < 2 or d < 1:
        raise ContractError(f"need k >= 2 and d >= 1, got k={k}, d={d}")
    cls = TransformClass(cls)
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = _rng(rng)
    absolute = []
    for _ in range(k):
        for _attempt in range(max_retries):
            t = _sample_absolute(d, cls, gen, translation_range)
            if np.linalg.cond(t.linear) < GT_COND_LIMIT:
                break
        else:
            raise InfeasibleDrawError(f"no well-conditioned transform after {max_retries} draws")
        absolute.append(t)
    absolute = tuple(absolute)
    return GroundTruth(absolute, PairwiseTransformSet.from_absolute(absolute, cls), cls, seed)


def add_gaussian_noise(
    s: PairwiseTransformSet, sigma: float, rng: np.random.Generator | int | None = None
) -> PairwiseTransformSet:
    """Add i.i.d. ``N(0, sigma^2)`` to every off-diagonal block entry.

    Homogeneous blocks keep their last column untouched.
    """
    if not sigma >= 0:
        raise ContractError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return s
    gen = _rng(rng)
    noise = gen.normal(0.0, sigma, size=s.blocks.shape)
    idx = np.arange(s.k)
    noise[idx, idx] = 0.0
    if s.kind is Kind.HOMOGENEOUS:
        noise[..., :, -1] = 0.0
    return s.with_blocks(s.blocks + noise)


def transform_error(a: PairwiseTransformSet | NDArray, b: PairwiseTransformSet | NDArray) -> float:
    """Mean blockwise Frobenius distance ``sum_ij ||A_ij - B_ij||_F / k^2``.

    Accepts pairwise sets or raw ``(k, k, m, m)`` block arrays.
    """
    if isinstance(a, PairwiseTransformSet) and isinstance(b, PairwiseTransformSet):
        if (a.k, a.dim, a.kind) != (b.k, b.dim, b.kind):
            raise ContractError("transform sets differ in k, dim or kind")
    A = a.blocks if isinstance(a, PairwiseTransformSet) else np.asarray(a, dtype=np.float64)
    B = b.blocks if isinstance(b, PairwiseTransformSet) else np.asarray(b, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 4 or A.shape[0] != A.shape[1]:
        raise ContractError(f"incompatible block arrays {A.shape} and {B.shape}")
    k = A.shape[0]
    diff = A - B
    return float(np.sqrt(np.einsum("ijab,ijab->ij", diff, diff)).sum() / k**2)


def drop_points(
    shapes: Sequence[PointCloud],
    eta: float,
    rng: np.random.Generator | int | None = None,
    *,
    max_attempts: int = 1000,
) -> list[PointCloud]:
    """Mark each landmark missing with probability ``eta``.

    The whole draw is repeated until every pair of shapes (and every shape
    on its own) keeps at least ``d`` common landmarks.
    """
    if not 0 <= eta <= ETA_MAX + RANGE_SLACK:
        raise ContractError(f"eta must lie in [0, 0.7], got {eta}")
    if not shapes:
        return []
    gen = _rng(rng)
    base = np.stack([s.present for s in shapes])
    d = shapes[0].d
    for _ in range(max_attempts):
        present = base & (gen.random(base.shape) >= eta)
        counts = present.astype(np.int64) @ present.T.astype(np.int64)
        if counts.min() >= d:
            return [s.with_mask(m) for s, m in zip(shapes, present)]
    raise InfeasibleDrawError(f"eta={eta}: no feasible missing-point draw in {max_attempts} attempts")


def round_half_away(x: float) -> int:
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


def scramble_correspondences(
    x: PointCloud, y: PointCloud, nu: float, rng: np.random.Generator | int | None = None
) -> tuple[PointCloud, PointCloud]:
    """Randomly reorder a proportion ``nu`` of ``y``'s rows; ``x`` is returned as is."""
    if not 0 <= nu <= 1:
        raise ContractError(f"nu must lie in [0, 1], got {nu}")
    if not (x.is_full and y.is_full):
        raise ContractError("scrambling expects complete clouds")
    return x, PointCloud(scramble_rows(y.points, nu, _rng(rng)))


def scramble_index(n: int, nu: float, rng: np.random.Generator) -> NDArray[np.intp]:
    """Row order that randomly permutes ``round(nu * n)`` randomly chosen rows."""
    m = round_half_away(nu * n)
    order = np.arange(n)
    if m >= 2:
        idx = rng.choice(n, size=m, replace=False)
        order[idx] = idx[rng.permutation(m)]
    return order


def scramble_rows(points: NDArray[np.float64], nu: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Array form of :func:`scramble_correspondences` for one cloud."""
    points = np.asarray(points, dtype=np.float64)
    return points[scramble_index(points.shape[0], nu, rng)]


def shape_template(n: int, d: int = 2) -> NDArray[np.float64]:
    """Fixed closed outline (fish-like in its first two coordinates) sampled at ``n`` landmarks."""
    theta = 2 * np.pi * np.arange(n) / n
    cols = [
        np.cos(theta) + 0.35 * np.cos(2 * theta),
        0.55 * np.sin(theta) - 0.1 * np.sin(2 * theta) + 0.05 * np.sin(3 * theta),
    ]
    for a in range(2, d):
        cols.append(0.3 * np.sin(a * theta + a))
    return np.column_stack(cols[:d])


def _warp(points, rng, amplitude, modes=6, bandwidth=1.5):
    n, d = points.shape
    coef = rng.standard_normal((modes, d))
    freq = rng.normal(0.0, bandwidth, (modes, d))
    phase = rng.uniform(0.0, 2 * np.pi, modes)
    field = np.sin(points @ freq.T + phase) @ coef / np.sqrt(modes)
    return points + amplitude * field


def gen_shapes(
    K: int,
    n: int,
    d: int = 2,
    deform_level: float = 3,
    noise_level: float = 3,
    rng: np.random.Generator | int | None = None,
) -> list[PointCloud]:
    """``K`` smooth random deformations of :func:`shape_template` with landmark jitter.

    The warp amplitude is ``DEFORM_STEP * deform_level`` and the jitter
    standard deviation ``NOISE_STEP * noise_level``.  Landmark order encodes
    correspondence.  Random draws do not depend on the levels, so a fixed
    seed gives displacements that scale linearly with ``deform_level``.
    """
    if K < 1 or n < d or d < 1:
        raise ContractError(f"need K >= 1 and n >= d >= 1, got K={K}, n={n}, d={d}")
    if deform_level < 0 or noise_level < 0:
        raise ContractError("deformation and noise levels must be non-negative")
    gen = _rng(rng)
    template = shape_template(n, d)
    shapes = []
    for _ in range(K):
        warped = _warp(template, gen, DEFORM_STEP * deform_level)
        jitter = gen.standard_normal((n, d)) * (NOISE_STEP * noise_level)
        shapes.append(PointCloud(warped + jitter))
    return shapes
