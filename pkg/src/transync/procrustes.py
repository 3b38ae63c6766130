"""Absolute orientation and generalised Procrustes alignment of landmark clouds.

Clouds are ``n x d`` arrays of row-vector landmarks with a presence mask;
correspondences are given by row order.  Every pairwise alignment uses only
the landmarks present in both clouds.
"""

# ruff: noqa: N806
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from transync import kernels
from transync.errors import (
    ContractError,
    DegenerateCloudError,
    UnderdeterminedError,
)
from transync.sync import PairwiseTransformSet, SyncResult, synchronise
from transync.transform import Kind, ScaleMode, Transform, TransformClass, identity

__all__ = [
    "GpaMethod",
    "GpaOutcome",
    "PointCloud",
    "apply",
    "common_shape_error",
    "gpa_iterative_mean",
    "gpa_reference",
    "gpa_sync",
    "read_point_cloud",
    "read_shape_set",
    "shape_error",
    "solve_aop",
    "solve_aop_batch",
    "write_point_cloud",
    "write_shape_set",
]

#: Index used for the evolving mean shape in a correspondence hook.
MEAN = -1

#: ``corrupt(i, j, x, y) -> (x, y)`` lets a caller perturb each pairwise
#: problem independently; ``j == MEAN`` when the target is the mean shape.
CorruptHook = Callable[[int, int, NDArray[np.float64], NDArray[np.float64]], tuple]


class GpaMethod(str, enum.Enum):
    REFERENCE = "reference"
    ITERATIVE_MEAN = "itermean"
    SYNC = "sync"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``n`` landmarks in ``d`` dimensions with a per-landmark presence mask."""

    points: NDArray[np.float64]
    present: NDArray[np.bool_] | None = None

    def __post_init__(self):
        P = np.array(self.points, dtype=np.float64)
        if P.ndim != 2:
            raise ContractError(f"points must be an n x d array, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ContractError("point coordinates must be finite")
        if self.present is None:
            mask = np.ones(P.shape[0], dtype=bool)
        else:
            mask = np.array(self.present, dtype=bool).reshape(-1)
            if mask.shape[0] != P.shape[0]:
                raise ContractError(f"mask length {mask.shape[0]} != number of points {P.shape[0]}")
        P.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "present", mask)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_full(self) -> bool:
        return bool(self.present.all())

    @classmethod
    def _trusted(cls, points: NDArray[np.float64], present: NDArray[np.bool_]) -> PointCloud:
        """Skip validation for arrays already known to be finite and well shaped."""
        self = object.__new__(cls)
        points.setflags(write=False)
        present.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "present", present)
        return self

    def with_mask(self, present: ArrayLike) -> PointCloud:
        return PointCloud(self.points, present)

    def full(self) -> PointCloud:
        return PointCloud(self.points)


@dataclass(frozen=True, eq=False)
class GpaOutcome:
    """Result of a multi-shape alignment.

    ``aligned[i]`` is ``apply(transforms[i], shapes[i])``.  ``error`` is the
    shape error of the aligned clouds, evaluated over the landmarks present
    in all of them (all landmarks when masks are full).
    """

    aligned: tuple[PointCloud, ...]
    transforms: tuple[Transform, ...]
    method: GpaMethod
    error: float
    reference: int = 0
    iterations: int = 0
    converged: bool = True
    mean_changes: tuple[float, ...] = ()
    sync: SyncResult | None = field(default=None, repr=False)


def apply(t: Transform, x: PointCloud) -> PointCloud:
    """Map every row ``p`` of ``x`` to ``p @ A + t``; the mask is carried over."""
    if t.dim != x.d:
        raise ContractError(f"{t.dim}-D transform cannot act on {x.d}-D points")
    return PointCloud(x.points @ t.linear + t.translation, x.present)


def _label(labels, q):
    if labels is None:
        return None
    return labels(q) if callable(labels) else labels[q]


def _check_pairs(count, ssx, ssy, mx, my, d, labels) -> None:
    few = np.flatnonzero(count < d)
    if few.size:
        q = few[0]
        raise UnderdeterminedError(f"only {int(count[q])} common points, need at least {d}", _label(labels, q))
    floor_x = 1e-24 * count * (1.0 + np.einsum("pd,pd->p", mx, mx))
    floor_y = 1e-24 * count * (1.0 + np.einsum("pd,pd->p", my, my))
    flat = np.flatnonzero((ssx <= floor_x) | (ssy <= floor_y))
    if flat.size:
        label = _label(labels, flat[0])
        where = f" for pair {label}" if label is not None else ""
        raise DegenerateCloudError(f"common points are coincident{where}")


def _nearest_orthogonal(C: NDArray[np.float64], proper: bool) -> NDArray[np.float64]:
    """Stacked maximisers of ``trace(R^T C)`` over O(d), or SO(d) when ``proper``."""
    if C.shape[-1] == 2:
        # closed form: best rotation and best reflection, keep the larger trace
        a, b, c, e = C[:, 0, 0], C[:, 0, 1], C[:, 1, 0], C[:, 1, 1]
        rot = np.arctan2(b - c, a + e)
        R = np.empty_like(C)
        R[:, 0, 0] = R[:, 1, 1] = np.cos(rot)
        R[:, 0, 1] = np.sin(rot)
        R[:, 1, 0] = -R[:, 0, 1]
        if not proper:
            flip = np.hypot(a - e, b + c) > np.hypot(a + e, b - c)
            if flip.any():
                ref = np.arctan2(b + c, a - e)[flip]
                F = np.empty((ref.size, 2, 2))
                F[:, 0, 0] = np.cos(ref)
                F[:, 1, 1] = -F[:, 0, 0]
                F[:, 0, 1] = F[:, 1, 0] = np.sin(ref)
                R[flip] = F
        return R
    U, _, Vt = np.linalg.svd(C)
    if proper:
        sign = np.sign(np.linalg.det(U @ Vt))
        U = U.copy()
        U[:, :, -1] *= sign[:, None]
    return U @ Vt


def _aop_blocks(count, mx, my, cross, ssx, ssy, d, cls, labels=None) -> NDArray[np.float64]:
    _check_pairs(count, ssx, ssy, mx, my, d, labels)
    R = _nearest_orthogonal(cross, cls is TransformClass.RIGID)
    if cls is TransformClass.SIMILARITY:
        s = np.sqrt(ssy / ssx)
    else:
        s = np.ones_like(ssx)
    sR = s[:, None, None] * R
    T = np.zeros((count.shape[0], d + 1, d + 1))
    T[:, :d, :d] = sR
    T[:, d, :d] = my - (mx[:, None, :] @ sR)[:, 0]
    T[:, d, d] = 1.0
    return T


def _aop_class(cls) -> TransformClass:
    cls = TransformClass(cls)
    if not cls.is_projected:
        raise ContractError(f"AOP supports similarity, euclidean or rigid, not {cls.value}")
    return cls


def solve_aop_batch(
    X: NDArray[np.float64],
    Y: NDArray[np.float64],
    mask: NDArray[np.bool_],
    cls: TransformClass | str = TransformClass.SIMILARITY,
    labels: Sequence | None = None,
) -> NDArray[np.float64]:
    """Homogeneous AOP solutions for a batch of ``p`` cloud pairs.

    ``X``, ``Y`` are ``(p, n, d)`` and ``mask`` is ``(p, n)``; returns
    ``(p, d+1, d+1)`` matrices.  ``labels[q]`` names pair ``q`` in errors.
    """
    cls = _aop_class(cls)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    M = np.ascontiguousarray(mask, dtype=np.uint8)
    return _aop_blocks(*kernels.pair_moments(X, Y, M), X.shape[2], cls, labels)


def solve_aop(x: PointCloud, y: PointCloud, cls: TransformClass | str = TransformClass.SIMILARITY) -> Transform:
    """Closed-form alignment ``x @ T ~ y`` over the landmarks present in both clouds.

    Centroids are removed, the orthogonal part comes from the SVD of the
    cross-covariance ``Xc^T Yc`` (with the determinant fixed to +1 for rigid
    alignments) and the similarity scale is the symmetric estimate
    ``sqrt(sum |yc|^2 / sum |xc|^2)``, so swapping ``x`` and ``y`` inverts it.

    Raises
    ------
    UnderdeterminedError
        Fewer than ``d`` common landmarks.
    DegenerateCloudError
        The common landmarks of either cloud coincide.
    """
    if x.points.shape != y.points.shape:
        raise ContractError(f"cloud shapes differ: {x.points.shape} vs {y.points.shape}")
    T = solve_aop_batch(x.points[None], y.points[None], (x.present & y.present)[None], cls)
    return Transform(x.d, Kind.HOMOGENEOUS, T[0])


def _stack(shapes: Sequence[PointCloud]) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    if len(shapes) < 2:
        raise ContractError(f"need at least two shapes, got {len(shapes)}")
    n, d = shapes[0].points.shape
    for s in shapes:
        if s.points.shape != (n, d):
            raise ContractError("all shapes must have the same number of landmarks and dimension")
    P = np.stack([s.points for s in shapes])
    M = np.stack([s.present for s in shapes])
    return P, M


def _pair_batch(P, M, pairs, corrupt):
    """Stack pairwise problems ``(source, target)``, running the correspondence hook when given."""
    src = [i for i, _ in pairs]
    dst = [j for _, j in pairs]
    X, Y, mask = P[src], P[dst], M[src] & M[dst]
    if corrupt is not None:
        for q, (i, j) in enumerate(pairs):
            X[q], Y[q] = corrupt(i, j, X[q], Y[q])
    return X, Y, mask


def common_shape_error(aligned: Sequence[PointCloud]) -> float:
    """Shape error over the landmarks present in every cloud (NaN if none)."""
    P, M = _stack(aligned)
    common = M.all(axis=0)
    if not common.any():
        return float("nan")
    return _shape_error_array(P[:, common])


def _outcome(shapes, transforms, method, **extra) -> GpaOutcome:
    P, M = _stack(shapes)
    d = P.shape[2]
    T = np.stack([t.matrix for t in transforms])
    A = P @ T[:, :d, :d] + T[:, None, d, :d]
    common = M.all(axis=0)
    error = _shape_error_array(A[:, common]) if common.any() else float("nan")
    return GpaOutcome(
        aligned=tuple(PointCloud._trusted(a, m) for a, m in zip(A, M)),
        transforms=tuple(transforms),
        method=method,
        error=error,
        **extra,
    )


def gpa_reference(
    shapes: Sequence[PointCloud],
    ref: int = 0,
    cls: TransformClass | str = TransformClass.SIMILARITY,
    *,
    corrupt: CorruptHook | None = None,
) -> GpaOutcome:
    """Align every shape to ``shapes[ref]`` with one AOP each."""
    cls = _aop_class(cls)
    P, M = _stack(shapes)
    k, _, d = P.shape
    if not 0 <= ref < k:
        raise ContractError(f"reference index {ref} out of range for {k} shapes")
    pairs = [(i, ref) for i in range(k) if i != ref]
    X, Y, mask = _pair_batch(P, M, pairs, corrupt)
    T = solve_aop_batch(X, Y, mask, cls, labels=pairs)
    transforms = []
    it = iter(T)
    for i in range(k):
        transforms.append(identity(d) if i == ref else Transform(d, Kind.HOMOGENEOUS, next(it)))
    return _outcome(shapes, transforms, GpaMethod.REFERENCE, reference=ref)


def _landmark_mean(points: NDArray[np.float64], present: NDArray[np.bool_]) -> NDArray[np.float64]:
    counts = present.sum(axis=0)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise UnderdeterminedError(f"landmark {missing} is missing from every shape")
    return np.einsum("kn,knd->nd", present.astype(np.float64), points) / counts[:, None]


def _centred_norm(points: NDArray[np.float64]) -> float:
    return float(np.linalg.norm(points - points.mean(axis=0)))


def gpa_iterative_mean(
    shapes: Sequence[PointCloud],
    cls: TransformClass | str = TransformClass.SIMILARITY,
    tol: float = 1e-8,
    max_iter: int = 100,
    rng: np.random.Generator | int | None = None,
    *,
    init: int | None = None,
    corrupt: CorruptHook | None = None,
) -> GpaOutcome:
    """Alternate aligning all shapes to a mean shape and re-estimating the mean.

    The initial mean is a randomly chosen shape (or ``shapes[init]``).
    Each landmark of the mean averages the aligned shapes in which it is
    present.  The new mean is then registered onto the initial shape and
    rescaled about its centroid to that shape's centred Frobenius norm
    (over the initial shape's landmarks), which fixes its pose and stops
    the scale from collapsing.
    Iteration stops when the mean moves by less than ``tol`` (Frobenius) or
    after ``max_iter`` rounds, in which case ``converged`` is False.

    Notes
    -----
    The first entry of ``mean_changes`` only covers landmarks present in
    the initial shape, since the starting mean has no others.  With many
    missing points it can therefore be smaller than the second.
    """
    cls = _aop_class(cls)
    P, M = _stack(shapes)
    k, n, d = P.shape
    if init is None:
        init = int(np.random.default_rng(rng).integers(k))
    ref_points = P[init].copy()
    ref_present = M[init].copy()
    mean, mean_present = ref_points, ref_present
    target = _centred_norm(ref_points[ref_present])
    pairs = [(i, MEAN) for i in range(k)]
    changes: list[float] = []
    converged = False
    T = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        X = P.copy()
        Y = np.broadcast_to(mean, (k, n, d)).copy()
        mask = M & mean_present
        if corrupt is not None:
            for i in range(k):
                X[i], Y[i] = corrupt(i, MEAN, X[i], Y[i])
        T = solve_aop_batch(X, Y, mask, cls, labels=pairs)
        aligned = P @ T[:, :d, :d] + T[:, None, d, :d]
        new_mean = _landmark_mean(aligned, M)
        # pin the mean's pose to the initial reference; averaging alone lets it drift
        G = solve_aop_batch(new_mean[None], ref_points[None], ref_present[None], cls)[0]
        new_mean = new_mean @ G[:d, :d] + G[d, :d]
        centre = new_mean[ref_present].mean(axis=0)
        spread = _centred_norm(new_mean[ref_present])
        new_mean = centre + (new_mean - centre) * (target / spread)
        change = float(np.linalg.norm(new_mean[mean_present] - mean[mean_present]))
        changes.append(change)
        mean = new_mean
        mean_present = np.ones(n, dtype=bool)
        if change < tol:
            converged = True
            break
    transforms = [Transform(d, Kind.HOMOGENEOUS, t) for t in T]
    return _outcome(
        shapes,
        transforms,
        GpaMethod.ITERATIVE_MEAN,
        reference=init,
        iterations=iterations,
        converged=converged,
        mean_changes=tuple(changes),
    )


def pairwise_aop_set(
    shapes: Sequence[PointCloud],
    cls: TransformClass | str = TransformClass.SIMILARITY,
    *,
    corrupt: CorruptHook | None = None,
) -> PairwiseTransformSet:
    """Solve all ``k * k`` ordered pairwise AOPs independently (diagonal is I)."""
    cls = _aop_class(cls)
    P, M = _stack(shapes)
    k, n, d = P.shape
    blocks = np.empty((k, k, d + 1, d + 1))
    if corrupt is None:
        io, jo = np.nonzero(~np.eye(k, dtype=bool))
        count, mx, my, cross, ssx, ssy = kernels.all_pair_moments(
            np.ascontiguousarray(P), np.ascontiguousarray(M, dtype=np.uint8)
        )
        blocks[io, jo] = _aop_blocks(
            count[io, jo], mx[io, jo], my[io, jo], cross[io, jo], ssx[io, jo], ssy[io, jo],
            d, cls, lambda q: (int(io[q]), int(jo[q])),
        )
    else:
        labels = [(i, j) for i in range(k) for j in range(k) if i != j]
        X, Y, mask = _pair_batch(P, M, labels, corrupt)
        blocks[~np.eye(k, dtype=bool)] = solve_aop_batch(X, Y, mask, cls, labels=labels)
    blocks[np.arange(k), np.arange(k)] = np.eye(d + 1)
    return PairwiseTransformSet(k, d, Kind.HOMOGENEOUS, cls, blocks)


def gpa_sync(
    shapes: Sequence[PointCloud],
    cls: TransformClass | str = TransformClass.SIMILARITY,
    scale_mode: ScaleMode | str = ScaleMode.GEOMETRIC,
    *,
    corrupt: CorruptHook | None = None,
) -> GpaOutcome:
    """Solve all pairwise AOPs, synchronise them, and map shapes into shape 0's frame."""
    pairwise = pairwise_aop_set(shapes, cls, corrupt=corrupt)
    result = synchronise(pairwise, cls, scale_mode)
    return _outcome(shapes, result.absolute, GpaMethod.SYNC, reference=result.gauge_block, sync=result)


def _shape_error_array(P: NDArray[np.float64]) -> float:
    k = P.shape[0]
    F = np.ascontiguousarray(P.reshape(k, -1))
    return float(2.0 * kernels.pair_distance_sum(F) / k**2)


def shape_error(aligned: Sequence[PointCloud]) -> float:
    """Mean Frobenius distance over all ordered pairs, ``sum_ij ||X_i - X_j||_F / k^2``."""
    if len(aligned) < 1:
        raise ContractError("shape error needs at least one shape")
    for s in aligned:
        if not s.is_full:
            raise ContractError("shape error is defined on complete shapes only")
    if len(aligned) == 1:
        return 0.0
    P, _ = _stack(aligned)
    return _shape_error_array(P)


# -- files -----------------------------------------------------------------


def write_point_cloud(cloud: PointCloud, path) -> None:
    """CSV with header ``x0,...,x{d-1},present``, 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{a}" for a in range(cloud.d)] + ["present"])
        for p, m in zip(cloud.points, cloud.present):
            w.writerow([f"{v:.17g}" for v in p] + [int(m)])


def read_point_cloud(path) -> PointCloud:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path}: empty point-cloud file")
    header = rows[0]
    d = len(header) - 1
    if d < 1 or header[-1] != "present" or header[:-1] != [f"x{a}" for a in range(d)]:
        raise ContractError(f"{path}: header must be x0,...,x{{d-1}},present")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, d + 1)
    except ValueError as exc:
        raise ContractError(f"{path}: {exc}") from exc
    present = body[:, -1]
    if not np.all((present == 0) | (present == 1)):
        raise ContractError(f"{path}: present column must be 0 or 1")
    return PointCloud(body[:, :d], present.astype(bool))


def write_shape_set(shapes: Sequence[PointCloud], directory, names: Sequence[str] | None = None) -> None:
    """Write one CSV per shape plus ``manifest.json`` ``{n, d, files}``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if names is None:
        width = max(3, len(str(len(shapes) - 1)))
        names = [f"shape_{i:0{width}d}.csv" for i in range(len(shapes))]
    for s, name in zip(shapes, names):
        write_point_cloud(s, directory / name)
    manifest = {"n": shapes[0].n, "d": shapes[0].d, "files": list(names)}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def read_shape_set(directory) -> list[PointCloud]:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise ContractError(f"{directory}: missing manifest.json")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        n, d, files = int(manifest["n"]), int(manifest["d"]), list(manifest["files"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ContractError(f"{mpath}: malformed manifest ({exc})") from exc
    shapes = []
    for name in files:
        p = directory / name
        if not p.is_file():
            raise ContractError(f"{directory}: manifest lists missing file {name}")
        s = read_point_cloud(p)
        if s.points.shape != (n, d):
            raise ContractError(f"{p}: expected {n} x {d} points, got {s.points.shape}")
        shapes.append(s)
    return shapes

