"""Transformation values, composition and class projections.

Points are row vectors and transforms act by right-multiplication,
``x' = x @ T``.  A homogeneous transform in ``d`` dimensions is the
``(d+1) x (d+1)`` matrix::

    [[A, 0],
     [t, 1]]

with the linear block ``A`` top-left and the translation row ``t`` in the
bottom row, so composing ``a`` then ``b`` is the matrix product ``a @ b``.
"""

# ruff: noqa: N806  - uppercase matrix names follow linear-algebra convention
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from transync.errors import ContractError, SingularTransformError

__all__ = [
    "COND_LIMIT",
    "Kind",
    "ScaleMode",
    "SimilarityParts",
    "Transform",
    "TransformClass",
    "compose",
    "decompose_similarity",
    "identity",
    "invert",
    "project_class",
    "project_blocks",
    "project_orthogonal",
    "project_svd",
    "scale_arithmetic",
    "scale_geometric",
    "transform_from_dict",
    "transform_to_dict",
    "read_transform",
    "write_transform",
]

#: Transforms whose condition number reaches this value are treated as singular.
COND_LIMIT = 1e8


class Kind(str, enum.Enum):
    LINEAR = "linear"
    HOMOGENEOUS = "homogeneous"


class TransformClass(str, enum.Enum):
    LINEAR = "linear"
    AFFINE = "affine"
    SIMILARITY = "similarity"
    EUCLIDEAN = "euclidean"
    RIGID = "rigid"

    @property
    def kind(self) -> Kind:
        """Matrix layout used for this class: only ``LINEAR`` is non-homogeneous."""
        return Kind.LINEAR if self is TransformClass.LINEAR else Kind.HOMOGENEOUS

    @property
    def is_projected(self) -> bool:
        return self in (TransformClass.SIMILARITY, TransformClass.EUCLIDEAN, TransformClass.RIGID)


class ScaleMode(str, enum.Enum):
    GEOMETRIC = "geometric"
    ARITHMETIC = "arithmetic"


def _matrix_size(dim: int, kind: Kind) -> int:
    return dim + 1 if kind is Kind.HOMOGENEOUS else dim


@dataclass(frozen=True, eq=False)
class Transform:
    """An invertible linear or homogeneous affine transformation.

    The matrix is copied on construction and frozen.  Homogeneous matrices
    must have the last column exactly ``(0, ..., 0, 1)``.
    """

    dim: int
    kind: Kind
    matrix: NDArray[np.float64]

    def __post_init__(self):
        kind = Kind(self.kind)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ContractError(f"dim must be a positive integer, got {self.dim!r}")
        m = _matrix_size(self.dim, kind)
        M = np.array(self.matrix, dtype=np.float64)
        if M.shape != (m, m):
            raise ContractError(f"{kind.value} transform in {self.dim}-D needs a {m}x{m} matrix, got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ContractError("transform matrix has non-finite entries")
        if kind is Kind.HOMOGENEOUS:
            last = M[:, -1]
            if np.any(last[:-1] != 0.0) or last[-1] != 1.0:
                raise ContractError("homogeneous transform must have last column (0, ..., 0, 1)")
        M.setflags(write=False)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_parts(cls, linear: ArrayLike, translation: ArrayLike | None = None) -> Transform:
        """Homogeneous transform from a linear block and translation row."""
        A = np.atleast_2d(np.asarray(linear, dtype=np.float64))
        d = A.shape[0]
        M = np.eye(d + 1)
        M[:d, :d] = A
        if translation is not None:
            M[d, :d] = np.asarray(translation, dtype=np.float64).reshape(d)
        return cls(d, Kind.HOMOGENEOUS, M)

    @classmethod
    def linear_map(cls, linear: ArrayLike) -> Transform:
        A = np.atleast_2d(np.asarray(linear, dtype=np.float64))
        return cls(A.shape[0], Kind.LINEAR, A)

    @property
    def linear(self) -> NDArray[np.float64]:
        return self.matrix[: self.dim, : self.dim]

    @property
    def translation(self) -> NDArray[np.float64]:
        """Bottom-row translation; zeros for a purely linear transform."""
        if self.kind is Kind.LINEAR:
            return np.zeros(self.dim)
        return self.matrix[self.dim, : self.dim]

    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def allclose(self, other: Transform, atol: float = 1e-12) -> bool:
        return (
            self.dim == other.dim
            and self.kind is other.kind
            and bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))
        )

    @classmethod
    def _trusted(cls, dim: int, kind: Kind, matrix: NDArray[np.float64]) -> Transform:
        """Skip validation for matrices whose invariants hold by construction."""
        self = object.__new__(cls)
        M = np.array(matrix, dtype=np.float64)
        M.setflags(write=False)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "matrix", M)
        return self

    def __repr__(self) -> str:
        return f"Transform(dim={self.dim}, kind={self.kind.value}, matrix={self.matrix.tolist()!r})"


def identity(dim: int, kind: Kind | str = Kind.HOMOGENEOUS) -> Transform:
    kind = Kind(kind)
    return Transform(dim, kind, np.eye(_matrix_size(dim, kind)))


@dataclass(frozen=True, eq=False)
class SimilarityParts:
    """Factorisation of a similarity-like transform as ``x -> s * x @ Q + t``."""

    scale: float
    orthogonal: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self):
        Q = np.array(self.orthogonal, dtype=np.float64)
        d = Q.shape[0]
        if self.scale <= 0:
            raise ContractError(f"scale must be positive, got {self.scale}")
        if np.linalg.norm(Q.T @ Q - np.eye(d)) > 1e-12 * d:
            raise ContractError("orthogonal part is not orthogonal")
        object.__setattr__(self, "orthogonal", Q)
        object.__setattr__(self, "translation", np.array(self.translation, dtype=np.float64).reshape(d))

    def to_transform(self) -> Transform:
        return Transform.from_parts(self.scale * self.orthogonal, self.translation)


def compose(a: Transform, b: Transform) -> Transform:
    """Apply ``a`` then ``b`` (row-vector convention): the matrix ``a @ b``."""
    if a.dim != b.dim or a.kind is not b.kind:
        raise ContractError(
            f"cannot compose {a.kind.value}/{a.dim}-D with {b.kind.value}/{b.dim}-D transforms"
        )
    return Transform(a.dim, a.kind, a.matrix @ b.matrix)


def _check_conditioned(A: NDArray[np.float64], what: str = "matrix") -> None:
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularTransformError(f"{what} is singular or ill-conditioned", cond)


def invert(t: Transform) -> Transform:
    """Inverse transform.

    Homogeneous inverses use the block form ``[[A^-1, 0], [-t A^-1, 1]]``,
    which keeps the last column exact.

    Raises
    ------
    SingularTransformError
        If the linear block's condition number is at least ``COND_LIMIT``.
    """
    A = t.linear
    _check_conditioned(A, "linear block")
    A_inv = np.linalg.inv(A)
    if t.kind is Kind.LINEAR:
        return Transform(t.dim, Kind.LINEAR, A_inv)
    return Transform.from_parts(A_inv, -t.translation @ A_inv)


def project_orthogonal(a: ArrayLike) -> NDArray[np.float64]:
    """Frobenius-nearest orthogonal matrix ``U @ Vt`` of a nonsingular square matrix."""
    A = np.asarray(a, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {A.shape}")
    _check_conditioned(A)
    U, _, Vt = np.linalg.svd(A)
    return U @ Vt


def _check_singular_values(sv: ArrayLike) -> NDArray[np.float64]:
    sv = np.asarray(sv, dtype=np.float64).ravel()
    if sv.size == 0 or np.any(~(sv > 0)):
        raise ContractError("singular values must all be positive")
    return sv


def scale_geometric(singular_values: ArrayLike) -> float:
    """Geometric mean of the singular values (the default isotropic scale)."""
    sv = _check_singular_values(singular_values)
    return float(np.exp(np.mean(np.log(sv))))


def scale_arithmetic(singular_values: ArrayLike) -> float:
    """Arithmetic mean of the singular values (least-squares isotropic scale)."""
    sv = _check_singular_values(singular_values)
    return float(np.mean(sv))


def _project_linear(A: NDArray[np.float64], cls: TransformClass, scale_mode: ScaleMode) -> NDArray[np.float64]:
    _check_conditioned(A, "linear block")
    U, sv, Vt = np.linalg.svd(A)
    if cls is TransformClass.RIGID:
        D = np.ones(A.shape[0])
        D[-1] = np.sign(np.linalg.det(U @ Vt))
        return (U * D) @ Vt
    Q = U @ Vt
    if cls is TransformClass.EUCLIDEAN:
        return Q
    s = scale_geometric(sv) if scale_mode is ScaleMode.GEOMETRIC else scale_arithmetic(sv)
    return s * Q


def project_class(
    t: Transform,
    cls: TransformClass | str,
    scale_mode: ScaleMode | str = ScaleMode.GEOMETRIC,
) -> Transform:
    """Least-squares style projection of ``t`` onto a transformation class.

    Similarity keeps ``s * Q`` (reflections allowed), Euclidean drops the
    scale, Rigid additionally flips the last singular direction so that
    ``det(Q) = +1``.  Linear and Affine classes return ``t`` unchanged.
    The translation row is always preserved.
    """
    cls = TransformClass(cls)
    if not cls.is_projected:
        return t
    L = _project_linear(t.linear, cls, ScaleMode(scale_mode))
    M = np.array(t.matrix)
    M[: t.dim, : t.dim] = L
    return Transform(t.dim, t.kind, M)


def project_blocks(
    blocks: NDArray[np.float64],
    dim: int,
    cls: TransformClass,
    scale_mode: ScaleMode = ScaleMode.GEOMETRIC,
) -> NDArray[np.float64]:
    """Vectorised :func:`project_class` over a stack of matrices ``(..., m, m)``.

    The caller is responsible for conditioning checks.
    """
    if not cls.is_projected:
        return blocks
    out = np.array(blocks, dtype=np.float64)
    out[..., :dim, :dim] = project_svd(*np.linalg.svd(out[..., :dim, :dim]), cls, scale_mode)
    return out


def project_svd(
    U: NDArray[np.float64],
    sv: NDArray[np.float64],
    Vt: NDArray[np.float64],
    cls: TransformClass,
    scale_mode: ScaleMode = ScaleMode.GEOMETRIC,
) -> NDArray[np.float64]:
    """Class projection of stacked linear blocks given their SVD factors."""
    if cls is TransformClass.RIGID:
        sign = np.sign(np.linalg.det(U @ Vt))
        U = U.copy()
        U[..., :, -1] *= sign[..., None]
        return U @ Vt
    if cls is TransformClass.EUCLIDEAN:
        return U @ Vt
    if scale_mode is ScaleMode.GEOMETRIC:
        s = np.exp(np.mean(np.log(sv), axis=-1))
    else:
        s = np.mean(sv, axis=-1)
    return s[..., None, None] * (U @ Vt)


def decompose_similarity(t: Transform) -> SimilarityParts:
    """Split a homogeneous transform into geometric-mean scale, orthogonal part and translation."""
    if t.kind is not Kind.HOMOGENEOUS:
        raise ContractError("decompose_similarity needs a homogeneous transform")
    A = t.linear
    _check_conditioned(A, "linear block")
    U, sv, Vt = np.linalg.svd(A)
    return SimilarityParts(scale_geometric(sv), U @ Vt, t.translation.copy())


# -- serialisation ---------------------------------------------------------


def transform_to_dict(t: Transform) -> dict:
    return {"dim": t.dim, "kind": t.kind.value, "matrix": t.matrix.tolist()}


def transform_from_dict(obj: dict) -> Transform:
    try:
        return Transform(int(obj["dim"]), Kind(obj["kind"]), np.asarray(obj["matrix"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise ContractError(f"malformed transform record: {exc}") from exc


def write_transform(t: Transform, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(transform_to_dict(t), fh)


def read_transform(path) -> Transform:
    with open(path, encoding="utf-8") as fh:
        return transform_from_dict(json.load(fh))
