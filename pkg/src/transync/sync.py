"""Synchronisation of pairwise transforms through a null-space estimate.

For a transitively consistent set the stacked block matrix ``W = [T_ij]``
factors as ``U1 @ U2`` with ``U1`` the stacked absolute transforms, and
``Z = W - k I`` has ``U1`` as its null space.  With noise, the ``d``
right-singular vectors of ``Z`` with the smallest singular values are the
least-squares estimate.  Homogeneous sets get one extra row
``[0..0 1, 0..0 1, ...]`` that removes the known direction of the
translation column from the null space.
"""

# ruff: noqa: N806
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from transync import kernels
from transync.errors import (
    ContractError,
    DegenerateSolutionError,
    IncompleteSetError,
    SingularTransformError,
)
from transync.transform import (
    COND_LIMIT,
    Kind,
    ScaleMode,
    Transform,
    TransformClass,
    project_svd,
    transform_from_dict,
    transform_to_dict,
)

__all__ = [
    "GAUGE_COND_LIMIT",
    "NullBasis",
    "PairwiseTransformSet",
    "SyncResult",
    "append_homogeneous_row",
    "build_z",
    "consistency_residual",
    "extract_null_basis",
    "fix_gauge",
    "reconstruct_pairwise",
    "synchronise",
]

#: Above this condition number the first block is not used as gauge.
GAUGE_COND_LIMIT = 1e6
#: Relative spectral gap below which a null-space estimate is flagged degenerate.
DEGENERATE_GAP = 1e-12


def _block_size(dim: int, kind: Kind) -> int:
    return dim + 1 if kind is Kind.HOMOGENEOUS else dim


@dataclass(frozen=True, eq=False)
class PairwiseTransformSet:
    """All ``k * k`` pairwise transforms between ``k`` objects.

    ``blocks[i, j]`` is the matrix of ``T_ij``, which maps object ``i`` onto
    object ``j``.  Diagonal blocks are always the identity.  Entries that
    were never observed are NaN; such a set cannot be synchronised.
    """

    k: int
    dim: int
    kind: Kind
    cls: TransformClass
    blocks: NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        cls = TransformClass(self.cls)
        m = _block_size(self.dim, kind)
        B = np.array(self.blocks, dtype=np.float64)
        if B.shape != (self.k, self.k, m, m):
            raise ContractError(f"expected blocks of shape {(self.k, self.k, m, m)}, got {B.shape}")
        idx = np.arange(self.k)
        B[idx, idx] = np.eye(m)
        if kind is Kind.HOMOGENEOUS:
            last = B[..., :, -1]
            observed = ~np.isnan(B).any(axis=(2, 3))
            bad = np.any(last[..., :-1] != 0.0, axis=-1) | (last[..., -1] != 1.0)
            if np.any(bad & observed):
                raise ContractError("homogeneous blocks must have last column (0, ..., 0, 1)")
        B.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "cls", cls)
        object.__setattr__(self, "blocks", B)

    @classmethod
    def from_entries(
        cls,
        k: int,
        dim: int,
        kind: Kind | str,
        tclass: TransformClass | str,
        entries: Mapping[tuple[int, int], Transform | NDArray],
    ) -> PairwiseTransformSet:
        """Build from a mapping ``(i, j) -> Transform`` (or raw matrix).

        Missing off-diagonal pairs are stored as NaN blocks.
        """
        kind = Kind(kind)
        m = _block_size(dim, kind)
        B = np.full((k, k, m, m), np.nan)
        for (i, j), t in entries.items():
            if not (0 <= i < k and 0 <= j < k):
                raise ContractError(f"entry index {(i, j)} out of range for k={k}")
            M = t.matrix if isinstance(t, Transform) else np.asarray(t, dtype=np.float64)
            if isinstance(t, Transform) and (t.dim != dim or t.kind is not kind):
                raise ContractError(f"entry {(i, j)} has dim/kind {t.dim}/{t.kind.value}")
            B[i, j] = M
        return cls(k, dim, kind, tclass, B)

    @classmethod
    def from_absolute(
        cls, absolute: Sequence[Transform], tclass: TransformClass | str
    ) -> PairwiseTransformSet:
        """Consistent set ``T_ij = T_i @ inv(T_j)`` from absolute transforms."""
        if len(absolute) < 1:
            raise ContractError("need at least one absolute transform")
        dim, kind = absolute[0].dim, absolute[0].kind
        A = np.stack([t.matrix for t in absolute])
        for t in absolute:
            if t.dim != dim or t.kind is not kind:
                raise ContractError("absolute transforms must share dim and kind")
        return cls(len(absolute), dim, kind, tclass, _compose_with_inverses(A, dim, kind))

    @property
    def block_size(self) -> int:
        return self.blocks.shape[-1]

    @property
    def is_complete(self) -> bool:
        return not bool(np.isnan(self.blocks).any())

    def __getitem__(self, ij: tuple[int, int]) -> Transform:
        i, j = ij
        M = self.blocks[i, j]
        if np.isnan(M).any():
            raise KeyError(ij)
        return Transform(self.dim, self.kind, M)

    def with_blocks(self, blocks: NDArray[np.float64]) -> PairwiseTransformSet:
        return PairwiseTransformSet(self.k, self.dim, self.kind, self.cls, blocks)


class NullBasis(NamedTuple):
    basis: NDArray[np.float64]
    tail_singular_values: NDArray[np.float64]
    degenerate: bool


@dataclass(frozen=True, eq=False)
class SyncResult:
    """Absolute transforms recovered by :func:`synchronise`.

    ``absolute[i]`` maps object ``i`` into the frame of object
    ``gauge_block``, whose own transform is the identity.
    ``tail_singular_values`` are the ``d + 1`` smallest singular values of
    the synchronisation matrix in ascending order.
    """

    absolute: tuple[Transform, ...]
    tail_singular_values: NDArray[np.float64]
    gauge_block: int
    cls: TransformClass
    degenerate: bool = False

    @property
    def k(self) -> int:
        return len(self.absolute)

    @property
    def dim(self) -> int:
        return self.absolute[0].dim

    @property
    def kind(self) -> Kind:
        return self.absolute[0].kind

    def stacked(self) -> NDArray[np.float64]:
        return np.stack([t.matrix for t in self.absolute])


def _require_complete(s: PairwiseTransformSet) -> None:
    if s.k < 2:
        raise ContractError(f"synchronisation needs k >= 2 objects, got {s.k}")
    if not s.is_complete:
        missing = np.argwhere(np.isnan(s.blocks).any(axis=(2, 3)))
        raise IncompleteSetError(f"{len(missing)} pairwise entries missing, first {tuple(missing[0])}")


def build_z(s: PairwiseTransformSet) -> NDArray[np.float64]:
    """Stacked block matrix ``W`` with ``k`` subtracted from its diagonal."""
    _require_complete(s)
    k, m = s.k, s.block_size
    W = s.blocks.transpose(0, 2, 1, 3).reshape(k * m, k * m)
    return W - k * np.eye(k * m)


def append_homogeneous_row(z: NDArray[np.float64], k: int, d: int) -> NDArray[np.float64]:
    """Append the row ``k`` copies of ``(0, ..., 0, 1)`` to ``z``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != k * (d + 1):
        raise ContractError(f"expected {k * (d + 1)} columns, got shape {z.shape}")
    row = np.zeros(k * (d + 1))
    row[d :: d + 1] = 1.0
    return np.vstack([z, row])


def extract_null_basis(z: NDArray[np.float64], d: int) -> NullBasis:
    """Orthonormal ``d``-frame minimising ``||z @ U||_F``.

    These are the right-singular vectors of the ``d`` smallest singular
    values.  A gap of at most ``DEGENERATE_GAP * ||z||_2`` between the
    ``d``-th and ``(d+1)``-th smallest singular values is reported through
    the ``degenerate`` flag rather than raised.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < d or d < 1:
        raise ContractError(f"cannot extract a {d}-dimensional basis from shape {z.shape}")
    n = z.shape[1]
    _, sv, Vt = np.linalg.svd(z, full_matrices=z.shape[0] < n)
    if sv.size < n:
        sv = np.concatenate([sv, np.zeros(n - sv.size)])
    basis = Vt[n - d :].T.copy()
    tail = sv[max(n - d - 1, 0) :][::-1].copy()
    degenerate = False
    if n > d:
        gap = sv[n - d - 1] - sv[n - d]
        degenerate = bool(gap <= DEGENERATE_GAP * sv[0])
    return NullBasis(basis, tail, degenerate)


def _homogeneous_inverse(B: NDArray[np.float64], d: int) -> NDArray[np.float64]:
    """Block-form inverse of stacked homogeneous matrices (keeps the last column exact)."""
    A_inv = np.linalg.inv(B[..., :d, :d])
    out = np.zeros_like(B)
    out[..., :d, :d] = A_inv
    out[..., d, :d] = -(B[..., d:, :d] @ A_inv)[..., 0, :]
    out[..., d, d] = 1.0
    return out


def _checked_inverse(A: NDArray[np.float64], dim: int, kind: Kind) -> NDArray[np.float64]:
    lin = A[..., :dim, :dim]
    cond = np.linalg.cond(lin)
    bad = ~(cond < COND_LIMIT)
    if np.any(bad):
        worst = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularTransformError(f"absolute transform {worst} is singular", float(cond[worst]))
    if kind is Kind.HOMOGENEOUS:
        return _homogeneous_inverse(A, dim)
    return np.linalg.inv(A)


def _compose_with_inverses(A: NDArray[np.float64], dim: int, kind: Kind) -> NDArray[np.float64]:
    A_inv = _checked_inverse(A, dim, kind)
    return A[:, None] @ A_inv[None, :]


def fix_gauge(
    u1: NDArray[np.float64],
    kind: Kind | str,
    k: int,
    d: int,
    *,
    tail_singular_values: NDArray[np.float64] | None = None,
    cls: TransformClass | str | None = None,
    degenerate: bool = False,
) -> SyncResult:
    """Turn a stacked null basis into absolute transforms in one object's frame.

    Each ``m x d`` block of ``u1`` is completed (homogeneous case: with the
    column ``(0, ..., 0, 1)``) and the stack is right-multiplied by the
    inverse of the gauge block.  Block 0 is the gauge unless its condition
    number exceeds ``GAUGE_COND_LIMIT``, in which case the best-conditioned
    block is used.

    Raises
    ------
    DegenerateSolutionError
        If every block is singular.
    """
    kind = Kind(kind)
    A, gauge = _gauge_blocks(u1, kind, k, d)
    if tail_singular_values is None:
        tail_singular_values = np.array([])
    tclass = TransformClass(cls) if cls is not None else (
        TransformClass.AFFINE if kind is Kind.HOMOGENEOUS else TransformClass.LINEAR
    )
    return _result(A, d, kind, tail_singular_values, gauge, tclass, degenerate)


def _gauge_blocks(u1, kind: Kind, k: int, d: int) -> tuple[NDArray[np.float64], int]:
    m = _block_size(d, kind)
    u1 = np.asarray(u1, dtype=np.float64)
    if u1.shape != (k * m, d):
        raise ContractError(f"expected a {(k * m, d)} basis, got {u1.shape}")
    blocks = u1.reshape(k, m, d)
    if kind is Kind.HOMOGENEOUS:
        e = np.zeros((k, m, 1))
        e[:, -1] = 1.0
        blocks = np.concatenate([blocks, e], axis=2)
    cond = np.linalg.cond(blocks[:, :d, :d])
    cond = np.where(np.isfinite(cond), cond, np.inf)
    gauge = 0
    if not cond[0] <= GAUGE_COND_LIMIT:
        gauge = int(np.argmin(cond))
    if not cond[gauge] < COND_LIMIT:
        raise DegenerateSolutionError(f"all {k} gauge candidates are singular (best condition {cond[gauge]:.3g})")
    G = blocks[gauge]
    G_inv = _homogeneous_inverse(G, d) if kind is Kind.HOMOGENEOUS else np.linalg.inv(G)
    A = blocks @ G_inv
    A[gauge] = np.eye(m)
    return A, gauge


def _result(A, d, kind, tail, gauge, cls, degenerate) -> SyncResult:
    return SyncResult(
        absolute=tuple(Transform._trusted(d, kind, a) for a in A),
        tail_singular_values=np.asarray(tail, dtype=np.float64),
        gauge_block=gauge,
        cls=cls,
        degenerate=degenerate,
    )


def reconstruct_pairwise(result: SyncResult) -> PairwiseTransformSet:
    """Consistent pairwise set ``T_ij = A_i @ inv(A_j)`` from absolute transforms."""
    return PairwiseTransformSet.from_absolute(result.absolute, result.cls)


def synchronise(
    s: PairwiseTransformSet,
    cls: TransformClass | str | None = None,
    scale_mode: ScaleMode | str = ScaleMode.GEOMETRIC,
) -> SyncResult:
    """Transitively consistent absolute transforms for a noisy pairwise set.

    Parameters
    ----------
    s : PairwiseTransformSet
        Complete set of ``k >= 2`` pairwise transforms.
    cls : TransformClass, optional
        Target class; defaults to ``s.cls``.  Similarity, Euclidean and Rigid
        results are projected per absolute transform.
    scale_mode : ScaleMode
        Isotropic scale estimate used by the Similarity projection.
    """
    tclass = TransformClass(cls) if cls is not None else s.cls
    scale_mode = ScaleMode(scale_mode)
    z = build_z(s)
    if s.kind is Kind.HOMOGENEOUS:
        z = append_homogeneous_row(z, s.k, s.dim)
    nb = extract_null_basis(z, s.dim)
    A, gauge = _gauge_blocks(nb.basis, s.kind, s.k, s.dim)
    if tclass.is_projected:
        d = s.dim
        U, sv, Vt = np.linalg.svd(A[:, :d, :d])
        cond = np.where(sv[:, -1] > 0, sv[:, 0] / np.where(sv[:, -1] > 0, sv[:, -1], 1.0), np.inf)
        if not np.all(cond < COND_LIMIT):
            worst = int(np.argmax(cond))
            raise SingularTransformError(f"absolute transform {worst} is singular", float(cond[worst]))
        A[:, :d, :d] = project_svd(U, sv, Vt, tclass, scale_mode)
        A[gauge] = np.eye(A.shape[-1])
    return _result(A, s.dim, s.kind, nb.tail_singular_values, gauge, tclass, nb.degenerate)


def consistency_residual(s: PairwiseTransformSet) -> float:
    """``max_{i,j,l} ||T_ij T_jl - T_il||_F``; zero exactly for consistent sets."""
    if not s.is_complete:
        raise IncompleteSetError("consistency residual needs every pairwise entry")
    return float(kernels.max_triple_residual(np.ascontiguousarray(s.blocks)))


# -- serialisation ---------------------------------------------------------


def pairwise_set_to_dict(s: PairwiseTransformSet) -> dict:
    entries = [
        {"i": i, "j": j, "matrix": s.blocks[i, j].tolist()}
        for i in range(s.k)
        for j in range(s.k)
        if not np.isnan(s.blocks[i, j]).any()
    ]
    return {"k": s.k, "dim": s.dim, "kind": s.kind.value, "class": s.cls.value, "entries": entries}


def pairwise_set_from_dict(obj: dict) -> PairwiseTransformSet:
    try:
        k, dim = int(obj["k"]), int(obj["dim"])
        kind = Kind(obj["kind"])
        tclass = TransformClass(obj["class"])
        entries = {(int(e["i"]), int(e["j"])): np.asarray(e["matrix"], dtype=np.float64) for e in obj["entries"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractError(f"malformed pairwise transform set: {exc}") from exc
    m = _block_size(dim, kind)
    for ij, M in entries.items():
        if M.shape != (m, m):
            raise ContractError(f"entry {ij} has shape {M.shape}, expected {(m, m)}")
    return PairwiseTransformSet.from_entries(k, dim, kind, tclass, entries)


def sync_result_to_dict(r: SyncResult) -> dict:
    return {
        "absolute": [transform_to_dict(t) for t in r.absolute],
        "tail_singular_values": r.tail_singular_values.tolist(),
        "gauge_block": r.gauge_block,
        "class": r.cls.value,
        "degenerate": r.degenerate,
    }


def sync_result_from_dict(obj: dict) -> SyncResult:
    try:
        return SyncResult(
            absolute=tuple(transform_from_dict(t) for t in obj["absolute"]),
            tail_singular_values=np.asarray(obj["tail_singular_values"], dtype=np.float64),
            gauge_block=int(obj["gauge_block"]),
            cls=TransformClass(obj.get("class", "affine")),
            degenerate=bool(obj.get("degenerate", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise ContractError(f"malformed sync result: {exc}") from exc


def read_pairwise_set(path) -> PairwiseTransformSet:
    with open(path, encoding="utf-8") as fh:
        return pairwise_set_from_dict(json.load(fh))

