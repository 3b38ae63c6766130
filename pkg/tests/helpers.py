"""Builders for random package objects shared by several test modules."""

import numpy as np

from oracles import random_orthogonal, random_rotation
from transync import PointCloud, Transform, TransformClass

PROJECTED = [TransformClass.SIMILARITY, TransformClass.EUCLIDEAN, TransformClass.RIGID]


def random_similarity(d, rng, proper=False, scale=True):
    Q = random_rotation(d, rng) if proper else random_orthogonal(d, rng)
    s = rng.uniform(0.5, 2.0) if scale else 1.0
    return Transform.from_parts(s * Q, rng.uniform(-2, 2, d))


def random_in_class(d, cls, rng):
    cls = TransformClass(cls)
    if cls is TransformClass.SIMILARITY:
        return random_similarity(d, rng)
    if cls is TransformClass.EUCLIDEAN:
        return random_similarity(d, rng, scale=False)
    return random_similarity(d, rng, proper=True, scale=False)


def random_affine(d, rng, cond_max=1e3):
    while True:
        A = rng.standard_normal((d, d)) + 2 * np.eye(d)
        if np.linalg.cond(A) < cond_max:
            return Transform.from_parts(A, rng.standard_normal(d))


def copies(base, transforms, present=None):
    """Clouds ``base @ T_i`` (optionally masked)."""
    out = []
    for i, t in enumerate(transforms):
        mask = None if present is None else present[i]
        out.append(PointCloud(base @ t.linear + t.translation, mask))
    return out


#: ``criterion number -> PASS/FAIL line``, filled by the acceptance tests.
ACCEPTANCE_LINES: dict[int, str] = {}
