"""Pure-numpy versions of the compiled kernels.

Every function here has the same signature and return layout as its
counterpart in ``_kernels_cy``; the test-suite checks the two agree.
"""

from __future__ import annotations

import numpy as np


def pair_moments(X, Y, mask):
    """Masked first and second moments for a batch of cloud pairs.

    ``X`` and ``Y`` are ``(p, n, d)``, ``mask`` is ``(p, n)``.  Returns
    ``count (p,)``, centroids ``mx, my (p, d)``, centred cross-covariance
    ``sum (x - mx)^T (y - my)`` as ``(p, d, d)`` and centred sums of squares
    ``ssx, ssy (p,)``.  Pairs with no common points get zero moments.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    w = np.asarray(mask, dtype=bool).astype(np.float64)
    count = w.sum(axis=1).astype(np.int_)
    denom = np.maximum(count, 1)[:, None]
    mx = np.einsum("pn,pnd->pd", w, X) / denom
    my = np.einsum("pn,pnd->pd", w, Y) / denom
    Xc = (X - mx[:, None, :]) * w[:, :, None]
    Yc = (Y - my[:, None, :]) * w[:, :, None]
    cross = np.einsum("pna,pnb->pab", Xc, Yc)
    ssx = np.einsum("pnd,pnd->p", Xc, Xc)
    ssy = np.einsum("pnd,pnd->p", Yc, Yc)
    return count, mx, my, cross, ssx, ssy


def all_pair_moments(P, present):
    """:func:`pair_moments` for every ordered pair ``(i, j)`` of ``k`` clouds.

    ``P`` is ``(k, n, d)``; outputs carry a leading ``(k, k)`` index.
    """
    P = np.asarray(P, dtype=np.float64)
    pres = np.asarray(present, dtype=bool)
    k, n, d = P.shape
    X = np.broadcast_to(P[:, None], (k, k, n, d)).reshape(k * k, n, d)
    Y = np.broadcast_to(P[None, :], (k, k, n, d)).reshape(k * k, n, d)
    mask = (pres[:, None, :] & pres[None, :, :]).reshape(k * k, n)
    count, mx, my, cross, ssx, ssy = pair_moments(X, Y, mask)
    return (
        count.reshape(k, k),
        mx.reshape(k, k, d),
        my.reshape(k, k, d),
        cross.reshape(k, k, d, d),
        ssx.reshape(k, k),
        ssy.reshape(k, k),
    )


def max_triple_residual(B):
    """``max_{i,j,l} ||B[i,j] @ B[j,l] - B[i,l]||_F`` for blocks ``(k, k, m, m)``."""
    B = np.asarray(B, dtype=np.float64)
    best = 0.0
    # one middle index at a time keeps memory at O(k^2 m^2)
    for j in range(B.shape[0]):
        diff = np.einsum("iab,lbc->ilac", B[:, j], B[j]) - B
        best = max(best, float(np.max(np.einsum("ilac,ilac->il", diff, diff))))
    return float(np.sqrt(best))


def pair_distance_sum(F):
    """``sum_{i<j} ||F[i] - F[j]||`` over the rows of a ``(k, N)`` array."""
    F = np.asarray(F, dtype=np.float64)
    total = 0.0
    for i in range(F.shape[0] - 1):
        diff = F[i + 1 :] - F[i]
        total += float(np.sqrt((diff * diff).sum(axis=1)).sum())
    return total
