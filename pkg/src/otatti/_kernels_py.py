"""Pure numpy implementations of the inspection kernels.

Used when the compiled ``_kernels_c`` extension is not available. The
signatures and the floating point semantics (up to summation order) match
the Cython versions in ``_kernels_c.pyx``.
"""

from __future__ import annotations

import numpy as np

ZERO_TOL = 1e-12


def top_energy_fraction(v: np.ndarray, k: int) -> float:
    """Fraction of ``sum(v**2)`` carried by the ``k`` largest-magnitude entries."""
    sq = np.square(np.asarray(v, dtype=np.float64))
    total = float(sq.sum())
    if total == 0.0:
        return 0.0
    n = sq.shape[0]
    if k >= n:
        return 1.0
    top = np.partition(sq, n - k)[n - k:]
    return float(top.sum()) / total


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        diff = x[i + 1:] - x[i]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out[i, i + 1:] = d
        out[i + 1:, i] = d
    return out


VAR_REL_TOL = 1e-12


def shape_moments(g: np.ndarray) -> tuple[int, int, int, float, float]:
    """Sign counts plus population skewness and excess kurtosis.

    Returns ``(pos, neg, zero, skewness, kurtosis)``. Entries with
    ``|x| < 1e-12`` count as zero. A zero-variance input reports 0 for
    both shape statistics; variance below ``(1e-12 * |mean|)**2`` is taken
    as rounding noise from the mean and counts as zero.
    """
    g = np.asarray(g, dtype=np.float64)
    n = g.shape[0]
    pos = int(np.count_nonzero(g >= ZERO_TOL))
    neg = int(np.count_nonzero(g <= -ZERO_TOL))
    zero = n - pos - neg
    if n == 0:
        return pos, neg, zero, 0.0, 0.0
    mean = float(g.mean())
    c = g - mean
    m2 = float((c * c).mean())
    if m2 <= (VAR_REL_TOL * mean) ** 2:
        return pos, neg, zero, 0.0, 0.0
    # standardise first so tiny variances cannot underflow m2 ** 1.5
    z = c / np.sqrt(m2)
    z2 = z * z
    skew = float((z2 * z).mean())
    kurt = float((z2 * z2).mean()) - 3.0
    return pos, neg, zero, skew, kurt


def average_linkage_two(dist: np.ndarray) -> np.ndarray:
    """Average-linkage agglomeration of a distance matrix down to two clusters.

    Ties between equal merge distances go to the pair whose lowest member
    indices are lexicographically smallest. Returns labels in {0, 1}, with
    the cluster containing point 0 labelled 0.
    """
    d = np.array(dist, dtype=np.float64, copy=True)
    n = d.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    if n <= 2:
        labels[:] = np.arange(n)
        return labels
    # clusters are identified by their lowest member, which never changes
    # because a merged cluster keeps the smaller representative
    active = list(range(n))
    size = np.ones(n)
    owner = np.arange(n)
    while len(active) > 2:
        best = np.inf
        bi = bj = -1
        for ai in range(len(active)):
            a = active[ai]
            for bj_ in range(ai + 1, len(active)):
                b = active[bj_]
                if d[a, b] < best:
                    best = d[a, b]
                    bi, bj = a, b
        na, nb = size[bi], size[bj]
        for c in active:
            if c != bi and c != bj:
                v = (na * d[bi, c] + nb * d[bj, c]) / (na + nb)
                d[bi, c] = v
                d[c, bi] = v
        size[bi] = na + nb
        owner[owner == bj] = bi
        active.remove(bj)
    labels[owner == active[1]] = 1
    return labels
