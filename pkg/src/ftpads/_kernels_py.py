"""Pure numpy implementations of the hot kernels.

Every routine consumes pre-drawn uniforms so the compiled twin in
``_kernels.pyx`` can reproduce results bit-for-bit from the same draws.
"""

from __future__ import annotations

import numpy as np


def subset_rows(u: np.ndarray, n: int) -> np.ndarray:
    """Partial Fisher-Yates: map uniforms of shape (B, k) to k distinct values in [0, n) per row."""
    u = np.asarray(u, dtype=np.float64)
    b, k = u.shape
    perm = np.tile(np.arange(n, dtype=np.int64), (b, 1))
    rows = np.arange(b)
    for i in range(k):
        span = n - i
        j = i + np.minimum((u[:, i] * span).astype(np.int64), span - 1)
        head = perm[rows, i].copy()
        perm[rows, i] = perm[rows, j]
        perm[rows, j] = head
    return perm[:, :k]


def place_from_uniforms(u: np.ndarray, n_lps: int, constrained: bool) -> np.ndarray:
    """LP index for every instance; the last axis of ``u`` runs over replicas."""
    u = np.asarray(u, dtype=np.float64)
    if not constrained:
        return np.minimum((u * n_lps).astype(np.int64), n_lps - 1)
    m = u.shape[-1]
    flat = subset_rows(u.reshape(-1, m), n_lps)
    return flat.reshape(u.shape)


def count_survivals(
    n_lps: int,
    n_entities: int,
    m: int,
    n_failed: int,
    constrained: bool,
    need: int,
    u_place: np.ndarray,
    u_crash: np.ndarray,
) -> int:
    """Number of trials in which every entity keeps at least ``need`` instances on live LPs.

    ``u_place`` has shape (trials, n_entities * m) and ``u_crash`` (trials, n_failed).
    """
    trials = u_place.shape[0]
    if trials == 0:
        return 0
    crashed = np.zeros((trials, n_lps), dtype=bool)
    rows = np.arange(trials)[:, None]
    crashed[rows, subset_rows(u_crash, n_lps)] = True
    place = place_from_uniforms(u_place.reshape(trials, n_entities, m), n_lps, constrained)
    alive = ~crashed[rows[:, :, None], place]
    ok = (alive.sum(axis=2) >= need).all(axis=1)
    return int(ok.sum())
