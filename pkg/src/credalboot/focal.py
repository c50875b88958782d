"""Choice of focal set families, including similarity-guided pair selection.

Beyond the fixed families (singletons only, singletons plus all pairs), a
data-driven family keeps singletons and adds only cluster pairs that are
mutual K nearest neighbours under the posterior co-occurrence similarity,
which keeps the mass vector short when most clusters are well separated.
"""

from __future__ import annotations

import numpy as np

from .credal import FocalSetFamily

__all__ = ["cluster_similarity", "mutual_knn_pairs", "build_family", "FAMILY_MODES"]

FAMILY_MODES = ("singletons", "pairs", "knn")


def cluster_similarity(posterior: np.ndarray) -> np.ndarray:
    """Cluster co-occurrence matrix: entry (k, l) sums p_ik * p_il over objects."""
    posterior = np.asarray(posterior, dtype=float)
    if posterior.ndim != 2:
        raise ValueError(f"posterior must be 2-d, got shape {posterior.shape}")
    if not np.isfinite(posterior).all() or posterior.min() < 0.0:
        raise ValueError("posterior entries must be finite and nonnegative")
    return posterior.T @ posterior


def mutual_knn_pairs(similarity: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Cluster pairs that are mutually among each other's k most similar.

    Neighbour lists rank by descending similarity with ties resolved toward
    the smaller index; clusters with zero similarity are never neighbours.
    Returns pairs (a, b) with a < b in lexicographic order.
    """
    s = np.asarray(similarity, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity must be square, got shape {s.shape}")
    c = s.shape[0]
    if not np.isfinite(s).all() or s.min() < 0.0:
        raise ValueError("similarity entries must be finite and nonnegative")
    if np.abs(s - s.T).max() > 1e-10 * max(1.0, np.abs(s).max()):
        raise ValueError("similarity must be symmetric")
    if not 1 <= k < c:
        raise ValueError(f"need 1 <= k < c, got k={k} with c={c}")

    neighbours: list[set[int]] = []
    for a in range(c):
        candidates = [b for b in range(c) if b != a and s[a, b] > 0.0]
        candidates.sort(key=lambda b: (-s[a, b], b))
        neighbours.append(set(candidates[:k]))
    return [
        (a, b)
        for a in range(c)
        for b in range(a + 1, c)
        if b in neighbours[a] and a in neighbours[b]
    ]


def build_family(c: int, mode: str, *, posterior: np.ndarray | None = None,
                 k: int = 2) -> FocalSetFamily:
    """Build the focal set family named by ``mode``.

    ``"knn"`` requires the fitted posterior matrix (n x c) and keeps
    singletons plus the mutual k-nearest-neighbour cluster pairs.
    """
    if mode == "singletons":
        return FocalSetFamily.singletons(c)
    if mode == "pairs":
        return FocalSetFamily.singletons_and_pairs(c)
    if mode == "knn":
        if posterior is None:
            raise ValueError("knn family selection requires the posterior matrix")
        posterior = np.asarray(posterior, dtype=float)
        if posterior.ndim != 2 or posterior.shape[1] != c:
            raise ValueError(
                f"posterior must have {c} columns, got shape {posterior.shape}"
            )
        pairs = mutual_knn_pairs(cluster_similarity(posterior), k)
        sets = [[kk] for kk in range(c)] + [list(p) for p in pairs]
        return FocalSetFamily.from_index_sets(c, sets)
    raise ValueError(f"unknown family mode {mode!r}, expected one of {FAMILY_MODES}")
