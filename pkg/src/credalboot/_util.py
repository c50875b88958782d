"""Seed derivation, pair indexing, and float formatting helpers.

Every stochastic stage derives its own sub-seed from the single master seed
with :func:`stage_seed`, so reruns are reproducible and stage results do not
depend on how work is sliced across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Sub-seeds are 63-bit so they stay valid ``SeedSequence`` entropy and fit in
# a signed int64 when serialized.
_SEED_BITS = 63


def stage_seed(master: int, tag: str, index: int | None = None) -> int:
    """Derive a deterministic sub-seed from ``master`` and a stage tag.

    Parameters
    ----------
    master : int
        The pipeline master seed.
    tag : str
        Stage label, e.g. ``"bootstrap"`` or ``"irqp"``.
    index : int, optional
        Per-item index (bootstrap replicate, restart, ...) when one stage
        needs a family of independent streams.

    Returns
    -------
    int
        A nonnegative integer < 2**63, stable across platforms and runs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode("ascii"))
    h.update(b"\x00")
    h.update(tag.encode("utf-8"))
    if index is not None:
        h.update(b"\x00")
        h.update(str(int(index)).encode("ascii"))
    return int.from_bytes(h.digest(), "little") >> (64 - _SEED_BITS)


def make_rng(seed: int) -> np.random.Generator:
    """Build the package-standard generator (PCG64) for a sub-seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def pair_list(n: int) -> np.ndarray:
    """All index pairs (i, j) with i < j in lexicographic order, shape (npairs, 2)."""
    if n < 2:
        return np.empty((0, 2), dtype=np.intp)
    i, j = np.triu_indices(n, k=1)
    return np.column_stack([i, j])

def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Flat lexicographic index of pair (i, j), i < j, 0-based."""
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def squareform_pairs(values: np.ndarray, n: int) -> np.ndarray:
    """Expand a flat (npairs,) pair vector to a symmetric n x n matrix, zero diagonal."""
    values = np.asarray(values)
    out = np.zeros((n, n), dtype=values.dtype)
    i, j = np.triu_indices(n, k=1)
    out[i, j] = values
    out[j, i] = values
    return out


def fmt_float(x: float) -> str:
    """Format a float with 17 significant digits (exact float64 round-trip)."""
    return format(float(x), ".17g")
