"""Evidential partitions: focal set families, mass functions, pairwise masses.

A mass function over ``c`` clusters assigns weight to *subsets* of the
cluster set; the subsets carrying positive weight are restricted to a fixed
focal set family shared by all objects. Focal sets are stored as integer
bitmasks (bit ``k`` set means cluster ``k`` belongs to the set) in canonical
order: by cardinality first, then by bitmask value.

For two objects the joint evidence about "same cluster or not" decomposes
into three masses:

- ``m_same``: both masses on one identical singleton,
- ``m_diff``: masses on disjoint focal sets,
- ``m_theta``: the remainder (compatible but inconclusive evidence).

The degree of support for "same cluster" is then ``bel = m_same`` and the
degree of non-refutation is ``pl = m_same + m_theta = 1 - m_diff``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Masses smaller than this are treated as exact zeros and the row is
# renormalized, so downstream argmax and JSON stay free of float dust.
MASS_CLAMP = 1e-12


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


def _mask_to_indices(mask: int) -> list[int]:
    return [k for k in range(mask.bit_length()) if mask >> k & 1]


@dataclass(frozen=True)
class FocalSetFamily:
    """An ordered family of focal sets over ``c`` clusters."""

    c: int
    masks: tuple[int, ...]

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("need at least one cluster")
        full = (1 << self.c) - 1
        seen = set()
        for mask in self.masks:
            if not 0 < mask <= full:
                raise ValueError(f"focal set {mask:#b} empty or out of range for c={self.c}")
            if mask in seen:
                raise ValueError(f"duplicate focal set {mask:#b}")
            seen.add(mask)
        ordered = tuple(sorted(self.masks, key=lambda m: (_popcount(m), m)))
        object.__setattr__(self, "masks", ordered)

    @classmethod
    def singletons(cls, c: int, include_omega: bool = False) -> "FocalSetFamily":
        masks = [1 << k for k in range(c)]
        if include_omega and c > 1:
            masks.append((1 << c) - 1)
        return cls(c, tuple(masks))

    @classmethod
    def singletons_and_pairs(cls, c: int, include_omega: bool = False) -> "FocalSetFamily":
        masks = [1 << k for k in range(c)]
        for k in range(c):
            for l in range(k + 1, c):
                masks.append((1 << k) | (1 << l))
        if include_omega and c > 2:
            masks.append((1 << c) - 1)
        return cls(c, tuple(masks))

    @classmethod
    def from_index_sets(cls, c: int, sets) -> "FocalSetFamily":
        masks = []
        for indices in sets:
            mask = 0
            for k in indices:
                if not 0 <= k < c:
                    raise ValueError(f"cluster index {k} out of range for c={c}")
                mask |= 1 << k
            masks.append(mask)
        return cls(c, tuple(masks))

    @property
    def f(self) -> int:
        return len(self.masks)

    def index_sets(self) -> list[list[int]]:
        return [_mask_to_indices(m) for m in self.masks]

    def labels(self) -> list[str]:
        return ["{" + ",".join(f"w{k + 1}" for k in _mask_to_indices(m)) + "}" for m in self.masks]


def structure_matrices(family: FocalSetFamily) -> tuple[np.ndarray, np.ndarray]:
    """Indicator matrices (S, C) over focal set pairs.

    ``S[k, l] = 1`` iff ``k == l`` and the set is a singleton;
    ``C[k, l] = 1`` iff the two sets are disjoint. Both are f x f.
    """
    f = family.f
    s_mat = np.zeros((f, f))
    for k, mask in enumerate(family.masks):
        if _popcount(mask) == 1:
            s_mat[k, k] = 1.0
    c_mat = np.zeros((f, f))
    for k, a in enumerate(family.masks):
        for l, b in enumerate(family.masks):
            if a & b == 0:
                c_mat[k, l] = 1.0
    return s_mat, c_mat


def normalize_masses(masses: np.ndarray, f: int) -> np.ndarray:
    """Validate and clean one or more mass rows (clamp dust, renormalize)."""
    masses = np.asarray(masses, dtype=float)
    single = masses.ndim == 1
    rows = np.atleast_2d(masses).copy()
    if rows.shape[1] != f:
        raise ValueError(f"mass rows have {rows.shape[1]} entries, family has {f}")
    if not np.isfinite(rows).all():
        raise ValueError("masses contain non-finite values")
    if rows.min() < -1e-9:
        raise ValueError(f"negative mass {rows.min()!r}")
    rows[rows < MASS_CLAMP] = 0.0
    sums = rows.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-8:
        raise ValueError("mass rows must sum to 1")
    # renormalize only rows that actually moved, so cleaning is idempotent
    off = np.abs(sums - 1.0) > 1e-14
    rows[off] /= sums[off, None]
    return rows[0] if single else rows


@dataclass(frozen=True)
class CredalPartition:
    """Per-object mass functions over a shared focal set family."""

    family: FocalSetFamily
    masses: np.ndarray

    def __post_init__(self):
        masses = np.atleast_2d(np.asarray(self.masses, dtype=float))
        masses = normalize_masses(masses, self.family.f)
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "c": self.family.c,
            "focal_sets": self.family.index_sets(),
            "masses": [[float(v) for v in row] for row in self.masses],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CredalPartition":
        if data.get("schema_version") != 1:
            raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
        family = FocalSetFamily.from_index_sets(int(data["c"]), data["focal_sets"])
        return cls(family, np.asarray(data["masses"], dtype=float))


@dataclass(frozen=True)
class PairwiseMass:
    """Evidence about one object pair: same cluster, different, or undecided."""

    m_same: float
    m_diff: float
    m_theta: float

    @property
    def bel(self) -> float:
        return self.m_same

    @property
    def pl(self) -> float:
        return self.m_same + self.m_theta


def pairwise_mass(m_i: np.ndarray, m_j: np.ndarray, family: FocalSetFamily) -> PairwiseMass:
    """Combine two mass rows into the pairwise (same, diff, theta) masses."""
    m_i = normalize_masses(m_i, family.f)
    m_j = normalize_masses(m_j, family.f)
    s_mat, c_mat = structure_matrices(family)
    same = float(m_i @ s_mat @ m_j)
    diff = float(m_i @ c_mat @ m_j)
    theta = max(0.0, 1.0 - same - diff)
    return PairwiseMass(same, diff, theta)


def _mask_from_subset(family: FocalSetFamily, subset) -> int:
    mask = 0
    for k in subset:
        if not 0 <= k < family.c:
            raise ValueError(f"cluster index {k} out of range for c={family.c}")
        mask |= 1 << k
    return mask


def belief(masses: np.ndarray, family: FocalSetFamily, subset) -> float | np.ndarray:
    """Total mass committed to focal sets contained in ``subset``."""
    target = _mask_from_subset(family, subset)
    inside = np.array([float(a & ~target == 0) for a in family.masks])
    out = np.atleast_2d(np.asarray(masses, dtype=float)) @ inside
    return float(out[0]) if np.asarray(masses).ndim == 1 else out


def plausibility(masses: np.ndarray, family: FocalSetFamily, subset) -> float | np.ndarray:
    """Total mass on focal sets compatible with (intersecting) ``subset``."""
    target = _mask_from_subset(family, subset)
    touches = np.array([float(a & target != 0) for a in family.masks])
    out = np.atleast_2d(np.asarray(masses, dtype=float)) @ touches
    return float(out[0]) if np.asarray(masses).ndim == 1 else out


@dataclass(frozen=True)
class RelationalRepresentation:
    """Pairwise masses for all i < j in lexicographic order (flat arrays)."""

    n: int
    m_same: np.ndarray
    m_diff: np.ndarray
    m_theta: np.ndarray

    @property
    def bel(self) -> np.ndarray:
        return self.m_same

    @property
    def pl(self) -> np.ndarray:
        return self.m_same + self.m_theta


def relational_representation(partition: CredalPartition) -> RelationalRepresentation:
    """All pairwise masses at once via the structure matrices."""
    masses = partition.masses
    s_mat, c_mat = structure_matrices(partition.family)
    same_full = masses @ s_mat @ masses.T
    diff_full = masses @ c_mat @ masses.T
    iu, ju = np.triu_indices(partition.n, k=1)
    same = same_full[iu, ju]
    diff = diff_full[iu, ju]
    theta = np.maximum(0.0, 1.0 - same - diff)
    return RelationalRepresentation(partition.n, same, diff, theta)


@dataclass(frozen=True)
class RoughSummary:
    """Hard summary of a credal partition.

    ``hard_sets[i]`` is the focal set with maximal mass for object ``i``
    (ties break toward the earlier canonical set). Cluster ``k``'s lower
    approximation collects objects whose hard set is exactly the singleton
    ``{k}``; its upper approximation collects objects whose hard set
    contains ``k``.
    """

    c: int
    hard_sets: list[list[int]]
    lower: list[list[int]]
    upper: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "c": self.c,
            "hard_labels": self.hard_sets,
            "lower": self.lower,
            "upper": self.upper,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoughSummary":
        if data.get("schema_version") != 1:
            raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
        return cls(
            int(data["c"]),
            [list(map(int, s)) for s in data["hard_labels"]],
            [list(map(int, s)) for s in data["lower"]],
            [list(map(int, s)) for s in data["upper"]],
        )


def rough_summary(partition: CredalPartition) -> RoughSummary:
    c = partition.family.c
    masks = partition.family.masks
    # argmax returns the first maximizer, which is the earlier canonical set
    hard_idx = np.argmax(partition.masses, axis=1)
    hard_masks = [masks[idx] for idx in hard_idx]
    lower = [[] for _ in range(c)]
    upper = [[] for _ in range(c)]
    for i, mask in enumerate(hard_masks):
        for k in _mask_to_indices(mask):
            upper[k].append(i)
            if _popcount(mask) == 1:
                lower[k].append(i)
    return RoughSummary(c, [_mask_to_indices(m) for m in hard_masks], lower, upper)
