"""Single STAM unit: bounded-capacity online clustering.

A unit keeps an ordered list of centroids. Every observed exemplar is either
absorbed by its nearest centroid (running-mean update with a learning-rate
floor) or, when it lies farther than ``theta_new`` from every centroid, spawns
a new one. Centroids closer than ``theta_merge`` are merged, and when the unit
is full the least recently used centroid is evicted to make room.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyUnit, IndexOutOfRange, InvalidExemplar, ValidationError


@dataclass(frozen=True)
class UnitConfig:
    """Parameters shared by every unit of a layer.

    ``theta_merge = 0`` disables merging; ``alpha_floor = 0`` keeps every
    centroid an exact running mean.
    """

    capacity: int = 64
    theta_new: float = 1.0
    theta_merge: float = 0.25
    alpha_floor: float = 0.01

    def __post_init__(self):
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise ValidationError(f"capacity must be a positive integer, got {self.capacity!r}")
        if not np.isfinite(self.theta_new) or self.theta_new <= 0:
            raise ValidationError(f"theta_new must be positive, got {self.theta_new!r}")
        if not np.isfinite(self.theta_merge) or self.theta_merge < 0:
            raise ValidationError(f"theta_merge must be non-negative, got {self.theta_merge!r}")
        if self.theta_merge >= self.theta_new:
            raise ValidationError(
                f"theta_merge ({self.theta_merge}) must be smaller than theta_new ({self.theta_new})"
            )
        if not 0.0 <= self.alpha_floor <= 1.0:
            raise ValidationError(f"alpha_floor must lie in [0, 1], got {self.alpha_floor!r}")


@dataclass
class CentroidRecord:
    center: np.ndarray
    count: int
    last_used: int


def as_exemplar(x, dim=None):
    """Return ``x`` as a finite 1-D float64 array, checking its length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"expected a vector of length {dim}, got {arr.shape[0]}")
    if arr.shape[0] == 0:
        raise DimensionMismatch("exemplars must have at least one component")
    if not np.all(np.isfinite(arr)):
        raise InvalidExemplar("exemplar contains NaN or infinite values")
    return arr


class StamUnit:
    """Online clustering unit with novelty spawning, merging and LRU eviction.

    Args:
        dim: Length of the exemplars this unit clusters.
        config: A :class:`UnitConfig`; keyword overrides are applied on top.

    Example:
        >>> unit = StamUnit(2, UnitConfig(capacity=4, theta_new=1.0, theta_merge=0.1))
        >>> unit.observe([0.0, 0.0])
        0
        >>> unit.observe([0.2, 0.0])
        0
        >>> unit.centroids[0].center
        array([0.1, 0. ])
    """

    def __init__(self, dim, config=None, **overrides):
        if int(dim) != dim or dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {dim!r}")
        config = config or UnitConfig()
        if overrides:
            config = UnitConfig(**{**config.__dict__, **overrides})
        self.dim = int(dim)
        self.config = config
        self.step = 0
        self._n = 0
        self._centers = np.empty((config.capacity, self.dim), dtype=np.float64)
        self._counts = np.zeros(config.capacity, dtype=np.int64)
        self._last = np.zeros(config.capacity, dtype=np.int64)

    # -- read-only views ----------------------------------------------------

    @property
    def capacity(self):
        return self.config.capacity

    @property
    def theta_new(self):
        return self.config.theta_new

    @property
    def theta_merge(self):
        return self.config.theta_merge

    @property
    def alpha_floor(self):
        return self.config.alpha_floor

    def __len__(self):
        return self._n

    def __repr__(self):
        return f"StamUnit(dim={self.dim}, centroids={self._n}/{self.capacity}, step={self.step})"

    @property
    def centers(self):
        return self._centers[: self._n].copy()

    @property
    def counts(self):
        return self._counts[: self._n].copy()

    @property
    def last_used(self):
        return self._last[: self._n].copy()

    @property
    def centroids(self):
        return [
            CentroidRecord(self._centers[i].copy(), int(self._counts[i]), int(self._last[i]))
            for i in range(self._n)
        ]

    def center(self, index):
        self._check_index(index)
        return self._centers[index].copy()

    # -- pure reads ---------------------------------------------------------

    def distances(self, x):
        x = as_exemplar(x, self.dim)
        diff = self._centers[: self._n] - x
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def nearest_centroid(self, x):
        """Index and Euclidean distance of the centroid closest to ``x``.

        Ties go to the lowest index.
        """
        if self._n == 0:
            raise EmptyUnit("unit has no centroids")
        d = self.distances(x)
        i = int(np.argmin(d))
        return i, float(d[i])

    def novelty_check(self, distance):
        return self._n == 0 or distance > self.theta_new

    def recall(self, x):
        """Associative read: a copy of the nearest centroid's center."""
        i, _ = self.nearest_centroid(x)
        return self._centers[i].copy()

    # -- mutation -----------------------------------------------------------

    def update_centroid(self, index, x):
        """Move centroid ``index`` toward ``x`` with rate ``max(1/count, alpha_floor)``."""
        self._check_index(index)
        x = as_exemplar(x, self.dim)
        count = int(self._counts[index]) + 1
        alpha = max(1.0 / count, self.alpha_floor)
        self._centers[index] += alpha * (x - self._centers[index])
        self._counts[index] = count
        self._last[index] = self.step

    def spawn_cluster(self, x):
        """Append a centroid at ``x``, evicting the LRU centroid if full.

        Returns the index of the new centroid.
        """
        x = as_exemplar(x, self.dim)
        if self._n == self.capacity:
            self._remove(int(np.argmin(self._last[: self._n])))
        i = self._n
        self._centers[i] = x
        self._counts[i] = 1
        self._last[i] = self.step
        self._n += 1
        return i

    def merge_overlaps(self, track=None):
        """Greedily merge the closest pair until all pairs are >= ``theta_merge`` apart.

        Merged centroids take the count-weighted mean, the summed count and
        the later ``last_used``. The merged record replaces the lower index.

        Args:
            track: Optional index to follow through the merges.

        Returns:
            The post-merge index of ``track`` (None if not given).
        """
        while self._n >= 2:
            best = None
            for i in range(self._n - 1):
                diff = self._centers[i + 1 : self._n] - self._centers[i]
                d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
                j = int(np.argmin(d))
                if best is None or d[j] < best[0]:
                    best = (float(d[j]), i, i + 1 + j)
            if best[0] >= self.theta_merge:
                break
            _, i, j = best
            track = self._merge_pair(i, j, track)
        return track

    def observe(self, x, prefer=None):
        """One online step: spawn or update, merge, then advance ``step``.

        Args:
            x: The exemplar.
            prefer: Centroid to update instead of the nearest one when ``x``
                is not novel. Used by the hierarchy to apply feedback-revised
                assignments; plain online clustering leaves it ``None``.

        Returns:
            Index (after merging) of the centroid that absorbed ``x``.
        """
        x = as_exemplar(x, self.dim)
        if self._n:
            nearest, dist = self.nearest_centroid(x)
        else:
            nearest, dist = None, np.inf
        if self.novelty_check(dist):
            index = self.spawn_cluster(x)
        else:
            index = nearest if prefer is None else prefer
            self.update_centroid(index, x)
        index = self._merge_from(index)
        self.step += 1
        return index

    # -- persistence helpers -----------------------------------------------

    @classmethod
    def from_records(cls, dim, config, records, step):
        unit = cls(dim, config)
        if len(records) > unit.capacity:
            raise ValidationError(f"{len(records)} centroids exceed capacity {unit.capacity}")
        for i, rec in enumerate(records):
            center = np.asarray(rec.center, dtype=np.float64)
            if center.shape != (unit.dim,) or not np.all(np.isfinite(center)):
                raise ValidationError(f"centroid {i} has a bad center")
            if rec.count < 1 or not 0 <= rec.last_used <= step:
                raise ValidationError(f"centroid {i} has inconsistent counters")
            unit._centers[i] = center
            unit._counts[i] = rec.count
            unit._last[i] = rec.last_used
        unit._n = len(records)
        unit.step = int(step)
        return unit

    def state_hash(self):
        h = hashlib.sha256()
        h.update(repr((self.dim, self.config, self.step, self._n)).encode())
        h.update(self._centers[: self._n].tobytes())
        h.update(self._counts[: self._n].tobytes())
        h.update(self._last[: self._n].tobytes())
        return h.hexdigest()

    def copy(self):
        return copy.deepcopy(self)

    # -- internals ----------------------------------------------------------

    def _check_index(self, index):
        if not 0 <= index < self._n:
            raise IndexOutOfRange(f"centroid index {index} out of range for {self._n} centroids")

    def _remove(self, i):
        n = self._n
        self._centers[i : n - 1] = self._centers[i + 1 : n]
        self._counts[i : n - 1] = self._counts[i + 1 : n]
        self._last[i : n - 1] = self._last[i + 1 : n]
        self._n = n - 1

    def _merge_pair(self, i, j, track):
        ci, cj = self._counts[i], self._counts[j]
        total = ci + cj
        self._centers[i] = (ci * self._centers[i] + cj * self._centers[j]) / total
        self._counts[i] = total
        self._last[i] = max(self._last[i], self._last[j])
        self._remove(j)
        if track is not None:
            if track == j:
                track = i
            elif track > j:
                track -= 1
        return track

    def _merge_from(self, k):
        # Before an observe every pair is already >= theta_merge apart, so only
        # pairs touching the modified centroid can qualify; this is the same
        # closest-pair-first sequence merge_overlaps would produce.
        while self._n >= 2:
            diff = self._centers[: self._n] - self._centers[k]
            d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            d[k] = np.inf
            m = int(np.argmin(d))
            if d[m] >= self.theta_merge:
                break
            i, j = min(k, m), max(k, m)
            k = self._merge_pair(i, j, k)
        return k
