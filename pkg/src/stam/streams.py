"""Datasets and streams: IDX files, synthetic prototypes, phased schedules."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, InsufficientData, TrailingBytes, TruncatedFile, ValidationError

IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803


@dataclass
class Dataset:
    """Frames in [0, 1], stored as a ``(n, height * width)`` float array."""

    frames: np.ndarray
    height: int
    width: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64).reshape(-1, self.height * self.width)
        if self.frames.size and (self.frames.min() < 0.0 or self.frames.max() > 1.0):
            raise ValidationError("frame values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.frames),):
                raise ValidationError("labels must match frames one to one")
            if self.labels.size and self.labels.min() < 0:
                raise ValidationError("labels must be non-negative")

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None and np.array_equal(self.labels, other.labels)
        )
        return (
            self.height == other.height
            and self.width == other.width
            and np.array_equal(self.frames, other.frames)
            and same_labels
        )

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.frames[indices], self.height, self.width, labels)


# -- IDX -----------------------------------------------------------------------


def parse_idx(data):
    """Parse an IDX byte string.

    Image files (magic ``0x803``, 3-D uint8) become a :class:`Dataset` with
    pixels scaled by 1/255; label files (magic ``0x801``, 1-D uint8) become an
    int array.

    Raises:
        BadMagic: unknown magic number.
        TruncatedFile: fewer bytes than the header promises.
        TrailingBytes: more bytes than the header promises.
    """
    data = bytes(data)
    if len(data) < 4:
        raise TruncatedFile("missing IDX magic number")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IDX_LABELS_MAGIC:
        ndims = 1
    elif magic == IDX_IMAGES_MAGIC:
        ndims = 3
    else:
        raise BadMagic(f"unsupported IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndims
    if len(data) < header:
        raise TruncatedFile(f"IDX header needs {header} bytes, file has {len(data)}")
    dims = struct.unpack(f">{ndims}I", data[4:header])
    expected = header + int(np.prod(dims, dtype=np.int64))
    if len(data) < expected:
        raise TruncatedFile(f"IDX payload needs {expected} bytes, file has {len(data)}")
    if len(data) > expected:
        raise TrailingBytes(f"{len(data) - expected} bytes after the IDX payload")
    payload = np.frombuffer(data, dtype=np.uint8, offset=header)
    if magic == IDX_LABELS_MAGIC:
        return payload.astype(np.int64)
    n, rows, cols = dims
    return Dataset(payload.reshape(n, rows * cols) / 255.0, rows, cols)


def write_idx(obj):
    """Serialize a :class:`Dataset` (images) or a label sequence to IDX bytes."""
    if isinstance(obj, Dataset):
        pixels = np.rint(obj.frames * 255.0).astype(np.uint8)
        header = struct.pack(">4I", IDX_IMAGES_MAGIC, len(obj), obj.height, obj.width)
        return header + pixels.tobytes()
    labels = np.asarray(obj)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() > 255)):
        raise ValidationError("labels must be a 1-D sequence of values in 0..255")
    return struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.astype(np.uint8).tobytes()


def load_idx_dataset(images_path, labels_path=None):
    with open(images_path, "rb") as fh:
        ds = parse_idx(fh.read())
    if not isinstance(ds, Dataset):
        raise BadMagic(f"{images_path} is not an IDX image file")
    if labels_path is not None:
        with open(labels_path, "rb") as fh:
            labels = parse_idx(fh.read())
        if isinstance(labels, Dataset):
            raise BadMagic(f"{labels_path} is not an IDX label file")
        ds = Dataset(ds.frames, ds.height, ds.width, labels)
    return ds


# -- synthetic data ----------------------------------------------------------------


class PrototypeSampler:
    """Draws noisy, clamped copies of fixed prototype frames.

    Each call continues the same seeded random stream, so a fresh sampler
    with the same seed replays the same sequence.
    """

    def __init__(self, prototypes, height, width, sigma, seed):
        self.prototypes = np.asarray(prototypes, dtype=np.float64)
        self.height = height
        self.width = width
        self.sigma = float(sigma)
        self.rng = np.random.default_rng(seed)

    def sample(self, n=None, labels=None):
        """Return ``(frames, labels)``; labels are drawn uniformly unless given."""
        if labels is None:
            labels = self.rng.integers(0, len(self.prototypes), size=n)
        labels = np.asarray(labels, dtype=np.int64)
        frames = self.prototypes[labels]
        if self.sigma > 0:
            frames = frames + self.rng.normal(0.0, self.sigma, size=frames.shape)
        return np.clip(frames, 0.0, 1.0), labels

    def __iter__(self):
        while True:
            frames, labels = self.sample(1)
            yield frames[0], int(labels[0])

    def dataset(self, per_class):
        """Class-balanced dataset, ``per_class`` frames per prototype, shuffled."""
        labels = np.repeat(np.arange(len(self.prototypes)), per_class)
        labels = labels[self.rng.permutation(len(labels))]
        frames, labels = self.sample(labels=labels)
        return Dataset(frames, self.height, self.width, labels)


def synth_prototypes(K, height, width, sigma, seed, min_separation=0.0, max_tries=10_000):
    """Draw ``K`` uniform prototype frames and a sampler around them.

    ``min_separation`` re-draws (deterministically) until every pair of
    prototypes is at least that far apart.
    """
    if K < 1:
        raise ValidationError("K must be at least 1")
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        protos = rng.uniform(0.0, 1.0, size=(K, height * width))
        if K == 1 or min_separation <= 0 or _min_pairwise(protos) >= min_separation:
            break
    else:
        raise ValidationError(f"could not place {K} prototypes {min_separation} apart")
    sampler_seed = int(rng.integers(2**63 - 1))
    return protos, PrototypeSampler(protos, height, width, sigma, sampler_seed)


def synth_composites(K, height, width, sigma, seed, grid=2, variants=None, detail_size=1, detail=1.0, low=0.0):
    """Composite images whose grid cells come from small per-cell vocabularies.

    Every cell of a ``grid x grid`` layout owns ``variants`` (default ``K``)
    patterns sharing one random base; variant ``v`` differs from the base only
    in its own ``detail_size`` square block, pushed toward the opposite
    intensity by ``detail``. Composite ``k`` uses variant ``k % variants`` in
    every cell, so single cells are easy to confuse under noise while whole
    images stay well apart. ``low`` raises the floor of the base intensities.

    Returns:
        ``(prototypes, sampler)`` as for :func:`synth_prototypes`.
    """
    if height % grid or width % grid:
        raise ValidationError(f"{height}x{width} frame cannot be split into a {grid}x{grid} grid")
    variants = variants or K
    ch, cw = height // grid, width // grid
    slots_r, slots_c = ch // detail_size, cw // detail_size
    if variants > slots_r * slots_c:
        raise ValidationError(f"{variants} detail blocks do not fit a {ch}x{cw} cell")
    rng = np.random.default_rng(seed)
    vocab = []
    for _ in range(grid * grid):
        base = rng.uniform(low, 1.0, size=(ch, cw))
        slots = rng.choice(slots_r * slots_c, size=variants, replace=False)
        cell = []
        for slot in slots:
            r, c = (int(slot) // slots_c) * detail_size, (int(slot) % slots_c) * detail_size
            pat = base.copy()
            block = pat[r : r + detail_size, c : c + detail_size]
            target = np.where(block < 0.5 * (1.0 + low), 1.0, low)
            pat[r : r + detail_size, c : c + detail_size] = block + detail * (target - block)
            cell.append(pat)
        vocab.append(cell)
    protos = np.empty((K, height, width))
    for k in range(K):
        for q in range(grid * grid):
            r, c = divmod(q, grid)
            protos[k, r * ch : (r + 1) * ch, c * cw : (c + 1) * cw] = vocab[q][k % variants]
    protos = protos.reshape(K, -1)
    sampler_seed = int(rng.integers(2**63 - 1))
    return protos, PrototypeSampler(protos, height, width, sigma, sampler_seed)


def _min_pairwise(points):
    best = np.inf
    for i in range(len(points) - 1):
        d = np.linalg.norm(points[i + 1 :] - points[i], axis=1)
        best = min(best, float(d.min()))
    return best


# -- schedules ---------------------------------------------------------------------


@dataclass
class StreamSchedule:
    items: list
    phases: list

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def phase_items(self, phase_id):
        return [i for i, p in self.items if p == phase_id]


def class_incremental_schedule(dataset, phase_label_sets, per_phase_count, seed, allow_reuse=False):
    """Phased stream drawing ``per_phase_count`` frames per phase.

    Within a phase frames are sampled without replacement. Frames used by an
    earlier phase are not reused unless ``allow_reuse`` is set and the phase
    would otherwise run out.

    Raises:
        InsufficientData: a phase has fewer eligible frames than requested.
    """
    if dataset.labels is None:
        raise InsufficientData("class-incremental schedules need a labeled dataset")
    rng = np.random.default_rng(seed)
    used = np.zeros(len(dataset), dtype=bool)
    items, phases = [], []
    for phase_id, label_set in enumerate(phase_label_sets):
        label_set = frozenset(int(v) for v in label_set)
        phases.append((phase_id, label_set))
        eligible = np.isin(dataset.labels, list(label_set))
        pool = np.flatnonzero(eligible & ~used)
        if len(pool) < per_phase_count:
            if allow_reuse:
                pool = np.flatnonzero(eligible)
            if len(pool) < per_phase_count:
                raise InsufficientData(
                    f"phase {phase_id} needs {per_phase_count} frames with labels {sorted(label_set)}, "
                    f"only {len(pool)} available"
                )
        chosen = pool[rng.permutation(len(pool))[:per_phase_count]]
        used[chosen] = True
        items.extend((int(i), phase_id) for i in chosen)
    return StreamSchedule(items, phases)


# -- transforms --------------------------------------------------------------------


def brightness_shift(frame, delta):
    if not -1.0 <= delta <= 1.0:
        raise ValidationError(f"delta must lie in [-1, 1], got {delta}")
    return np.clip(np.asarray(frame, dtype=np.float64) + delta, 0.0, 1.0)


def salt_and_pepper(frame, p, rng):
    """Replace each pixel with 0 or 1 (equally likely) with probability ``p``."""
    frame = np.asarray(frame, dtype=np.float64).copy()
    hit = rng.random(frame.shape) < p
    frame[hit] = rng.integers(0, 2, size=int(hit.sum())).astype(np.float64)
    return frame
