"""Metrics for continual-learning runs: purity, few-shot labels, forgetting, drift, memory."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput, LengthMismatch, UnlabeledCentroid, ValidationError
from .unit import as_exemplar

LOST = math.inf


def purity(assignments):
    """Fraction of items that carry their centroid's majority label.

    Args:
        assignments: Iterable of ``(centroid_id, true_label)`` pairs.
    """
    assignments = list(assignments)
    if not assignments:
        raise EmptyInput("purity needs at least one assignment")
    by_centroid = defaultdict(Counter)
    for cid, label in assignments:
        by_centroid[cid][label] += 1
    majority = sum(max(c.values()) for c in by_centroid.values())
    return majority / len(assignments)


def majority_label(counter):
    top = max(counter.values())
    return min(label for label, n in counter.items() if n == top)


@dataclass
class LabelMap:
    """Labels attached to the top-level centroids that won at least one probe."""

    labels: dict
    n_centroids: int
    votes: dict = field(default_factory=dict)

    def label_of(self, index):
        try:
            return self.labels[index]
        except KeyError:
            raise UnlabeledCentroid(f"top-level centroid {index} has no label") from None

    def __len__(self):
        return len(self.labels)


def _top_unit(h):
    if len(h.top.units) != 1:
        raise ValidationError("classification needs a hierarchy with a single top-level unit")
    return h.top.units[0]


def build_label_map(h, frames, labels):
    """Few-shot labeling: settle each probe and let it vote for its top-level winner.

    Each centroid takes its majority vote, ties going to the lower label.
    The hierarchy is not modified.
    """
    frames = np.asarray(frames, dtype=np.float64)
    labels = [int(v) for v in labels]
    if len(labels) == 0:
        raise EmptyInput("at least one labeled probe is required")
    if len(frames) != len(labels):
        raise LengthMismatch("probe frames and labels differ in length")
    top = _top_unit(h)
    votes = defaultdict(Counter)
    for frame, label in zip(frames, labels):
        votes[h.settle(frame).top_index][label] += 1
    mapping = {cid: majority_label(c) for cid, c in sorted(votes.items())}
    return LabelMap(mapping, len(top), {cid: dict(c) for cid, c in sorted(votes.items())})


def classify(h, label_map, frame):
    """Label of the top-level centroid that wins ``frame`` (read-only)."""
    if not label_map.labels:
        raise UnlabeledCentroid("label map is empty")
    return label_map.label_of(h.settle(frame).top_index)


def accuracy(h, label_map, frames, labels):
    """Classification accuracy; frames landing on unlabeled centroids count as errors."""
    labels = list(labels)
    if not labels:
        raise EmptyInput("accuracy needs at least one frame")
    hits = 0
    for frame, label in zip(frames, labels):
        try:
            hits += classify(h, label_map, frame) == label
        except UnlabeledCentroid:
            pass
    return hits / len(labels)


def forgetting_score(acc_before, acc_after):
    """Drop in accuracy on old classes; negative values mean backward transfer."""
    return acc_before - acc_after


def centroid_drift(unit, prototypes):
    """Distance from each prototype to its nearest centroid.

    A prototype with no centroid within ``theta_new`` is lost and reported as
    :data:`LOST` (infinity).
    """
    out = []
    for p in np.atleast_2d(np.asarray(prototypes, dtype=np.float64)):
        if p.shape[0] != unit.dim:
            raise DimensionMismatch(f"prototype has {p.shape[0]} values, unit expects {unit.dim}")
        if len(unit) == 0:
            out.append(LOST)
            continue
        _, d = unit.nearest_centroid(p)
        out.append(d if d <= unit.theta_new else LOST)
    return out


def hierarchy_drift(h, prototypes):
    """Per-prototype drift over all level-1 fields (worst field; lost if any field is)."""
    layer = h.layers[0]
    out = []
    for p in np.atleast_2d(prototypes):
        per_field = [centroid_drift(u, [patch])[0] for u, patch in zip(layer.units, layer.patches(p))]
        out.append(max(per_field))
    return out


@dataclass
class MemoryAudit:
    units: int
    centroids: int
    stored_reals: int
    stored_counters: int
    exemplar_records: int

    @property
    def stored_bytes(self):
        return 8 * (self.stored_reals + self.stored_counters)


def memory_audit(h, checkpoint_text=None):
    """Count what the hierarchy actually stores.

    Stored reals are the centroid coordinates; counters are each centroid's
    count and recency stamp plus one step counter per unit. The serialized
    unit state (or ``checkpoint_text`` if given) is scanned for any record
    that is not a centroid, unit or config record.
    """
    from .checkpoint import count_exemplar_records, dumps_units

    units = centroids = reals = 0
    for _, _, unit in h.units():
        units += 1
        centroids += len(unit)
        reals += len(unit) * unit.dim
    text = checkpoint_text if checkpoint_text is not None else dumps_units(h)
    return MemoryAudit(units, centroids, reals, 2 * centroids + units, count_exemplar_records(text))


def reconstruction_mse(original, reconstruction):
    a = as_exemplar(original)
    b = as_exemplar(reconstruction)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.mean((a - b) ** 2))


@dataclass
class MetricsReport:
    purity: float | None = None
    accuracy_per_phase: dict = field(default_factory=dict)
    forgetting: float | None = None
    drift_per_prototype: list = field(default_factory=list)
    reconstruction_mse: float | None = None
    centroid_counts: dict = field(default_factory=dict)

    def rows(self):
        """``(phase, metric, value)`` rows in a fixed order."""
        rows = []
        if self.purity is not None:
            rows.append(("all", "purity", self.purity))
        for phase, acc in sorted(self.accuracy_per_phase.items()):
            rows.append((str(phase), "accuracy_per_phase", acc))
        if self.forgetting is not None:
            rows.append(("all", "forgetting", self.forgetting))
        for k, d in enumerate(self.drift_per_prototype):
            rows.append(("all", f"drift_per_prototype[{k}]", d))
        if self.reconstruction_mse is not None:
            rows.append(("all", "reconstruction_mse", self.reconstruction_mse))
        for key, n in sorted(self.centroid_counts.items()):
            rows.append(("all", f"centroid_counts[{key}]", n))
        return rows


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "lost"
    return repr(v)


def rows_to_csv(rows):
    """Render ``(phase, metric, value)`` rows with the fixed report header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["phase", "metric", "value"])
    for phase, metric, value in rows:
        writer.writerow([phase, metric, format_value(value)])
    return buf.getvalue()


def read_report(text):
    """Parse a report CSV back into ``{(phase, metric): value}``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["phase", "metric", "value"]:
        raise ValidationError(f"unexpected report header {header!r}")
    out = {}
    for phase, metric, value in reader:
        out[(phase, metric)] = math.inf if value == "lost" else float(value)
    return out
