"""Receptive-field hierarchies of STAM units and the feedback settle loop.

Level 1 tiles the input frame into receptive fields, one unit per field.
Each higher level reads the concatenation of the centroids selected below it
(laid out as a one-row frame) and groups consecutive lower fields into its own
fields. During :meth:`Hierarchy.settle` the selected upper centroids are sent
back down as predictions, sliced per lower field, and the lower units
re-select their centroid against a blend of their own centroid and the
prediction.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, IndexOutOfRange, LengthMismatch, ValidationError
from .unit import StamUnit, UnitConfig, as_exemplar


@dataclass(frozen=True)
class ReceptiveField:
    row_offset: int
    col_offset: int
    height: int
    width: int


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one layer plus the parameters of its units.

    Raises:
        GeometryError: if the fields do not tile the input frame exactly.
    """

    input_height: int
    input_width: int
    field_height: int
    field_width: int
    stride: int
    unit_config: UnitConfig = field(default_factory=UnitConfig)

    def __post_init__(self):
        for name in ("input_height", "input_width", "field_height", "field_width", "stride"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise GeometryError(f"{name} must be a positive integer, got {v!r}")
        if self.field_height > self.input_height or self.field_width > self.input_width:
            raise GeometryError("receptive field is larger than the input frame")
        if (self.input_height - self.field_height) % self.stride:
            raise GeometryError(
                f"height {self.input_height} cannot be tiled by {self.field_height} with stride {self.stride}"
            )
        if (self.input_width - self.field_width) % self.stride:
            raise GeometryError(
                f"width {self.input_width} cannot be tiled by {self.field_width} with stride {self.stride}"
            )

    @property
    def input_length(self):
        return self.input_height * self.input_width

    @property
    def unit_dim(self):
        return self.field_height * self.field_width

    @property
    def grid_shape(self):
        return (
            (self.input_height - self.field_height) // self.stride + 1,
            (self.input_width - self.field_width) // self.stride + 1,
        )

    @property
    def n_fields(self):
        rows, cols = self.grid_shape
        return rows * cols

    @property
    def code_length(self):
        """Length of the concatenated per-field codes this layer emits."""
        return self.n_fields * self.unit_dim


def tile_input(spec):
    """Row-major list of the receptive fields of ``spec``."""
    rows, cols = spec.grid_shape
    return [
        ReceptiveField(r * spec.stride, c * spec.stride, spec.field_height, spec.field_width)
        for r in range(rows)
        for c in range(cols)
    ]


def extract_patch(frame, height, width, rf):
    """Row-major copy of the sub-rectangle ``rf`` of a flat ``height x width`` frame."""
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if frame.shape[0] != height * width:
        raise GeometryError(f"frame has {frame.shape[0]} values, expected {height}x{width}")
    if (
        rf.row_offset < 0
        or rf.col_offset < 0
        or rf.row_offset + rf.height > height
        or rf.col_offset + rf.width > width
    ):
        raise GeometryError(f"{rf} lies outside a {height}x{width} frame")
    img = frame.reshape(height, width)
    return img[rf.row_offset : rf.row_offset + rf.height, rf.col_offset : rf.col_offset + rf.width].ravel().copy()


def paste_patches(patches, height, width, fields):
    """Inverse of tiling: write patches back into a flat frame.

    Overlapping pixels are averaged; pixels no field covers stay zero.
    """
    if len(patches) != len(fields):
        raise LengthMismatch(f"{len(patches)} patches for {len(fields)} fields")
    acc = np.zeros((height, width))
    hits = np.zeros((height, width))
    for patch, rf in zip(patches, fields):
        if rf.row_offset + rf.height > height or rf.col_offset + rf.width > width:
            raise GeometryError(f"{rf} lies outside a {height}x{width} frame")
        patch = np.asarray(patch, dtype=np.float64)
        if patch.size != rf.height * rf.width:
            raise GeometryError(f"patch of {patch.size} values does not fit {rf}")
        sl = np.s_[rf.row_offset : rf.row_offset + rf.height, rf.col_offset : rf.col_offset + rf.width]
        acc[sl] += patch.reshape(rf.height, rf.width)
        hits[sl] += 1
    np.divide(acc, hits, out=acc, where=hits > 0)
    return acc.ravel()


def feedback_slice(upper_prediction, lower_spec, field_index):
    """The part of an upper-level prediction that belongs to one lower field."""
    pred = np.asarray(upper_prediction, dtype=np.float64).reshape(-1)
    if pred.shape[0] != lower_spec.code_length:
        raise LengthMismatch(f"prediction has length {pred.shape[0]}, expected {lower_spec.code_length}")
    if not 0 <= field_index < lower_spec.n_fields:
        raise IndexOutOfRange(f"field {field_index} out of range for {lower_spec.n_fields} fields")
    d = lower_spec.unit_dim
    return pred[field_index * d : (field_index + 1) * d].copy()


def prediction_error(local_centroid, x_b):
    c = np.asarray(local_centroid, dtype=np.float64)
    b = np.asarray(x_b, dtype=np.float64)
    if c.shape != b.shape:
        raise LengthMismatch(f"centroid length {c.size} != prediction length {b.size}")
    return c - b


@dataclass
class FieldTrace:
    """Settle state of one field.

    ``index`` is None when, during a learning settle, the patch is novel and
    will spawn a new centroid; ``local_centroid`` is then the patch itself.
    ``feedback`` is None when no prediction reached the field.
    """

    local_centroid: np.ndarray
    feedback: np.ndarray | None
    error: np.ndarray
    index: int | None


@dataclass
class SettleTrace:
    layers: list
    reconstruction: np.ndarray
    iterations_run: int
    history: list = field(default_factory=list)
    assignments: list = field(default_factory=list)

    @property
    def top_index(self):
        """Centroid index selected by the first top-level unit."""
        return self.assignments[-1][0]


class Layer:
    def __init__(self, spec):
        self.spec = spec
        self.fields = tile_input(spec)
        self.units = [StamUnit(spec.unit_dim, spec.unit_config) for _ in self.fields]

    def patches(self, frame):
        s = self.spec
        return [extract_patch(frame, s.input_height, s.input_width, rf) for rf in self.fields]

    def paste(self, codes):
        s = self.spec
        return paste_patches(codes, s.input_height, s.input_width, self.fields)


class Hierarchy:
    """Stack of layers, level 1 first.

    Args:
        specs: One :class:`LayerSpec` per level. Level ``l + 1`` must read a
            frame whose size equals level ``l``'s concatenated code length.
        settle_iterations: Number of feedback iterations ``T`` after the
            initial feedforward pass.
        blend_lambda: Weight of the unit's own centroid in the re-selection
            target; ``1`` ignores feedback, ``0`` follows it completely.
    """

    def __init__(self, specs, settle_iterations=3, blend_lambda=0.5):
        if not specs:
            raise ValidationError("a hierarchy needs at least one layer")
        if int(settle_iterations) != settle_iterations or settle_iterations < 0:
            raise ValidationError(f"settle_iterations must be a non-negative integer, got {settle_iterations!r}")
        if not 0.0 <= blend_lambda <= 1.0:
            raise ValidationError(f"blend_lambda must lie in [0, 1], got {blend_lambda!r}")
        for lower, upper in zip(specs, specs[1:]):
            if upper.input_length != lower.code_length:
                raise GeometryError(
                    f"layer input of {upper.input_length} values does not match "
                    f"{lower.code_length} code values from the layer below"
                )
        self.layers = [Layer(s) for s in specs]
        self.settle_iterations = int(settle_iterations)
        self.blend_lambda = float(blend_lambda)

    @classmethod
    def build(cls, frame_height, frame_width, field_height, field_width, stride, unit_configs,
              fields_per_unit=(), settle_iterations=3, blend_lambda=0.5):
        """Build a hierarchy from level-1 geometry and per-level grouping.

        ``unit_configs[l]`` parametrizes level ``l + 1``. ``fields_per_unit[k]``
        is how many consecutive fields of level ``k + 1`` one unit of level
        ``k + 2`` reads; it defaults to all of them (a single unit on top).
        """
        specs = [LayerSpec(frame_height, frame_width, field_height, field_width, stride, unit_configs[0])]
        for k, cfg in enumerate(unit_configs[1:]):
            below = specs[-1]
            group = fields_per_unit[k] if k < len(fields_per_unit) and fields_per_unit[k] else below.n_fields
            width = group * below.unit_dim
            specs.append(LayerSpec(1, below.code_length, 1, width, width, cfg))
        return cls(specs, settle_iterations, blend_lambda)

    @property
    def specs(self):
        return [layer.spec for layer in self.layers]

    @property
    def top(self):
        return self.layers[-1]

    def units(self):
        """Yield ``(level, field_index, unit)`` with levels counted from 0."""
        for level, layer in enumerate(self.layers):
            for f, unit in enumerate(layer.units):
                yield level, f, unit

    def state_hash(self):
        h = hashlib.sha256()
        h.update(repr((self.specs, self.settle_iterations, self.blend_lambda)).encode())
        for _, _, unit in self.units():
            h.update(unit.state_hash().encode())
        return h.hexdigest()

    def copy(self):
        return copy.deepcopy(self)

    # -- feedforward ----------------------------------------------------------

    def feedforward_layer(self, level, frame, learn=False):
        """Run one layer bottom-up.

        With ``learn`` each unit observes its patch and emits the centroid that
        absorbed it; otherwise each unit emits its recalled centroid.

        Returns:
            ``(codes, concatenated_code)``.
        """
        layer = self.layers[level]
        frame = as_exemplar(frame, layer.spec.input_length)
        codes = []
        for unit, patch in zip(layer.units, layer.patches(frame)):
            if learn:
                codes.append(unit.center(unit.observe(patch)))
            else:
                codes.append(unit.recall(patch))
        return codes, np.concatenate(codes)

    # -- settle loop ----------------------------------------------------------

    def settle(self, frame, learn=False, iterations=None):
        """Reconcile bottom-up evidence with top-down predictions.

        Iteration 0 is a pure feedforward pass. Each later iteration sends
        predictions down (every level below the top re-selects the centroid
        nearest to ``lambda * own + (1 - lambda) * prediction``) and then
        refreshes the upper levels from the revised codes. With ``learn`` the
        units are updated once, after the last iteration, using the final
        selections; the returned trace describes the state just before that
        update.

        Args:
            frame: Flat level-1 input frame.
            learn: Whether to update the units.
            iterations: Overrides ``settle_iterations`` for this call.
        """
        T = self.settle_iterations if iterations is None else int(iterations)
        L = len(self.layers)
        frame = as_exemplar(frame, self.layers[0].spec.input_length)

        idx = [[None] * len(layer.units) for layer in self.layers]
        ff = [[None] * len(layer.units) for layer in self.layers]
        codes = [[None] * len(layer.units) for layer in self.layers]
        fb = [[None] * len(layer.units) for layer in self.layers]

        x = frame
        for level, layer in enumerate(self.layers):
            for f, (unit, patch) in enumerate(zip(layer.units, layer.patches(x))):
                ff[level][f], codes[level][f] = self._select(unit, patch, learn)
                idx[level][f] = ff[level][f]
            x = np.concatenate(codes[level])
        history = [self._snapshot(idx, codes, fb)]

        for _ in range(T):
            for level in range(L - 2, -1, -1):
                layer = self.layers[level]
                pred = self.layers[level + 1].paste(codes[level + 1])
                for f, unit in enumerate(layer.units):
                    fb[level][f] = feedback_slice(pred, layer.spec, f)
                    self._revise(unit, level, f, idx, ff, codes, fb)
            for level in range(1, L):
                layer = self.layers[level]
                x = np.concatenate(codes[level - 1])
                for f, (unit, patch) in enumerate(zip(layer.units, layer.patches(x))):
                    ff[level][f], codes[level][f] = self._select(unit, patch, learn)
                    idx[level][f] = ff[level][f]
                    if fb[level][f] is not None:
                        self._revise(unit, level, f, idx, ff, codes, fb)
            history.append(self._snapshot(idx, codes, fb))

        layers = history[-1]
        if learn:
            assignments = self._commit(frame, idx, revised=T > 0)
        else:
            assignments = [list(row) for row in idx]
        reconstruction = self.layers[0].paste([ft.local_centroid for ft in layers[0]])
        return SettleTrace(layers, reconstruction, T, history, assignments)

    def reconstruct(self, trace):
        return reconstruct(trace, self)

    def _select(self, unit, patch, learn):
        if learn:
            if len(unit) == 0:
                return None, patch
            i, d = unit.nearest_centroid(patch)
            if unit.novelty_check(d):
                return None, patch
            return i, unit.center(i)
        i, _ = unit.nearest_centroid(patch)
        return i, unit.center(i)

    def _revise(self, unit, level, f, idx, ff, codes, fb):
        if ff[level][f] is None:
            return
        lam = self.blend_lambda
        target = lam * unit.center(ff[level][f]) + (1.0 - lam) * fb[level][f]
        i, _ = unit.nearest_centroid(target)
        idx[level][f] = i
        codes[level][f] = unit.center(i)

    def _snapshot(self, idx, codes, fb):
        snap = []
        for level_idx, level_codes, level_fb in zip(idx, codes, fb):
            row = []
            for i, c, b in zip(level_idx, level_codes, level_fb):
                err = np.zeros_like(c) if b is None else prediction_error(c, b)
                row.append(FieldTrace(c.copy(), None if b is None else b.copy(), err, i))
            snap.append(row)
        return snap

    def _commit(self, frame, idx, revised):
        L = len(self.layers)
        assignments = []
        x = frame
        for level, layer in enumerate(self.layers):
            out, row = [], []
            for f, (unit, patch) in enumerate(zip(layer.units, layer.patches(x))):
                prefer = idx[level][f] if revised and level < L - 1 else None
                i = unit.observe(patch, prefer=prefer)
                row.append(i)
                out.append(unit.center(i))
            assignments.append(row)
            x = np.concatenate(out)
        return assignments


def reconstruct(trace, h):
    """Paste the final level-1 centroids of ``trace`` back into a full frame."""
    layer = h.layers[0]
    if len(trace.layers[0]) != len(layer.fields):
        raise GeometryError("trace does not match the hierarchy's level-1 tiling")
    return layer.paste([ft.local_centroid for ft in trace.layers[0]])
