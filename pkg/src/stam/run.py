"""Config-driven pipeline used by the command line: data, training, evaluation, export."""

from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass

import numpy as np

from . import evaluation as ev
from .errors import ValidationError
from .streams import (
    Dataset,
    class_incremental_schedule,
    load_idx_dataset,
    salt_and_pepper,
    synth_composites,
    synth_prototypes,
    write_idx,
)


def sub_seed(seed, name):
    """Independent, reproducible seed for one named random stream of a run."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


@dataclass
class RunData:
    train: Dataset
    test: Dataset
    probes: Dataset
    prototypes: np.ndarray | None = None
    clean_test: np.ndarray | None = None


def make_data(cfg):
    """Training, test and probe sets for ``cfg``."""
    if cfg.data_source == "synth":
        return _synth_data(cfg)
    train = load_idx_dataset(cfg.resolve(cfg.train_images), cfg.resolve(cfg.train_labels))
    if cfg.test_images:
        test = load_idx_dataset(cfg.resolve(cfg.test_images), cfg.resolve(cfg.test_labels))
    else:
        test = train
    if (train.height, train.width) != (cfg.frame_height, cfg.frame_width):
        raise ValidationError(f"IDX frames are {train.height}x{train.width}, config expects "
                              f"{cfg.frame_height}x{cfg.frame_width}")
    if train.labels is None:
        raise ValidationError("IDX training data needs a label file")
    probe_idx = []
    for label in np.unique(train.labels):
        probe_idx.extend(np.flatnonzero(train.labels == label)[: cfg.probes_per_class].tolist())
    test = _limit_per_class(test, cfg.test_per_class)
    return RunData(train, _corrupt(cfg, test), train.subset(sorted(probe_idx)), None, test.frames)


def _limit_per_class(ds, per_class):
    if ds.labels is None:
        return ds
    keep = []
    for label in np.unique(ds.labels):
        keep.extend(np.flatnonzero(ds.labels == label)[:per_class].tolist())
    return ds.subset(sorted(keep))


def _synth_data(cfg):
    seed = sub_seed(cfg.seed, "synth")
    H, W = cfg.frame_height, cfg.frame_width
    if cfg.synth_kind == "composites":
        protos, sampler = synth_composites(
            cfg.synth_classes, H, W, cfg.synth_sigma, seed, detail_size=cfg.synth_detail_size, low=cfg.synth_low
        )
    else:
        protos, sampler = synth_prototypes(
            cfg.synth_classes, H, W, cfg.synth_sigma, seed, min_separation=cfg.synth_min_separation
        )
    train = sampler.dataset(cfg.synth_per_class)
    test = sampler.dataset(cfg.test_per_class)
    probes = sampler.dataset(cfg.probes_per_class)
    clean = protos[test.labels]
    return RunData(train, _corrupt(cfg, test), probes, protos, clean)


def _corrupt(cfg, ds):
    if cfg.test_corruption <= 0:
        return ds
    rng = np.random.default_rng(sub_seed(cfg.seed, "corruption"))
    frames = np.array([salt_and_pepper(f, cfg.test_corruption, rng) for f in ds.frames])
    return Dataset(frames, ds.height, ds.width, ds.labels)


def make_schedule(cfg, train):
    return class_incremental_schedule(
        train, cfg.phase_label_sets(np.unique(train.labels)), cfg.per_phase_count, sub_seed(cfg.seed, "schedule")
    )


def train(state, data, schedule, max_items=None):
    """Feed schedule items from ``state.cursor`` through learning settles.

    Returns the ``(centroid, label)`` pairs of the top-level assignments.
    """
    h = state.hierarchy
    stop = len(schedule) if max_items is None else min(len(schedule), state.cursor + max_items)
    pairs = []
    for frame_index, _ in schedule.items[state.cursor : stop]:
        trace = h.settle(data.train.frames[frame_index], learn=True)
        pairs.append((trace.top_index, int(data.train.labels[frame_index])))
    state.cursor = stop
    return pairs


def evaluate(cfg, h, data, baseline=None):
    """Metrics report for a trained hierarchy (read-only)."""
    report = ev.MetricsReport()
    label_map = ev.build_label_map(h, data.probes.frames, data.probes.labels)
    winners = []
    mses = []
    for k, frame in enumerate(data.test.frames):
        trace = h.settle(frame)
        winners.append((trace.top_index, int(data.test.labels[k])))
        mses.append(ev.reconstruction_mse(data.clean_test[k], trace.reconstruction))
    report.purity = ev.purity(winners)
    report.reconstruction_mse = float(np.mean(mses))
    predicted = {cid: label_map.labels.get(cid) for cid, _ in winners}
    for phase_id, label_set in enumerate(cfg.phase_label_sets(np.unique(data.train.labels))):
        members = [(cid, lab) for cid, lab in winners if lab in label_set]
        if members:
            report.accuracy_per_phase[phase_id] = sum(predicted[c] == lab for c, lab in members) / len(members)
    if baseline is not None and 0 in report.accuracy_per_phase and ("0", "accuracy_per_phase") in baseline:
        report.forgetting = ev.forgetting_score(baseline[("0", "accuracy_per_phase")], report.accuracy_per_phase[0])
    if data.prototypes is not None:
        report.drift_per_prototype = ev.hierarchy_drift(h, data.prototypes)
    for level, f, unit in h.units():
        report.centroid_counts[f"L{level + 1}F{f}"] = len(unit)
    return report


# -- PGM export --------------------------------------------------------------------


def centroid_image(h, level, field_index, center):
    """Pixel rendering of one centroid over the part of the frame it covers.

    Higher-level centroids are concatenations of lower-level codes; they are
    unfolded down to level 1 and pasted into frame coordinates.
    """
    layer = h.layers[level]
    rf = layer.fields[field_index]
    frame = np.full((layer.spec.input_height, layer.spec.input_width), np.nan)
    frame[rf.row_offset : rf.row_offset + rf.height, rf.col_offset : rf.col_offset + rf.width] = np.reshape(
        center, (rf.height, rf.width)
    )
    frame = frame.ravel()
    for lv in range(level - 1, -1, -1):
        lower = h.layers[lv]
        d = lower.spec.unit_dim
        out = np.full((lower.spec.input_height, lower.spec.input_width), np.nan)
        for i, sub in enumerate(lower.fields):
            seg = frame[i * d : (i + 1) * d]
            if np.all(np.isfinite(seg)):
                out[sub.row_offset : sub.row_offset + sub.height, sub.col_offset : sub.col_offset + sub.width] = (
                    seg.reshape(sub.height, sub.width)
                )
        frame = out.ravel()
    img = frame.reshape(h.layers[0].spec.input_height, h.layers[0].spec.input_width)
    rows = np.flatnonzero(np.isfinite(img).any(axis=1))
    cols = np.flatnonzero(np.isfinite(img).any(axis=0))
    img = img[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    return np.nan_to_num(img, nan=0.0)


def pgm_bytes(img):
    """Binary PGM (``P5``), pixel = clamp(round(255 * v))."""
    img = np.asarray(img, dtype=np.float64)
    height, width = img.shape
    pixels = np.clip(np.rint(255.0 * img), 0, 255).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def tile_grid(images):
    n = len(images)
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    h, w = images[0].shape
    grid = np.zeros((rows * h, cols * w))
    for k, img in enumerate(images):
        r, c = divmod(k, cols)
        grid[r * h : (r + 1) * h, c * w : (c + 1) * w] = img
    return grid


def export_centroid_pgms(h, out_dir):
    """Write one PGM per centroid and one grid PGM per unit; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for level, f, unit in h.units():
        images = [centroid_image(h, level, f, c) for c in unit.centers]
        stem = f"L{level + 1}_F{f:03d}"
        for k, img in enumerate(images):
            written.append(_write(os.path.join(out_dir, f"{stem}_c{k:04d}.pgm"), pgm_bytes(img)))
        if images:
            written.append(_write(os.path.join(out_dir, f"{stem}_grid.pgm"), pgm_bytes(tile_grid(images))))
    return written


def _write(path, data):
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def write_idx_files(data, out_dir):
    """Write train/test splits in the MNIST file layout."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "train-images-idx3-ubyte": write_idx(data.train),
        "train-labels-idx1-ubyte": write_idx(data.train.labels),
        "t10k-images-idx3-ubyte": write_idx(data.test),
        "t10k-labels-idx1-ubyte": write_idx(data.test.labels),
    }
    return [_write(os.path.join(out_dir, name), raw) for name, raw in files.items()]

