"""Desk-scale continual-learning experiments built on the engine.

Each function is deterministic given its seed and returns plain results that
the acceptance tests and the demo scripts inspect.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import evaluation as ev
from .hierarchy import Hierarchy
from .streams import brightness_shift, class_incremental_schedule, salt_and_pepper, synth_composites, synth_prototypes
from .unit import UnitConfig


@dataclass
class PhasedResult:
    acc_old_before: float
    acc_old_after: float
    acc_new_after: float
    forgetting: float
    max_centroids: int
    drift_before: list
    drift_after: list
    label_sequence: list
    prototypes: np.ndarray
    hierarchy: Hierarchy

    @property
    def survivors(self):
        return {k for k, d in enumerate(self.drift_after) if d != ev.LOST}


def phased_forgetting(capacity, seed=0, classes_per_phase=5, side=4, sigma=0.05, theta_new=0.5,
                      theta_merge=0.2, per_class=200, probes_per_class=5, test_per_class=40):
    """Two class-incremental phases of disjoint prototypes through one unit.

    Phase 1 streams classes ``0..n-1``, phase 2 classes ``n..2n-1``. Few-shot
    accuracy on the phase-1 classes is measured after each phase with label
    maps built from ``probes_per_class`` labeled frames per seen class.
    """
    n = classes_per_phase
    protos, sampler = synth_prototypes(2 * n, side, side, sigma, seed, min_separation=1.0)
    data = sampler.dataset(per_class)
    probes = sampler.dataset(probes_per_class)
    test = sampler.dataset(test_per_class)
    phase_sets = [range(n), range(n, 2 * n)]
    schedule = class_incremental_schedule(data, phase_sets, n * per_class, seed)
    cfg = UnitConfig(capacity=capacity, theta_new=theta_new, theta_merge=theta_merge)
    h = Hierarchy.build(side, side, side, side, side, [cfg], settle_iterations=0)
    unit = h.layers[0].units[0]

    old_test = np.isin(test.labels, phase_sets[0])
    new_test = ~old_test
    max_centroids = 0
    labels_seen = []
    acc_old_before = drift_before = None
    for phase in (0, 1):
        for i in schedule.phase_items(phase):
            h.settle(data.frames[i], learn=True)
            labels_seen.append(int(data.labels[i]))
            max_centroids = max(max_centroids, len(unit))
        seen = np.isin(probes.labels, [c for p in phase_sets[: phase + 1] for c in p])
        label_map = ev.build_label_map(h, probes.frames[seen], probes.labels[seen])
        if phase == 0:
            acc_old_before = ev.accuracy(h, label_map, test.frames[old_test], test.labels[old_test])
            drift_before = ev.centroid_drift(unit, protos)
    acc_old_after = ev.accuracy(h, label_map, test.frames[old_test], test.labels[old_test])
    acc_new_after = ev.accuracy(h, label_map, test.frames[new_test], test.labels[new_test])
    return PhasedResult(
        acc_old_before,
        acc_old_after,
        acc_new_after,
        ev.forgetting_score(acc_old_before, acc_old_after),
        max_centroids,
        drift_before,
        ev.centroid_drift(unit, protos),
        labels_seen,
        protos,
        h,
    )


def composite_hierarchy(settle_iterations=3, blend_lambda=0.5, theta_new=0.6, theta_merge=0.2, capacity=16,
                        top_theta_new=None):
    """Two levels over 28x28 frames: four 14x14 units feeding one top unit."""
    low = UnitConfig(capacity=capacity, theta_new=theta_new, theta_merge=theta_merge)
    top = UnitConfig(capacity=capacity, theta_new=top_theta_new or theta_new, theta_merge=theta_merge)
    return Hierarchy.build(28, 28, 14, 14, 14, [low, top], settle_iterations=settle_iterations,
                           blend_lambda=blend_lambda)


@dataclass
class DenoisingResult:
    mse_feedforward: np.ndarray
    mse_feedback: np.ndarray
    centroid_counts: list

    @property
    def fraction_not_worse(self):
        return float(np.mean(self.mse_feedback <= self.mse_feedforward))


def feedback_denoising(seed=0, iterations=3, train_items=400, test_frames=200, corruption=0.1, sigma=0.02,
                       blend_lambda=0.5):
    """Reconstruction error with and without feedback on salt-and-pepper composites.

    The hierarchy is trained on lightly noisy 4-prototype composites; each
    corrupted test frame is then settled with ``T = 0`` and ``T = iterations``
    and the level-1 reconstruction is compared with the clean composite.
    """
    protos, sampler = synth_composites(4, 28, 28, sigma, seed)
    h = composite_hierarchy(iterations, blend_lambda)
    frames, _ = sampler.sample(train_items)
    for x in frames:
        h.settle(x, learn=True)
    rng = np.random.default_rng(seed + 1)
    mse0, mse_t = [], []
    for i in range(test_frames):
        k = i % len(protos)
        x = salt_and_pepper(protos[k], corruption, rng)
        mse0.append(ev.reconstruction_mse(protos[k], h.settle(x, iterations=0).reconstruction))
        mse_t.append(ev.reconstruction_mse(protos[k], h.settle(x, iterations=iterations).reconstruction))
    return DenoisingResult(np.array(mse0), np.array(mse_t), [len(u) for _, _, u in h.units()])


@dataclass
class ShiftResult:
    rows: list = field(default_factory=list)

    def curve(self, metric):
        return [v for _, m, v in self.rows if m == metric]

    def to_csv(self):
        return ev.rows_to_csv(self.rows)


def brightness_shift_scenario(seed=0, delta=-0.4, train_items=400, shift_items=600, every=20, sigma=0.02,
                              theta_new=6.0, top_theta_new=8.0, settle_iterations=3):
    """Stream bright composites, then the same composites darkened by ``delta``.

    Every ``every`` shifted items two quantities are recorded (read-only):

    * ``top_agreement``: fraction of composites whose darkened version wins the
      top-level centroid nearest to the one the bright version won before the
      shift.
    * ``level1_intensity``: mean intensity of the level-1 centroids selected
      for the darkened composites.

    ``target_intensity`` (the mean of the darkened composites) is reported
    once at step 0 as the reference the second curve can approach.
    """
    protos, sampler = synth_composites(4, 28, 28, sigma, seed, detail_size=4, low=0.5)
    h = composite_hierarchy(settle_iterations, theta_new=theta_new, top_theta_new=top_theta_new)
    frames, _ = sampler.sample(train_items)
    for x in frames:
        h.settle(x, learn=True)
    top = h.top.units[0]
    before = [top.center(h.settle(p).top_index) for p in protos]
    dark = np.array([brightness_shift(p, delta) for p in protos])

    result = ShiftResult()
    result.rows.append((0, "target_intensity", float(dark.mean())))

    def record(step):
        agree, intensity = 0, []
        for snapshot, frame in zip(before, dark):
            trace = h.settle(frame)
            agree += trace.top_index == top.nearest_centroid(snapshot)[0]
            intensity.extend(float(ft.local_centroid.mean()) for ft in trace.layers[0])
        result.rows.append((step, "top_agreement", agree / len(protos)))
        result.rows.append((step, "level1_intensity", float(np.mean(intensity))))

    record(0)
    shifted, _ = sampler.sample(shift_items)
    for step, x in enumerate(shifted, 1):
        h.settle(brightness_shift(x, delta), learn=True)
        if step % every == 0:
            record(step)
    return result
