"""Acceptance criteria A1-A9.

Every test records a one-line PASS/FAIL verdict; the lines are collected in
the "acceptance criteria" section at the end of the pytest run.
"""

import time
from collections import OrderedDict

import numpy as np
import pytest

from conftest import report
from stam import evaluation as ev
from stam import run
from stam.checkpoint import TrainingState, dumps, loads
from stam.cli import main
from stam.config import parse_config
from stam.hierarchy import Hierarchy
from stam.protocols import brightness_shift_scenario, feedback_denoising, phased_forgetting
from stam.streams import Dataset, parse_idx, synth_prototypes, write_idx
from stam.unit import StamUnit, UnitConfig


def test_a1_online_batch_equivalence():
    rng = np.random.default_rng(11)
    centers = rng.random((8, 6)) * 10
    xs = centers[rng.integers(0, 8, 1000)] + rng.normal(0, 0.3, (1000, 6))
    t0 = time.perf_counter()
    unit = StamUnit(6, capacity=64, theta_new=3.0, theta_merge=0.0, alpha_floor=0.0)
    log = [unit.observe(x) for x in xs]
    elapsed = time.perf_counter() - t0
    log = np.array(log)
    worst = 0.0
    for k in range(len(unit)):
        batch = xs[log == k].mean(axis=0)
        worst = max(worst, float(np.max(np.abs(unit.center(k) - batch))))
    assert report("A1", worst <= 1e-9 and elapsed < 1.0 and len(unit) == 8,
                  f"max |online - batch| = {worst:.2e} over {len(unit)} centroids, {elapsed:.3f}s")


def test_a2_cluster_recovery():
    protos, sampler = synth_prototypes(5, 4, 4, 0.05, seed=7, min_separation=1.0)
    xs, labels = sampler.sample(2000)
    t0 = time.perf_counter()
    unit = StamUnit(16, capacity=16, theta_new=0.5, theta_merge=0.2)
    for x in xs:
        unit.observe(x)
    elapsed = time.perf_counter() - t0
    pur = ev.purity((unit.nearest_centroid(x)[0], int(lab)) for x, lab in zip(xs, labels))
    assert report("A2", len(unit) == 5 and pur >= 0.99 and elapsed < 5.0,
                  f"{len(unit)} centroids, purity {pur:.4f}, {elapsed:.3f}s")


def _random_sequence(rng, checks):
    dim = int(rng.integers(1, 5))
    capacity = int(rng.integers(1, 7))
    theta_new = float(rng.uniform(0.05, 1.5))
    theta_merge = float(rng.uniform(0.0, theta_new)) if rng.random() < 0.8 else 0.0
    unit = StamUnit(dim, capacity=capacity, theta_new=theta_new, theta_merge=theta_merge,
                    alpha_floor=float(rng.choice([0.0, 0.05])))
    for _ in range(int(rng.integers(1, 16))):
        op = rng.random()
        x = rng.random(dim) * 2
        mass = int(unit.counts.sum())
        full = len(unit) == capacity
        if op < 0.55:
            novel = len(unit) == 0 or unit.nearest_centroid(x)[1] > theta_new
            evicted = int(unit.counts[np.argmin(unit.last_used)]) if novel and full else 0
            unit.observe(x)
            expected = mass + 1 - evicted
        elif op < 0.7:
            evicted = int(unit.counts[np.argmin(unit.last_used)]) if full else 0
            unit.spawn_cluster(x)
            expected = mass + 1 - evicted
        elif op < 0.8 and len(unit):
            unit.update_centroid(int(rng.integers(len(unit))), x)
            expected = mass + 1
        elif op < 0.9:
            unit.merge_overlaps()
            expected = mass
            checks["merges"] += 1
        else:
            if len(unit):
                before = unit.state_hash()
                unit.recall(x)
                unit.nearest_centroid(x)
                unit.distances(x)
                checks["reads"] += 1
                if unit.state_hash() != before:
                    checks["mutated"] += 1
            expected = mass
        checks["ops"] += 1
        if len(unit) > capacity:
            checks["over_capacity"] += 1
        if int(unit.counts.sum()) != expected:
            checks["mass"] += 1


def test_a3_capacity_and_mass_invariants():
    rng = np.random.default_rng(2024)
    checks = dict(ops=0, merges=0, reads=0, over_capacity=0, mass=0, mutated=0)
    n_sequences = 10_000
    for _ in range(n_sequences):
        _random_sequence(rng, checks)

    # classification through a hierarchy is read-only as well
    cfg = UnitConfig(capacity=4, theta_new=0.4, theta_merge=0.1)
    h = Hierarchy.build(4, 4, 2, 2, 2, [cfg, cfg])
    frames = rng.random((40, 16))
    for x in frames[:30]:
        h.settle(x, learn=True)
    label_map = ev.build_label_map(h, frames[:10], np.arange(10) % 3)
    before = h.state_hash()
    ev.accuracy(h, label_map, frames[30:], np.arange(10) % 3)
    hier_mutated = h.state_hash() != before

    ok = (checks["over_capacity"] == 0 and checks["mass"] == 0 and checks["mutated"] == 0
          and not hier_mutated)
    assert report("A3", ok, f"{n_sequences} sequences, {checks['ops']} ops, {checks['merges']} explicit merges, "
                            f"violations: capacity {checks['over_capacity']}, mass {checks['mass']}, "
                            f"read mutation {checks['mutated'] + hier_mutated}")


def test_a4_forgetting_with_headroom():
    r = phased_forgetting(capacity=16, seed=0)
    sigma = 0.05
    drop = r.acc_old_before - r.acc_old_after
    worst = max(r.drift_after[:5])
    ok = drop <= 0.05 and worst <= 2 * sigma
    assert report("A4", ok, f"phase-1 accuracy {r.acc_old_before:.3f} -> {r.acc_old_after:.3f} (drop {drop:.3f}), "
                            f"worst phase-1 prototype distance {worst:.4f} (2 sigma = {2 * sigma})")


def lru_survivors(labels, capacity):
    """Replay oracle: which classes an LRU cache of ``capacity`` slots holds at the end."""
    cache = OrderedDict()
    for lab in labels:
        cache.pop(lab, None)
        cache[lab] = True
        if len(cache) > capacity:
            cache.popitem(last=False)
    return set(cache)


def test_a5_graceful_forgetting_under_saturation():
    r = phased_forgetting(capacity=6, seed=0)
    expected = lru_survivors(r.label_sequence, 6)
    ok = r.max_centroids <= 6 and r.acc_new_after >= r.acc_old_after and r.survivors == expected
    assert report("A5", ok, f"max centroids {r.max_centroids}, phase-2 acc {r.acc_new_after:.3f} vs "
                            f"phase-1 acc {r.acc_old_after:.3f}, survivors {sorted(r.survivors)} "
                            f"(LRU oracle {sorted(expected)})")


def test_a6_feedback_denoising():
    t0 = time.perf_counter()
    r = feedback_denoising(seed=0)
    elapsed = time.perf_counter() - t0
    frac = r.fraction_not_worse
    m0, m3 = r.mse_feedforward.mean(), r.mse_feedback.mean()
    ok = len(r.mse_feedback) == 200 and frac >= 0.9 and m3 < m0 and elapsed < 30.0
    assert report("A6", ok, f"T=3 <= T=0 on {frac:.3f} of frames, mean MSE {m0:.3e} (T=0) vs {m3:.3e} (T=3), "
                            f"{elapsed:.2f}s")


def test_a7_brightness_shift_curves(tmp_path):
    first = brightness_shift_scenario(seed=0)
    second = brightness_shift_scenario(seed=0)
    path = tmp_path / "shift.csv"
    path.write_text(first.to_csv())
    agreement = first.curve("top_agreement")
    intensity = first.curve("level1_intensity")
    target = first.curve("target_intensity")[0]
    ok = (first.to_csv() == second.to_csv() and path.read_text() == second.to_csv()
          and len(agreement) == len(intensity) > 1)
    assert report("A7", ok, f"deterministic CSV with {len(agreement)} points per curve; agreement "
                            f"{agreement[0]:.2f} -> {agreement[-1]:.2f}, level-1 intensity "
                            f"{intensity[0]:.3f} -> {intensity[-1]:.3f} (shifted target {target:.3f})")


A8_CONFIG = """\
seed = 5
settle_iterations = 1
frame_height = 4
frame_width = 4
levels = 2
layer1.field_height = 2
layer1.field_width = 2
layer1.stride = 2
layer1.capacity = 3
layer1.theta_new = 0.3
layer1.theta_merge = 0.1
layer2.capacity = 4
layer2.theta_new = 0.3
layer2.theta_merge = 0.1
synth.classes = 8
synth.per_class = 1250
schedule.per_phase_count = 10000
"""


def test_a8_memory_audit():
    cfg = parse_config(A8_CONFIG)
    state = TrainingState.fresh(cfg)
    data = run.make_data(cfg)
    schedule = run.make_schedule(cfg, data.train)
    audits = []
    saturated = []
    for target in (100, 10_000):
        run.train(state, data, schedule, max_items=target - state.cursor)
        text = dumps(state)
        loads(text)
        audits.append(ev.memory_audit(state.hierarchy, text))
        saturated.append(all(len(u) == u.capacity for _, _, u in state.hierarchy.units()))
    a, b = audits
    ok = all(saturated) and a.stored_reals == b.stored_reals and a.exemplar_records == b.exemplar_records == 0
    assert report("A8", ok, f"stored reals {a.stored_reals} after 1e2 items, {b.stored_reals} after 1e4; "
                            f"exemplar records {a.exemplar_records}/{b.exemplar_records}; units saturated {saturated}")


FORMAT_CONFIG = """\
seed = 9
settle_iterations = 1
layer1.field_height = 14
layer1.field_width = 14
layer1.stride = 14
layer1.capacity = 6
layer1.theta_new = 2.0
layer1.theta_merge = 0.5
levels = 2
layer2.capacity = 6
layer2.theta_new = 3.0
layer2.theta_merge = 0.5
synth.classes = 3
synth.per_class = 30
schedule.per_phase_count = 90
eval.test_per_class = 5
"""


def test_a9_determinism_and_formats(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(FORMAT_CONFIG)
    runs = []
    for name in ("a", "b"):
        ckpt, rep = tmp_path / f"{name}.ckpt", tmp_path / f"{name}.csv"
        assert main(["train", "--config", str(cfg), "--checkpoint-out", str(ckpt)]) == 0
        assert main(["eval", "--checkpoint", str(ckpt), "--config", str(cfg), "--report", str(rep)]) == 0
        runs.append((ckpt.read_bytes(), rep.read_bytes()))
    identical = runs[0] == runs[1]

    rng = np.random.default_rng(3)
    images = rng.integers(0, 256, size=(7 * 28 * 28,), dtype=np.uint8).tobytes()
    raw_images = b"\x00\x00\x08\x03" + (7).to_bytes(4, "big") + (28).to_bytes(4, "big") * 2 + images
    raw_labels = b"\x00\x00\x08\x01" + (7).to_bytes(4, "big") + bytes(rng.integers(0, 10, 7, dtype=np.uint8))
    ds = parse_idx(raw_images)
    idx_exact = (isinstance(ds, Dataset) and write_idx(ds) == raw_images
                 and write_idx(parse_idx(raw_labels)) == raw_labels)

    pgm_dir = tmp_path / "pgm"
    assert main(["inspect", "--checkpoint", str(tmp_path / "a.ckpt"), "--centroids-pgm", str(pgm_dir)]) == 0
    top = (pgm_dir / "L2_F000_c0000.pgm").read_bytes()
    low = (pgm_dir / "L1_F000_c0000.pgm").read_bytes()
    pgm_exact = (top[:13] == b"P5\n28 28\n255\n" and len(top) == 13 + 784
                 and low[:13] == b"P5\n14 14\n255\n" and len(low) == 13 + 196)

    assert report("A9", identical and idx_exact and pgm_exact,
                  f"runs bit-identical {identical}, IDX round trip exact {idx_exact}, PGM headers exact {pgm_exact}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
