"""Stop, save, resume: the result is the same as one long run.

Uses the config-driven pipeline behind the ``stam`` command.
"""

import tempfile
from pathlib import Path

from stam import run
from stam.checkpoint import TrainingState, dumps, load_checkpoint, save_checkpoint
from stam.config import parse_config
from stam.evaluation import memory_audit

cfg = parse_config("""
seed = 1
frame_height = 4
frame_width = 4
levels = 2
layer1.field_height = 2
layer1.field_width = 2
layer1.stride = 2
layer1.capacity = 4
layer1.theta_new = 0.4
layer1.theta_merge = 0.1
layer2.capacity = 6
layer2.theta_new = 0.6
layer2.theta_merge = 0.1
synth.classes = 6
synth.per_class = 100
schedule.per_phase_count = 600
""")
data = run.make_data(cfg)
schedule = run.make_schedule(cfg, data.train)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "half.ckpt"
    state = TrainingState.fresh(cfg)
    run.train(state, data, schedule, max_items=300)
    save_checkpoint(state, path)
    print(f"saved after {state.cursor} items, {path.stat().st_size} bytes")

    resumed = load_checkpoint(path)
    run.train(resumed, data, schedule)

straight = TrainingState.fresh(cfg)
run.train(straight, data, schedule)
print("resumed run identical to uninterrupted run:", dumps(resumed) == dumps(straight))

audit = memory_audit(straight.hierarchy)
print(f"{audit.units} units, {audit.centroids} centroids, {audit.stored_reals} stored reals "
      f"({audit.stored_bytes} bytes), {audit.exemplar_records} exemplar records")
