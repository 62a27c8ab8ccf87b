"""What happens when the lights dim.

Bright composites are learned first, then the same composites arrive 0.4
darker. Top-level assignments stay put while the level-1 centroids drift
toward the darker inputs.
"""

import sys

from stam.protocols import brightness_shift_scenario

result = brightness_shift_scenario(seed=0)
agreement = result.curve("top_agreement")
intensity = result.curve("level1_intensity")
steps = sorted({s for s, m, _ in result.rows if m == "top_agreement"})
print(f"target intensity after the shift: {result.curve('target_intensity')[0]:.3f}")
for s, a, i in list(zip(steps, agreement, intensity))[::5]:
    print(f"  step {s:4d}: top agreement {a:.2f}, level-1 intensity {i:.3f}")

if len(sys.argv) > 1:
    with open(sys.argv[1], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_csv())
    print("curves written to", sys.argv[1])
