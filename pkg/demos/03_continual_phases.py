"""Two phases of new classes, with and without spare capacity.

Phase 1 shows classes 0-4, phase 2 shows classes 5-9. With room for all ten
clusters nothing is forgotten. With room for six, the old classes that were
seen least recently are evicted, one at a time, in LRU order.
"""

from stam.protocols import phased_forgetting

for capacity in (16, 6):
    r = phased_forgetting(capacity, seed=0)
    print(f"capacity {capacity}:")
    print(f"  old-class accuracy {r.acc_old_before:.2f} before phase 2, {r.acc_old_after:.2f} after")
    print(f"  new-class accuracy {r.acc_new_after:.2f}, peak centroid count {r.max_centroids}")
    print(f"  prototypes still represented: {sorted(r.survivors)}")

last_seen = {}
for t, lab in enumerate(r.label_sequence):
    last_seen[lab] = t
print("last time each phase-1 class was seen:", {k: last_seen[k] for k in range(5)})
