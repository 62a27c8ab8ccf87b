"""Streaming clustering with one unit.

Five hidden prototypes in 16 dimensions, noisy samples arriving one at a time.
The unit starts empty and has to discover how many clusters there are.
"""

import numpy as np

from stam import StamUnit
from stam.evaluation import purity
from stam.streams import synth_prototypes

protos, sampler = synth_prototypes(5, 4, 4, sigma=0.05, seed=7, min_separation=1.0)
xs, labels = sampler.sample(2000)

unit = StamUnit(16, capacity=16, theta_new=0.5, theta_merge=0.2)
for t, x in enumerate(xs, 1):
    unit.observe(x)
    if t in (1, 10, 100, 2000):
        print(f"after {t:5d} exemplars: {len(unit)} centroids")

# every discovered centroid should sit right on top of one prototype
for k, c in enumerate(unit.centers):
    d = np.linalg.norm(protos - c, axis=1)
    print(f"centroid {k}: count {unit.counts[k]:4d}, nearest prototype {d.argmin()} at {d.min():.4f}")

winners = [(unit.nearest_centroid(x)[0], int(y)) for x, y in zip(xs, labels)]
print(f"purity of the final partition: {purity(winners):.4f}")

# with the learning-rate floor at zero the centroids are exact running means
exact = StamUnit(16, capacity=16, theta_new=0.5, theta_merge=0.0, alpha_floor=0.0)
log = np.array([exact.observe(x) for x in xs])
gap = max(np.abs(exact.center(k) - xs[log == k].mean(axis=0)).max() for k in range(len(exact)))
print(f"alpha_floor=0: largest gap to the batch means is {gap:.1e}")
