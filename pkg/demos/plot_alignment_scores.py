"""
Appearance and temporal scores
==============================

Two sequences made of the same frames in opposite order look identical to
the appearance score and very different to the temporal score.
"""

import numpy as np

from ata import AlignmentConfig, sim_a, sim_max, sim_ot, sim_t, similarity_matrix, temporal_prior

rng = np.random.default_rng(0)

# eight orthonormal frames in a 16-dimensional feature space
q, _ = np.linalg.qr(rng.standard_normal((16, 8)))
forward = q.T
backward = forward[::-1]

###############################################################################
# The similarity matrix of a sequence with itself is the identity; with its
# reversal it is the anti-diagonal.

print(np.round(similarity_matrix(forward, backward), 2))

###############################################################################
# The appearance score only asks whether every frame finds a good match
# somewhere, so it cannot tell the two apart. The hard-max and transport
# baselines behave the same way.

cfg = AlignmentConfig()
for name, other in [("self", forward), ("reversed", backward)]:
    print(f"{name:9s} sim_a={sim_a(forward, other, cfg):.4f}  "
          f"sim_max={sim_max(forward, other):.4f}  sim_ot={sim_ot(forward, other, cfg):.4f}")

###############################################################################
# The temporal score compares each row of the softmaxed similarity matrix
# with a Gaussian band around the diagonal.

t = temporal_prior(8, cfg.sigma)
print("prior row 0:", np.round(t[0], 4))
print(f"sim_t self={sim_t(forward, forward, cfg):.4f}  reversed={sim_t(forward, backward, cfg):.4f}")

###############################################################################
# A wider prior forgives more temporal misalignment.

for sigma in (0.5, 1.0, 3.0):
    c = AlignmentConfig(sigma=sigma)
    print(f"sigma={sigma}: gap {sim_t(forward, forward, c) - sim_t(forward, backward, c):.4f}")
