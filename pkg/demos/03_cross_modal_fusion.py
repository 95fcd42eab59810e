"""Bidirectional cross-attention between visual and text tokens, stacked in layers.

Each fusion layer lets visual tokens read from text and text tokens read
from vision (separate projections per direction), then runs one pre-norm
encoder block per modality. Batched visual inputs share the text prompt.
"""

import numpy as np

from groundcot.fusion import FusionConfig, fuse_stack, init_fusion, init_projector, project

cfg = FusionConfig(layers=2, heads=2, width=8)
params = init_fusion(cfg, seed=3)
print(f"{len(params)} parameter arrays, e.g.", sorted(params)[:4])

rng = np.random.default_rng(3)
visual = rng.standard_normal((16, 8))  # a 4x4 grid of region features
text = rng.standard_normal((5, 8))  # five phrase tokens

weights = []
v, t = fuse_stack(visual, text, cfg, params, weights)
print("fused shapes:", v.shape, t.shape)
print(f"{len(weights)} attention maps recorded; first row of the first map sums to {weights[0][0].sum():.15f}")

batch = rng.standard_normal((3, 16, 8))
vb, tb = fuse_stack(batch, text, cfg, params)
print("batched:", vb.shape, tb.shape)

# A two-layer projector maps features of one width into another.
proj = init_projector(8, 16, 4, seed=4)
print("projected visual tokens:", project(v, proj).shape)
