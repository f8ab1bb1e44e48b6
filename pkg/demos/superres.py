"""
Upscaling a render with a multi-scale residual network
======================================================

The network weights here are random, so the output is not a meaningful
reconstruction; the demo shows the weight file format and the shape contract.
"""

import numpy as np

from splatlab import load_weights, msrn_forward, random_model, save_weights
from splatlab.synthetic import orbit_cameras, random_scene, render_views

model = random_model(scale=2, n_blocks=4, feature_width=16, seed=0)
save_weights(model, "demo.msrn")
reloaded = load_weights("demo.msrn")

low = render_views(random_scene(8, np.random.default_rng(3)), orbit_cameras(1, size=48))[0]
high = msrn_forward(low, reloaded)
print(f"{low.shape} -> {high.shape}, range [{high.min():.3f}, {high.max():.3f}]")
print("identical after reload:", np.array_equal(high, msrn_forward(low, model)))
